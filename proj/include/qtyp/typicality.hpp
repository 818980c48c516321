#pragma once

// Concentration of the reduced state rho_s(t) as a function of the random
// interaction W: gradient norms, ensemble fluctuation statistics, the
// 4 sigma_w^2 t^2 / dim_e variance bound and Monte Carlo Poincare tests.

#include "qtyp/dynamics.hpp"
#include "qtyp/ensembles.hpp"
#include "qtyp/log.hpp"
#include "qtyp/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qtyp {

// ===========================================================================
// Gradient of rho_s with respect to W

/// ||Tr_e h(.)||^2 with h(A) = -i tau [A, |psi><psi|], summed over the
/// elementary matrices: 2 tau^2 (dim_s - Tr((gamma gamma^dag)^2)).
inline double exact_commutator_norm_sq(const CoefficientMatrix& gamma, double tau) {
  return 2.0 * tau * tau * (double(gamma.dim_s()) - gamma.purity());
}

/// Dimension-uniform bound 2 tau^2 dim_s on ||grad_W rho_s||^2.
inline double gradient_upper_bound(Index dim_s, double tau) {
  return 2.0 * tau * tau * double(dim_s);
}

/// One element of the Frobenius-orthonormal basis of Hermitian (or real
/// symmetric) matrices: E_ii, (E_ij + E_ji)/sqrt2 or i(E_ij - E_ji)/sqrt2.
struct Direction {
  enum class Kind { Diagonal, Symmetric, Antisymmetric };
  Kind kind;
  Index i;
  Index j;

  void add_to(ComplexMatrix& m, double eps) const {
    constexpr double r = 0.70710678118654752440;
    switch (kind) {
      case Kind::Diagonal: m(i, i) += eps; break;
      case Kind::Symmetric:
        m(i, j) += eps * r;
        m(j, i) += eps * r;
        break;
      case Kind::Antisymmetric:
        m(i, j) += Complex(0.0, eps * r);
        m(j, i) -= Complex(0.0, eps * r);
        break;
    }
  }
};

inline std::vector<Direction> hermitian_directions(Index n, Symmetry sym) {
  std::vector<Direction> out;
  for (Index i = 0; i < n; ++i) {
    out.push_back({Direction::Kind::Diagonal, i, i});
    for (Index j = i + 1; j < n; ++j) {
      out.push_back({Direction::Kind::Symmetric, i, j});
      if (sym == Symmetry::ComplexHermitian) out.push_back({Direction::Kind::Antisymmetric, i, j});
    }
  }
  return out;
}

/// rho_s(tau) for H = h0 + w (both given as plain matrices, w Hermitian).
inline ComplexMatrix reduced_state_at(const ComplexMatrix& h, const PureState& psi0, Index dim_s,
                                      Index dim_e, double tau) {
  if (tau == 0.0) return coefficient_matrix(psi0.amplitudes(), dim_s, dim_e).reduced();
  const Evolution evo(HermitianOperator(h), psi0.amplitudes());
  return coefficient_matrix(evo.at(tau), dim_s, dim_e).reduced();
}

/// Central-difference gradient: returns sum over `dirs` of
/// ||(f(W + eps B) - f(W - eps B)) / (2 eps)||_F^2, and fills the per-direction
/// derivatives of a scalar f into `components` when requested.
template <class F>
double fd_gradient_norm_sq(const ComplexMatrix& w, std::span<const Direction> dirs, double eps,
                           F&& f, std::vector<double>* components = nullptr) {
  double acc = 0.0;
  if (components) components->assign(dirs.size(), 0.0);
  ComplexMatrix probe = w;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    dirs[k].add_to(probe, eps);
    const ComplexMatrix plus = f(probe);
    dirs[k].add_to(probe, -2.0 * eps);
    const ComplexMatrix minus = f(probe);
    dirs[k].add_to(probe, eps);
    const ComplexMatrix d = (plus - minus) / (2.0 * eps);
    acc += d.squaredNorm();
    if (components) (*components)[k] = d(0, 0).real();
  }
  return acc;
}

struct FiniteDifferenceOptions {
  double step = 1e-6;
  bool richardson = true;         // repeat at step/2 and compare
  double richardson_tol = 1e-3;   // relative
  Index max_dim = 24;
};

/// ||grad_W rho_s(tau)||^2 by central differences over the Hermitian basis.
inline double numeric_gradient_norm_sq(const CompositeSystem& sys, const HermitianOperator& w,
                                       const PureState& psi0, double tau,
                                       const FiniteDifferenceOptions& opt) {
  sys.validate();
  if (sys.dim() > opt.max_dim) {
    throw DimensionError("numeric_gradient_norm_sq: dim H = " + std::to_string(sys.dim()) +
                         " exceeds the enumeration cap " + std::to_string(opt.max_dim) +
                         "; use exact_commutator_norm_sq instead");
  }
  if (!(opt.step > 0.0)) throw std::invalid_argument("numeric_gradient_norm_sq: step must be > 0");
  if (w.dim() != sys.dim() || psi0.dim() != sys.dim()) {
    throw DimensionError("numeric_gradient_norm_sq: dimension mismatch");
  }
  const ComplexMatrix h0 = build_h0(sys).matrix();
  const auto dirs = hermitian_directions(sys.dim(), Symmetry::ComplexHermitian);
  auto rho = [&](const ComplexMatrix& wp) {
    return reduced_state_at(h0 + wp, psi0, sys.dim_s(), sys.dim_e(), tau);
  };
  const double coarse = fd_gradient_norm_sq(w.matrix(), dirs, opt.step, rho);
  if (opt.richardson) {
    const double fine = fd_gradient_norm_sq(w.matrix(), dirs, 0.5 * opt.step, rho);
    const double scale = std::max(std::abs(coarse), std::abs(fine));
    if (std::abs(coarse - fine) > opt.richardson_tol * scale + 1e-14) {
      throw NumericalError("numeric_gradient_norm_sq: step " + std::to_string(opt.step) +
                           " and half step disagree (" + std::to_string(coarse) + " vs " +
                           std::to_string(fine) + ")");
    }
  }
  return coarse;
}

inline double numeric_gradient_norm_sq(const CompositeSystem& sys, const HermitianOperator& w,
                                       const PureState& psi0, double tau, double step) {
  FiniteDifferenceOptions opt;
  opt.step = step;
  return numeric_gradient_norm_sq(sys, w, psi0, tau, opt);
}

struct GradientReport {
  double tau = 0.0;
  double numeric_gradient_norm_sq = 0.0;
  double exact_commutator_norm_sq = 0.0;
  double analytic_upper_bound = 0.0;

  /// numeric <= exact (1 + rel_tol) <= bound (1 + bound_tol)
  bool chain_holds(double rel_tol = 1e-4, double bound_tol = 1e-12) const {
    return numeric_gradient_norm_sq <= exact_commutator_norm_sq * (1.0 + rel_tol) &&
           exact_commutator_norm_sq <= analytic_upper_bound * (1.0 + bound_tol);
  }
};

inline GradientReport gradient_report(const CompositeSystem& sys, const HermitianOperator& w,
                                      const PureState& psi0, double tau,
                                      const FiniteDifferenceOptions& opt) {
  GradientReport r;
  r.tau = tau;
  const ComplexMatrix h = build_h0(sys).matrix() + w.matrix();
  const Evolution evo(HermitianOperator(h), psi0.amplitudes());
  const CoefficientMatrix gamma = coefficient_matrix(evo.at(tau), sys.dim_s(), sys.dim_e());
  r.exact_commutator_norm_sq = exact_commutator_norm_sq(gamma, tau);
  r.analytic_upper_bound = gradient_upper_bound(sys.dim_s(), tau);
  r.numeric_gradient_norm_sq = numeric_gradient_norm_sq(sys, w, psi0, tau, opt);
  return r;
}

// ===========================================================================
// Stationary regime

struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;
};

struct WindowStat {
  double mean = 0.0;
  double std = 0.0;  // population std over the time points in the window
};

/// Minimum sigma_w * T for the default window [T/2, T].
inline constexpr double kMinCouplingTimes = 20.0;

inline TimeWindow default_stationary_window(double t_max, double sigma_w) {
  if (sigma_w * t_max < kMinCouplingTimes) {
    warn("stationary window: sigma_w * T = " + std::to_string(sigma_w * t_max) + " < " +
         std::to_string(kMinCouplingTimes) + "; transient may not be over");
  }
  return {0.5 * t_max, t_max};
}

inline std::vector<WindowStat> stationary_window_stats(const Trajectory& traj, TimeWindow window) {
  if (traj.times.empty()) throw std::invalid_argument("stationary_window_stats: empty trajectory");
  if (window.t_start > window.t_end || window.t_start < traj.times.front() ||
      window.t_end > traj.times.back()) {
    throw std::invalid_argument("stationary_window_stats: window outside trajectory time range");
  }
  const Index d = traj.dim_s();
  std::vector<double> sum(std::size_t(d), 0.0), sum_sq(std::size_t(d), 0.0);
  std::size_t count = 0;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double t = traj.times[k];
    if (t < window.t_start || t > window.t_end) continue;
    ++count;
    for (Index s = 0; s < d; ++s) sum[std::size_t(s)] += traj.populations[k](s);
  }
  if (count == 0) throw std::invalid_argument("stationary_window_stats: no time point in window");
  std::vector<WindowStat> out(static_cast<std::size_t>(d));
  for (Index s = 0; s < d; ++s) out[std::size_t(s)].mean = sum[std::size_t(s)] / double(count);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double t = traj.times[k];
    if (t < window.t_start || t > window.t_end) continue;
    for (Index s = 0; s < d; ++s) {
      const double dev = traj.populations[k](s) - out[std::size_t(s)].mean;
      sum_sq[std::size_t(s)] += dev * dev;
    }
  }
  for (Index s = 0; s < d; ++s) out[std::size_t(s)].std = std::sqrt(sum_sq[std::size_t(s)] / double(count));
  return out;
}

/// Two-level system with gap `gap` starting in |1> (x) |eps_e>, Gaussian
/// environment density: p0 = rho_e(eps_e + gap) / (rho_e(eps_e) + rho_e(eps_e + gap)).
inline double two_level_stationary_p0(double eps_e, double gap, double sigma_e) {
  const boost::math::normal_distribution<double> dos(0.0, sigma_e);
  const double up = boost::math::pdf(dos, eps_e + gap);
  const double down = boost::math::pdf(dos, eps_e);
  return up / (up + down);
}

// ===========================================================================
// Ensemble statistics

/// sigma_w^2 = Tr(W W^dag)/dim for the ensemble (sigma_D^2 for RRM).
inline double interaction_strength_sq(const EnsembleSpec& spec) {
  if (spec.kind == EnsembleKind::Rrm && spec.fixed_spectrum) {
    return spectrum_variance(*spec.fixed_spectrum);
  }
  return spec.sigma_w * spec.sigma_w;
}

/// 4 sigma_w^2 t^2 / dim_e.
inline double concentration_bound(double sigma_w_sq, double t, Index dim_e) {
  return 4.0 * sigma_w_sq * t * t / double(dim_e);
}

struct EnsembleOptions {
  unsigned workers = 1;
  std::optional<TimeWindow> window;  // enables speckle statistics
  double physicality_tol = 1e-10;
};

struct EnsembleStatistics {
  Index n_realizations = 0;
  std::vector<double> times;
  std::vector<ComplexMatrix> mean_reduced;     // per time
  std::vector<double> sigma_rho_sq;            // unbiased E||rho_s - mean||_F^2
  std::vector<double> sigma_rho_sq_stderr;
  std::vector<double> bound_eq3;               // 4 sigma_w^2 t^2 / dim_e
  std::vector<bool> exceeds_bound;             // estimate above bound
  std::vector<std::vector<double>> deviation_sq;  // [realization][time] ||rho_r - mean||_F^2
  // Speckle: per population, averaged over realizations (empty without window).
  std::vector<double> speckle_std;
  std::vector<double> window_mean;
  std::vector<std::vector<WindowStat>> window_stats;  // [realization][population]
  // Worst physicality figures across every realization and time point.
  double max_trace_error = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = 1.0;
  double max_norm_error = 0.0;

  std::size_t violations() const {
    return static_cast<std::size_t>(std::count(exceeds_bound.begin(), exceeds_bound.end(), true));
  }
};

namespace detail {

struct RealizationResult {
  std::vector<ComplexMatrix> rho;
  std::vector<WindowStat> window;
  PhysicalityReport worst;
  double norm_error = 0.0;
};

inline void merge_worst(PhysicalityReport& acc, const PhysicalityReport& r) {
  acc.trace_error = std::max(acc.trace_error, r.trace_error);
  acc.hermiticity_error = std::max(acc.hermiticity_error, r.hermiticity_error);
  acc.min_eigenvalue = std::min(acc.min_eigenvalue, r.min_eigenvalue);
}

}  // namespace detail

/// Samples n interactions (stream r = realization index under master_seed),
/// propagates psi0 for each and reduces across realizations in index order,
/// so results do not depend on the worker count.
inline EnsembleStatistics ensemble_statistics(const CompositeSystem& sys, const EnsembleSpec& spec,
                                              const PureState& psi0, std::span<const double> times,
                                              Index n, std::uint64_t master_seed,
                                              const EnsembleOptions& opt = {}) {
  if (n < 2) throw std::invalid_argument("ensemble_statistics: need n >= 2 realizations");
  sys.validate();
  spec.validate();
  if (spec.dim != sys.dim()) {
    throw DimensionError("ensemble_statistics: ensemble dim " + std::to_string(spec.dim) +
                         " != system dim " + std::to_string(sys.dim()));
  }
  const std::size_t nt = times.size();
  std::vector<detail::RealizationResult> results(static_cast<std::size_t>(n));

  parallel_for(results.size(), opt.workers, [&](std::size_t r) {
    SeededRng rng(master_seed, r);
    const HermitianOperator w = sample_interaction(spec, rng);
    Trajectory traj = run_trajectory(sys, w, psi0, times);
    detail::RealizationResult& out = results[r];
    out.norm_error = traj.max_norm_error;
    out.worst = PhysicalityReport{0.0, 0.0, 1.0};
    out.rho.reserve(nt);
    for (const auto& rho : traj.reduced_states) {
      const PhysicalityReport p = check_physical(rho.matrix());
      if (!p.ok(opt.physicality_tol)) {
        throw NumericalError("ensemble_statistics: unphysical reduced state (trace err " +
                                 std::to_string(p.trace_error) + ", min eigenvalue " +
                                 std::to_string(p.min_eigenvalue) + ")",
                             r);
      }
      detail::merge_worst(out.worst, p);
      out.rho.push_back(rho.matrix());
    }
    if (opt.window) out.window = stationary_window_stats(traj, *opt.window);
  });

  EnsembleStatistics st;
  st.n_realizations = n;
  st.times.assign(times.begin(), times.end());
  const double nd = double(n);
  const double strength = interaction_strength_sq(spec);
  st.deviation_sq.assign(std::size_t(n), std::vector<double>(nt, 0.0));

  for (std::size_t k = 0; k < nt; ++k) {
    ComplexMatrix mean = ComplexMatrix::Zero(sys.dim_s(), sys.dim_s());
    for (const auto& res : results) mean += res.rho[k];
    mean /= nd;
    double sum = 0.0;
    for (std::size_t r = 0; r < results.size(); ++r) {
      const double d = (results[r].rho[k] - mean).squaredNorm();
      st.deviation_sq[r][k] = d;
      sum += d;
    }
    const double var = sum / (nd - 1.0);
    // Standard error of the mean of u_r = d_r n/(n-1), whose average is var.
    double ss = 0.0;
    for (std::size_t r = 0; r < results.size(); ++r) {
      const double u = st.deviation_sq[r][k] * nd / (nd - 1.0) - var;
      ss += u * u;
    }
    const double bound = concentration_bound(strength, times[k], sys.dim_e());
    st.mean_reduced.push_back(std::move(mean));
    st.sigma_rho_sq.push_back(var);
    st.sigma_rho_sq_stderr.push_back(std::sqrt(ss / (nd - 1.0) / nd));
    st.bound_eq3.push_back(bound);
    st.exceeds_bound.push_back(var > bound);
  }

  PhysicalityReport worst{0.0, 0.0, 1.0};
  for (const auto& res : results) {
    detail::merge_worst(worst, res.worst);
    st.max_norm_error = std::max(st.max_norm_error, res.norm_error);
  }
  st.max_trace_error = worst.trace_error;
  st.max_hermiticity_error = worst.hermiticity_error;
  st.min_eigenvalue = worst.min_eigenvalue;

  if (opt.window) {
    const auto d = std::size_t(sys.dim_s());
    st.speckle_std.assign(d, 0.0);
    st.window_mean.assign(d, 0.0);
    for (const auto& res : results) {
      st.window_stats.push_back(res.window);
      for (std::size_t s = 0; s < d; ++s) {
        st.speckle_std[s] += res.window[s].std / nd;
        st.window_mean[s] += res.window[s].mean / nd;
      }
    }
  }
  return st;
}

// ===========================================================================
// Scaling with the environment dimension

/// System parameters independent of dim_e: system levels, Gaussian width of
/// the environment density of states, and the initial product state
/// |initial_level> (x) |level nearest epsilon_target>.
struct SystemTemplate {
  RealVector spectrum_s;
  double sigma_e = 1.0;
  double epsilon_target = -1.27;
  Index initial_level = 1;

  CompositeSystem instantiate(Index dim_e) const {
    return CompositeSystem{spectrum_s, gaussian_environment_spectrum(dim_e, sigma_e)};
  }
  PureState initial_state(const CompositeSystem& sys) const {
    return PureState::product(sys.dim_s(), sys.dim_e(), initial_level,
                              nearest_level(sys.spectrum_e, epsilon_target));
  }
};

struct ScalingRow {
  Index dim_e = 0;
  double sigma_rho_sq = 0.0;
  double sigma_rho_sq_stderr = 0.0;
  double bound_eq3 = 0.0;
  std::vector<double> speckle_std;  // per population
  std::vector<double> window_mean;
};

struct ScalingTable {
  double t_fixed = 0.0;
  std::vector<ScalingRow> rows;
  /// Consecutive rows decrease within two combined standard errors; unset for one row.
  std::optional<bool> monotone_decrease;
  /// sigma^2(d) / sigma^2(4d) for every pair (d, 4d) present in the table.
  std::vector<std::pair<Index, double>> quadruple_ratios;
};

inline ScalingTable scaling_study(const SystemTemplate& tmpl, const EnsembleSpec& spec_template,
                                  std::span<const Index> dims_e, std::span<const double> times,
                                  double t_fixed, std::optional<TimeWindow> window, Index n,
                                  std::uint64_t master_seed, unsigned workers = 1) {
  if (dims_e.empty()) throw std::invalid_argument("scaling_study: empty dims_e");
  for (std::size_t k = 1; k < dims_e.size(); ++k) {
    if (dims_e[k] <= dims_e[k - 1]) {
      throw std::invalid_argument("scaling_study: dims_e must be strictly ascending");
    }
  }
  const auto it = std::find(times.begin(), times.end(), t_fixed);
  if (it == times.end()) throw std::invalid_argument("scaling_study: t_fixed is not on the time grid");
  const auto k_fixed = static_cast<std::size_t>(it - times.begin());

  ScalingTable table;
  table.t_fixed = t_fixed;
  EnsembleOptions opt;
  opt.workers = workers;
  opt.window = window;
  for (Index dim_e : dims_e) {
    const CompositeSystem sys = tmpl.instantiate(dim_e);
    const EnsembleSpec spec = resized(spec_template, sys.dim());
    const EnsembleStatistics st =
        ensemble_statistics(sys, spec, tmpl.initial_state(sys), times, n, master_seed, opt);
    table.rows.push_back(ScalingRow{dim_e, st.sigma_rho_sq[k_fixed], st.sigma_rho_sq_stderr[k_fixed],
                                    st.bound_eq3[k_fixed], st.speckle_std, st.window_mean});
  }
  if (table.rows.size() > 1) {
    bool ok = true;
    for (std::size_t k = 1; k < table.rows.size(); ++k) {
      const auto& a = table.rows[k - 1];
      const auto& b = table.rows[k];
      ok = ok && b.sigma_rho_sq <= a.sigma_rho_sq + 2.0 * (a.sigma_rho_sq_stderr + b.sigma_rho_sq_stderr);
    }
    table.monotone_decrease = ok;
  }
  for (const auto& a : table.rows) {
    for (const auto& b : table.rows) {
      if (b.dim_e == 4 * a.dim_e && b.sigma_rho_sq > 0.0) {
        table.quadruple_ratios.emplace_back(a.dim_e, a.sigma_rho_sq / b.sigma_rho_sq);
      }
    }
  }
  return table;
}

// ===========================================================================
// Monte Carlo Poincare tests

enum class TestFunction { Constant, Linear, Quadratic, Population };

inline std::string_view to_string(TestFunction g) {
  switch (g) {
    case TestFunction::Constant: return "constant";
    case TestFunction::Linear: return "linear";
    case TestFunction::Quadratic: return "quadratic";
    case TestFunction::Population: return "population";
  }
  return "?";
}

inline TestFunction parse_test_function(std::string_view id) {
  if (id == "constant") return TestFunction::Constant;
  if (id == "linear") return TestFunction::Linear;
  if (id == "quadratic") return TestFunction::Quadratic;
  if (id == "population") return TestFunction::Population;
  throw std::invalid_argument("unknown Poincare test function '" + std::string(id) +
                              "' (expected constant, linear, quadratic or population)");
}

/// Inputs of the physical test function g(W) = <level| rho_s(tau) |level>.
struct PopulationProbe {
  CompositeSystem sys;
  PureState psi0;
  double tau = 1.0;
  Index level = 0;
  double step_rel = 1e-5;  // finite-difference step relative to sigma_w
};

struct PoincareTestReport {
  TestFunction function = TestFunction::Constant;
  Index n = 0;
  double variance = 0.0;
  double variance_stderr = 0.0;
  double mean_grad_sq = 0.0;
  double mean_grad_sq_stderr = 0.0;
  double constant = 0.0;  // Poincare constant used for the margin
  double margin = 0.0;    // variance * constant / mean_grad_sq
  double margin_stderr = 0.0;
};

/// Stream reserved for the fixed matrix A of the linear test function.
inline constexpr std::uint64_t kLinearProbeStream = 0x8000000000000000ull;

namespace detail {

inline ComplexMatrix symmetrize_for(Symmetry sym, const ComplexMatrix& g) {
  ComplexMatrix h = 0.5 * (g + g.adjoint());
  if (sym == Symmetry::RealSymmetric) h = h.real().cast<Complex>();
  return h;
}

inline void remove_component(ComplexMatrix& g, const ComplexMatrix& dir) {
  const double nn = dir.squaredNorm();
  if (nn > 0.0) g -= (dir.cwiseProduct(g.conjugate()).sum().real() / nn) * dir;
}

}  // namespace detail

/// Projects an ambient gradient G (a Hermitian matrix) onto the tangent space
/// of the ensemble's support at W: traceless (and, with exact normalization,
/// fixed-norm) matrices for Wigner/WBRM restricted to the band's support; the
/// unitary orbit {U D U^dag} for RRM.
inline ComplexMatrix project_gradient(const EnsembleSpec& spec, const ComplexMatrix& w,
                                      ComplexMatrix g) {
  const Index n = w.rows();
  if (spec.kind == EnsembleKind::Rrm) {
    const Eigensystem es = eigh(HermitianOperator(w));
    ComplexMatrix gp = es.vectors.adjoint() * g * es.vectors;
    const double scale = std::max(1.0, es.values.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (std::abs(es.values(i) - es.values(j)) <= 1e-9 * scale) gp(i, j) = 0.0;
      }
    }
    return es.vectors * gp * es.vectors.adjoint();
  }
  if (spec.kind == EnsembleKind::Wbrm) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (band_profile_value(spec.band->profile, double(i - j) / double(spec.band->width)) == 0.0) {
          g(i, j) = 0.0;
        }
      }
    }
  }
  detail::remove_component(g, ComplexMatrix::Identity(n, n));
  if (spec.normalization == Normalization::Exact) detail::remove_component(g, w);
  return g;
}

/// Checks sigma_g^2 <= E||grad g||^2 / C on samples of `spec`. C is the
/// Gaussian constant when the ensemble has one, else the common lower bound.
inline PoincareTestReport poincare_mc_test(const EnsembleSpec& spec, TestFunction g, Index n,
                                           std::uint64_t master_seed,
                                           const std::optional<PopulationProbe>& probe = {},
                                           unsigned workers = 1) {
  spec.validate();
  if (n < 2) throw std::invalid_argument("poincare_mc_test: need n >= 2 samples");
  if (g == TestFunction::Population) {
    if (!probe) throw std::invalid_argument("poincare_mc_test: population test needs a probe");
    probe->sys.validate();
    if (probe->sys.dim() != spec.dim) {
      throw DimensionError("poincare_mc_test: probe dim != ensemble dim");
    }
  }
  const Index dim = spec.dim;
  ComplexMatrix a;
  if (g == TestFunction::Linear) {
    SeededRng arng(master_seed, kLinearProbeStream);
    a.resize(dim, dim);
    for (Index j = 0; j < dim; ++j) {
      for (Index i = 0; i < dim; ++i) a(i, j) = Complex(arng.normal(), arng.normal());
    }
  }
  const auto dirs = hermitian_directions(dim, spec.symmetry);

  std::vector<double> values(static_cast<std::size_t>(n)), grads(static_cast<std::size_t>(n));
  parallel_for(values.size(), workers, [&](std::size_t r) {
    SeededRng rng(master_seed, r);
    const ComplexMatrix w = sample_interaction(spec, rng).matrix();
    ComplexMatrix grad;
    switch (g) {
      case TestFunction::Constant:
        values[r] = 1.0;
        grad = ComplexMatrix::Zero(dim, dim);
        break;
      case TestFunction::Linear:
        values[r] = (a * w).trace().real();
        grad = detail::symmetrize_for(spec.symmetry, a.adjoint());
        break;
      case TestFunction::Quadratic:
        values[r] = w.squaredNorm() / double(dim);
        grad = (2.0 / double(dim)) * w;
        break;
      case TestFunction::Population: {
        const ComplexMatrix h0 = build_h0(probe->sys).matrix();
        auto pop = [&](const ComplexMatrix& wp) {
          const ComplexMatrix rho = reduced_state_at(h0 + wp, probe->psi0, probe->sys.dim_s(),
                                                     probe->sys.dim_e(), probe->tau);
          return ComplexMatrix::Constant(1, 1, rho(probe->level, probe->level).real());
        };
        values[r] = pop(w)(0, 0).real();
        std::vector<double> comps;
        fd_gradient_norm_sq(w, dirs, probe->step_rel * spec.sigma_w, pop, &comps);
        grad = ComplexMatrix::Zero(dim, dim);
        for (std::size_t k = 0; k < dirs.size(); ++k) dirs[k].add_to(grad, comps[k]);
        break;
      }
    }
    grads[r] = project_gradient(spec, w, std::move(grad)).squaredNorm();
  });

  const double nd = double(n);
  double mean = 0.0, gmean = 0.0;
  for (std::size_t r = 0; r < values.size(); ++r) {
    mean += values[r];
    gmean += grads[r];
  }
  mean /= nd;
  gmean /= nd;
  double m2 = 0.0, m4 = 0.0, g2 = 0.0;
  for (std::size_t r = 0; r < values.size(); ++r) {
    const double d = values[r] - mean;
    m2 += d * d;
    m4 += d * d * d * d;
    g2 += (grads[r] - gmean) * (grads[r] - gmean);
  }
  PoincareTestReport rep;
  rep.function = g;
  rep.n = n;
  rep.variance = m2 / (nd - 1.0);
  const double mu2 = m2 / nd, mu4 = m4 / nd;
  rep.variance_stderr = std::sqrt(std::max(0.0, mu4 - mu2 * mu2 * (nd - 3.0) / (nd - 1.0)) / nd);
  rep.mean_grad_sq = gmean;
  rep.mean_grad_sq_stderr = std::sqrt(g2 / (nd - 1.0) / nd);
  const PoincareBound bound = poincare_lower_bound(spec);
  rep.constant = bound.gaussian.value_or(bound.common);
  if (rep.variance == 0.0) {
    rep.margin = 0.0;
    rep.margin_stderr = 0.0;
  } else {
    rep.margin = rep.variance * rep.constant / rep.mean_grad_sq;
    const double rv = rep.variance_stderr / rep.variance;
    const double rg = rep.mean_grad_sq > 0.0 ? rep.mean_grad_sq_stderr / rep.mean_grad_sq : 0.0;
    rep.margin_stderr = rep.margin * std::sqrt(rv * rv + rg * rg);
  }
  return rep;
}

}  // namespace qtyp
