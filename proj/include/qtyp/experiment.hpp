#pragma once

// Run modes behind the command line driver. Each mode writes its CSV tables,
// a summary.json with one pass/fail entry per checked invariant, and a
// manifest.json (config hash, versions, wall time) into the output directory.
// CSV and summary contents depend only on the config and master seed.

#include "qtyp/config.hpp"
#include "qtyp/csv.hpp"

#include <boost/version.hpp>

#include <chrono>
#include <ctime>

namespace qtyp {

inline constexpr std::string_view kVersion = "0.1.0";

struct RunResult {
  bool all_pass = true;
  std::vector<std::string> files;  // relative to the output directory
  nlohmann::ordered_json summary;
};

/// Uniform grid of n_points over [0, t_max] merged with `extra` points.
inline std::vector<double> time_grid(const TimeGridConfig& g, std::span<const double> extra = {}) {
  std::vector<double> t(static_cast<std::size_t>(g.n_points));
  for (Index k = 0; k < g.n_points; ++k) t[std::size_t(k)] = g.t_max * double(k) / double(g.n_points - 1);
  t.back() = g.t_max;
  for (double x : extra) {
    const bool present = std::any_of(t.begin(), t.end(), [&](double y) { return std::abs(x - y) <= 1e-12 * g.t_max; });
    if (!present) t.push_back(x);
  }
  std::sort(t.begin(), t.end());
  return t;
}

/// Energy-shell estimate of the stationary populations for an initial
/// product state |i> (x) |eps_e>: p_s proportional to rho_e(eps_e + E_i - E_s)
/// with a Gaussian environment density of width sigma_e.
inline std::vector<double> stationary_populations_theory(const RealVector& levels, Index initial,
                                                         double eps_e, double sigma_e) {
  const boost::math::normal_distribution<double> dos(0.0, sigma_e);
  std::vector<double> p(std::size_t(levels.size()));
  double z = 0.0;
  for (Index s = 0; s < levels.size(); ++s) {
    p[std::size_t(s)] = boost::math::pdf(dos, eps_e + levels(initial) - levels(s));
    z += p[std::size_t(s)];
  }
  for (double& x : p) x /= z;
  return p;
}

namespace detail {

using ojson = nlohmann::ordered_json;

inline std::vector<std::string> trajectory_header(Index dim_s, bool with_seed) {
  std::vector<std::string> h{"time"};
  for (Index s = 0; s < dim_s; ++s) h.push_back("p_" + std::to_string(s));
  for (Index a = 0; a < dim_s; ++a) {
    for (Index b = a + 1; b < dim_s; ++b) {
      h.push_back("re_rho_" + std::to_string(a) + "_" + std::to_string(b));
      h.push_back("im_rho_" + std::to_string(a) + "_" + std::to_string(b));
    }
  }
  if (with_seed) {
    h.push_back("seed");
    h.push_back("realization");
  }
  return h;
}

inline void trajectory_row(CsvWriter& w, double t, const ComplexMatrix& rho) {
  w.field(t);
  for (Index s = 0; s < rho.rows(); ++s) w.field(rho(s, s).real());
  for (Index a = 0; a < rho.rows(); ++a) {
    for (Index b = a + 1; b < rho.rows(); ++b) {
      w.field(rho(a, b).real());
      w.field(rho(a, b).imag());
    }
  }
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj, std::uint64_t seed,
                             std::uint64_t realization) {
  CsvWriter w(path, trajectory_header(traj.dim_s(), true));
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    trajectory_row(w, traj.times[k], traj.reduced_states[k].matrix());
    w.field(seed).field(realization);
    w.end_row();
  }
}

class Summary {
 public:
  explicit Summary(const ExperimentConfig& c) {
    j_["mode"] = to_string(c.mode);
    j_["config_hash"] = config_hash(c);
    j_["master_seed"] = c.master_seed;
    j_["invariants"] = ojson::object();
    j_["observables"] = ojson::object();
  }

  void invariant(const std::string& name, bool pass, ojson detail = ojson::object()) {
    detail["pass"] = pass;
    j_["invariants"][name] = std::move(detail);
    all_pass_ = all_pass_ && pass;
  }
  ojson& observables() { return j_["observables"]; }

  RunResult finish(std::vector<std::string> files) {
    j_["all_pass"] = all_pass_;
    return RunResult{all_pass_, std::move(files), j_};
  }

 private:
  ojson j_;
  bool all_pass_ = true;
};

struct PhysicalityTally {
  PhysicalityReport worst{0.0, 0.0, 1.0};
  double norm_error = 0.0;

  void add(const Trajectory& traj) {
    norm_error = std::max(norm_error, traj.max_norm_error);
    for (const auto& rho : traj.reduced_states) merge_worst(worst, check_physical(rho.matrix()));
  }
  void add(const EnsembleStatistics& st) {
    norm_error = std::max(norm_error, st.max_norm_error);
    merge_worst(worst, PhysicalityReport{st.max_trace_error, st.max_hermiticity_error, st.min_eigenvalue});
  }
  void report(Summary& s, double tol = 1e-10) const {
    s.invariant("physicality", worst.ok(tol),
                {{"max_trace_error", worst.trace_error},
                 {"max_hermiticity_error", worst.hermiticity_error},
                 {"min_eigenvalue", worst.min_eigenvalue},
                 {"tolerance", tol}});
    s.invariant("norm_preserved", norm_error <= tol, {{"max_norm_error", norm_error}, {"tolerance", tol}});
  }
};

inline TimeWindow window_for(const ExperimentConfig& c) {
  return c.window ? *c.window : default_stationary_window(c.times.t_max, c.ensemble.sigma_w);
}

// ---------------------------------------------------------------------------

inline RunResult run_speckle(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const SystemTemplate tmpl = c.system.system_template();
  const CompositeSystem sys = tmpl.instantiate(c.system.dim_e);
  const PureState psi0 = tmpl.initial_state(sys);
  const EnsembleSpec spec = c.ensemble.spec(sys.dim());
  const std::vector<double> times = time_grid(c.times);
  const TimeWindow window = window_for(c);

  std::vector<std::optional<Trajectory>> trajs(std::size_t(c.n_realizations));
  parallel_for(trajs.size(), c.workers, [&](std::size_t r) {
    SeededRng rng(c.master_seed, r);
    try {
      trajs[r] = run_trajectory(sys, sample_interaction(spec, rng), psi0, times);
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), r);
    }
  });

  Summary sum(c);
  PhysicalityTally phys;
  std::vector<std::string> files;
  ojson per = ojson::array();
  const Index e_level = nearest_level(sys.spectrum_e, c.system.epsilon_e);
  const auto theory = stationary_populations_theory(sys.spectrum_s, c.system.initial_system_level,
                                                    sys.spectrum_e(e_level), c.system.sigma_e);
  double mean_p0 = 0.0;
  for (std::size_t r = 0; r < trajs.size(); ++r) {
    const std::string name = "trajectory_r" + std::to_string(r) + ".csv";
    write_trajectory(dir / name, *trajs[r], c.master_seed, r);
    files.push_back(name);
    phys.add(*trajs[r]);
    const auto ws = stationary_window_stats(*trajs[r], window);
    ojson row = {{"realization", r}, {"file", name}};
    for (std::size_t s = 0; s < ws.size(); ++s) {
      row["window_mean"].push_back(ws[s].mean);
      row["window_std"].push_back(ws[s].std);
    }
    mean_p0 += ws[0].mean / double(trajs.size());
    per.push_back(row);
  }
  phys.report(sum);
  if (trajs.size() >= 2) {
    double diff = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      diff = std::max(diff, std::abs(trajs[0]->populations[k](0) - trajs[1]->populations[k](0)));
    }
    sum.invariant("distinct_realizations", diff > 1e-6, {{"max_abs_p0_difference", diff}});
  }
  auto& obs = sum.observables();
  obs["environment_level"] = e_level;
  obs["environment_energy"] = sys.spectrum_e(e_level);
  obs["window"] = {window.t_start, window.t_end};
  obs["stationary_theory"] = theory;
  obs["window_mean_p0_average"] = mean_p0;
  obs["realizations"] = per;
  return sum.finish(files);
}

inline RunResult run_concentration(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const SystemTemplate tmpl = c.system.system_template();
  const CompositeSystem sys = tmpl.instantiate(c.system.dim_e);
  const EnsembleSpec spec = c.ensemble.spec(sys.dim());
  const std::vector<double> times = time_grid(c.times, c.concentration.times);
  EnsembleOptions opt;
  opt.workers = c.workers;
  opt.window = window_for(c);
  const EnsembleStatistics st =
      ensemble_statistics(sys, spec, tmpl.initial_state(sys), times, c.n_realizations, c.master_seed, opt);

  {
    CsvWriter w(dir / "concentration.csv", {"time", "sigma_rho_sq", "bound_eq3", "n", "sigma_rho_sq_stderr"});
    for (std::size_t k = 0; k < times.size(); ++k) {
      w.field(times[k]).field(st.sigma_rho_sq[k]).field(st.bound_eq3[k]).field(st.n_realizations);
      w.field(st.sigma_rho_sq_stderr[k]);
      w.end_row();
    }
  }
  {
    CsvWriter w(dir / "mean_reduced.csv", trajectory_header(sys.dim_s(), false));
    for (std::size_t k = 0; k < times.size(); ++k) {
      trajectory_row(w, times[k], st.mean_reduced[k]);
      w.end_row();
    }
  }

  Summary sum(c);
  PhysicalityTally phys;
  phys.add(st);
  phys.report(sum);
  if (spec.normalization != Normalization::Exact) {
    warn("concentration bound is stated for exact normalization; checking anyway");
  }
  std::vector<double> over;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (st.exceeds_bound[k]) over.push_back(times[k]);
  }
  sum.invariant("eq3_bound", over.empty(), {{"violations", over.size()}, {"violation_times", over}});
  double trace_err = 0.0;
  for (const auto& m : st.mean_reduced) trace_err = std::max(trace_err, std::abs(m.trace() - 1.0));
  sum.invariant("mean_unit_trace", trace_err <= 1e-9, {{"max_error", trace_err}});
  std::size_t inside = 0, total = 0;
  for (const auto& row : st.deviation_sq) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      ++total;
      if (row[k] <= 9.0 * st.sigma_rho_sq[k]) ++inside;
    }
  }
  const double frac = double(inside) / double(total);
  sum.invariant("single_seed_within_3_sigma", frac >= 0.99, {{"fraction", frac}, {"required", 0.99}});

  auto& obs = sum.observables();
  for (double t : c.concentration.times) {
    const auto k = std::size_t(std::lower_bound(times.begin(), times.end(), t - 1e-12 * c.times.t_max) - times.begin());
    obs["at_times"].push_back({{"time", times[k]},
                               {"sigma_rho_sq", st.sigma_rho_sq[k]},
                               {"sigma_rho_sq_stderr", st.sigma_rho_sq_stderr[k]},
                               {"bound_eq3", st.bound_eq3[k]}});
  }
  obs["speckle_std"] = st.speckle_std;
  obs["window_mean"] = st.window_mean;
  return sum.finish({"concentration.csv", "mean_reduced.csv"});
}

inline RunResult run_scaling(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const SystemTemplate tmpl = c.system.system_template();
  const std::array<double, 1> extra{c.scaling.t};
  const std::vector<double> times = time_grid(c.times, extra);
  const double t_fixed = *std::min_element(times.begin(), times.end(), [&](double a, double b) {
    return std::abs(a - c.scaling.t) < std::abs(b - c.scaling.t);
  });
  const TimeWindow window = window_for(c);
  const EnsembleSpec spec_template = c.ensemble.spec(c.dim());
  const ScalingTable table = scaling_study(tmpl, spec_template, c.scaling.dims_e, times, t_fixed, window,
                                           c.n_realizations, c.master_seed, c.workers);

  std::vector<std::string> files{"scaling.csv"};
  {
    std::vector<std::string> h{"dim_e", "sigma_rho_sq", "bound_eq3", "n", "sigma_rho_sq_stderr", "time"};
    for (Index s = 0; s < c.system.dim_s; ++s) h.push_back("speckle_std_p_" + std::to_string(s));
    for (Index s = 0; s < c.system.dim_s; ++s) h.push_back("window_mean_p_" + std::to_string(s));
    CsvWriter w(dir / "scaling.csv", h);
    for (const auto& row : table.rows) {
      w.field(std::int64_t(row.dim_e)).field(row.sigma_rho_sq).field(row.bound_eq3).field(c.n_realizations);
      w.field(row.sigma_rho_sq_stderr).field(t_fixed);
      for (double x : row.speckle_std) w.field(x);
      for (double x : row.window_mean) w.field(x);
      w.end_row();
    }
  }
  // Realization 0 at every dim_e, for shifted-trace plots.
  std::vector<std::optional<Trajectory>> trajs(c.scaling.dims_e.size());
  parallel_for(trajs.size(), c.workers, [&](std::size_t k) {
    const CompositeSystem sys = tmpl.instantiate(c.scaling.dims_e[k]);
    SeededRng rng(c.master_seed, 0);
    trajs[k] = run_trajectory(sys, sample_interaction(resized(spec_template, sys.dim()), rng),
                              tmpl.initial_state(sys), times);
  });
  PhysicalityTally phys;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const std::string name = "trajectory_dim" + std::to_string(c.scaling.dims_e[k]) + ".csv";
    write_trajectory(dir / name, *trajs[k], c.master_seed, 0);
    phys.add(*trajs[k]);
    files.push_back(name);
  }

  Summary sum(c);
  phys.report(sum);
  std::vector<Index> over;
  for (const auto& row : table.rows) {
    if (row.sigma_rho_sq > row.bound_eq3) over.push_back(row.dim_e);
  }
  sum.invariant("eq3_bound_at_t", over.empty(), {{"time", t_fixed}, {"violating_dims_e", over}});
  if (table.monotone_decrease) sum.invariant("monotone_decrease", *table.monotone_decrease);
  if (!table.quadruple_ratios.empty()) {
    bool ok = true;
    ojson ratios = ojson::array();
    for (const auto& [d, ratio] : table.quadruple_ratios) {
      ok = ok && ratio >= 2.0 && ratio <= 8.0;
      ratios.push_back({{"dim_e", d}, {"ratio", ratio}});
    }
    sum.invariant("inverse_dim_trend", ok, {{"band", {2.0, 8.0}}, {"ratios", ratios}});
  }
  sum.observables()["window"] = {window.t_start, window.t_end};
  return sum.finish(files);
}

inline RunResult run_gradient_check(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const SystemTemplate tmpl = c.system.system_template();
  const auto& g = c.gradient;
  std::vector<GradientReport> reports(std::size_t(g.instances));
  std::vector<Index> dims(reports.size());
  parallel_for(reports.size(), c.workers, [&](std::size_t k) {
    const Index dim_e = g.dims_e[k % g.dims_e.size()];
    const CompositeSystem sys = tmpl.instantiate(dim_e);
    SeededRng rng(c.master_seed, k);
    const double tau = g.tau_max * (1.0 - std::generate_canonical<double, 53>(rng.engine()));
    const HermitianOperator w = sample_interaction(c.ensemble.spec(sys.dim()), rng);
    FiniteDifferenceOptions opt;
    opt.step = g.step_rel * c.ensemble.sigma_w;
    try {
      reports[k] = gradient_report(sys, w, tmpl.initial_state(sys), tau, opt);
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), k);
    }
    dims[k] = dim_e;
  });

  std::size_t bad = 0;
  {
    CsvWriter w(dir / "gradient.csv", {"instance", "dim_e", "tau", "numeric_gradient_norm_sq",
                                       "exact_commutator_norm_sq", "analytic_upper_bound", "chain_holds"});
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const auto& r = reports[k];
      const bool ok = r.chain_holds();
      bad += ok ? 0 : 1;
      w.field(std::uint64_t(k)).field(std::int64_t(dims[k])).field(r.tau).field(r.numeric_gradient_norm_sq);
      w.field(r.exact_commutator_norm_sq).field(r.analytic_upper_bound).field(ok);
      w.end_row();
    }
  }
  Summary sum(c);
  sum.invariant("gradient_chain", bad == 0, {{"violations", bad}, {"instances", reports.size()}});
  return sum.finish({"gradient.csv"});
}

inline RunResult run_poincare_check(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const SystemTemplate tmpl = c.system.system_template();
  const EnsembleSpec spec = c.ensemble.spec(c.dim());
  if (spec.normalization == Normalization::Exact) {
    warn("Poincare tests assume a product measure; exact normalization conditions it");
  }
  std::optional<PopulationProbe> probe;
  if (c.poincare.function == TestFunction::Population) {
    const CompositeSystem sys = tmpl.instantiate(c.system.dim_e);
    probe = PopulationProbe{sys, tmpl.initial_state(sys), c.poincare.tau, c.poincare.level};
  }
  const PoincareTestReport r = poincare_mc_test(spec, c.poincare.function, c.poincare.n, c.master_seed,
                                                probe, c.workers);
  const PoincareBound b = poincare_lower_bound(spec);
  {
    CsvWriter w(dir / "poincare.csv", {"function", "n", "variance", "variance_stderr", "mean_grad_sq",
                                       "mean_grad_sq_stderr", "constant", "common_bound", "gaussian_bound",
                                       "margin", "margin_stderr"});
    w.field(to_string(r.function)).field(std::int64_t(r.n)).field(r.variance).field(r.variance_stderr);
    w.field(r.mean_grad_sq).field(r.mean_grad_sq_stderr).field(r.constant).field(b.common);
    if (b.gaussian) {
      w.field(*b.gaussian);
    } else {
      w.field("");
    }
    w.field(r.margin).field(r.margin_stderr);
    w.end_row();
  }
  Summary sum(c);
  sum.invariant("poincare_margin", r.margin <= 1.0 + 3.0 * r.margin_stderr,
                {{"margin", r.margin}, {"margin_stderr", r.margin_stderr}, {"constant", r.constant}});
  return sum.finish({"poincare.csv"});
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_json(const std::filesystem::path& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace detail

/// Runs the configured mode and writes all artifacts to c.output_dir.
inline RunResult run_experiment(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path dir(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError({"output_dir: cannot create " + dir.string() + (ec ? ": " + ec.message() : "")});
  }

  RunResult res;
  switch (c.mode) {
    case Mode::Speckle: res = detail::run_speckle(c, dir); break;
    case Mode::Concentration: res = detail::run_concentration(c, dir); break;
    case Mode::Scaling: res = detail::run_scaling(c, dir); break;
    case Mode::GradientCheck: res = detail::run_gradient_check(c, dir); break;
    case Mode::PoincareCheck: res = detail::run_poincare_check(c, dir); break;
  }
  detail::write_json(dir / "summary.json", res.summary);
  res.files.push_back("summary.json");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::ordered_json manifest;
  manifest["tool"] = "qtyp";
  manifest["version"] = kVersion;
  manifest["config_hash"] = config_hash(c);
  manifest["config"] = to_json(c);
  manifest["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"boost", std::to_string(BOOST_VERSION / 100000) + "." +
                                        std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                                        std::to_string(BOOST_VERSION % 100)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"compiler", __VERSION__}};
  manifest["files"] = res.files;
  manifest["all_pass"] = res.all_pass;
  manifest["created_utc"] = detail::utc_timestamp();
  manifest["wall_time_s"] = wall;
  detail::write_json(dir / "manifest.json", manifest);
  res.files.push_back("manifest.json");
  return res;
}

}  // namespace qtyp
