#pragma once

// Composite Hamiltonians, exact propagation and reduced density matrices.
// hbar = 1, so tau = t everywhere. H_s and H_e are diagonal in the working
// basis; the system index is the slow index (see tensor_index()).

#include "qtyp/linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtyp {

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::optional<std::uint64_t> seed = {})
      : std::runtime_error(seed ? what + " (realization seed stream " + std::to_string(*seed) + ")"
                                : what),
        seed_(seed) {}
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

 private:
  std::optional<std::uint64_t> seed_;
};

struct CompositeSystem {
  RealVector spectrum_s;
  RealVector spectrum_e;

  Index dim_s() const noexcept { return spectrum_s.size(); }
  Index dim_e() const noexcept { return spectrum_e.size(); }
  Index dim() const noexcept { return dim_s() * dim_e(); }

  void validate() const {
    if (dim_s() < 1 || dim_e() < 1) throw DimensionError("CompositeSystem: empty spectrum");
    if (!spectrum_s.allFinite() || !spectrum_e.allFinite()) {
      throw std::invalid_argument("CompositeSystem: non-finite energy level");
    }
    if (dim() > kMaxDenseDim) {
      throw DimensionError("CompositeSystem: dim H = " + std::to_string(dim()) +
                           " exceeds dense limit " + std::to_string(kMaxDenseDim));
    }
  }

  /// Levels (0, gap) for the system.
  static CompositeSystem two_level(double gap, RealVector spectrum_e) {
    RealVector s(2);
    s << 0.0, gap;
    return CompositeSystem{std::move(s), std::move(spectrum_e)};
  }
};

/// Level k sits at sigma_e * Phi^{-1}((k + 1/2) / dim_e): a deterministic,
/// centered, ascending grid with Gaussian density of states.
inline RealVector gaussian_environment_spectrum(Index dim_e, double sigma_e) {
  if (dim_e < 1) throw DimensionError("gaussian_environment_spectrum: dim_e must be >= 1");
  if (!(sigma_e > 0.0)) throw std::invalid_argument("gaussian_environment_spectrum: sigma_e <= 0");
  const boost::math::normal_distribution<double> phi;
  RealVector out(dim_e);
  for (Index k = 0; k < dim_e / 2; ++k) {
    const double x = boost::math::quantile(phi, (double(k) + 0.5) / double(dim_e));
    out(k) = sigma_e * x;
    out(dim_e - 1 - k) = -sigma_e * x;
  }
  if (dim_e % 2 == 1) out(dim_e / 2) = 0.0;
  return out;
}

/// Index of the level closest to `target`; ties go to the lower level.
inline Index nearest_level(const RealVector& spectrum, double target) {
  if (spectrum.size() == 0) throw DimensionError("nearest_level: empty spectrum");
  Index best = 0;
  for (Index k = 1; k < spectrum.size(); ++k) {
    const double dk = std::abs(spectrum(k) - target);
    const double db = std::abs(spectrum(best) - target);
    if (dk < db || (dk == db && spectrum(k) < spectrum(best))) best = k;
  }
  return best;
}

class PureState {
 public:
  explicit PureState(ComplexVector amplitudes, double norm_tol = 1e-12)
      : psi_(std::move(amplitudes)) {
    if (psi_.size() < 1 || !psi_.allFinite()) {
      throw std::invalid_argument("PureState: empty or non-finite amplitudes");
    }
    const double n = psi_.norm();
    if (std::abs(n - 1.0) > norm_tol) {
      throw NumericalError("PureState: norm " + std::to_string(n) + " deviates from 1");
    }
  }

  static PureState product(Index dim_s, Index dim_e, Index s, Index e) {
    if (s < 0 || s >= dim_s || e < 0 || e >= dim_e) {
      throw DimensionError("PureState::product: level index out of range");
    }
    ComplexVector v = ComplexVector::Zero(dim_s * dim_e);
    v(tensor_index(s, e, dim_e)) = 1.0;
    return PureState(std::move(v));
  }

  static PureState normalized(ComplexVector v) {
    const double n = v.norm();
    if (!(n > 0.0)) throw std::invalid_argument("PureState::normalized: zero vector");
    return PureState(v / n);
  }

  Index dim() const noexcept { return psi_.size(); }
  const ComplexVector& amplitudes() const noexcept { return psi_; }
  ComplexMatrix projector() const { return psi_ * psi_.adjoint(); }

 private:
  ComplexVector psi_;
};

/// gamma_{s,e}: amplitudes of |psi> in the tensor basis, Tr(gamma gamma^dag) = 1.
class CoefficientMatrix {
 public:
  explicit CoefficientMatrix(ComplexMatrix gamma, double norm_tol = 1e-9) : g_(std::move(gamma)) {
    const double n2 = g_.squaredNorm();
    if (std::abs(n2 - 1.0) > norm_tol) {
      throw std::invalid_argument("CoefficientMatrix: Tr(gamma gamma^dag) = " +
                                  std::to_string(n2) + ", expected 1");
    }
  }

  const ComplexMatrix& gamma() const noexcept { return g_; }
  Index dim_s() const noexcept { return g_.rows(); }
  Index dim_e() const noexcept { return g_.cols(); }
  ComplexMatrix reduced() const { return g_ * g_.adjoint(); }
  double purity() const { return reduced().squaredNorm(); }

 private:
  ComplexMatrix g_;
};

inline HermitianOperator build_h0(const CompositeSystem& sys) {
  sys.validate();
  RealVector d(sys.dim());
  for (Index s = 0; s < sys.dim_s(); ++s) {
    for (Index e = 0; e < sys.dim_e(); ++e) {
      d(tensor_index(s, e, sys.dim_e())) = sys.spectrum_s(s) + sys.spectrum_e(e);
    }
  }
  return HermitianOperator::diagonal(d);
}

/// One eigendecomposition of H, reused for any number of times:
/// psi(t) = V exp(-i Lambda t) V^dag psi0.
class Evolution {
 public:
  Evolution(const HermitianOperator& h, const ComplexVector& psi0) : eig_(eigh(h)) {
    if (psi0.size() != h.dim()) {
      throw DimensionError("Evolution: state dim " + std::to_string(psi0.size()) +
                           " != operator dim " + std::to_string(h.dim()));
    }
    coeffs_ = eig_.vectors.adjoint() * psi0;
  }

  ComplexVector at(double t) const {
    ComplexVector phased(coeffs_.size());
    for (Index k = 0; k < coeffs_.size(); ++k) {
      phased(k) = std::polar(1.0, -eig_.values(k) * t) * coeffs_(k);
    }
    return eig_.vectors * phased;
  }

  const Eigensystem& eigensystem() const noexcept { return eig_; }

 private:
  Eigensystem eig_;
  ComplexVector coeffs_;
};

inline constexpr double kUnitarityTol = 1e-10;

inline std::vector<PureState> evolve_pure(const HermitianOperator& h, const PureState& psi0,
                                          std::span<const double> times) {
  const Evolution evo(h, psi0.amplitudes());
  std::vector<PureState> out;
  out.reserve(times.size());
  for (double t : times) {
    if (!std::isfinite(t)) throw std::invalid_argument("evolve_pure: non-finite time");
    if (t == 0.0) {
      out.push_back(psi0);
    } else {
      out.emplace_back(evo.at(t), kUnitarityTol);
    }
  }
  return out;
}

struct ReducedPure {
  CoefficientMatrix gamma;
  HermitianOperator rho_s;
};

/// gamma(s, e) = psi[s * dim_e + e]; rho_s = gamma gamma^dag.
inline CoefficientMatrix coefficient_matrix(const ComplexVector& psi, Index dim_s, Index dim_e) {
  if (dim_s < 1 || dim_e < 1 || psi.size() != dim_s * dim_e) {
    throw DimensionError("reduce_pure: state dim " + std::to_string(psi.size()) + " != " +
                         std::to_string(dim_s) + " x " + std::to_string(dim_e));
  }
  ComplexMatrix g(dim_s, dim_e);
  for (Index s = 0; s < dim_s; ++s) {
    for (Index e = 0; e < dim_e; ++e) g(s, e) = psi(tensor_index(s, e, dim_e));
  }
  return CoefficientMatrix(std::move(g));
}

inline ReducedPure reduce_pure(const PureState& psi, Index dim_s, Index dim_e) {
  CoefficientMatrix g = coefficient_matrix(psi.amplitudes(), dim_s, dim_e);
  HermitianOperator rho(g.reduced());
  return ReducedPure{std::move(g), std::move(rho)};
}

// ---------------------------------------------------------------------------
// Physicality of reduced states

struct PhysicalityReport {
  double trace_error = 0.0;       // |Tr rho - 1|
  double hermiticity_error = 0.0; // ||rho - rho^dag||_F
  double min_eigenvalue = 0.0;

  bool ok(double tol = 1e-10) const {
    return trace_error <= tol && hermiticity_error <= tol && min_eigenvalue >= -tol;
  }
};

inline PhysicalityReport check_physical(const ComplexMatrix& rho) {
  PhysicalityReport r;
  r.trace_error = std::abs(rho.trace() - Complex(1.0, 0.0));
  r.hermiticity_error = (rho - rho.adjoint()).norm();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (rho + rho.adjoint()),
                                                  Eigen::EigenvaluesOnly);
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  return r;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<HermitianOperator> reduced_states;
  std::vector<RealVector> populations;
  double max_norm_error = 0.0;  // max_t | ||psi(t)|| - 1 |

  Index dim_s() const { return reduced_states.empty() ? 0 : reduced_states.front().dim(); }
};

/// rho_s(t) = Tr_e[exp(-i(H0+W)t) |psi0><psi0| exp(i(H0+W)t)] on the given grid.
inline Trajectory run_trajectory(const CompositeSystem& sys, const HermitianOperator& w,
                                 const PureState& psi0, std::span<const double> times) {
  sys.validate();
  if (w.dim() != sys.dim() || psi0.dim() != sys.dim()) {
    throw DimensionError("run_trajectory: interaction dim " + std::to_string(w.dim()) +
                         ", state dim " + std::to_string(psi0.dim()) + ", system dim " +
                         std::to_string(sys.dim()));
  }
  const HermitianOperator h(build_h0(sys).matrix() + w.matrix());
  const Evolution evo(h, psi0.amplitudes());

  Trajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.reduced_states.reserve(times.size());
  traj.populations.reserve(times.size());
  for (double t : times) {
    if (!std::isfinite(t)) throw std::invalid_argument("run_trajectory: non-finite time");
    const ComplexVector psi = t == 0.0 ? psi0.amplitudes() : evo.at(t);
    const double norm_err = std::abs(psi.norm() - 1.0);
    traj.max_norm_error = std::max(traj.max_norm_error, norm_err);
    if (norm_err > kUnitarityTol) {
      throw NumericalError("run_trajectory: norm drift " + std::to_string(norm_err) +
                           " at t = " + std::to_string(t));
    }
    const ComplexMatrix rho = coefficient_matrix(psi, sys.dim_s(), sys.dim_e()).reduced();
    traj.populations.push_back(rho.diagonal().real());
    traj.reduced_states.emplace_back(rho);
  }
  return traj;
}

/// Full density-matrix propagation for mixed initial states.
inline constexpr Index kMaxDensityEvolutionDim = 512;

inline std::vector<HermitianOperator> evolve_density(const HermitianOperator& h,
                                                     const HermitianOperator& rho0,
                                                     std::span<const double> times) {
  if (h.dim() != rho0.dim()) throw DimensionError("evolve_density: dimension mismatch");
  if (h.dim() > kMaxDensityEvolutionDim) {
    throw DimensionError("evolve_density: dim " + std::to_string(h.dim()) + " above " +
                         std::to_string(kMaxDensityEvolutionDim) +
                         "; decompose into pure states instead");
  }
  const Eigensystem es = eigh(h);
  const ComplexMatrix rho_eig = es.vectors.adjoint() * rho0.matrix() * es.vectors;
  std::vector<HermitianOperator> out;
  out.reserve(times.size());
  for (double t : times) {
    ComplexVector ph(h.dim());
    for (Index k = 0; k < h.dim(); ++k) ph(k) = std::polar(1.0, -es.values(k) * t);
    const ComplexMatrix r = ph.asDiagonal() * rho_eig * ph.conjugate().asDiagonal();
    out.emplace_back(es.vectors * r * es.vectors.adjoint());
  }
  return out;
}

}  // namespace qtyp
