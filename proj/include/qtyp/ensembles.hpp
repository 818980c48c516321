#pragma once

// Random interaction ensembles: Wigner, Wigner band (WBRM) and randomly
// rotated (RRM) matrices, plus their Poincare-constant lower bounds.
//
// Coordinates. A Hermitian matrix is parameterized by its components along
// the Frobenius-orthonormal basis E_ii, (E_ij + E_ji)/sqrt2, i(E_ij - E_ji)/sqrt2.
// Wigner samples draw every coordinate i.i.d. N(0, v), with v chosen so that
// E[Tr W^2]/dim = sigma_w^2 for the raw (pre-projection) matrix:
//   complex-Hermitian  v = sigma_w^2 / N        (off-diagonal Re, Im std sigma_w/sqrt(2N))
//   real-symmetric     v = 2 sigma_w^2 / (N+1)
// The Gaussian Poincare constant in these coordinates is 1/v.

#include "qtyp/linalg.hpp"
#include "qtyp/log.hpp"

#include <boost/math/constants/constants.hpp>

#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace qtyp {

enum class EnsembleKind { Wigner, Wbrm, Rrm };
enum class Symmetry { RealSymmetric, ComplexHermitian };
enum class Normalization { Exact, Expectation };
enum class BandProfile { HardCutoff, Gaussian };

struct Band {
  BandProfile profile = BandProfile::HardCutoff;
  Index width = 1;
};

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::Wigner;
  Symmetry symmetry = Symmetry::ComplexHermitian;
  Index dim = 2;
  double sigma_w = 0.2;
  std::optional<Band> band;                        // WBRM only
  std::optional<std::vector<double>> fixed_spectrum; // RRM only: diagonal of D
  Normalization normalization = Normalization::Exact;

  void validate() const;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Deterministic generator keyed by (seed, stream). Parallel realizations use
/// one master seed and the realization index as stream id.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::mt19937_64& engine() noexcept { return engine_; }

  double normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------

inline std::string_view to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::Wigner: return "wigner";
    case EnsembleKind::Wbrm: return "wbrm";
    case EnsembleKind::Rrm: return "rrm";
  }
  return "?";
}
inline std::string_view to_string(Symmetry s) {
  return s == Symmetry::RealSymmetric ? "real-symmetric" : "complex-hermitian";
}
inline std::string_view to_string(Normalization n) {
  return n == Normalization::Exact ? "exact" : "expectation";
}
inline std::string_view to_string(BandProfile p) {
  return p == BandProfile::HardCutoff ? "hard-cutoff" : "gaussian";
}

/// a(x) in [0, 1].
inline double band_profile_value(BandProfile p, double x) {
  switch (p) {
    case BandProfile::HardCutoff: return std::abs(x) <= 1.0 ? 1.0 : 0.0;
    case BandProfile::Gaussian: return std::exp(-0.5 * x * x);
  }
  return 0.0;
}

inline double spectrum_mean_tolerance(const std::vector<double>& d) {
  double scale = 1.0;
  for (double x : d) scale = std::max(scale, std::abs(x));
  return 1e-12 * scale;
}

inline void EnsembleSpec::validate() const {
  if (dim < 1) throw SpecError("ensemble.dim must be >= 1");
  if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) {
    throw SpecError("ensemble.sigma_w must be finite and > 0");
  }
  if (kind == EnsembleKind::Wbrm) {
    if (!band) throw SpecError("ensemble.band is required for kind=wbrm");
    if (band->width < 1) throw SpecError("ensemble.band.width must be >= 1");
  }
  if (kind == EnsembleKind::Rrm) {
    if (!fixed_spectrum) throw SpecError("ensemble.spectrum is required for kind=rrm");
    if (static_cast<Index>(fixed_spectrum->size()) != dim) {
      throw SpecError("ensemble.spectrum has length " + std::to_string(fixed_spectrum->size()) +
                      ", expected dim " + std::to_string(dim));
    }
    for (double x : *fixed_spectrum) {
      if (!std::isfinite(x)) throw SpecError("ensemble.spectrum has a non-finite entry");
    }
    const double mean =
        std::accumulate(fixed_spectrum->begin(), fixed_spectrum->end(), 0.0) / double(dim);
    if (std::abs(mean) > spectrum_mean_tolerance(*fixed_spectrum)) {
      throw SpecError("ensemble.spectrum must be centered (mean " + std::to_string(mean) + ")");
    }
  }
}

/// Variance of each orthonormal coordinate of a raw Wigner sample.
inline double wigner_coordinate_variance(Symmetry sym, Index dim, double sigma_w) {
  const double n = static_cast<double>(dim);
  return sym == Symmetry::ComplexHermitian ? sigma_w * sigma_w / n
                                           : 2.0 * sigma_w * sigma_w / (n + 1.0);
}

namespace detail {

// Raw Gaussian Hermitian draw in the coordinate convention above. The draw
// order (row-major over the upper triangle) is shared by Wigner and WBRM so a
// band covering the whole matrix reproduces the Wigner sample bit for bit.
inline ComplexMatrix raw_wigner(Symmetry sym, Index n, double sigma_w, SeededRng& rng) {
  const double sd = std::sqrt(wigner_coordinate_variance(sym, n, sigma_w));
  const double off = sd / std::sqrt(2.0);
  ComplexMatrix w(n, n);
  for (Index i = 0; i < n; ++i) {
    w(i, i) = Complex(sd * rng.normal(), 0.0);
    for (Index j = i + 1; j < n; ++j) {
      const double re = off * rng.normal();
      const double im = sym == Symmetry::ComplexHermitian ? off * rng.normal() : 0.0;
      w(i, j) = Complex(re, im);
      w(j, i) = Complex(re, -im);
    }
  }
  return w;
}

inline void project_traceless(ComplexMatrix& w) {
  const Complex shift = w.trace() / static_cast<double>(w.rows());
  w.diagonal().array() -= Complex(shift.real(), 0.0);
}

inline void rescale_exact(ComplexMatrix& w, double sigma_w) {
  const double n = static_cast<double>(w.rows());
  const double ms = w.squaredNorm() / n;
  if (!(ms > 0.0)) throw SpecError("exact normalization impossible: sample is identically zero");
  w *= sigma_w / std::sqrt(ms);
}

// N^2 / sum_ij a_ij^2: scale on the raw variance restoring E Tr W^2 = N sigma_w^2.
inline double band_variance_boost(const Band& band, Index n) {
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double a = band_profile_value(band.profile, double(i - j) / double(band.width));
      sum += a * a;
    }
  }
  return double(n) * double(n) / sum;
}

inline void require_kind(const EnsembleSpec& spec, EnsembleKind k) {
  spec.validate();
  if (spec.kind != k) {
    throw SpecError("sampler for " + std::string(to_string(k)) + " called with kind=" +
                    std::string(to_string(spec.kind)));
  }
}

inline void finish(ComplexMatrix& w, const EnsembleSpec& spec) {
  project_traceless(w);
  if (spec.normalization == Normalization::Exact) rescale_exact(w, spec.sigma_w);
}

}  // namespace detail

inline HermitianOperator sample_wigner(const EnsembleSpec& spec, SeededRng& rng) {
  detail::require_kind(spec, EnsembleKind::Wigner);
  if (spec.dim == 1 && spec.normalization == Normalization::Exact) {
    throw SpecError("dim 1 with exact normalization is infeasible: Tr W = 0 forces W = 0");
  }
  ComplexMatrix w = detail::raw_wigner(spec.symmetry, spec.dim, spec.sigma_w, rng);
  detail::finish(w, spec);
  return HermitianOperator(w);
}

inline bool band_covers_everything(const Band& band, Index n) {
  for (Index k = 0; k < n; ++k) {
    if (band_profile_value(band.profile, double(k) / double(band.width)) != 1.0) return false;
  }
  return true;
}

inline HermitianOperator sample_wbrm(const EnsembleSpec& spec, SeededRng& rng) {
  detail::require_kind(spec, EnsembleKind::Wbrm);
  const Index n = spec.dim;
  if (n == 1 && spec.normalization == Normalization::Exact) {
    throw SpecError("dim 1 with exact normalization is infeasible: Tr W = 0 forces W = 0");
  }
  const Band& band = *spec.band;
  if (band.width >= n && band_covers_everything(band, n)) {
    warn("wbrm band covers the whole matrix; sample is a plain Wigner matrix");
  }
  ComplexMatrix w = detail::raw_wigner(spec.symmetry, n, spec.sigma_w, rng);
  const double boost = spec.normalization == Normalization::Expectation
                           ? std::sqrt(detail::band_variance_boost(band, n))
                           : 1.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      w(i, j) *= boost * band_profile_value(band.profile, double(i - j) / double(band.width));
    }
  }
  detail::finish(w, spec);
  return HermitianOperator(w);
}

/// Haar unitary (or orthogonal) matrix: QR of a Ginibre matrix with the
/// phases of diag(R) moved into Q.
inline ComplexMatrix sample_haar_unitary(Index dim, Symmetry sym, SeededRng& rng) {
  if (dim < 1) throw DimensionError("sample_haar_unitary: dim must be >= 1");
  ComplexMatrix g(dim, dim);
  for (Index j = 0; j < dim; ++j) {
    for (Index i = 0; i < dim; ++i) {
      const double re = rng.normal();
      const double im = sym == Symmetry::ComplexHermitian ? rng.normal() : 0.0;
      g(i, j) = Complex(re, im);
    }
  }
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix& r = qr.matrixQR();
  for (Index j = 0; j < dim; ++j) {
    const Complex d = r(j, j);
    const double a = std::abs(d);
    if (a > 0.0) q.col(j) *= d / a;
  }
  return q;
}

inline HermitianOperator sample_rrm(const EnsembleSpec& spec, SeededRng& rng) {
  detail::require_kind(spec, EnsembleKind::Rrm);
  const Eigen::Map<const RealVector> d(spec.fixed_spectrum->data(), spec.dim);
  const ComplexMatrix u = sample_haar_unitary(spec.dim, spec.symmetry, rng);
  const ComplexMatrix w = u * d.cast<Complex>().asDiagonal() * u.adjoint();
  return HermitianOperator(w);
}

inline HermitianOperator sample_interaction(const EnsembleSpec& spec, SeededRng& rng) {
  switch (spec.kind) {
    case EnsembleKind::Wigner: return sample_wigner(spec, rng);
    case EnsembleKind::Wbrm: return sample_wbrm(spec, rng);
    case EnsembleKind::Rrm: return sample_rrm(spec, rng);
  }
  throw SpecError("unknown ensemble kind");
}

// ---------------------------------------------------------------------------
// Spectra

namespace detail {

// CDF of the semicircle law on [-2, 2] (unit variance).
inline double semicircle_cdf(double x) {
  constexpr double pi = boost::math::constants::pi<double>();
  x = std::clamp(x, -2.0, 2.0);
  return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * pi) + std::asin(x / 2.0) / pi;
}

inline double semicircle_quantile(double p) {
  double lo = -2.0, hi = 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (semicircle_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Semicircle quantiles at (k + 1/2)/dim, mirrored to be exactly centered and
/// rescaled so that Tr(D^2)/dim = sigma^2.
inline std::vector<double> semicircle_spectrum(Index dim, double sigma) {
  if (dim < 1) throw DimensionError("semicircle_spectrum: dim must be >= 1");
  std::vector<double> d(static_cast<std::size_t>(dim), 0.0);
  for (Index k = 0; k < dim / 2; ++k) {
    const double x = detail::semicircle_quantile((double(k) + 0.5) / double(dim));
    d[std::size_t(k)] = x;
    d[std::size_t(dim - 1 - k)] = -x;
  }
  double ms = 0.0;
  for (double x : d) ms += x * x;
  ms /= double(dim);
  if (ms > 0.0) {
    for (double& x : d) x *= sigma / std::sqrt(ms);
  }
  return d;
}

inline double spectrum_variance(const std::vector<double>& d) {
  double ms = 0.0;
  for (double x : d) ms += x * x;
  return ms / double(d.size());
}

/// Returns a copy of `spec` resized to `dim`. RRM specs get a fresh
/// semicircle spectrum scaled to sigma_w.
inline EnsembleSpec resized(EnsembleSpec spec, Index dim) {
  spec.dim = dim;
  if (spec.kind == EnsembleKind::Rrm) spec.fixed_spectrum = semicircle_spectrum(dim, spec.sigma_w);
  return spec;
}

// ---------------------------------------------------------------------------
// Poincare constants

struct PoincareBound {
  /// dim / (2 sigma^2); sigma = sigma_w (Wigner, WBRM) or sigma_D (RRM).
  double common = 0.0;
  /// Gaussian ensembles only: 1 / (largest coordinate variance). Equals
  /// N/sigma_w^2 for complex Wigner matrices.
  std::optional<double> gaussian;
};

inline PoincareBound poincare_lower_bound(const EnsembleSpec& spec) {
  spec.validate();
  const double n = static_cast<double>(spec.dim);
  PoincareBound out;
  if (spec.kind == EnsembleKind::Rrm) {
    const double var_d = spectrum_variance(*spec.fixed_spectrum);
    out.common = var_d > 0.0 ? n / (2.0 * var_d) : std::numeric_limits<double>::infinity();
    return out;
  }
  out.common = n / (2.0 * spec.sigma_w * spec.sigma_w);
  double v = wigner_coordinate_variance(spec.symmetry, spec.dim, spec.sigma_w);
  if (spec.kind == EnsembleKind::Wbrm) {
    // Restoring Tr W^2 = N sigma_w^2 inflates the on-band variances; max a^2 = a(0)^2 = 1.
    v *= detail::band_variance_boost(*spec.band, spec.dim);
  }
  out.gaussian = 1.0 / v;
  return out;
}

}  // namespace qtyp
