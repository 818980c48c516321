#pragma once

// Dense complex linear algebra on top of Eigen.
//
// Tensor ordering convention: in H = H_s (x) H_e the system index is the
// slow (outer) index, so basis state |s, e> lives at s * dim_e + e. Every
// reshape in the library goes through tensor_index().

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace qtyp {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;  // column-major
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Largest operator dimension accepted by dense routines (~1 GiB per matrix).
inline constexpr Index kMaxDenseDim = 8192;

namespace tol {
inline constexpr double kHermiticity = 1e-9;     // relative, admission check
inline constexpr double kReconstruction = 1e-10; // relative, eigh post-check
inline constexpr double kOrthonormality = 1e-10;
}  // namespace tol

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotHermitianError : public std::invalid_argument {
 public:
  NotHermitianError(double deviation, double norm)
      : std::invalid_argument("matrix is not Hermitian: ||A - A^dag||_F = " +
                              std::to_string(deviation) + " with ||A||_F = " +
                              std::to_string(norm)),
        deviation_(deviation) {}
  double deviation() const noexcept { return deviation_; }

 private:
  double deviation_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr Index tensor_index(Index s, Index e, Index dim_e) noexcept {
  return s * dim_e + e;
}

inline bool all_finite(const ComplexMatrix& m) { return m.allFinite(); }

inline double frobenius_norm_sq(const ComplexMatrix& a) {
  return a.squaredNorm();
}

/// Square complex matrix with A == A^dag up to the admission tolerance.
/// Construction symmetrizes the stored matrix so downstream code sees an
/// exactly Hermitian operator.
class HermitianOperator {
 public:
  HermitianOperator() = default;

  explicit HermitianOperator(const ComplexMatrix& m,
                             double rel_tol = tol::kHermiticity) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw DimensionError("HermitianOperator needs a non-empty square matrix, got " +
                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw std::invalid_argument("HermitianOperator: non-finite entry");
    const double norm = m.norm();
    const double dev = (m - m.adjoint()).norm();
    if (dev > rel_tol * norm) {
      throw NotHermitianError(dev, norm);
    }
    m_ = 0.5 * (m + m.adjoint());
  }

  static HermitianOperator zero(Index dim) {
    return HermitianOperator(ComplexMatrix::Zero(dim, dim));
  }
  static HermitianOperator diagonal(const RealVector& d) {
    return HermitianOperator(d.cast<Complex>().asDiagonal().toDenseMatrix());
  }

  Index dim() const noexcept { return m_.rows(); }
  const ComplexMatrix& matrix() const noexcept { return m_; }
  Complex trace() const { return m_.trace(); }

  friend HermitianOperator operator+(const HermitianOperator& a, const HermitianOperator& b) {
    if (a.dim() != b.dim()) throw DimensionError("HermitianOperator sum: dimension mismatch");
    return HermitianOperator(a.m_ + b.m_);
  }
  friend HermitianOperator operator*(double s, const HermitianOperator& a) {
    return HermitianOperator(s * a.m_);
  }

 private:
  ComplexMatrix m_;
};

struct Eigensystem {
  RealVector values;     // ascending
  ComplexMatrix vectors; // columns, orthonormal, largest-modulus entry real > 0
};

namespace detail {

// Makes the first largest-modulus component of each column real positive.
inline void fix_phases(ComplexMatrix& v) {
  for (Index j = 0; j < v.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < v.rows(); ++i) {
      const double a = std::abs(v(i, j));
      if (a > best * (1.0 + 1e-12)) {
        best = a;
        arg = i;
      }
    }
    const Complex z = v(arg, j);
    if (best > 0.0) v.col(j) *= std::conj(z) / std::abs(z);
  }
}

}  // namespace detail

inline Eigensystem eigh(const HermitianOperator& a) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(a.matrix());
  if (solver.info() != Eigen::Success) {
    throw ConvergenceError("eigh: eigensolver did not converge (dim " +
                           std::to_string(a.dim()) + ")");
  }
  Eigensystem out{solver.eigenvalues(), solver.eigenvectors()};
  detail::fix_phases(out.vectors);
  return out;
}

inline ComplexMatrix reconstruct(const Eigensystem& es) {
  return es.vectors * es.values.cast<Complex>().asDiagonal() * es.vectors.adjoint();
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const Index rows = a.rows() * b.rows();
  const Index cols = a.cols() * b.cols();
  if (a.size() == 0 || b.size() == 0) throw DimensionError("kron: empty operand");
  if (rows > kMaxDenseDim || cols > kMaxDenseDim) {
    throw DimensionError("kron: result " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " exceeds dense limit " +
                         std::to_string(kMaxDenseDim));
  }
  ComplexMatrix out(rows, cols);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Tr_e over the environment factor for any operator on H_s (x) H_e.
inline ComplexMatrix partial_trace_env(const ComplexMatrix& rho, Index dim_s, Index dim_e) {
  if (dim_s < 1 || dim_e < 1 || rho.rows() != dim_s * dim_e || rho.cols() != rho.rows()) {
    throw DimensionError("partial_trace_env: operator is " + std::to_string(rho.rows()) + "x" +
                         std::to_string(rho.cols()) + ", expected " +
                         std::to_string(dim_s * dim_e) + " square");
  }
  ComplexMatrix out = ComplexMatrix::Zero(dim_s, dim_s);
  for (Index s = 0; s < dim_s; ++s) {
    for (Index sp = 0; sp < dim_s; ++sp) {
      Complex acc{0.0, 0.0};
      for (Index e = 0; e < dim_e; ++e) {
        acc += rho(tensor_index(s, e, dim_e), tensor_index(sp, e, dim_e));
      }
      out(s, sp) = acc;
    }
  }
  return out;
}

inline HermitianOperator partial_trace_env(const HermitianOperator& rho, Index dim_s, Index dim_e) {
  return HermitianOperator(partial_trace_env(rho.matrix(), dim_s, dim_e));
}

}  // namespace qtyp
