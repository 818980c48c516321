#include "qtyp/dynamics.hpp"
#include "qtyp/ensembles.hpp"
#include "test_support.hpp"

#include <catch_amalgamated.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>

using namespace qtyp;

namespace {

RealVector vec(std::initializer_list<double> xs) {
  RealVector v(Index(xs.size()));
  Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

HermitianOperator wigner_sample(Index dim, double sigma, std::uint64_t stream) {
  EnsembleSpec spec;
  spec.dim = dim;
  spec.sigma_w = sigma;
  SeededRng rng(404, stream);
  return sample_wigner(spec, rng);
}

}  // namespace

TEST_CASE("build_h0", "[dynamics]") {
  const CompositeSystem one_level{vec({0.0, 1.5}), vec({0.0})};
  CHECK(build_h0(one_level).matrix().diagonal().real() == vec({0.0, 1.5}));

  const CompositeSystem sys = CompositeSystem::two_level(1.0, vec({-1.0, 1.0}));
  CHECK(build_h0(sys).matrix().diagonal().real() == vec({-1.0, 1.0, 0.0, 2.0}));
  CHECK(build_h0(sys).matrix().imag().norm() == 0.0);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    RealVector s(3), e(5);
    for (Index k = 0; k < 3; ++k) s(k) = nd(rng);
    for (Index k = 0; k < 5; ++k) e(k) = nd(rng);
    std::vector<double> sums;
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 5; ++b) sums.push_back(s(a) + e(b));
    std::sort(sums.begin(), sums.end());
    const Eigensystem es = eigh(build_h0(CompositeSystem{s, e}));
    for (std::size_t k = 0; k < sums.size(); ++k) CHECK(es.values(Index(k)) == Catch::Approx(sums[k]).margin(1e-14));
  }
}

TEST_CASE("Gaussian environment spectrum", "[dynamics]") {
  CHECK(gaussian_environment_spectrum(1, 1.0)(0) == 0.0);
  const RealVector two = gaussian_environment_spectrum(2, 1.0);
  // Phi^{-1}(0.75), frozen from a normal-quantile table.
  CHECK(two(0) == Catch::Approx(-0.6744897501960817).epsilon(1e-14));
  CHECK(two(1) == Catch::Approx(0.6744897501960817).epsilon(1e-14));

  const RealVector big = gaussian_environment_spectrum(500, 1.0);
  CHECK(std::is_sorted(big.data(), big.data() + big.size()));
  CHECK(std::abs(big.mean()) < 1e-15);
  const double sd = std::sqrt(big.squaredNorm() / 500.0);
  CHECK(sd == Catch::Approx(1.0).epsilon(0.01));
  CHECK(gaussian_environment_spectrum(10, 2.5).isApprox(2.5 * gaussian_environment_spectrum(10, 1.0)));
  CHECK_THROWS(gaussian_environment_spectrum(0, 1.0));
  CHECK_THROWS(gaussian_environment_spectrum(3, 0.0));
}

TEST_CASE("nearest_level", "[dynamics]") {
  CHECK(nearest_level(vec({-1.0, 0.0, 1.0}), 0.4) == 1);
  CHECK(nearest_level(vec({-1.0, 0.0, 1.0}), 0.5) == 1);   // tie goes down
  CHECK(nearest_level(vec({-1.0, 0.0, 1.0}), -0.5) == 0);
  CHECK(nearest_level(vec({-1.0, 0.0, 1.0}), 7.0) == 2);
  // dim_e = 500 grid: level 51 sits at -1.2646411356610803.
  const RealVector grid = gaussian_environment_spectrum(500, 1.0);
  CHECK(nearest_level(grid, -1.27) == 51);
  CHECK(grid(51) == Catch::Approx(-1.2646411356610803).epsilon(1e-13));
}

TEST_CASE("PureState invariants", "[dynamics]") {
  CHECK_THROWS(PureState(vec({1.0, 1.0}).cast<Complex>()));
  CHECK_NOTHROW(PureState::normalized(vec({1.0, 1.0}).cast<Complex>()));
  CHECK_THROWS_AS(PureState::product(2, 3, 2, 0), DimensionError);
  CHECK(PureState::product(2, 3, 1, 2).amplitudes()(tensor_index(1, 2, 3)) == Complex(1.0, 0.0));
}

TEST_CASE("evolve_pure", "[dynamics]") {
  SECTION("t = 0 is the identity") {
    std::mt19937_64 rng(1);
    const HermitianOperator h(qtyp::testing::random_hermitian(6, rng));
    const PureState psi0(qtyp::testing::random_unit_vector(6, rng));
    const std::array<double, 1> t0{0.0};
    CHECK(evolve_pure(h, psi0, t0).front().amplitudes() == psi0.amplitudes());
  }
  SECTION("basis state of a diagonal Hamiltonian only acquires a phase") {
    const HermitianOperator h = HermitianOperator::diagonal(vec({0.3, -1.1, 2.0}));
    const PureState psi0 = PureState::product(1, 3, 0, 1);
    const std::array<double, 3> ts{0.5, 2.0, 17.0};
    const auto states = evolve_pure(h, psi0, ts);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      CHECK(std::abs(states[k].amplitudes()(1) - std::polar(1.0, 1.1 * ts[k])) < 1e-13);
      CHECK(std::abs(states[k].amplitudes()(0)) < 1e-14);
    }
  }
  SECTION("Rabi oscillation") {
    const double gap = 0.8, g = 0.35;
    ComplexMatrix h(2, 2);
    h << gap / 2, g, g, -gap / 2;
    const PureState up = PureState::product(1, 2, 0, 0);
    std::vector<double> ts;
    for (int k = 0; k <= 50; ++k) ts.push_back(0.37 * k);
    const auto states = evolve_pure(HermitianOperator(h), up, ts);
    const double omega = std::sqrt(gap * gap / 4 + g * g);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double expected = (g * g) / (omega * omega) * std::pow(std::sin(omega * ts[k]), 2);
      CHECK(std::abs(std::norm(states[k].amplitudes()(1)) - expected) < 1e-8);
    }
  }
  SECTION("dimension mismatch") {
    const HermitianOperator h = HermitianOperator::diagonal(vec({0.0, 1.0}));
    const std::array<double, 1> ts{1.0};
    CHECK_THROWS_AS(evolve_pure(h, PureState::product(1, 3, 0, 0), ts), DimensionError);
  }
}

TEST_CASE("reduce_pure", "[dynamics]") {
  SECTION("product state") {
    const ReducedPure r = reduce_pure(PureState::product(2, 3, 1, 2), 2, 3);
    CHECK(r.gamma.gamma()(1, 2) == Complex(1.0, 0.0));
    CHECK(r.gamma.gamma().cwiseAbs().sum() == 1.0);
    ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
    expected(1, 1) = 1.0;
    CHECK(r.rho_s.matrix() == expected);
  }
  SECTION("Bell state") {
    ComplexVector v = ComplexVector::Zero(4);
    v(0) = v(3) = 1.0;
    const ReducedPure r = reduce_pure(PureState::normalized(v), 2, 2);
    CHECK((r.rho_s.matrix() - 0.5 * ComplexMatrix::Identity(2, 2)).norm() < 1e-15);
  }
  SECTION("matches the partial trace of the projector") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const PureState psi(qtyp::testing::random_unit_vector(12, rng));
      const ReducedPure r = reduce_pure(psi, 3, 4);
      const ComplexMatrix ptr = partial_trace_env(psi.projector(), 3, 4);
      CHECK((r.rho_s.matrix() - ptr).norm() < 1e-12);
    }
  }
  SECTION("dimension mismatch") {
    CHECK_THROWS_AS(reduce_pure(PureState::product(2, 3, 0, 0), 4, 2), DimensionError);
  }
}

TEST_CASE("run_trajectory without coupling", "[dynamics]") {
  const CompositeSystem sys = CompositeSystem::two_level(1.0, gaussian_environment_spectrum(20, 1.0));
  const PureState psi0 = PureState::normalized(
      (PureState::product(2, 20, 0, 3).amplitudes() + PureState::product(2, 20, 1, 9).amplitudes()));
  std::vector<double> ts;
  for (int k = 0; k <= 40; ++k) ts.push_back(0.25 * k);
  const Trajectory traj = run_trajectory(sys, HermitianOperator::zero(40), psi0, ts);
  for (const auto& p : traj.populations) {
    CHECK(std::abs(p(0) - 0.5) < 1e-14);
    CHECK(std::abs(p(1) - 0.5) < 1e-14);
  }
}

TEST_CASE("run_trajectory physicality and time reversal", "[dynamics]") {
  const CompositeSystem sys = CompositeSystem::two_level(1.0, gaussian_environment_spectrum(30, 1.0));
  const HermitianOperator w = wigner_sample(60, 0.5, 0);
  const PureState psi0 = PureState::product(2, 30, 1, 7);
  std::vector<double> ts;
  for (int k = 0; k <= 60; ++k) ts.push_back(0.5 * k);
  const Trajectory traj = run_trajectory(sys, w, psi0, ts);
  REQUIRE(traj.reduced_states.size() == ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const PhysicalityReport p = check_physical(traj.reduced_states[k].matrix());
    CHECK(p.ok(1e-10));
    CHECK(std::abs(traj.populations[k].sum() - 1.0) < 1e-10);
  }
  CHECK(traj.max_norm_error < 1e-10);

  const HermitianOperator h(build_h0(sys).matrix() + w.matrix());
  const HermitianOperator minus_h(-h.matrix());
  const double t = 13.7;
  const ComplexVector forward = Evolution(h, psi0.amplitudes()).at(t);
  const ComplexVector back = Evolution(minus_h, forward).at(t);
  CHECK((back - psi0.amplitudes()).norm() < 1e-8);
}

TEST_CASE("run_trajectory matches matrix-exponential propagation", "[dynamics][oracle]") {
  // Independent route: scaling-and-squaring exp(-iHt) on the full density matrix.
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    const Index dim_e = 2 + Index(inst % 3) * 3;  // 2, 5, 8 -> dim H <= 16
    const CompositeSystem sys = CompositeSystem::two_level(1.0, gaussian_environment_spectrum(dim_e, 1.0));
    const HermitianOperator w = wigner_sample(sys.dim(), 0.6, inst);
    std::mt19937_64 rng(inst);
    const PureState psi0(qtyp::testing::random_unit_vector(sys.dim(), rng));
    const std::array<double, 3> ts{0.7, 3.1, 9.4};
    const Trajectory traj = run_trajectory(sys, w, psi0, ts);
    const ComplexMatrix h = build_h0(sys).matrix() + w.matrix();
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const ComplexMatrix u = (Complex(0.0, -ts[k]) * h).exp();
      const ComplexMatrix rho = u * psi0.projector() * u.adjoint();
      const ComplexMatrix rs = partial_trace_env(rho, 2, dim_e);
      CHECK((traj.reduced_states[k].matrix() - rs).norm() < 1e-8);
    }
  }
}

TEST_CASE("evolve_density", "[dynamics]") {
  std::mt19937_64 rng(21);
  const HermitianOperator h(qtyp::testing::random_hermitian(6, rng));
  const PureState psi0(qtyp::testing::random_unit_vector(6, rng));
  const std::array<double, 2> ts{0.4, 2.2};
  const auto rhos = evolve_density(h, HermitianOperator(psi0.projector()), ts);
  const auto psis = evolve_pure(h, psi0, ts);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    CHECK((rhos[k].matrix() - psis[k].projector()).norm() < 1e-12);
  }
  const HermitianOperator big = HermitianOperator::zero(kMaxDensityEvolutionDim + 1);
  CHECK_THROWS_AS(evolve_density(big, big, ts), DimensionError);
}

TEST_CASE("CompositeSystem validation", "[dynamics]") {
  CHECK_THROWS_AS((CompositeSystem{RealVector(0), vec({1.0})}.validate()), DimensionError);
  CHECK_THROWS_AS((CompositeSystem{vec({0.0, 1.0}), RealVector::Zero(kMaxDenseDim)}.validate()),
                  DimensionError);
  CHECK_THROWS((CompositeSystem{vec({0.0, std::nan("")}), vec({1.0})}.validate()));
}
