#include <cmath>
#include <vector>

#include "doctest.h"
#include "doem/errors.hpp"
#include "doem/operator_core.hpp"
#include "support.hpp"

using namespace doem;
using testing::max_abs_diff;

namespace {

ComplexMatrix sz() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = 1;
  m(1, 1) = -1;
  return m;
}

ComplexMatrix sx() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1;
  m(1, 0) = 1;
  return m;
}

DensityOperator dens(std::vector<Index> dims, const ComplexMatrix& m) { return DensityOperator(std::move(dims), m); }

// Index-sum partial trace over the last factor, written out longhand.
ComplexMatrix trace_out_last(const ComplexMatrix& m, Index dv, Index dl) {
  ComplexMatrix out = ComplexMatrix::Zero(dv, dv);
  for (Index a = 0; a < dv; ++a)
    for (Index b = 0; b < dv; ++b)
      for (Index j = 0; j < dl; ++j) out(a, b) += m(a * dl + j, b * dl + j);
  return out;
}

}  // namespace

TEST_SUITE("operator-core") {
  TEST_CASE("kron examples") {
    CHECK(kron(identity_matrix(2), identity_matrix(2)) == identity_matrix(4));

    ComplexMatrix expect = ComplexMatrix::Zero(4, 4);
    expect.block(0, 0, 2, 2) = sx();
    expect.block(2, 2, 2, 2) = -sx();
    CHECK(kron(sz(), sx()) == expect);

    ComplexMatrix c(1, 1);
    c(0, 0) = Complex(2.5, -1.0);
    std::mt19937_64 gen(3);
    const ComplexMatrix m = testing::ginibre(3, 2, gen);
    CHECK(max_abs_diff(kron(c, m), c(0, 0) * m) == 0.0);
  }

  TEST_CASE("kron agrees with the entrywise definition") {
    std::mt19937_64 gen(11);
    const ComplexMatrix a = testing::ginibre(3, 2, gen), b = testing::ginibre(2, 4, gen);
    CHECK(max_abs_diff(kron(a, b), testing::kron2(a, b)) == 0.0);
  }

  TEST_CASE("direct_sum examples") {
    ComplexMatrix one(1, 1), two(1, 1);
    one(0, 0) = 1;
    two(0, 0) = 2;
    std::vector<ComplexMatrix> blocks{one, two};
    ComplexMatrix d12 = ComplexMatrix::Zero(2, 2);
    d12(0, 0) = 1;
    d12(1, 1) = 2;
    CHECK(direct_sum(blocks) == d12);

    std::vector<ComplexMatrix> zz{sz(), sz()};
    RealVector diag(4);
    diag << 1, -1, 1, -1;
    CHECK(direct_sum(zz) == ComplexMatrix(diag.cast<Complex>().asDiagonal()));

    std::mt19937_64 gen(5);
    const ComplexMatrix a = testing::ginibre(3, 3, gen);
    std::vector<ComplexMatrix> single{a};
    CHECK(direct_sum(single) == a);

    std::vector<ComplexMatrix> bad{testing::ginibre(2, 3, gen)};
    CHECK_THROWS_AS(direct_sum(bad), ValidationError);
    CHECK_THROWS_AS(direct_sum(std::vector<ComplexMatrix>{}), ValidationError);
  }

  TEST_CASE("direct_sum leaves off-block entries exactly zero") {
    std::mt19937_64 gen(6);
    std::vector<ComplexMatrix> blocks{testing::ginibre(2, 2, gen), testing::ginibre(3, 3, gen)};
    const ComplexMatrix d = direct_sum(blocks);
    CHECK(d.block(0, 2, 2, 3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.block(2, 0, 3, 2).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("partial_trace examples") {
    std::mt19937_64 gen(7);
    const ComplexMatrix ra = testing::random_density(2, gen), rb = testing::random_density(3, gen);
    const DensityOperator prod = dens({2, 3}, kron(ra, rb));
    CHECK(max_abs_diff(partial_trace(prod, 1).matrix(), ra) < 1e-12);
    CHECK(max_abs_diff(partial_trace(prod, 0).matrix(), rb) < 1e-12);

    RealVector d(4);
    d << 0.5, 0, 0, 0.5;
    const DensityOperator corr = dens({2, 2}, ComplexMatrix(d.cast<Complex>().asDiagonal()));
    RealVector half(2);
    half << 0.5, 0.5;
    CHECK(max_abs_diff(partial_trace(corr, 1).matrix(), ComplexMatrix(half.cast<Complex>().asDiagonal())) == 0.0);

    Eigen::VectorXcd bell = Eigen::VectorXcd::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const DensityOperator b = dens({2, 2}, bell * bell.adjoint());
    CHECK(max_abs_diff(partial_trace(b, 1).matrix(), 0.5 * identity_matrix(2)) < 1e-15);

    CHECK_THROWS_AS(partial_trace(b, 2), ValidationError);
  }

  TEST_CASE("partial_trace matches the index-sum oracle and preserves trace") {
    std::mt19937_64 gen(8);
    for (int t = 0; t < 20; ++t) {
      const ComplexMatrix r = testing::random_density(12, gen);
      const DensityOperator rho = dens({3, 4}, r);
      const DensityOperator v = partial_trace(rho, 1);
      CHECK(max_abs_diff(v.matrix(), trace_out_last(r, 3, 4)) < 1e-14);
      CHECK(std::abs(v.matrix().trace().real() - 1.0) < 1e-10);
      CHECK(v.dims() == std::vector<Index>{3});
    }
  }

  TEST_CASE("partial_trace over a middle factor of three") {
    std::mt19937_64 gen(9);
    const ComplexMatrix a = testing::random_density(2, gen), b = testing::random_density(3, gen),
                        c = testing::random_density(2, gen);
    const DensityOperator rho = dens({2, 3, 2}, kron(kron(a, b), c));
    const DensityOperator ac = partial_trace(rho, 1);
    CHECK(max_abs_diff(ac.matrix(), kron(a, c)) < 1e-12);
    CHECK(ac.dims() == std::vector<Index>{2, 2});
  }

  TEST_CASE("kron distributes over direct_sum") {
    std::mt19937_64 gen(10);
    const ComplexMatrix a = testing::ginibre(2, 2, gen), b = testing::ginibre(3, 3, gen);
    std::vector<ComplexMatrix> ab{a, b};
    std::vector<ComplexMatrix> lifted{kron(a, identity_matrix(2)), kron(b, identity_matrix(2))};
    CHECK(max_abs_diff(kron(direct_sum(ab), identity_matrix(2)), direct_sum(lifted)) == 0.0);
  }

  TEST_CASE("herm_eig examples") {
    const auto ez = herm_eig(HermitianOperator(sz()));
    CHECK(ez.eigenvalues(0) == doctest::Approx(-1.0));
    CHECK(ez.eigenvalues(1) == doctest::Approx(1.0));

    const auto ex = herm_eig(HermitianOperator(sx()));
    CHECK(ex.eigenvalues(0) == doctest::Approx(-1.0));
    CHECK(ex.eigenvalues(1) == doctest::Approx(1.0));
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(ex.eigenvectors(0, 0) - Complex(s, 0)) < 1e-15);
    CHECK(std::abs(ex.eigenvectors(1, 0) - Complex(-s, 0)) < 1e-15);
    CHECK(std::abs(ex.eigenvectors(0, 1) - Complex(s, 0)) < 1e-15);
    CHECK(std::abs(ex.eigenvectors(1, 1) - Complex(s, 0)) < 1e-15);

    RealVector d(3);
    d << 3, 1, 2;
    const auto e3 = herm_eig(HermitianOperator::diagonal(d));
    CHECK(e3.eigenvalues(0) == 1.0);
    CHECK(e3.eigenvalues(1) == 2.0);
    CHECK(e3.eigenvalues(2) == 3.0);
  }

  TEST_CASE("herm_eig reconstruction, orthonormality and phase convention") {
    std::mt19937_64 gen(12);
    for (int t = 0; t < 10; ++t) {
      const HermitianOperator h(testing::random_hermitian(6, gen));
      const auto e = herm_eig(h);
      const double scale = e.max_abs_eigenvalue();
      CHECK(max_abs_diff(e.reconstruct(), h.matrix()) < 1e-10 * 6 * scale);
      CHECK(max_abs_diff(e.eigenvectors.adjoint() * e.eigenvectors, identity_matrix(6)) < 1e-10);
      for (Index j = 0; j + 1 < 6; ++j) CHECK(e.eigenvalues(j) <= e.eigenvalues(j + 1));
      for (Index j = 0; j < 6; ++j) {
        const auto col = e.eigenvectors.col(j);
        Index first = 0;
        while (std::abs(col(first)) <= 1e-8 * col.cwiseAbs().maxCoeff()) ++first;
        CHECK(col(first).imag() == 0.0);
        CHECK(col(first).real() > 0.0);
      }
    }
  }

  TEST_CASE("herm_eig is deterministic on degenerate spectra") {
    RealVector d(4);
    d << 1, 1, 2, 2;
    std::mt19937_64 gen(13);
    const ComplexMatrix q = testing::random_unitary(4, gen);
    const HermitianOperator h(q * d.cast<Complex>().asDiagonal() * q.adjoint());
    const auto a = herm_eig(h), b = herm_eig(h);
    CHECK(a.eigenvectors == b.eigenvectors);
    CHECK(a.eigenvalues == b.eigenvalues);
    CHECK(max_abs_diff(a.reconstruct(), h.matrix()) < 1e-12);
  }

  TEST_CASE("mat_fn_hermitian examples") {
    RealVector d(2);
    d << 0.3, -1.2;
    const auto e = mat_fn_hermitian(HermitianOperator::diagonal(d), [](double x) { return std::exp(x); });
    CHECK(std::abs(e.matrix()(0, 0) - std::exp(0.3)) < 1e-15);
    CHECK(std::abs(e.matrix()(1, 1) - std::exp(-1.2)) < 1e-15);
    CHECK(std::abs(e.matrix()(0, 1)) == 0.0);

    const double g = 0.7;
    const auto ex = matrix_exp(HermitianOperator(g * sx()));
    const ComplexMatrix expect = std::cosh(g) * identity_matrix(2) + std::sinh(g) * sx();
    CHECK(max_abs_diff(ex.matrix(), expect) < 1e-14);

    std::mt19937_64 gen(14);
    for (int t = 0; t < 10; ++t) {
      const HermitianOperator h(testing::random_hermitian(4, gen));
      CHECK(max_abs_diff(matrix_log(matrix_exp(h)).matrix(), h.matrix()) < 1e-9);
    }
  }

  TEST_CASE("mat_fn identity and exp-log roundtrip on bounded spectra") {
    std::mt19937_64 gen(15);
    for (int t = 0; t < 20; ++t) {
      const HermitianOperator h(testing::random_hermitian_spectrum(8, -5.0, 5.0, gen));
      CHECK(max_abs_diff(mat_fn_hermitian(h, [](double x) { return x; }).matrix(), h.matrix()) < 1e-10);
      const double norm = h.matrix().operatorNorm();
      CHECK(max_abs_diff(matrix_log(matrix_exp(h)).matrix(), h.matrix()) < 1e-8 * norm);
    }
  }

  TEST_CASE("matrix functions refuse undefined eigenvalues") {
    RealVector d(2);
    d << 1.0, 0.0;
    CHECK_THROWS_AS(matrix_log(HermitianOperator::diagonal(d)), ValidationError);
    CHECK_THROWS_AS(matrix_inv_sqrt(HermitianOperator::diagonal(d)), ValidationError);
    d << 1.0, -0.5;
    CHECK_THROWS_AS(mat_fn_hermitian(HermitianOperator::diagonal(d), [](double x) { return std::log(x); }),
                    ValidationError);
    d << 4.0, 0.25;
    const auto s = matrix_sqrt(HermitianOperator::diagonal(d));
    CHECK(s.matrix()(0, 0).real() == doctest::Approx(2.0));
    const auto is = matrix_inv_sqrt(HermitianOperator::diagonal(d));
    CHECK(is.matrix()(1, 1).real() == doctest::Approx(2.0));
  }

  TEST_CASE("trace_product examples") {
    std::mt19937_64 gen(16);
    const ComplexMatrix m = testing::ginibre(3, 3, gen);
    CHECK(std::abs(trace_product(identity_matrix(3), m) - m.trace()) < 1e-14);
    CHECK(std::abs(trace_product(sz(), sx())) == 0.0);
    Eigen::VectorXcd psi = testing::ginibre(3, 1, gen).col(0);
    psi.normalize();
    const ComplexMatrix pure = psi * psi.adjoint();
    CHECK(std::abs(trace_product(pure, pure) - 1.0) < 1e-14);
    const ComplexMatrix a = testing::ginibre(3, 4, gen), b = testing::ginibre(4, 3, gen);
    CHECK(std::abs(trace_product(a, b) - (a * b).trace()) < 1e-12);
    CHECK_THROWS_AS(trace_product(a, a), ValidationError);
  }

  TEST_CASE("type invariants are enforced") {
    ComplexMatrix nh = sx();
    nh(0, 1) = 2.0;
    CHECK_THROWS_AS(HermitianOperator{nh}, ValidationError);
    ComplexMatrix nan = sz();
    nan(0, 0) = std::nan("");
    CHECK_THROWS_AS(HermitianOperator{nan}, ValidationError);

    RealVector d(2);
    d << 0.6, 0.6;
    CHECK_THROWS_AS(DensityOperator({2}, HermitianOperator::diagonal(d)), ValidationError);
    d << 1.2, -0.2;
    CHECK_THROWS_AS(DensityOperator({2}, HermitianOperator::diagonal(d)), ValidationError);
    d << 0.5, 0.5;
    CHECK_THROWS_AS(DensityOperator({3}, HermitianOperator::diagonal(d)), ValidationError);
    CHECK_NOTHROW(DensityOperator({2}, HermitianOperator::diagonal(d)));
  }
}
