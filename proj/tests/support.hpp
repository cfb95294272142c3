#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "doem/operator_core.hpp"

namespace testing {

using doem::Complex;
using doem::ComplexMatrix;
using doem::Index;
using doem::RealVector;

inline ComplexMatrix ginibre(Index rows, Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  ComplexMatrix g(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) g(i, j) = Complex(nd(gen), nd(gen));
  return g;
}

inline ComplexMatrix random_hermitian(Index d, std::mt19937_64& gen) {
  const ComplexMatrix g = ginibre(d, d, gen);
  return (g + g.adjoint()) * 0.5;
}

// Hermitian with spectrum drawn uniformly from [lo, hi].
inline ComplexMatrix random_hermitian_spectrum(Index d, double lo, double hi, std::mt19937_64& gen);

inline ComplexMatrix random_unitary(Index d, std::mt19937_64& gen) {
  Eigen::HouseholderQR<ComplexMatrix> qr(ginibre(d, d, gen));
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR();
  for (Index j = 0; j < d; ++j) {
    const Complex ph = r(j, j) / std::abs(r(j, j));
    q.col(j) *= ph;
  }
  return q;
}

inline ComplexMatrix random_hermitian_spectrum(Index d, double lo, double hi, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealVector l(d);
  for (Index i = 0; i < d; ++i) l(i) = u(gen);
  const ComplexMatrix q = random_unitary(d, gen);
  return q * l.cast<Complex>().asDiagonal() * q.adjoint();
}

// Full-rank density matrix from a Ginibre draw.
inline ComplexMatrix random_density(Index d, std::mt19937_64& gen) {
  const ComplexMatrix g = ginibre(d, d, gen);
  ComplexMatrix r = g * g.adjoint();
  r /= r.trace().real();
  return (r + r.adjoint()) * 0.5;
}

inline RealVector random_simplex(Index d, std::mt19937_64& gen, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  RealVector p(d);
  for (Index i = 0; i < d; ++i) p(i) = u(gen);
  return p / p.sum();
}

inline ComplexMatrix kron2(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

struct ConditionSInstance {
  ComplexMatrix rho;    // on dv*dl
  ComplexMatrix omega;  // on dv
  ComplexMatrix basis;
  RealVector alphas;
  std::vector<ComplexMatrix> blocks;
};

// rho = sum_i alpha_i x_i x_i^dagger (x) rho_B(i), omega diagonal in {x_i}.
inline ConditionSInstance condition_s_instance(Index dv, Index dl, std::mt19937_64& gen, bool standard_basis = false) {
  ConditionSInstance s;
  s.basis = standard_basis ? ComplexMatrix(ComplexMatrix::Identity(dv, dv)) : random_unitary(dv, gen);
  s.alphas = random_simplex(dv, gen);
  s.rho = ComplexMatrix::Zero(dv * dl, dv * dl);
  for (Index i = 0; i < dv; ++i) {
    s.blocks.push_back(random_density(dl, gen));
    const ComplexMatrix proj = s.basis.col(i) * s.basis.col(i).adjoint();
    s.rho += s.alphas(i) * kron2(proj, s.blocks.back());
  }
  s.rho = (s.rho + s.rho.adjoint()) * 0.5;
  const RealVector w = random_simplex(dv, gen, 0.0);
  s.omega = s.basis * w.cast<Complex>().asDiagonal() * s.basis.adjoint();
  s.omega = (s.omega + s.omega.adjoint()) * 0.5;
  return s;
}

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testing
