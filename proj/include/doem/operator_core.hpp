#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace doem {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

// Largest total qubit count the dense path will materialize.
inline constexpr int kExactQubitCap = 14;

// Relative tolerances shared across the dense layer.
inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPsdTol = 1e-10;
inline constexpr double kRankRel = 1e-12;

double max_abs(const ComplexMatrix& m);
bool all_finite(const ComplexMatrix& m);

class HermitianOperator {
 public:
  HermitianOperator() = default;
  // Throws ValidationError unless m is square, finite and Hermitian to
  // 1e-12 * max|m_ij|. Stored as (m + m^dagger)/2.
  explicit HermitianOperator(const ComplexMatrix& m);

  static HermitianOperator zero(Index dim);
  static HermitianOperator identity(Index dim);
  static HermitianOperator diagonal(const RealVector& d);

  Index dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

  HermitianOperator operator+(const HermitianOperator& o) const;
  HermitianOperator operator-(const HermitianOperator& o) const;
  HermitianOperator operator*(double s) const;

 private:
  struct Trusted {};
  HermitianOperator(ComplexMatrix m, Trusted) : m_(std::move(m)) {}
  friend HermitianOperator hermitize(ComplexMatrix m);

  ComplexMatrix m_;
};

// (m + m^dagger)/2 without a tolerance check; for results that are Hermitian
// by construction up to rounding.
HermitianOperator hermitize(ComplexMatrix m);

class DensityOperator {
 public:
  DensityOperator() = default;
  // Throws ValidationError unless prod(dims) == dim, every dims entry >= 2,
  // |Tr - 1| <= 1e-10 and min eigenvalue >= -1e-10.
  DensityOperator(std::vector<Index> dims, HermitianOperator op);
  DensityOperator(std::vector<Index> dims, const ComplexMatrix& m);

  const std::vector<Index>& dims() const { return dims_; }
  Index dim() const { return op_.dim(); }
  const HermitianOperator& op() const { return op_; }
  const ComplexMatrix& matrix() const { return op_.matrix(); }

 private:
  std::vector<Index> dims_;
  HermitianOperator op_;
};

struct SpectralDecomposition {
  RealVector eigenvalues;      // ascending
  ComplexMatrix eigenvectors;  // columns

  ComplexMatrix reconstruct() const;
  ComplexMatrix apply(const std::function<double(double)>& f) const;
  double max_abs_eigenvalue() const;
};

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix direct_sum(std::span<const ComplexMatrix> blocks);
ComplexMatrix identity_matrix(Index dim);

// Tr over subsystem `subsystem` of an operator laid out on `dims`.
ComplexMatrix partial_trace(const ComplexMatrix& m, std::span<const Index> dims, std::size_t subsystem);
DensityOperator partial_trace(const DensityOperator& rho, std::size_t subsystem);
// Tr over the last factor of a (dv*dl) x (dv*dl) matrix.
ComplexMatrix partial_trace_last(const ComplexMatrix& m, Index dl);

SpectralDecomposition herm_eig(const HermitianOperator& h);

// U f(L) U^dagger. Throws ValidationError if f returns a non-finite value.
HermitianOperator mat_fn_hermitian(const HermitianOperator& h, const std::function<double(double)>& f);
HermitianOperator mat_fn_hermitian(const SpectralDecomposition& eig, const std::function<double(double)>& f);

// 1e-12 * max|lambda|.
double rank_threshold(const RealVector& eigenvalues);

HermitianOperator matrix_exp(const HermitianOperator& h);
// Refuses any eigenvalue at or below the rank threshold.
HermitianOperator matrix_log(const HermitianOperator& h);
HermitianOperator matrix_sqrt(const HermitianOperator& h);
HermitianOperator matrix_inv_sqrt(const HermitianOperator& h);

// Tr(a b) as sum_ij a_ij b_ji.
Complex trace_product(const ComplexMatrix& a, const ComplexMatrix& b);

}  // namespace doem
