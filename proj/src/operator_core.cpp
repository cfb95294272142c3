#include "doem/operator_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doem/errors.hpp"

namespace doem {

double max_abs(const ComplexMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool all_finite(const ComplexMatrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

HermitianOperator::HermitianOperator(const ComplexMatrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << "hermitian operator must be square and non-empty, got " << m.rows() << "x" << m.cols();
    throw ValidationError(os.str());
  }
  if (!all_finite(m)) throw ValidationError("hermitian operator has non-finite entries");
  const double scale = max_abs(m);
  const double asym = max_abs(m - m.adjoint());
  if (asym > kHermitianTol * scale) {
    std::ostringstream os;
    os << "matrix is not hermitian: max|M - M^dagger| = " << asym << " exceeds " << kHermitianTol * scale;
    throw ValidationError(os.str());
  }
  m_ = (m + m.adjoint()) * 0.5;
}

HermitianOperator hermitize(ComplexMatrix m) {
  ComplexMatrix h = (m + m.adjoint()) * 0.5;
  return HermitianOperator(std::move(h), HermitianOperator::Trusted{});
}

HermitianOperator HermitianOperator::zero(Index dim) { return hermitize(ComplexMatrix::Zero(dim, dim)); }

HermitianOperator HermitianOperator::identity(Index dim) { return hermitize(identity_matrix(dim)); }

HermitianOperator HermitianOperator::diagonal(const RealVector& d) {
  ComplexMatrix m = ComplexMatrix::Zero(d.size(), d.size());
  m.diagonal() = d.cast<Complex>();
  return HermitianOperator(m);
}

HermitianOperator HermitianOperator::operator+(const HermitianOperator& o) const {
  if (dim() != o.dim()) throw ValidationError("dimension mismatch in operator sum");
  return hermitize(m_ + o.m_);
}

HermitianOperator HermitianOperator::operator-(const HermitianOperator& o) const {
  if (dim() != o.dim()) throw ValidationError("dimension mismatch in operator difference");
  return hermitize(m_ - o.m_);
}

HermitianOperator HermitianOperator::operator*(double s) const { return hermitize(m_ * s); }

namespace {

Index product(std::span<const Index> dims) {
  Index p = 1;
  for (Index d : dims) p *= d;
  return p;
}

}  // namespace

DensityOperator::DensityOperator(std::vector<Index> dims, HermitianOperator op)
    : dims_(std::move(dims)), op_(std::move(op)) {
  if (dims_.empty()) throw ValidationError("density operator needs at least one subsystem");
  for (Index d : dims_)
    if (d < 2) throw ValidationError("subsystem dimensions must be >= 2");
  if (product(dims_) != op_.dim()) {
    std::ostringstream os;
    os << "subsystem dimensions multiply to " << product(dims_) << " but operator has dimension " << op_.dim();
    throw ValidationError(os.str());
  }
  const double tr = op_.matrix().trace().real();
  if (std::abs(tr - 1.0) > kTraceTol) {
    std::ostringstream os;
    os.precision(17);
    os << "density operator trace " << tr << " differs from 1 by more than " << kTraceTol;
    throw ValidationError(os.str());
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(op_.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eigensolver failed while validating density operator");
  const double lo = es.eigenvalues()(0);
  if (lo < -kPsdTol) {
    std::ostringstream os;
    os << "density operator has negative eigenvalue " << lo;
    throw ValidationError(os.str());
  }
}

DensityOperator::DensityOperator(std::vector<Index> dims, const ComplexMatrix& m)
    : DensityOperator(std::move(dims), HermitianOperator(m)) {}

ComplexMatrix SpectralDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.cast<Complex>().asDiagonal() * eigenvectors.adjoint();
}

ComplexMatrix SpectralDecomposition::apply(const std::function<double(double)>& f) const {
  RealVector fl(eigenvalues.size());
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    fl(i) = f(eigenvalues(i));
    if (!std::isfinite(fl(i))) {
      std::ostringstream os;
      os.precision(17);
      os << "matrix function undefined at eigenvalue " << eigenvalues(i);
      throw ValidationError(os.str());
    }
  }
  return eigenvectors * fl.cast<Complex>().asDiagonal() * eigenvectors.adjoint();
}

double SpectralDecomposition::max_abs_eigenvalue() const {
  return eigenvalues.size() == 0 ? 0.0 : eigenvalues.cwiseAbs().maxCoeff();
}

ComplexMatrix identity_matrix(Index dim) { return ComplexMatrix::Identity(dim, dim); }

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

ComplexMatrix direct_sum(std::span<const ComplexMatrix> blocks) {
  if (blocks.empty()) throw ValidationError("direct_sum needs at least one block");
  Index total = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (blocks[k].rows() != blocks[k].cols()) {
      std::ostringstream os;
      os << "direct_sum block " << k << " is not square (" << blocks[k].rows() << "x" << blocks[k].cols() << ")";
      throw ValidationError(os.str());
    }
    total += blocks[k].rows();
  }
  ComplexMatrix out = ComplexMatrix::Zero(total, total);
  Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

ComplexMatrix partial_trace(const ComplexMatrix& m, std::span<const Index> dims, std::size_t subsystem) {
  if (subsystem >= dims.size()) {
    std::ostringstream os;
    os << "partial trace subsystem " << subsystem << " out of range for " << dims.size() << " subsystems";
    throw ValidationError(os.str());
  }
  const Index total = product(dims);
  if (m.rows() != total || m.cols() != total) throw ValidationError("partial trace: matrix does not match dims");
  Index left = 1, right = 1;
  for (std::size_t i = 0; i < subsystem; ++i) left *= dims[i];
  for (std::size_t i = subsystem + 1; i < dims.size(); ++i) right *= dims[i];
  const Index mid = dims[subsystem];
  const Index out_dim = left * right;
  ComplexMatrix out = ComplexMatrix::Zero(out_dim, out_dim);
  for (Index la = 0; la < left; ++la)
    for (Index lb = 0; lb < left; ++lb)
      for (Index j = 0; j < mid; ++j)
        out.block(la * right, lb * right, right, right) +=
            m.block((la * mid + j) * right, (lb * mid + j) * right, right, right);
  return out;
}

ComplexMatrix partial_trace_last(const ComplexMatrix& m, Index dl) {
  const Index dv = m.rows() / dl;
  ComplexMatrix out(dv, dv);
  for (Index a = 0; a < dv; ++a)
    for (Index b = 0; b < dv; ++b) out(a, b) = m.block(a * dl, b * dl, dl, dl).trace();
  return out;
}

DensityOperator partial_trace(const DensityOperator& rho, std::size_t subsystem) {
  if (rho.dims().size() < 2) throw ValidationError("partial trace needs at least two subsystems");
  ComplexMatrix out = partial_trace(rho.matrix(), rho.dims(), subsystem);
  std::vector<Index> dims = rho.dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(subsystem));
  return DensityOperator(std::move(dims), hermitize(std::move(out)));
}

namespace {

// Rotate column so its first significant entry is real and positive.
void normalize_phase(Eigen::Ref<Eigen::VectorXcd> v) {
  const double cmax = v.cwiseAbs().maxCoeff();
  if (cmax == 0.0) return;
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    if (a > 1e-8 * cmax) {
      v *= std::conj(v(i)) / a;
      v(i) = Complex(a, 0.0);
      return;
    }
  }
}

bool lex_less(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

}  // namespace

SpectralDecomposition herm_eig(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.matrix());
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "hermitian eigensolver did not converge (dimension " << h.dim() << ")";
    throw NumericError(os.str());
  }
  SpectralDecomposition out{es.eigenvalues(), es.eigenvectors()};
  const Index n = out.eigenvalues.size();
  for (Index j = 0; j < n; ++j) normalize_phase(out.eigenvectors.col(j));

  const double scale = std::max(1.0, out.max_abs_eigenvalue());
  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && out.eigenvalues(end) - out.eigenvalues(end - 1) <= 1e-10 * scale) ++end;
    if (end - start > 1) {
      std::vector<Index> order(static_cast<std::size_t>(end - start));
      std::iota(order.begin(), order.end(), start);
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return lex_less(out.eigenvectors.col(a), out.eigenvectors.col(b));
      });
      ComplexMatrix cols(n, end - start);
      RealVector vals(end - start);
      for (Index k = 0; k < end - start; ++k) {
        cols.col(k) = out.eigenvectors.col(order[static_cast<std::size_t>(k)]);
        vals(k) = out.eigenvalues(order[static_cast<std::size_t>(k)]);
      }
      out.eigenvectors.middleCols(start, end - start) = cols;
      // Pairs stay intact; within a cluster the values agree to 1e-10.
      out.eigenvalues.segment(start, end - start) = vals;
    }
    start = end;
  }
  return out;
}

HermitianOperator mat_fn_hermitian(const SpectralDecomposition& eig, const std::function<double(double)>& f) {
  return hermitize(eig.apply(f));
}

HermitianOperator mat_fn_hermitian(const HermitianOperator& h, const std::function<double(double)>& f) {
  return mat_fn_hermitian(herm_eig(h), f);
}

double rank_threshold(const RealVector& eigenvalues) {
  return eigenvalues.size() == 0 ? 0.0 : kRankRel * eigenvalues.cwiseAbs().maxCoeff();
}

HermitianOperator matrix_exp(const HermitianOperator& h) {
  return mat_fn_hermitian(h, [](double x) { return std::exp(x); });
}

namespace {

SpectralDecomposition full_rank_eig(const HermitianOperator& h, const char* what) {
  SpectralDecomposition e = herm_eig(h);
  const double thr = rank_threshold(e.eigenvalues);
  if (e.eigenvalues(0) <= thr) {
    std::ostringstream os;
    os.precision(17);
    os << what << " requires eigenvalues above the rank threshold " << thr << ", smallest is " << e.eigenvalues(0);
    throw ValidationError(os.str());
  }
  return e;
}

}  // namespace

HermitianOperator matrix_log(const HermitianOperator& h) {
  return mat_fn_hermitian(full_rank_eig(h, "matrix log"), [](double x) { return std::log(x); });
}

HermitianOperator matrix_sqrt(const HermitianOperator& h) {
  SpectralDecomposition e = herm_eig(h);
  if (e.eigenvalues(0) < -kPsdTol * std::max(1.0, e.max_abs_eigenvalue()))
    throw ValidationError("matrix sqrt of an operator with a negative eigenvalue");
  return mat_fn_hermitian(e, [](double x) { return std::sqrt(std::max(x, 0.0)); });
}

HermitianOperator matrix_inv_sqrt(const HermitianOperator& h) {
  return mat_fn_hermitian(full_rank_eig(h, "inverse square root"), [](double x) { return 1.0 / std::sqrt(x); });
}

Complex trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols()) {
    std::ostringstream os;
    os << "trace_product dimension mismatch: " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
       << b.cols();
    throw ValidationError(os.str());
  }
  return a.cwiseProduct(b.transpose()).sum();
}

}  // namespace doem
