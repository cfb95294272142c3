#include "doem/quantum_info.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "doem/errors.hpp"
#include "doem/rng.hpp"

namespace doem {

namespace {

constexpr double kPetzTraceDrift = 1e-9;
constexpr double kCommutatorRel = 1e-9;
constexpr double kReassemblyTol = 1e-8;
constexpr int kBasisAttempts = 4;  // first try plus three retries
constexpr double kKernelWeightTol = 1e-10;

bool is_full_rank(const SpectralDecomposition& e) { return e.eigenvalues(0) > rank_threshold(e.eigenvalues); }

}  // namespace

std::vector<Index> visible_dims(const DensityOperator& rho) {
  if (rho.dims().size() < 2) throw ValidationError("joint state needs a visible and a latent subsystem");
  return {rho.dims().begin(), rho.dims().end() - 1};
}

Index latent_dim(const DensityOperator& rho) {
  if (rho.dims().size() < 2) throw ValidationError("joint state needs a visible and a latent subsystem");
  return rho.dims().back();
}

SupportInfo support(const HermitianOperator& h) {
  SpectralDecomposition e = herm_eig(h);
  const double thr = rank_threshold(e.eigenvalues);
  SupportInfo out;
  out.rank = 0;
  ComplexMatrix p = ComplexMatrix::Zero(h.dim(), h.dim());
  for (Index i = 0; i < e.eigenvalues.size(); ++i) {
    if (e.eigenvalues(i) > thr) {
      ++out.rank;
      p += e.eigenvectors.col(i) * e.eigenvectors.col(i).adjoint();
    }
  }
  out.support_projector = hermitize(std::move(p));
  return out;
}

double entropy_of_psd(const HermitianOperator& h) {
  SpectralDecomposition e = herm_eig(h);
  const double thr = rank_threshold(e.eigenvalues);
  double s = 0.0;
  for (Index i = 0; i < e.eigenvalues.size(); ++i) {
    const double l = e.eigenvalues(i);
    if (l > thr) s -= l * std::log(l);
  }
  return s;
}

double von_neumann_entropy(const DensityOperator& rho) { return entropy_of_psd(rho.op()); }

double relative_entropy(const DensityOperator& omega, const DensityOperator& rho) {
  if (omega.dim() != rho.dim()) {
    std::ostringstream os;
    os << "relative entropy dimension mismatch: " << omega.dim() << " vs " << rho.dim();
    throw ValidationError(os.str());
  }
  const SpectralDecomposition er = herm_eig(rho.op());
  const double thr = rank_threshold(er.eigenvalues);
  double kernel_weight = 0.0;
  RealVector log_rho(er.eigenvalues.size());
  for (Index i = 0; i < er.eigenvalues.size(); ++i) {
    const auto u = er.eigenvectors.col(i);
    if (er.eigenvalues(i) > thr) {
      log_rho(i) = std::log(er.eigenvalues(i));
    } else {
      log_rho(i) = 0.0;
      kernel_weight += (u.adjoint() * omega.matrix() * u)(0, 0).real();
    }
  }
  if (kernel_weight > kKernelWeightTol) return std::numeric_limits<double>::infinity();

  // Tr(omega log rho) = sum_i log(l_i) <u_i|omega|u_i> over the support.
  double cross = 0.0;
  for (Index i = 0; i < er.eigenvalues.size(); ++i) {
    if (er.eigenvalues(i) <= thr) continue;
    const auto u = er.eigenvectors.col(i);
    cross += log_rho(i) * (u.adjoint() * omega.matrix() * u)(0, 0).real();
  }
  const double d = -entropy_of_psd(omega.op()) - cross;
  return d;
}

DensityOperator petz_recovery(const DensityOperator& rho, const DensityOperator& omega) {
  const Index dl = latent_dim(rho);
  const Index dv = rho.dim() / dl;
  if (omega.dim() != dv) {
    std::ostringstream os;
    os << "petz recovery: omega has dimension " << omega.dim() << ", visible space has " << dv;
    throw ValidationError(os.str());
  }
  const SpectralDecomposition er = herm_eig(rho.op());
  if (!is_full_rank(er)) {
    std::ostringstream os;
    os.precision(17);
    os << "petz recovery needs a full-rank rho; smallest eigenvalue " << er.eigenvalues(0);
    throw ValidationError(os.str());
  }
  const ComplexMatrix rho_sqrt = er.apply([](double x) { return std::sqrt(x); });
  const HermitianOperator rho_v = hermitize(partial_trace_last(rho.matrix(), dl));
  const ComplexMatrix rv_inv_sqrt = matrix_inv_sqrt(rho_v).matrix();
  const ComplexMatrix inner = rv_inv_sqrt * omega.matrix() * rv_inv_sqrt;
  const ComplexMatrix lifted = kron(inner, identity_matrix(dl));
  ComplexMatrix out = rho_sqrt * lifted * rho_sqrt;

  const double tr = out.trace().real();
  if (std::abs(tr - 1.0) > kPetzTraceDrift) {
    std::ostringstream os;
    os.precision(17);
    os << "petz recovery trace drift " << tr - 1.0 << " exceeds " << kPetzTraceDrift;
    throw NumericError(os.str());
  }
  out /= tr;
  return DensityOperator(rho.dims(), hermitize(std::move(out)));
}

RuskaiResult check_ruskai(const DensityOperator& omega, const DensityOperator& rho, double tol) {
  if (omega.dim() != rho.dim() || omega.dims() != rho.dims())
    throw ValidationError("check_ruskai: omega and rho must share subsystem dimensions");
  const SpectralDecomposition ew = herm_eig(omega.op());
  const SpectralDecomposition er = herm_eig(rho.op());
  if (!is_full_rank(er)) throw ValidationError("support violation: rho is rank-deficient (full rank required)");
  if (!is_full_rank(ew)) throw ValidationError("support violation: omega is rank-deficient (full rank required)");

  const Index dl = latent_dim(rho);
  const HermitianOperator wv = hermitize(partial_trace_last(omega.matrix(), dl));
  const HermitianOperator rv = hermitize(partial_trace_last(rho.matrix(), dl));
  const auto lg = [](double x) { return std::log(x); };
  const ComplexMatrix lhs = ew.apply(lg) - er.apply(lg);
  const ComplexMatrix rhs_v = matrix_log(wv).matrix() - matrix_log(rv).matrix();
  const ComplexMatrix diff = lhs - kron(rhs_v, identity_matrix(dl));
  RuskaiResult r;
  r.residual = max_abs(diff);
  r.holds = r.residual <= tol;
  return r;
}

namespace {

ComplexMatrix random_hermitian(Index d, RngStream& rng) {
  ComplexMatrix b(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) b(i, j) = Complex(rng.normal(), rng.normal());
  return (b + b.adjoint()) * 0.5;
}

}  // namespace

ConditionSCertificate check_condition_s(const DensityOperator& omega, const DensityOperator& rho) {
  ConditionSCertificate cert;
  const Index dl = latent_dim(rho);
  const Index dv = rho.dim() / dl;
  if (omega.dim() != dv) {
    std::ostringstream os;
    os << "omega has dimension " << omega.dim() << " but the visible space has dimension " << dv;
    cert.violation_report = os.str();
    return cert;
  }

  const SpectralDecomposition er = herm_eig(rho.op());
  if (!is_full_rank(er)) {
    std::ostringstream os;
    os.precision(17);
    os << "rho is not full rank: smallest eigenvalue " << er.eigenvalues(0) << " <= threshold "
       << rank_threshold(er.eigenvalues);
    cert.violation_report = os.str();
    return cert;
  }

  const ComplexMatrix rho_v = partial_trace_last(rho.matrix(), dl);
  const ComplexMatrix comm = omega.matrix() * rho_v - rho_v * omega.matrix();
  const double comm_norm = max_abs(comm);
  const double comm_tol = kCommutatorRel * std::max(max_abs(omega.matrix()), max_abs(rho_v));
  if (comm_norm >= comm_tol) {
    std::ostringstream os;
    os.precision(6);
    os << "omega does not commute with Tr_L rho: max|[omega, rho_V]| = " << comm_norm << " >= " << comm_tol;
    cert.violation_report = os.str();
    return cert;
  }

  std::ostringstream failures;
  for (int attempt = 0; attempt < kBasisAttempts; ++attempt) {
    RngStream rng = RngStream::derive(0x436f6e6453ULL, {static_cast<std::uint64_t>(attempt)});
    const double c1 = rng.uniform(0.5, 1.5);
    const double c2 = rng.uniform(0.5, 1.5);
    ComplexMatrix b = random_hermitian(dl, rng);
    b /= std::max(max_abs(b), 1e-300);
    // Tr_L(rho (I (x) B)) is diagonal in any basis that block-diagonalizes
    // rho; it separates directions that rho_V and omega leave degenerate.
    const ComplexMatrix probe = partial_trace_last(rho.matrix() * kron(identity_matrix(dv), b), dl);
    const double scale = std::max(max_abs(rho_v), 1e-300);
    const ComplexMatrix mix = rho_v + c1 * omega.matrix() + c2 * scale * probe / std::max(max_abs(probe), 1e-300);
    const SpectralDecomposition ex = herm_eig(hermitize(mix));
    const ComplexMatrix& x = ex.eigenvectors;

    const ComplexMatrix w_rot = x.adjoint() * omega.matrix() * x;
    ComplexMatrix w_off = w_rot;
    w_off.diagonal().setZero();
    const double w_off_norm = max_abs(w_off);

    const ComplexMatrix u = kron(x, identity_matrix(dl));
    const ComplexMatrix rotated = u.adjoint() * rho.matrix() * u;
    ComplexMatrix block_part = ComplexMatrix::Zero(rho.dim(), rho.dim());
    for (Index i = 0; i < dv; ++i) block_part.block(i * dl, i * dl, dl, dl) = rotated.block(i * dl, i * dl, dl, dl);
    const double residual = max_abs(u * (rotated - block_part) * u.adjoint());

    if (residual > kReassemblyTol || w_off_norm > kReassemblyTol) {
      failures.precision(6);
      failures << " attempt " << attempt << ": reassembly residual " << residual << ", omega off-diagonal "
               << w_off_norm << ";";
      continue;
    }

    cert.basis = x;
    cert.alphas.resize(dv);
    cert.blocks.clear();
    bool ok = true;
    for (Index i = 0; i < dv && ok; ++i) {
      ComplexMatrix blk = rotated.block(i * dl, i * dl, dl, dl);
      const double a = blk.trace().real();
      cert.alphas(i) = a;
      if (!(a > 0.0)) {
        ok = false;
        break;
      }
      try {
        cert.blocks.emplace_back(std::vector<Index>{dl}, hermitize(blk / a));
      } catch (const ValidationError& e) {
        failures << " attempt " << attempt << ": block " << i << " invalid (" << e.what() << ");";
        ok = false;
      }
    }
    if (!ok) {
      cert.blocks.clear();
      continue;
    }
    cert.holds = true;
    cert.violation_report.clear();
    return cert;
  }
  cert.basis.resize(0, 0);
  cert.alphas.resize(0);
  cert.violation_report = "no common eigenbasis block-diagonalizes rho:" + failures.str();
  return cert;
}

DensityOperator qip_project(const DensityOperator& omega, const DensityOperator& rho) {
  const ConditionSCertificate cert = check_condition_s(omega, rho);
  if (!cert.holds) throw ConditionSViolation("information projection refused, Condition S fails: " + cert.violation_report);
  return petz_recovery(rho, omega);
}

}  // namespace doem
