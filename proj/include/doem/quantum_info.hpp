#pragma once

#include <string>
#include <vector>

#include "doem/operator_core.hpp"

namespace doem {

struct SupportInfo {
  Index rank = 0;
  HermitianOperator support_projector;
};

SupportInfo support(const HermitianOperator& h);

// Natural-log entropy of a density operator.
double von_neumann_entropy(const DensityOperator& rho);
// -sum lambda log lambda over eigenvalues above the rank threshold, for any
// PSD operator (used for unnormalized blocks).
double entropy_of_psd(const HermitianOperator& h);

// D(omega || rho); +infinity when ker(rho) is not inside ker(omega).
double relative_entropy(const DensityOperator& omega, const DensityOperator& rho);

// rho on V (x) L (L is the last subsystem), omega on V.
DensityOperator petz_recovery(const DensityOperator& rho, const DensityOperator& omega);

struct RuskaiResult {
  bool holds = false;
  double residual = 0.0;
};

// Max-entry residual of (log omega - log rho) - (log Tr_L omega - log Tr_L rho) (x) I.
RuskaiResult check_ruskai(const DensityOperator& omega, const DensityOperator& rho, double tol);

struct ConditionSCertificate {
  bool holds = false;
  ComplexMatrix basis;  // columns x_i
  RealVector alphas;
  std::vector<DensityOperator> blocks;
  std::string violation_report;
};

ConditionSCertificate check_condition_s(const DensityOperator& omega, const DensityOperator& rho);

// Petz projection, refused with ConditionSViolation unless the certificate holds.
DensityOperator qip_project(const DensityOperator& omega, const DensityOperator& rho);

// Splits rho's dims into (visible dims, latent dim) with latent = last entry.
std::vector<Index> visible_dims(const DensityOperator& rho);
Index latent_dim(const DensityOperator& rho);

}  // namespace doem
