#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "doem/distribution.hpp"
#include "doem/models.hpp"

namespace doem {

struct DoemConfig {
  int max_outer_iters = 100;
  int m_step_inner_iters = 10;
  double learning_rate = 0.1;
  double grad_tol = 1e-6;
  bool ascent_check = true;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

struct TraceRecord {
  int iter = 0;
  double log_likelihood = 0.0;
  double qelbo = 0.0;
  double relative_entropy = 0.0;
  double gradient_norm = 0.0;
  double wall_time = 0.0;  // seconds since the run started
};

struct TrainTrace {
  std::vector<TraceRecord> records;

  // Columns iter,loglik,qelbo,rel_entropy,grad_norm,seconds. The seconds
  // column is left empty unless with_time is set, so default output is
  // reproducible byte for byte.
  void write_csv(std::ostream& os, bool with_time = false) const;
};

enum class StopReason { Converged, MaxIterations, StepCollapse };
const char* to_string(StopReason r);

// eta = direct sum over visible basis states; blocks at visible indices not
// listed are zero.
struct BlockState {
  int d_v = 0;
  Index block_dim = 0;
  std::vector<Index> index;
  std::vector<ComplexMatrix> blocks;

  ComplexMatrix dense() const;
};

// log Z(theta) and, optionally, Tr(rho(theta) H_r) for every term.
struct ModelEvaluation {
  double log_partition = 0.0;
  RealVector moments;
};

class PartitionModel {
 public:
  virtual ~PartitionModel() = default;
  virtual std::size_t num_params() const = 0;
  virtual ModelEvaluation evaluate(const RealVector& theta, bool with_moments) const = 0;
};

class DensePartitionModel : public PartitionModel {
 public:
  explicit DensePartitionModel(const ParamHamiltonian& h) : h_(h) {}
  std::size_t num_params() const override { return h_.terms.size(); }
  ModelEvaluation evaluate(const RealVector& theta, bool with_moments) const override;

 private:
  const ParamHamiltonian& h_;
};

class BlockPartitionModel : public PartitionModel {
 public:
  explicit BlockPartitionModel(const CqlvmModel& model) : model_(model) {}
  std::size_t num_params() const override { return model_.num_params(); }
  ModelEvaluation evaluate(const RealVector& theta, bool with_moments) const override;

 private:
  const CqlvmModel& model_;
};

// Per-block Gibbs quantities of a CQ-LVM at one theta.
struct BlockGibbs {
  double log_partition = 0.0;
  RealVector log_block_trace;               // log Tr exp(H_k)
  std::vector<ComplexMatrix> conditionals;  // exp(H_k) / Tr exp(H_k)

  double log_prob(Index k) const { return log_block_trace(k) - log_partition; }
};

BlockGibbs block_gibbs(const CqlvmModel& model, const RealVector& theta);

// Tr(eta log rho(theta)) + S(eta) - S(eta_V). Throws ValidationError if
// Tr_L eta differs from eta_V by more than 1e-8.
double qelbo(const DensityOperator& eta, const RealVector& theta, const ParamHamiltonian& model,
             const DensityOperator& eta_v);
double qelbo(const BlockState& eta, const RealVector& theta, const CqlvmModel& model,
             const VisibleDistribution& eta_v);

// Dense: qip_project(eta_V, model_state).
DensityOperator e_step(const DensityOperator& eta_v, const DensityOperator& model_state);
// CQ-LVM: direct sum of p(v_k) * rho_L(k | theta), no dense assembly.
BlockState e_step(const VisibleDistribution& eta_v, const CqlvmModel& model, const RealVector& theta);

// Tr(eta H_r) for each term.
RealVector data_moments(const DensityOperator& eta, const ParamHamiltonian& model);
RealVector data_moments(const BlockState& eta, const CqlvmModel& model);

// Tr(eta H_r) - Tr(rho(theta) H_r) at theta = model.theta.
RealVector m_step_gradient(const DensityOperator& eta, const ParamHamiltonian& model);
RealVector m_step_gradient(const BlockState& eta, const CqlvmModel& model);

struct MStepResult {
  RealVector theta;
  std::vector<double> q_values;  // Q at entry and after every accepted inner step
  int inner_iters = 0;
  bool collapsed = false;
};

// Gradient ascent on Q(theta) = theta . data_moments - log Z(theta) with
// backtracking (up to 20 halvings per inner step).
MStepResult m_step(const RealVector& data_moments, const PartitionModel& model, const RealVector& theta0,
                   const DoemConfig& config);
MStepResult m_step(const DensityOperator& eta, const ParamHamiltonian& model, const DoemConfig& config);

struct DoemResult {
  TrainTrace trace;
  QbmSpec spec;  // final parameters
  double final_log_likelihood = 0.0;
  StopReason stop = StopReason::MaxIterations;
  int ascent_violations = 0;
  double worst_ascent_drop = 0.0;
  std::vector<RealVector> thetas;  // theta^(0), ..., theta^(T)
};

// Per-datapoint path for CQ-LVM specs.
DoemResult run_doem(const VisibleDistribution& target, const QbmSpec& init, const DoemConfig& config);
// Dense path: Condition S is checked at every iterate; losing it throws
// ConditionSViolation.
DoemResult run_doem_dense(const DensityOperator& eta_v, const QbmSpec& init, const DoemConfig& config);

}  // namespace doem
