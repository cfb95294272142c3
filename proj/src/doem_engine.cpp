#include "doem/doem_engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "doem/errors.hpp"
#include "doem/parallel.hpp"
#include "doem/quantum_info.hpp"

namespace doem {

namespace {

constexpr double kQSlack = 1e-12;
constexpr int kMaxHalvings = 20;
constexpr double kAscentSlack = 1e-9;
constexpr double kFeasibilityTol = 1e-8;

double max_norm(const RealVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double logsumexp(const RealVector& v) {
  const double mx = v.maxCoeff();
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += std::exp(v(i) - mx);
  return mx + std::log(s);
}

// Tr(rho_k O_o) for every block k and hidden operator o.
RealMatrix block_op_expectations(const CqlvmModel& model, const std::vector<ComplexMatrix>& blocks) {
  const auto& ops = model.hidden_operators();
  RealMatrix e(static_cast<Index>(blocks.size()), static_cast<Index>(ops.size()));
  parallel_for(blocks.size(), [&](std::size_t k) {
    for (std::size_t o = 0; o < ops.size(); ++o)
      e(static_cast<Index>(k), static_cast<Index>(o)) = trace_product(blocks[k], ops[o]).real();
  });
  return e;
}

RealVector moments_from_expectations(const CqlvmModel& model, const RealMatrix& e, const std::vector<Index>& index,
                                     const std::vector<double>& weight) {
  RealVector m = RealVector::Zero(static_cast<Index>(model.num_params()));
  for (std::size_t r = 0; r < model.num_params(); ++r) {
    const int op = model.term(r).op;
    if (op < 0) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i)
      s += weight[i] * model.term_coefficient(r, index[i]) * e(static_cast<Index>(i), op);
    m(static_cast<Index>(r)) = s;
  }
  return m;
}

void write_checkpoint(const DoemConfig& cfg, int iter, const QbmSpec& spec) {
  std::filesystem::create_directories(cfg.checkpoint_dir);
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_%06d.json", iter);
  const auto path = cfg.checkpoint_dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  nlohmann::json j;
  j["iteration"] = iter;
  j["model"] = to_json(spec);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

}  // namespace

void DoemConfig::validate() const {
  if (max_outer_iters < 0) throw ValidationError("max_outer_iters must be non-negative");
  if (m_step_inner_iters < 1) throw ValidationError("m_step_inner_iters must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be positive");
  if (!(grad_tol > 0.0)) throw ValidationError("grad_tol must be positive");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be non-negative");
  if (checkpoint_every > 0 && checkpoint_dir.empty())
    throw ValidationError("checkpoint_every needs a checkpoint directory");
}

void TrainTrace::write_csv(std::ostream& os, bool with_time) const {
  os << "iter,loglik,qelbo,rel_entropy,grad_norm,seconds\n";
  for (const auto& r : records) {
    os << r.iter << ',' << fmt(r.log_likelihood) << ',' << fmt(r.qelbo) << ',' << fmt(r.relative_entropy) << ','
       << fmt(r.gradient_norm) << ',';
    if (with_time) os << fmt(r.wall_time);
    os << '\n';
  }
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged:
      return "converged";
    case StopReason::MaxIterations:
      return "max_iterations";
    case StopReason::StepCollapse:
      return "step_collapse";
  }
  return "unknown";
}

ComplexMatrix BlockState::dense() const {
  if (d_v + static_cast<int>(std::log2(static_cast<double>(block_dim))) > kExactQubitCap)
    throw ValidationError("dense reconstruction of a block state refused above the qubit cap");
  const Index nb = Index{1} << d_v;
  ComplexMatrix out = ComplexMatrix::Zero(nb * block_dim, nb * block_dim);
  for (std::size_t i = 0; i < index.size(); ++i)
    out.block(index[i] * block_dim, index[i] * block_dim, block_dim, block_dim) = blocks[i];
  return out;
}

ModelEvaluation DensePartitionModel::evaluate(const RealVector& theta, bool with_moments) const {
  const SpectralDecomposition e = herm_eig(h_.assemble(theta));
  ModelEvaluation out;
  out.log_partition = log_partition(e);
  if (with_moments) {
    const double lz = out.log_partition;
    const ComplexMatrix rho = e.apply([lz](double x) { return std::exp(x - lz); });
    out.moments.resize(static_cast<Index>(h_.terms.size()));
    for (std::size_t r = 0; r < h_.terms.size(); ++r)
      out.moments(static_cast<Index>(r)) = trace_product(rho, h_.terms[r].matrix()).real();
  }
  return out;
}

BlockGibbs block_gibbs(const CqlvmModel& model, const RealVector& theta) {
  const Index nb = model.num_blocks();
  BlockGibbs g;
  g.log_block_trace.resize(nb);
  g.conditionals.resize(static_cast<std::size_t>(nb));
  parallel_for(static_cast<std::size_t>(nb), [&](std::size_t k) {
    const SpectralDecomposition e = herm_eig(hermitize(model.block(static_cast<Index>(k), theta)));
    const double lt = log_partition(e);
    g.log_block_trace(static_cast<Index>(k)) = lt;
    g.conditionals[k] = e.apply([lt](double x) { return std::exp(x - lt); });
  });
  g.log_partition = logsumexp(g.log_block_trace);
  return g;
}

ModelEvaluation BlockPartitionModel::evaluate(const RealVector& theta, bool with_moments) const {
  ModelEvaluation out;
  if (!with_moments) {
    const Index nb = model_.num_blocks();
    RealVector lt(nb);
    parallel_for(static_cast<std::size_t>(nb), [&](std::size_t k) {
      Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(model_.block(static_cast<Index>(k), theta), Eigen::EigenvaluesOnly);
      if (es.info() != Eigen::Success) throw NumericError("eigensolver failed on a CQ-LVM block");
      SpectralDecomposition d{es.eigenvalues(), ComplexMatrix()};
      lt(static_cast<Index>(k)) = log_partition(d);
    });
    out.log_partition = logsumexp(lt);
    return out;
  }
  const BlockGibbs g = block_gibbs(model_, theta);
  out.log_partition = g.log_partition;
  const RealMatrix e = block_op_expectations(model_, g.conditionals);
  std::vector<Index> index(g.conditionals.size());
  std::vector<double> weight(g.conditionals.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    index[k] = static_cast<Index>(k);
    weight[k] = std::exp(g.log_prob(static_cast<Index>(k)));
  }
  out.moments = moments_from_expectations(model_, e, index, weight);
  return out;
}

double qelbo(const DensityOperator& eta, const RealVector& theta, const ParamHamiltonian& model,
             const DensityOperator& eta_v) {
  if (eta.dim() != model.dim) throw ValidationError("qelbo: eta and model dimensions differ");
  const Index dl = eta.dim() / eta_v.dim();
  if (dl * eta_v.dim() != eta.dim()) throw ValidationError("qelbo: eta_V dimension does not divide eta dimension");
  const double gap = max_abs(partial_trace_last(eta.matrix(), dl) - eta_v.matrix());
  if (gap > kFeasibilityTol) {
    std::ostringstream os;
    os << "qelbo: infeasible eta, max|Tr_L eta - eta_V| = " << gap << " exceeds " << kFeasibilityTol;
    throw ValidationError(os.str());
  }
  const HermitianOperator h = model.assemble(theta);
  const double lz = log_partition(herm_eig(h));
  const double energy = trace_product(eta.matrix(), h.matrix()).real();
  return energy - lz + von_neumann_entropy(eta) - von_neumann_entropy(eta_v);
}

double qelbo(const BlockState& eta, const RealVector& theta, const CqlvmModel& model,
             const VisibleDistribution& eta_v) {
  if (eta.d_v != model.visible_bits() || eta.block_dim != model.block_dim())
    throw ValidationError("qelbo: block state shape does not match the model");
  if (eta.index != eta_v.index) throw ValidationError("qelbo: infeasible eta, block support differs from eta_V support");
  for (std::size_t i = 0; i < eta.index.size(); ++i) {
    const double tr = eta.blocks[i].trace().real();
    if (std::abs(tr - eta_v.prob[i]) > kFeasibilityTol) {
      std::ostringstream os;
      os << "qelbo: infeasible eta, block " << eta.index[i] << " has trace " << tr << " but eta_V weight "
         << eta_v.prob[i];
      throw ValidationError(os.str());
    }
  }
  const double lz = BlockPartitionModel(model).evaluate(theta, false).log_partition;
  std::vector<double> parts(eta.index.size());
  parallel_for(eta.index.size(), [&](std::size_t i) {
    const ComplexMatrix h = model.block(eta.index[i], theta);
    parts[i] = trace_product(eta.blocks[i], h).real() + entropy_of_psd(hermitize(eta.blocks[i]));
  });
  double q = -lz;
  for (double p : parts) q += p;
  return q - eta_v.entropy();
}

DensityOperator e_step(const DensityOperator& eta_v, const DensityOperator& model_state) {
  return qip_project(eta_v, model_state);
}

BlockState e_step(const VisibleDistribution& eta_v, const CqlvmModel& model, const RealVector& theta) {
  if (eta_v.d_v != model.visible_bits()) throw ValidationError("e_step: target and model visible sizes differ");
  const BlockGibbs g = block_gibbs(model, theta);
  BlockState s;
  s.d_v = eta_v.d_v;
  s.block_dim = model.block_dim();
  s.index = eta_v.index;
  s.blocks.resize(eta_v.index.size());
  for (std::size_t i = 0; i < eta_v.index.size(); ++i)
    s.blocks[i] = eta_v.prob[i] * g.conditionals[static_cast<std::size_t>(eta_v.index[i])];
  return s;
}

RealVector data_moments(const DensityOperator& eta, const ParamHamiltonian& model) {
  if (eta.dim() != model.dim) throw ValidationError("data_moments: dimension mismatch");
  RealVector m(static_cast<Index>(model.terms.size()));
  for (std::size_t r = 0; r < model.terms.size(); ++r)
    m(static_cast<Index>(r)) = trace_product(eta.matrix(), model.terms[r].matrix()).real();
  return m;
}

RealVector data_moments(const BlockState& eta, const CqlvmModel& model) {
  if (eta.d_v != model.visible_bits() || eta.block_dim != model.block_dim())
    throw ValidationError("data_moments: block state shape does not match the model");
  const RealMatrix e = block_op_expectations(model, eta.blocks);
  return moments_from_expectations(model, e, eta.index, std::vector<double>(eta.index.size(), 1.0));
}

RealVector m_step_gradient(const DensityOperator& eta, const ParamHamiltonian& model) {
  return data_moments(eta, model) - DensePartitionModel(model).evaluate(model.theta, true).moments;
}

RealVector m_step_gradient(const BlockState& eta, const CqlvmModel& model) {
  return data_moments(eta, model) - BlockPartitionModel(model).evaluate(model.theta(), true).moments;
}

MStepResult m_step(const RealVector& dm, const PartitionModel& model, const RealVector& theta0,
                   const DoemConfig& config) {
  if (static_cast<std::size_t>(dm.size()) != model.num_params() || dm.size() != theta0.size())
    throw ValidationError("m_step: moment and parameter lengths differ");
  MStepResult res;
  res.theta = theta0;
  ModelEvaluation ev = model.evaluate(res.theta, true);
  double q = res.theta.dot(dm) - ev.log_partition;
  res.q_values.push_back(q);
  RealVector grad = dm - ev.moments;
  for (int it = 0; it < config.m_step_inner_iters; ++it) {
    if (max_norm(grad) == 0.0) break;
    double step = config.learning_rate;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      const RealVector trial = res.theta + step * grad;
      ModelEvaluation tev = model.evaluate(trial, true);
      const double tq = trial.dot(dm) - tev.log_partition;
      if (std::isfinite(tq) && tq >= q - kQSlack) {
        res.theta = trial;
        q = tq;
        grad = dm - tev.moments;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.collapsed = true;
      break;
    }
    res.q_values.push_back(q);
    ++res.inner_iters;
  }
  return res;
}

MStepResult m_step(const DensityOperator& eta, const ParamHamiltonian& model, const DoemConfig& config) {
  return m_step(data_moments(eta, model), DensePartitionModel(model), model.theta, config);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note_ascent(DoemResult& res, double prev, double cur) {
  const double drop = prev - cur;
  if (drop > res.worst_ascent_drop) res.worst_ascent_drop = drop;
  if (drop > kAscentSlack) ++res.ascent_violations;
}

}  // namespace

DoemResult run_doem(const VisibleDistribution& target, const QbmSpec& init, const DoemConfig& config) {
  config.validate();
  target.validate();
  CqlvmModel model = cqlvm_blocks(init);
  if (target.d_v != model.visible_bits()) {
    std::ostringstream os;
    os << "target has " << target.d_v << " visible bits but the model has " << model.visible_bits();
    throw ValidationError(os.str());
  }
  const auto t0 = Clock::now();
  const double s_target = target.entropy();
  BlockPartitionModel pm(model);
  DoemResult res;
  RealVector theta = init.theta();
  res.thetas.push_back(theta);

  auto loglik = [&](const BlockGibbs& g) {
    double l = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) l += target.prob[i] * g.log_prob(target.index[i]);
    return l;
  };

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < config.max_outer_iters; ++t) {
    const BlockGibbs g = block_gibbs(model, theta);
    const double ll = loglik(g);
    BlockState eta;
    eta.d_v = target.d_v;
    eta.block_dim = model.block_dim();
    eta.index = target.index;
    eta.blocks.resize(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
      eta.blocks[i] = target.prob[i] * g.conditionals[static_cast<std::size_t>(target.index[i])];
    const double q = qelbo(eta, theta, model, target);
    const RealVector dm = data_moments(eta, model);

    const RealMatrix e = block_op_expectations(model, g.conditionals);
    std::vector<Index> all(g.conditionals.size());
    std::vector<double> w(g.conditionals.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
      all[k] = static_cast<Index>(k);
      w[k] = std::exp(g.log_prob(static_cast<Index>(k)));
    }
    const RealVector grad = dm - moments_from_expectations(model, e, all, w);
    const double gn = max_norm(grad);

    res.trace.records.push_back({t, ll, q, -ll - s_target, gn, seconds_since(t0)});
    if (config.ascent_check && t > 0) note_ascent(res, prev_ll, ll);
    prev_ll = ll;
    if (gn < config.grad_tol) {
      res.stop = StopReason::Converged;
      break;
    }
    const MStepResult ms = m_step(dm, pm, theta, config);
    theta = ms.theta;
    res.thetas.push_back(theta);
    if (config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0) {
      QbmSpec snap = init;
      snap.set_theta(theta);
      write_checkpoint(config, t + 1, snap);
    }
    if (ms.collapsed && ms.inner_iters == 0) {
      res.stop = StopReason::StepCollapse;
      break;
    }
  }
  res.final_log_likelihood = loglik(block_gibbs(model, theta));
  if (config.ascent_check && !res.trace.records.empty()) note_ascent(res, prev_ll, res.final_log_likelihood);
  res.spec = init;
  res.spec.set_theta(theta);
  return res;
}

DoemResult run_doem_dense(const DensityOperator& eta_v, const QbmSpec& init, const DoemConfig& config) {
  config.validate();
  ParamHamiltonian h = build_qbm_hamiltonian(init);
  const Index dv = Index{1} << init.m;
  const Index dl = Index{1} << init.n;
  if (eta_v.dim() != dv) throw ValidationError("eta_V dimension does not match 2^m");
  const auto t0 = Clock::now();
  const double s_target = von_neumann_entropy(eta_v);
  DensePartitionModel pm(h);
  DoemResult res;
  RealVector theta = h.theta;
  res.thetas.push_back(theta);
  const std::vector<Index> dims{dv, dl};

  auto loglik = [&](const DensityOperator& state) { return log_likelihood(eta_v, model_marginal(state, init.m)); };

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < config.max_outer_iters; ++t) {
    h.theta = theta;
    const DensityOperator state = gibbs_state(h, dims);
    const double ll = loglik(state);
    DensityOperator eta;
    try {
      eta = e_step(eta_v, state);
    } catch (const ConditionSViolation& e) {
      std::ostringstream os;
      os << "Condition S lost at iteration " << t << ": " << e.what();
      throw ConditionSViolation(os.str());
    }
    const double q = qelbo(eta, theta, h, eta_v);
    const RealVector dm = data_moments(eta, h);
    const RealVector grad = dm - pm.evaluate(theta, true).moments;
    const double gn = max_norm(grad);
    res.trace.records.push_back({t, ll, q, -ll - s_target, gn, seconds_since(t0)});
    if (config.ascent_check && t > 0) note_ascent(res, prev_ll, ll);
    prev_ll = ll;
    if (gn < config.grad_tol) {
      res.stop = StopReason::Converged;
      break;
    }
    const MStepResult ms = m_step(dm, pm, theta, config);
    theta = ms.theta;
    res.thetas.push_back(theta);
    if (config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0) {
      QbmSpec snap = init;
      snap.set_theta(theta);
      write_checkpoint(config, t + 1, snap);
    }
    if (ms.collapsed && ms.inner_iters == 0) {
      res.stop = StopReason::StepCollapse;
      break;
    }
  }
  h.theta = theta;
  res.final_log_likelihood = loglik(gibbs_state(h, dims));
  if (config.ascent_check && !res.trace.records.empty()) note_ascent(res, prev_ll, res.final_log_likelihood);
  res.spec = init;
  res.spec.set_theta(theta);
  return res;
}

}  // namespace doem
