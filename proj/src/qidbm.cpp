#include "doem/qidbm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "doem/doem_engine.hpp"
#include "doem/errors.hpp"
#include "doem/parallel.hpp"

namespace doem {

const char* to_string(ModelKind k) { return k == ModelKind::Qidbm ? "qidbm" : "dbm"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "qidbm") return ModelKind::Qidbm;
  if (s == "dbm") return ModelKind::Dbm;
  throw ValidationError("unknown model kind '" + s + "' (expected qidbm or dbm)");
}

QidbmParams QidbmParams::zeros(int l, int m, int n) {
  if (l < 1 || m < 1 || n < 1) throw ValidationError("QiDBM layers must each have at least one unit");
  QidbmParams p;
  p.l = l;
  p.m = m;
  p.n = n;
  p.b = RealVector::Zero(l + m + n);
  p.W1 = RealMatrix::Zero(l, m);
  p.W2 = RealMatrix::Zero(m, n);
  p.gamma = RealVector::Zero(m);
  return p;
}

QidbmParams QidbmParams::init(int l, int m, int n, double gamma, std::uint64_t seed) {
  QidbmParams p = zeros(l, m, n);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(l));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(m));
  // One stream per weight row keeps large initializations parallel and
  // independent of thread count.
  parallel_for(static_cast<std::size_t>(l), [&](std::size_t i) {
    RngStream rng = RngStream::derive(seed, {0x5731ULL, i});
    for (int j = 0; j < m; ++j) p.W1(static_cast<Index>(i), j) = rng.uniform(-s1, s1);
  });
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
    RngStream rng = RngStream::derive(seed, {0x5732ULL, i});
    for (int j = 0; j < n; ++j) p.W2(static_cast<Index>(i), j) = rng.uniform(-s2, s2);
  });
  p.gamma.setConstant(gamma);
  return p;
}

std::size_t QidbmParams::num_params() const {
  return static_cast<std::size_t>(b.size() + W1.size() + W2.size() + gamma.size());
}

bool QidbmParams::all_finite() const {
  return b.allFinite() && W1.allFinite() && W2.allFinite() && gamma.allFinite();
}

void QidbmParams::validate() const {
  if (l < 1 || m < 1 || n < 1) throw ValidationError("QiDBM layers must each have at least one unit");
  if (b.size() != l + m + n) throw ValidationError("QiDBM bias vector must have l+m+n entries");
  if (W1.rows() != l || W1.cols() != m) throw ValidationError("QiDBM W1 must be l x m");
  if (W2.rows() != m || W2.cols() != n) throw ValidationError("QiDBM W2 must be m x n");
  if (gamma.size() != m) throw ValidationError("QiDBM gamma must have m entries");
  if (!all_finite()) throw ValidationError("QiDBM parameters must be finite");
}

void CdConfig::validate() const {
  if (k < 1) throw ValidationError("CD needs k >= 1 Gibbs steps");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  if (epochs < 0) throw ValidationError("epoch count must be non-negative");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ValidationError("holdout fraction must be in [0, 1)");
  if (train_gamma && kind == ModelKind::Dbm) throw ValidationError("gamma training needs the qidbm model kind");
}

nlohmann::json CdConfig::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["encoding"] = to_string(encoding);
  j["kind"] = to_string(kind);
  j["train_gamma"] = train_gamma;
  j["holdout_fraction"] = holdout_fraction;
  return j;
}

SpinExpectation spin_expectation(double b_eff, double gamma) {
  if (gamma == 0.0) return {std::tanh(b_eff), 0.0};
  const double d = std::hypot(b_eff, gamma);
  if (d == 0.0) return {0.0, 0.0};
  const double t = std::tanh(d) / d;
  return {b_eff * t, gamma * t};
}

namespace {

double lower_value(Encoding enc) { return enc == Encoding::ZeroOne ? 0.0 : -1.0; }

double prob_from_spin_mean(double z) { return 0.5 * (1.0 + z); }

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// log(2 cosh d), stable for large |d|.
double log_2cosh(double d) {
  const double a = std::abs(d);
  return a + std::log1p(std::exp(-2.0 * a));
}

double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

void sample_from_probability(LayerState& s, const RealMatrix& prob, Encoding enc, std::vector<RngStream>& rngs) {
  const double lo = lower_value(enc);
  s.values.resize(prob.rows(), prob.cols());
  if (static_cast<Index>(rngs.size()) != prob.rows()) throw ValidationError("one rng stream per batch row is required");
  parallel_for(static_cast<std::size_t>(prob.rows()), [&](std::size_t rr) {
    const Index r = static_cast<Index>(rr);
    RngStream& rng = rngs[rr];
    for (Index j = 0; j < prob.cols(); ++j) s.values(r, j) = rng.uniform() < prob(r, j) ? 1.0 : lo;
  });
}

RealMatrix column_mean(const RealMatrix& a) { return a.colwise().mean(); }

}  // namespace

RealMatrix h1_field(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p) {
  RealMatrix f(v.rows(), p.m);
  f.noalias() = v * p.W1;
  f.noalias() += h2 * p.W2.transpose();
  f.rowwise() += p.bh1().transpose();
  return f;
}

RealMatrix visible_field(const RealMatrix& h1, const QidbmParams& p) {
  RealMatrix f(h1.rows(), p.l);
  f.noalias() = h1 * p.W1.transpose();
  f.rowwise() += p.bv().transpose();
  return f;
}

RealMatrix h2_field(const RealMatrix& h1, const QidbmParams& p) {
  RealMatrix f(h1.rows(), p.n);
  f.noalias() = h1 * p.W2;
  f.rowwise() += p.bh2().transpose();
  return f;
}

QuantumExpectations quantum_layer_expectations(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p) {
  const RealMatrix f = h1_field(v, h2, p);
  QuantumExpectations e{RealMatrix(f.rows(), f.cols()), RealMatrix(f.rows(), f.cols())};
  for (Index r = 0; r < f.rows(); ++r)
    for (Index j = 0; j < f.cols(); ++j) {
      const SpinExpectation s = spin_expectation(f(r, j), p.gamma(j));
      e.z(r, j) = s.z;
      e.x(r, j) = s.x;
    }
  return e;
}

RealMatrix classical_probability(const RealMatrix& activation, Encoding enc) {
  if (enc == Encoding::ZeroOne) return activation.unaryExpr([](double a) { return sigmoid(a); });
  return activation.unaryExpr([](double a) { return prob_from_spin_mean(std::tanh(a)); });
}

RealMatrix classical_mean(const RealMatrix& activation, Encoding enc) {
  if (enc == Encoding::ZeroOne) return activation.unaryExpr([](double a) { return sigmoid(a); });
  return activation.unaryExpr([](double a) { return std::tanh(a); });
}

LayerState sample_quantum_layer(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p, Encoding enc,
                                std::vector<RngStream>& rngs, bool keep_x) {
  QuantumExpectations e = quantum_layer_expectations(v, h2, p);
  LayerState s;
  const RealMatrix prob = e.z.unaryExpr([](double z) { return prob_from_spin_mean(z); });
  sample_from_probability(s, prob, enc, rngs);
  s.mean = enc == Encoding::ZeroOne ? prob : e.z;
  if (keep_x) s.x = std::move(e.x);
  return s;
}

LayerState sample_classical_layer(const RealMatrix& activation, Encoding enc, std::vector<RngStream>& rngs) {
  LayerState s;
  const RealMatrix prob = classical_probability(activation, enc);
  sample_from_probability(s, prob, enc, rngs);
  s.mean = enc == Encoding::ZeroOne ? prob : classical_mean(activation, enc);
  return s;
}

LayerState sample_h1(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p, ModelKind kind, Encoding enc,
                     std::vector<RngStream>& rngs, bool keep_x) {
  if (kind == ModelKind::Qidbm) return sample_quantum_layer(v, h2, p, enc, rngs, keep_x);
  return sample_classical_layer(h1_field(v, h2, p), enc, rngs);
}

std::vector<RngStream> batch_streams(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch, Index rows) {
  std::vector<RngStream> out;
  out.reserve(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) out.push_back(RngStream::derive(seed, {epoch, batch, static_cast<std::uint64_t>(r)}));
  return out;
}

CdUpdate cd_step(const RealMatrix& v0, const QidbmParams& p, const CdConfig& config, std::vector<RngStream>& rngs) {
  if (v0.cols() != p.l) throw ValidationError("cd_step: batch rows must have l entries");
  const Encoding enc = config.encoding;
  const Index rows = v0.rows();

  // Positive phase: v clamped. A bottom-up pass seeds h2, then h1 is
  // resampled given (v, h2).
  const RealMatrix no_h2 = RealMatrix::Zero(rows, p.n);
  const bool keep_x = config.train_gamma;
  const LayerState h1_seed = sample_h1(v0, no_h2, p, config.kind, enc, rngs, false);
  const LayerState h2_pos = sample_classical_layer(h2_field(h1_seed.values, p), enc, rngs);
  const LayerState h1_pos = sample_h1(v0, h2_pos.values, p, config.kind, enc, rngs, keep_x);

  // Negative phase: K sweeps of (v, h2 | h1) then (h1 | v, h2).
  LayerState v_neg, h2_neg, h1_neg;
  const RealMatrix* h1 = &h1_pos.values;
  double recon = 0.0;
  for (int step = 0; step < config.k; ++step) {
    const RealMatrix vf = visible_field(*h1, p);
    if (step == 0) {
      const RealMatrix prob = classical_probability(vf, enc);
      const RealMatrix bits = enc == Encoding::ZeroOne ? v0 : RealMatrix((v0.array() + 1.0) * 0.5);
      recon = (bits - prob).squaredNorm() / static_cast<double>(bits.size());
    }
    v_neg = sample_classical_layer(vf, enc, rngs);
    h2_neg = sample_classical_layer(h2_field(*h1, p), enc, rngs);
    h1_neg = sample_h1(v_neg.values, h2_neg.values, p, config.kind, enc, rngs, keep_x);
    h1 = &h1_neg.values;
  }

  const double c = config.learning_rate / static_cast<double>(rows);
  CdUpdate u;
  u.reconstruction_error = recon;
  u.dW1.resize(p.l, p.m);
  u.dW1.noalias() = c * v0.transpose() * h1_pos.mean;
  u.dW1.noalias() -= c * v_neg.values.transpose() * h1_neg.values;
  u.dW2.resize(p.m, p.n);
  u.dW2.noalias() = c * h1_pos.mean.transpose() * h2_pos.values;
  u.dW2.noalias() -= c * h1_neg.values.transpose() * h2_neg.values;
  u.db.resize(p.l + p.m + p.n);
  u.db.head(p.l) = config.learning_rate * (column_mean(v0) - column_mean(v_neg.values)).transpose();
  u.db.segment(p.l, p.m) = config.learning_rate * (column_mean(h1_pos.mean) - column_mean(h1_neg.values)).transpose();
  u.db.tail(p.n) = config.learning_rate * (column_mean(h2_pos.values) - column_mean(h2_neg.values)).transpose();
  u.dgamma = RealVector::Zero(p.m);
  if (config.train_gamma && config.kind == ModelKind::Qidbm)
    u.dgamma = config.learning_rate * (column_mean(h1_pos.x) - column_mean(h1_neg.x)).transpose();
  return u;
}

void apply_update(QidbmParams& p, const CdUpdate& u) {
  p.W1 += u.dW1;
  p.W2 += u.dW2;
  p.b += u.db;
  p.gamma += u.dgamma;
}

namespace {

std::vector<Index> permutation(Index n, RngStream rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

RealMatrix gather_rows(const BinaryDataset& data, const std::vector<Index>& rows, std::size_t from, std::size_t count,
                       Encoding enc) {
  RealMatrix m(static_cast<Index>(count), data.d_v);
  const double lo = lower_value(enc);
  for (std::size_t i = 0; i < count; ++i) {
    const Index r = rows[from + i];
    for (int c = 0; c < data.d_v; ++c) m(static_cast<Index>(i), c) = data.bit(r, c) ? 1.0 : lo;
  }
  return m;
}

}  // namespace

double free_energy_proxy(const RealMatrix& v, const QidbmParams& p, ModelKind kind, Encoding enc) {
  const RealMatrix none = RealMatrix::Zero(v.rows(), p.n);
  RealMatrix h1m;
  if (kind == ModelKind::Qidbm) {
    const QuantumExpectations e = quantum_layer_expectations(v, none, p);
    h1m = enc == Encoding::ZeroOne ? RealMatrix(e.z.unaryExpr([](double z) { return prob_from_spin_mean(z); })) : e.z;
  } else {
    h1m = classical_mean(h1_field(v, none, p), enc);
  }
  const RealMatrix h2m = classical_mean(h2_field(h1m, p), enc);
  const RealMatrix a = h1_field(v, h2m, p);
  double total = 0.0;
  for (Index r = 0; r < v.rows(); ++r) {
    double f = -v.row(r).dot(p.bv()) - h2m.row(r).dot(p.bh2());
    for (Index j = 0; j < p.m; ++j) {
      if (kind == ModelKind::Qidbm)
        f -= log_2cosh(std::hypot(a(r, j), p.gamma(j)));
      else
        f -= enc == Encoding::ZeroOne ? softplus(a(r, j)) : log_2cosh(a(r, j));
    }
    total += f;
  }
  return v.rows() == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(v.rows());
}

TrainReport train(const BinaryDataset& data, QidbmParams params, const CdConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  params.validate();
  data.validate();
  if (data.d_v != params.l) {
    std::ostringstream os;
    os << "dataset has " << data.d_v << " visible units but the model expects " << params.l;
    throw ValidationError(os.str());
  }
  TrainReport rep;
  const Index n = data.rows();
  const std::vector<Index> perm = permutation(n, RngStream::derive(config.seed, {0x73706c6974ULL}));
  const Index n_hold = static_cast<Index>(std::floor(config.holdout_fraction * static_cast<double>(n)));
  rep.holdout_rows.assign(perm.begin(), perm.begin() + n_hold);
  rep.train_rows.assign(perm.begin() + n_hold, perm.end());
  std::sort(rep.holdout_rows.begin(), rep.holdout_rows.end());
  std::sort(rep.train_rows.begin(), rep.train_rows.end());
  if (rep.train_rows.empty()) throw ValidationError("no training rows left after the held-out split");
  const RealMatrix holdout =
      gather_rows(data, rep.holdout_rows, 0, rep.holdout_rows.size(), config.encoding);

  using Clock = std::chrono::steady_clock;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<Index> order_idx =
        permutation(static_cast<Index>(rep.train_rows.size()),
                    RngStream::derive(config.seed, {0x73687566ULL, static_cast<std::uint64_t>(epoch)}));
    std::vector<Index> order(order_idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = rep.train_rows[static_cast<std::size_t>(order_idx[i])];

    double recon_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(config.batch_size), ++batch) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - from);
      const RealMatrix v0 = gather_rows(data, order, from, count, config.encoding);
      std::vector<RngStream> rngs = batch_streams(config.seed, static_cast<std::uint64_t>(epoch), batch,
                                                  static_cast<Index>(count));
      const CdUpdate u = cd_step(v0, params, config, rngs);
      apply_update(params, u);
      if (!params.all_finite()) {
        std::ostringstream os;
        os << "non-finite parameters after epoch " << epoch << ", batch " << batch;
        throw NumericError(os.str());
      }
      recon_sum += u.reconstruction_error * static_cast<double>(count);
    }
    EpochStats st;
    st.epoch = epoch;
    st.reconstruction_error = recon_sum / static_cast<double>(order.size());
    st.holdout_free_energy = holdout.rows() > 0 ? free_energy_proxy(holdout, params, config.kind, config.encoding)
                                                : std::numeric_limits<double>::quiet_NaN();
    st.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    rep.epochs.push_back(st);
    if (on_epoch) on_epoch(params, st);
  }
  rep.params = std::move(params);
  return rep;
}

std::vector<std::uint8_t> generate(const QidbmParams& p, ModelKind kind, Encoding enc, Index n_samples, int burn_in,
                                   std::uint64_t seed) {
  p.validate();
  if (n_samples < 0 || burn_in < 0) throw ValidationError("generate: negative sample count or burn-in");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n_samples) * static_cast<std::size_t>(p.l));
  const Index chunk = 1024;
  const double lo = lower_value(enc);
  for (Index from = 0; from < n_samples; from += chunk) {
    const Index rows = std::min(chunk, n_samples - from);
    std::vector<RngStream> rngs;
    rngs.reserve(static_cast<std::size_t>(rows));
    for (Index r = 0; r < rows; ++r)
      rngs.push_back(RngStream::derive(seed, {0x67656eULL, static_cast<std::uint64_t>(from + r)}));
    RealMatrix v(rows, p.l), h2(rows, p.n);
    for (Index r = 0; r < rows; ++r) {
      RngStream& rng = rngs[static_cast<std::size_t>(r)];
      for (Index j = 0; j < p.l; ++j) v(r, j) = rng.uniform() < 0.5 ? 1.0 : lo;
      for (Index j = 0; j < p.n; ++j) h2(r, j) = rng.uniform() < 0.5 ? 1.0 : lo;
    }
    for (int sweep = 0; sweep <= burn_in; ++sweep) {
      const LayerState h1 = sample_h1(v, h2, p, kind, enc, rngs);
      v = sample_classical_layer(visible_field(h1.values, p), enc, rngs).values;
      h2 = sample_classical_layer(h2_field(h1.values, p), enc, rngs).values;
    }
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < p.l; ++j)
        out[static_cast<std::size_t>((from + r) * p.l + j)] = v(r, j) > 0.0 ? 1 : 0;
  }
  return out;
}

QbmSpec to_qbm_spec(const QidbmParams& p, ModelKind kind, Encoding enc) {
  p.validate();
  const int total = p.l + p.m + p.n;
  if (p.m + p.n > kExactQubitCap) throw ValidationError("exact QiDBM bridge: hidden layers exceed the qubit cap");
  // Unit value y = alpha + beta * S.
  RealVector alpha = RealVector::Zero(total), beta = RealVector::Ones(total);
  if (enc == Encoding::ZeroOne) {
    alpha.setConstant(0.5);
    beta.setConstant(0.5);
    if (kind == ModelKind::Qidbm) {
      alpha.segment(p.l, p.m).setZero();
      beta.segment(p.l, p.m).setOnes();
    }
  }
  RealMatrix coupling = RealMatrix::Zero(total, total);
  coupling.block(0, p.l, p.l, p.m) = p.W1;
  coupling.block(p.l, p.l + p.m, p.m, p.n) = p.W2;
  coupling = (coupling + coupling.transpose()).eval();

  QbmSpec s = QbmSpec::zeros(p.l, p.m + p.n);
  for (int u = 0; u < total; ++u) {
    double c = beta(u) * p.b(u);
    for (int w = 0; w < total; ++w) c += coupling(u, w) * alpha(w) * beta(u);
    s.b(u) = c;
  }
  for (int u = 0; u < total; ++u)
    for (int w = 0; w < total; ++w)
      if (u != w) s.w(u, w) = -beta(u) * beta(w) * coupling(u, w);
  if (kind == ModelKind::Qidbm) s.gamma.segment(p.l, p.m) = -p.gamma;
  return s;
}

RealVector exact_visible_distribution(const QidbmParams& p, ModelKind kind, Encoding enc) {
  if (p.l > 20) throw ValidationError("exact visible distribution limited to 20 visible units");
  const QbmSpec spec = to_qbm_spec(p, kind, enc);
  const CqlvmModel model = cqlvm_blocks(spec);
  const BlockGibbs g = block_gibbs(model, model.theta());
  RealVector probs(model.num_blocks());
  for (Index k = 0; k < probs.size(); ++k) probs(k) = std::exp(g.log_prob(k));
  return probs;
}

double exact_nll(const QidbmParams& p, ModelKind kind, Encoding enc, const BinaryDataset& data) {
  if (data.d_v != p.l) throw ValidationError("exact_nll: dataset width does not match the model");
  if (data.rows() == 0) throw ValidationError("exact_nll: empty dataset");
  const QbmSpec spec = to_qbm_spec(p, kind, enc);
  const CqlvmModel model = cqlvm_blocks(spec);
  const BlockGibbs g = block_gibbs(model, model.theta());
  double s = 0.0;
  for (Index r = 0; r < data.rows(); ++r) s -= g.log_prob(data.basis_index(r));
  return s / static_cast<double>(data.rows());
}

}  // namespace doem
