#include "doem/models.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "doem/errors.hpp"
#include "doem/quantum_info.hpp"
#include "doem/rng.hpp"

namespace doem {

namespace {

ComplexMatrix sigma(PauliAxis axis) {
  ComplexMatrix s = ComplexMatrix::Zero(2, 2);
  if (axis == PauliAxis::Z) {
    s(0, 0) = 1.0;
    s(1, 1) = -1.0;
  } else {
    s(0, 1) = 1.0;
    s(1, 0) = 1.0;
  }
  return s;
}

ComplexMatrix pauli_matrix(int total, int site, PauliAxis axis) {
  const Index left = Index{1} << (site - 1);
  const Index right = Index{1} << (total - site);
  return kron(kron(identity_matrix(left), sigma(axis)), identity_matrix(right));
}

void check_cap(int qubits, const char* what) {
  if (qubits > kExactQubitCap) {
    std::ostringstream os;
    os << what << ": " << qubits << " qubits exceeds the exact-path cap of " << kExactQubitCap;
    throw ValidationError(os.str());
  }
}

}  // namespace

HermitianOperator pauli_term(int total_qubits, int site, PauliAxis axis) {
  if (total_qubits < 1 || site < 1 || site > total_qubits) {
    std::ostringstream os;
    os << "pauli site " << site << " out of range for " << total_qubits << " qubits";
    throw ValidationError(os.str());
  }
  check_cap(total_qubits, "pauli_term");
  return hermitize(pauli_matrix(total_qubits, site, axis));
}

HermitianOperator ParamHamiltonian::assemble(const RealVector& th) const {
  if (static_cast<std::size_t>(th.size()) != terms.size())
    throw ValidationError("parameter vector length does not match the term count");
  ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
  for (std::size_t r = 0; r < terms.size(); ++r)
    if (th(static_cast<Index>(r)) != 0.0) h += th(static_cast<Index>(r)) * terms[r].matrix();
  return hermitize(std::move(h));
}

QbmSpec QbmSpec::zeros(int m, int n) {
  QbmSpec s;
  s.m = m;
  s.n = n;
  s.b = RealVector::Zero(m + n);
  s.w = RealMatrix::Zero(m + n, m + n);
  s.gamma = RealVector::Zero(m + n);
  return s;
}

QbmSpec QbmSpec::random(int m, int n, std::uint64_t seed, double scale, double gamma_scale) {
  QbmSpec s = zeros(m, n);
  s.seed = seed;
  RngStream rng = RngStream::derive(seed, {0x716d62ULL});
  const int total = m + n;
  for (int i = 0; i < total; ++i) s.b(i) = rng.uniform(-scale, scale);
  for (int i = 1; i < total; ++i)
    for (int j = 0; j < i; ++j) {
      s.w(i, j) = rng.uniform(-scale, scale);
      s.w(j, i) = s.w(i, j);
    }
  for (int i = m; i < total; ++i) s.gamma(i) = rng.uniform(0.0, gamma_scale);
  return s;
}

std::size_t QbmSpec::num_params() const {
  const std::size_t t = static_cast<std::size_t>(total());
  return 2 * t + t * (t - 1) / 2;
}

void QbmSpec::validate() const {
  if (m < 1 || n < 0) throw ValidationError("QBM needs at least one visible qubit and n >= 0 hidden");
  const int t = total();
  if (b.size() != t) throw ValidationError("QBM bias vector b must have length m+n");
  if (gamma.size() != t) throw ValidationError("QBM transverse-field vector gamma must have length m+n");
  if (w.rows() != t || w.cols() != t) throw ValidationError("QBM coupling table w must be (m+n)x(m+n)");
  if (!b.allFinite() || !gamma.allFinite() || !w.allFinite()) throw ValidationError("QBM parameters must be finite");
}

bool QbmSpec::is_cqlvm() const {
  for (int i = 0; i < m; ++i)
    if (gamma(i) != 0.0) return false;
  return true;
}

RealVector QbmSpec::theta() const {
  const int t = total();
  RealVector th(static_cast<Index>(num_params()));
  Index r = 0;
  for (int i = 0; i < t; ++i) th(r++) = b(i);
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < i; ++j) th(r++) = w(i, j);
  for (int i = 0; i < t; ++i) th(r++) = gamma(i);
  return th;
}

void QbmSpec::set_theta(const RealVector& th) {
  if (static_cast<std::size_t>(th.size()) != num_params())
    throw ValidationError("parameter vector length does not match the QBM layout");
  const int t = total();
  Index r = 0;
  for (int i = 0; i < t; ++i) b(i) = th(r++);
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < i; ++j) {
      w(i, j) = th(r++);
      w(j, i) = w(i, j);
    }
  for (int i = 0; i < t; ++i) gamma(i) = th(r++);
}

ParamHamiltonian build_qbm_hamiltonian(const QbmSpec& spec) {
  spec.validate();
  const int t = spec.total();
  check_cap(t, "build_qbm_hamiltonian");
  ParamHamiltonian h;
  h.dim = Index{1} << t;
  h.terms.reserve(spec.num_params());
  std::vector<ComplexMatrix> z(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) z[static_cast<std::size_t>(i)] = pauli_matrix(t, i + 1, PauliAxis::Z);
  for (int i = 0; i < t; ++i) h.terms.push_back(hermitize(-z[static_cast<std::size_t>(i)]));
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < i; ++j) {
      // Diagonal product, so a coefficient-wise multiply is exact.
      ComplexMatrix zz = ComplexMatrix::Zero(h.dim, h.dim);
      zz.diagonal() = -z[static_cast<std::size_t>(i)].diagonal().cwiseProduct(z[static_cast<std::size_t>(j)].diagonal());
      h.terms.push_back(hermitize(std::move(zz)));
    }
  for (int i = 0; i < t; ++i) h.terms.push_back(hermitize(-pauli_matrix(t, i + 1, PauliAxis::X)));
  h.theta = spec.theta();
  return h;
}

double log_partition(const SpectralDecomposition& eig) {
  const double shift = eig.eigenvalues.maxCoeff();
  double s = 0.0;
  for (Index i = 0; i < eig.eigenvalues.size(); ++i) s += std::exp(eig.eigenvalues(i) - shift);
  return shift + std::log(s);
}

DensityOperator gibbs_state(const ParamHamiltonian& h, std::vector<Index> dims) {
  if (h.dim > (Index{1} << kExactQubitCap)) throw ValidationError("gibbs_state: dimension exceeds the exact-path cap");
  const SpectralDecomposition e = herm_eig(h.assemble());
  const double lz = log_partition(e);
  ComplexMatrix rho = e.apply([lz](double x) { return std::exp(x - lz); });
  rho /= rho.trace().real();
  return DensityOperator(std::move(dims), hermitize(std::move(rho)));
}

DensityOperator gibbs_state(const ParamHamiltonian& h) { return gibbs_state(h, std::vector<Index>{h.dim}); }

DensityOperator model_marginal(const DensityOperator& rho, int d_v) {
  if (d_v < 1 || d_v >= 63) throw ValidationError("model_marginal: visible bit count out of range");
  const Index dv = Index{1} << d_v;
  if (rho.dim() % dv != 0 || rho.dim() / dv < 2 || (rho.dim() / dv & (rho.dim() / dv - 1)) != 0) {
    std::ostringstream os;
    os << "model_marginal: dimension " << rho.dim() << " does not split as 2^" << d_v << " x 2^d_L";
    throw ValidationError(os.str());
  }
  const Index dl = rho.dim() / dv;
  return DensityOperator(std::vector<Index>{dv}, hermitize(partial_trace_last(rho.matrix(), dl)));
}

double log_likelihood(const DensityOperator& eta_v, const DensityOperator& rho_v) {
  if (eta_v.dim() != rho_v.dim()) throw ValidationError("log_likelihood: visible dimensions differ");
  const SpectralDecomposition e = herm_eig(rho_v.op());
  const double thr = rank_threshold(e.eigenvalues);
  double ll = 0.0;
  double kernel_weight = 0.0;
  for (Index i = 0; i < e.eigenvalues.size(); ++i) {
    const auto u = e.eigenvectors.col(i);
    const double p = (u.adjoint() * eta_v.matrix() * u)(0, 0).real();
    if (e.eigenvalues(i) > thr)
      ll += p * std::log(e.eigenvalues(i));
    else
      kernel_weight += p;
  }
  if (kernel_weight > 1e-10) return -std::numeric_limits<double>::infinity();
  return ll;
}

int CqlvmModel::visible_spin(Index k, int m, int qubit) {
  return ((k >> (m - 1 - qubit)) & 1) ? -1 : 1;
}

CqlvmModel::CqlvmModel(const QbmSpec& spec) : spec_(spec), m_(spec.m), n_(spec.n) {
  spec.validate();
  if (!spec.is_cqlvm()) {
    std::ostringstream os;
    os << "not a CQ-LVM: a QBM is block-diagonal over visible basis states only when every visible "
          "transverse field is zero (found gamma on visible qubit";
    for (int i = 0; i < spec.m; ++i)
      if (spec.gamma(i) != 0.0) os << " " << i + 1;
    os << ")";
    throw ValidationError(os.str());
  }
  if (n_ > kExactQubitCap) throw ValidationError("CQ-LVM hidden block exceeds the exact-path cap");
  if (m_ > 40) throw ValidationError("CQ-LVM visible register too large to enumerate blocks");

  const Index dl = block_dim();
  ops_.push_back(identity_matrix(dl));
  for (int j = 1; j <= n_; ++j) ops_.push_back(pauli_matrix(n_, j, PauliAxis::Z));
  for (int j = 1; j <= n_; ++j) ops_.push_back(pauli_matrix(n_, j, PauliAxis::X));
  std::map<std::pair<int, int>, int> zz_index;
  auto zz = [&](int a, int b) {
    auto key = std::make_pair(a, b);
    auto it = zz_index.find(key);
    if (it != zz_index.end()) return it->second;
    ComplexMatrix prod = ComplexMatrix::Zero(dl, dl);
    prod.diagonal() = ops_[static_cast<std::size_t>(a)].diagonal().cwiseProduct(ops_[static_cast<std::size_t>(b)].diagonal());
    ops_.push_back(std::move(prod));
    const int idx = static_cast<int>(ops_.size()) - 1;
    zz_index.emplace(key, idx);
    return idx;
  };
  const int t = spec.total();
  auto zop = [&](int unit) { return unit - m_ + 1; };  // hidden unit -> sigma_z op index
  for (int i = 0; i < t; ++i) {
    if (i < m_)
      terms_.push_back({0, {i}});
    else
      terms_.push_back({zop(i), {}});
  }
  for (int i = 1; i < t; ++i)
    for (int j = 0; j < i; ++j) {
      const bool vi = i < m_, vj = j < m_;
      if (vi && vj)
        terms_.push_back({0, {i, j}});
      else if (vj)
        terms_.push_back({zop(i), {j}});
      else
        terms_.push_back({zz(zop(i), zop(j)), {}});
    }
  for (int i = 0; i < t; ++i) {
    if (i < m_)
      terms_.push_back({-1, {}});
    else
      terms_.push_back({n_ + (i - m_) + 1, {}});
  }
  theta_ = spec.theta();
}

void CqlvmModel::set_theta(const RealVector& th) {
  if (static_cast<std::size_t>(th.size()) != terms_.size())
    throw ValidationError("parameter vector length does not match the CQ-LVM layout");
  theta_ = th;
  spec_.set_theta(th);
}

double CqlvmModel::term_coefficient(std::size_t r, Index k) const {
  const Term& t = terms_[r];
  if (t.op < 0) return 0.0;
  double c = -1.0;
  for (int q : t.visible) c *= visible_spin(k, m_, q);
  return c;
}

ComplexMatrix CqlvmModel::block(Index k, const RealVector& th) const {
  const Index dl = block_dim();
  ComplexMatrix h = ComplexMatrix::Zero(dl, dl);
  for (std::size_t r = 0; r < terms_.size(); ++r) {
    const double c = term_coefficient(r, k);
    const double v = th(static_cast<Index>(r));
    if (c == 0.0 || v == 0.0) continue;
    h += (c * v) * ops_[static_cast<std::size_t>(terms_[r].op)];
  }
  return h;
}

ComplexMatrix CqlvmModel::assemble_dense() const {
  check_cap(m_ + n_, "dense CQ-LVM assembly");
  std::vector<ComplexMatrix> blocks;
  blocks.reserve(static_cast<std::size_t>(num_blocks()));
  for (Index k = 0; k < num_blocks(); ++k) blocks.push_back(block(k));
  return direct_sum(blocks);
}

CqlvmModel cqlvm_blocks(const QbmSpec& spec) { return CqlvmModel(spec); }

nlohmann::json to_json(const QbmSpec& spec) {
  nlohmann::json j;
  j["format"] = "doem.qbm_spec";
  j["version"] = 1;
  j["m"] = spec.m;
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  j["b"] = std::vector<double>(spec.b.data(), spec.b.data() + spec.b.size());
  std::vector<std::vector<double>> w(static_cast<std::size_t>(spec.w.rows()));
  for (Index i = 0; i < spec.w.rows(); ++i)
    for (Index k = 0; k < spec.w.cols(); ++k) w[static_cast<std::size_t>(i)].push_back(spec.w(i, k));
  j["w"] = w;
  j["gamma"] = std::vector<double>(spec.gamma.data(), spec.gamma.data() + spec.gamma.size());
  return j;
}

QbmSpec qbm_spec_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "doem.qbm_spec")
      throw ValidationError("model spec: missing or wrong \"format\" (expected doem.qbm_spec)");
    if (j.at("version").get<int>() != 1) throw ValidationError("model spec: unsupported version");
    QbmSpec s = QbmSpec::zeros(j.at("m").get<int>(), j.at("n").get<int>());
    s.seed = j.value("seed", std::uint64_t{0});
    const auto b = j.at("b").get<std::vector<double>>();
    const auto g = j.at("gamma").get<std::vector<double>>();
    const auto w = j.at("w").get<std::vector<std::vector<double>>>();
    const std::size_t t = static_cast<std::size_t>(s.total());
    if (b.size() != t) throw ValidationError("model spec: \"b\" must have m+n entries");
    if (g.size() != t) throw ValidationError("model spec: \"gamma\" must have m+n entries");
    if (w.size() != t) throw ValidationError("model spec: \"w\" must have m+n rows");
    for (std::size_t i = 0; i < t; ++i) {
      s.b(static_cast<Index>(i)) = b[i];
      s.gamma(static_cast<Index>(i)) = g[i];
      if (w[i].size() != t) throw ValidationError("model spec: \"w\" must be square");
      for (std::size_t k = 0; k < t; ++k) s.w(static_cast<Index>(i), static_cast<Index>(k)) = w[i][k];
    }
    // Only the lower triangle is authoritative.
    for (Index i = 1; i < s.w.rows(); ++i)
      for (Index k = 0; k < i; ++k) s.w(k, i) = s.w(i, k);
    s.w.diagonal().setZero();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model spec: ") + e.what());
  }
}

}  // namespace doem
