#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "doem/operator_core.hpp"

namespace doem {

enum class PauliAxis { Z, X };

// Pauli operator on `site` (1-based) of `total_qubits`. Qubit 1 is the
// most significant tensor factor.
HermitianOperator pauli_term(int total_qubits, int site, PauliAxis axis);

struct ParamHamiltonian {
  Index dim = 0;
  std::vector<HermitianOperator> terms;
  RealVector theta;

  HermitianOperator assemble() const { return assemble(theta); }
  HermitianOperator assemble(const RealVector& th) const;
};

// Transverse-field Ising model on m visible and n hidden qubits, visible
// first. w is stored as a full symmetric (m+n)x(m+n) table; only i>j is read.
//
// Parameter vector layout (shared by every trainer):
//   [b_0..b_{N-1}, w_{1,0}, w_{2,0}, w_{2,1}, ..., w_{N-1,N-2}, gamma_0..gamma_{N-1}]
struct QbmSpec {
  int m = 0;
  int n = 0;
  RealVector b;
  RealMatrix w;
  RealVector gamma;
  std::uint64_t seed = 0;

  static QbmSpec zeros(int m, int n);
  // b, w uniform in [-scale, scale]; gamma on hidden qubits uniform in
  // [0, gamma_scale], visible gamma zero.
  static QbmSpec random(int m, int n, std::uint64_t seed, double scale, double gamma_scale);

  int total() const { return m + n; }
  std::size_t num_params() const;
  void validate() const;
  bool is_cqlvm() const;

  RealVector theta() const;
  void set_theta(const RealVector& th);
};

ParamHamiltonian build_qbm_hamiltonian(const QbmSpec& spec);

// exp(H(theta)) / Tr exp(H(theta)) on dims {2^m, 2^n} (or {2^m} if n == 0).
DensityOperator gibbs_state(const ParamHamiltonian& h, std::vector<Index> dims);
DensityOperator gibbs_state(const ParamHamiltonian& h);
// log Tr exp(H), max-shifted.
double log_partition(const SpectralDecomposition& eig);

DensityOperator model_marginal(const DensityOperator& rho, int d_v);

// Tr(eta_V log rho_V); -infinity when eta_V puts weight on ker(rho_V).
double log_likelihood(const DensityOperator& eta_v, const DensityOperator& rho_v);

// Block-diagonal CQ-LVM view of a QbmSpec: one 2^n x 2^n block per visible
// basis state. The visible spin for qubit i in block k is
// s_i(k) = +1 when bit i of k (big-endian) is 0, -1 otherwise, matching the
// sigma_z eigenvalue of the basis state.
class CqlvmModel {
 public:
  struct Term {
    int op = -1;               // index into hidden_operators(); -1 for a term with no block content
    std::vector<int> visible;  // visible qubits whose spins multiply the coefficient
  };

  explicit CqlvmModel(const QbmSpec& spec);

  int visible_bits() const { return m_; }
  int hidden_bits() const { return n_; }
  Index num_blocks() const { return Index{1} << m_; }
  Index block_dim() const { return Index{1} << n_; }
  std::size_t num_params() const { return terms_.size(); }

  const RealVector& theta() const { return theta_; }
  void set_theta(const RealVector& th);
  const QbmSpec& spec() const { return spec_; }

  // Block k of H(theta) on the hidden space.
  ComplexMatrix block(Index k) const { return block(k, theta_); }
  ComplexMatrix block(Index k, const RealVector& th) const;

  const Term& term(std::size_t r) const { return terms_[r]; }
  // Coefficient of hidden_operators()[term(r).op] inside block k.
  double term_coefficient(std::size_t r, Index k) const;
  const std::vector<ComplexMatrix>& hidden_operators() const { return ops_; }

  // Dense direct sum; refused above the qubit cap.
  ComplexMatrix assemble_dense() const;

  static int visible_spin(Index k, int m, int qubit);

 private:
  QbmSpec spec_;
  int m_ = 0;
  int n_ = 0;
  RealVector theta_;
  std::vector<Term> terms_;
  std::vector<ComplexMatrix> ops_;
};

// Throws ValidationError if the spec carries a transverse field on a visible qubit.
CqlvmModel cqlvm_blocks(const QbmSpec& spec);

nlohmann::json to_json(const QbmSpec& spec);
QbmSpec qbm_spec_from_json(const nlohmann::json& j);

}  // namespace doem
