#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "doem/data_io.hpp"
#include "doem/models.hpp"
#include "doem/operator_core.hpp"
#include "doem/rng.hpp"

namespace doem {

// Qidbm: transverse field on the middle layer, sampled in closed form.
// Dbm: every layer classical.
enum class ModelKind { Qidbm, Dbm };

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// Three-layer interleaved DBM v - h1 - h2. b holds [visible | h1 | h2].
struct QidbmParams {
  int l = 0;
  int m = 0;
  int n = 0;
  RealVector b;
  RealMatrix W1;  // l x m
  RealMatrix W2;  // m x n
  RealVector gamma;

  static QidbmParams zeros(int l, int m, int n);
  // Zero biases; W1 ~ U(-1/sqrt(l), 1/sqrt(l)), W2 ~ U(-1/sqrt(m), 1/sqrt(m)).
  static QidbmParams init(int l, int m, int n, double gamma, std::uint64_t seed);

  auto bv() { return b.head(l); }
  auto bh1() { return b.segment(l, m); }
  auto bh2() { return b.tail(n); }
  auto bv() const { return b.head(l); }
  auto bh1() const { return b.segment(l, m); }
  auto bh2() const { return b.tail(n); }

  std::size_t num_params() const;
  bool all_finite() const;
  void validate() const;
};

struct CdConfig {
  int k = 1;
  double learning_rate = 0.001;
  Index batch_size = 600;
  int epochs = 1;
  std::uint64_t seed = 0;
  Encoding encoding = Encoding::ZeroOne;
  ModelKind kind = ModelKind::Qidbm;
  bool train_gamma = false;
  double holdout_fraction = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SpinExpectation {
  double z = 0.0;
  double x = 0.0;
};

// <sigma_z>, <sigma_x> of exp(b_eff S + gamma sigma_x) / Z in closed form,
// with S the spin read by the sampler.
SpinExpectation spin_expectation(double b_eff, double gamma);

// Rows are batch entries; values in the declared encoding.
struct LayerState {
  RealMatrix values;
  RealMatrix mean;  // E[unit] in the encoding (for the quantum layer, from z)
  RealMatrix x;     // quantum layer only: <sigma_x> per unit
};

RealMatrix h1_field(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p);
RealMatrix visible_field(const RealMatrix& h1, const QidbmParams& p);
RealMatrix h2_field(const RealMatrix& h1, const QidbmParams& p);

struct QuantumExpectations {
  RealMatrix z;
  RealMatrix x;
};
QuantumExpectations quantum_layer_expectations(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p);

// P(unit = 1) and E[unit] of a classical layer from its activation.
RealMatrix classical_probability(const RealMatrix& activation, Encoding enc);
RealMatrix classical_mean(const RealMatrix& activation, Encoding enc);

// Every row r draws only from rngs[r], units in index order. keep_x = false
// leaves LayerState::x empty.
LayerState sample_quantum_layer(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p, Encoding enc,
                                std::vector<RngStream>& rngs, bool keep_x = true);
LayerState sample_classical_layer(const RealMatrix& activation, Encoding enc, std::vector<RngStream>& rngs);
// h1 given (v, h2) for either model kind.
LayerState sample_h1(const RealMatrix& v, const RealMatrix& h2, const QidbmParams& p, ModelKind kind, Encoding enc,
                     std::vector<RngStream>& rngs, bool keep_x = true);

struct CdUpdate {
  RealVector db;
  RealMatrix dW1;
  RealMatrix dW2;
  RealVector dgamma;
  double reconstruction_error = 0.0;  // mean squared bit error of E[v | h1]
};

// One CD-K step on a batch (rows in config.encoding).
CdUpdate cd_step(const RealMatrix& batch, const QidbmParams& p, const CdConfig& config, std::vector<RngStream>& rngs);
void apply_update(QidbmParams& p, const CdUpdate& u);

// Streams for one minibatch: derive(seed, {epoch, batch, row}).
std::vector<RngStream> batch_streams(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch, Index rows);

struct EpochStats {
  int epoch = 0;
  double reconstruction_error = 0.0;
  double holdout_free_energy = 0.0;  // NaN if no held-out rows
  double seconds = 0.0;
};

struct TrainReport {
  QidbmParams params;
  std::vector<EpochStats> epochs;
  std::vector<Index> train_rows;
  std::vector<Index> holdout_rows;
};

// Optional per-epoch hook, e.g. for checkpoints.
using EpochCallback = std::function<void(const QidbmParams&, const EpochStats&)>;

// Throws NumericError naming epoch and batch if parameters become non-finite.
TrainReport train(const BinaryDataset& data, QidbmParams params, const CdConfig& config,
                  const EpochCallback& on_epoch = nullptr);

// Mean free-energy proxy of the rows (mean-field h2, exact h1 sum).
double free_energy_proxy(const RealMatrix& v, const QidbmParams& p, ModelKind kind, Encoding enc);

// Gibbs chains from uniform random states; burn_in sweeps then one more
// sweep, returning the visible bits row-major (n_samples x l).
std::vector<std::uint8_t> generate(const QidbmParams& p, ModelKind kind, Encoding enc, Index n_samples, int burn_in,
                                   std::uint64_t seed);

// Exact counterpart as a QBM on (v | h1, h2): visible = v, hidden = h1 + h2.
// In {0,1} encoding classical units enter as (1 + S)/2 and the middle
// QiDBM layer as the spin S itself, where S = -sigma_z.
QbmSpec to_qbm_spec(const QidbmParams& p, ModelKind kind, Encoding enc);
// P(v) over all 2^l visible patterns, index = big-endian bits.
RealVector exact_visible_distribution(const QidbmParams& p, ModelKind kind, Encoding enc);
// -mean log P(v) over dataset rows.
double exact_nll(const QidbmParams& p, ModelKind kind, Encoding enc, const BinaryDataset& data);

// Checkpoint container; manifest is written next to it as <path>.json.
struct CheckpointMeta {
  Encoding encoding = Encoding::ZeroOne;
  ModelKind kind = ModelKind::Qidbm;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::string config_hash;
  std::uint32_t image_height = 0;  // 0 when the data is not image-shaped
  std::uint32_t image_width = 0;
  std::uint32_t bits_per_pixel = 1;
};

void save_checkpoint(const std::filesystem::path& path, const QidbmParams& p, const CheckpointMeta& meta);
QidbmParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

void write_bit_matrix(const std::filesystem::path& path, const std::vector<std::uint8_t>& bits, Index rows, Index cols);
std::vector<std::uint8_t> read_bit_matrix(const std::filesystem::path& path, Index* rows, Index* cols);
// Tiles n images (h x w, u8) into a binary PGM with `cols` images per row.
void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, Index n,
                    std::uint32_t h, std::uint32_t w, int cols);

}  // namespace doem
