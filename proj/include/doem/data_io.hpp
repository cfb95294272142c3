#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "doem/distribution.hpp"
#include "doem/operator_core.hpp"

namespace doem {

enum class Encoding { ZeroOne, PlusMinus };

const char* to_string(Encoding e);
Encoding encoding_from_string(const std::string& s);

// Bit vector read as a big-endian integer: bits[0] is the most significant.
// Bit 0 stands for spin -1 in the {-1,+1} encoding.
Index bits_to_index(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> index_to_bits(Index index, int d);

struct BinaryDataset {
  int d_v = 0;
  Encoding encoding = Encoding::ZeroOne;
  std::vector<std::int8_t> values;  // row-major, entries in the declared encoding
  nlohmann::json provenance = nlohmann::json::object();

  static BinaryDataset from_bits(int d_v, std::vector<std::uint8_t> bits, Encoding enc, nlohmann::json provenance);

  Index rows() const { return d_v == 0 ? 0 : static_cast<Index>(values.size()) / d_v; }
  std::uint8_t bit(Index r, int c) const;
  Index basis_index(Index r) const;
  std::vector<std::uint8_t> bits() const;

  void validate() const;
  BinaryDataset to_encoding(Encoding enc) const;
  // rows x d_v double matrix in the requested encoding.
  RealMatrix matrix(Encoding enc) const;
  BinaryDataset subset_rows(const std::vector<Index>& rows) const;
  BinaryDataset subset_columns(const std::vector<int>& cols) const;
};

struct BernoulliMixtureSpec {
  int n_bits = 8;
  int n_modes = 8;
  double p = 0.9;
  Index n_samples = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BernoulliMixture {
  BinaryDataset dataset;
  std::vector<Index> modes;
  RealVector table;  // exact P(v) over all 2^n_bits states
};

// P(v) = (1/M) sum_k p^{N - d_k(v)} (1 - p)^{d_k(v)}, d_k = Hamming distance to mode k.
RealVector bernoulli_mixture_table(int n_bits, const std::vector<Index>& modes, double p);
BernoulliMixture gen_bernoulli_mixture(const BernoulliMixtureSpec& spec);

struct IdxTensor {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  Index count() const { return dims.empty() ? 0 : dims[0]; }
  Index item_size() const;
};

// Raw or gzip (detected from the first two bytes).
IdxTensor read_idx(const std::filesystem::path& path);
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
void write_idx(const std::filesystem::path& path, const IdxTensor& t);

BinaryDataset binarize_1bit(const IdxTensor& images, int threshold = 128);
// Pixel-major, most significant bit first: unit 8*p + k is bit (7 - k) of pixel p.
BinaryDataset encode_8bit_planes(const IdxTensor& images);
IdxTensor decode_8bit_planes(const BinaryDataset& ds, std::uint32_t height, std::uint32_t width);

// Block mean with round-half-up; factor must divide both image sides.
IdxTensor downscale(const IdxTensor& images, int factor);
// 28x28 -> 8x8: zero-pad two pixels on every side to 32x32, then 4x4 block mean.
IdxTensor downscale_28_to_8(const IdxTensor& images);

struct EmpiricalTable {
  int d_v = 0;
  std::vector<Index> index;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  VisibleDistribution distribution() const;
};

EmpiricalTable empirical_table(const BinaryDataset& ds);
DensityOperator empirical_density(const BinaryDataset& ds);

// Versioned binary dump plus JSON manifest next to it (<path>.json).
void write_dataset(const std::filesystem::path& path, const BinaryDataset& ds);
BinaryDataset read_dataset(const std::filesystem::path& path);

void write_distribution_csv(std::ostream& os, const RealVector& table);

std::string sha256_file(const std::filesystem::path& path);
// Manifest lines "<hex digest>  <file name>", names relative to the manifest.
void verify_sha256_manifest(const std::filesystem::path& manifest);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace doem
