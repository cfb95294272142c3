#include "doem/data_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "doem/errors.hpp"
#include "doem/parallel.hpp"
#include "doem/rng.hpp"
#include "doem/version.hpp"

namespace doem {

const char* to_string(Encoding e) { return e == Encoding::ZeroOne ? "zero-one" : "plus-minus"; }

Encoding encoding_from_string(const std::string& s) {
  if (s == "zero-one" || s == "01") return Encoding::ZeroOne;
  if (s == "plus-minus" || s == "pm" || s == "+-") return Encoding::PlusMinus;
  throw ValidationError("unknown encoding '" + s + "' (expected zero-one or plus-minus)");
}

Index bits_to_index(std::span<const std::uint8_t> bits) {
  if (bits.size() > 62) throw ValidationError("bit vector too long for a basis index");
  Index k = 0;
  for (std::uint8_t b : bits) k = (k << 1) | (b ? 1 : 0);
  return k;
}

std::vector<std::uint8_t> index_to_bits(Index index, int d) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((index >> (d - 1 - i)) & 1);
  return bits;
}

BinaryDataset BinaryDataset::from_bits(int d_v, std::vector<std::uint8_t> bits, Encoding enc, nlohmann::json provenance) {
  BinaryDataset ds;
  ds.d_v = d_v;
  ds.encoding = enc;
  ds.provenance = std::move(provenance);
  ds.values.resize(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw ValidationError("from_bits: entry " + std::to_string(i) + " is not a bit");
    const bool one = bits[i] != 0;
    ds.values[i] = enc == Encoding::ZeroOne ? static_cast<std::int8_t>(one) : static_cast<std::int8_t>(one ? 1 : -1);
  }
  ds.validate();
  return ds;
}

std::uint8_t BinaryDataset::bit(Index r, int c) const {
  const std::int8_t v = values[static_cast<std::size_t>(r * d_v + c)];
  return v > 0 ? 1 : 0;
}

Index BinaryDataset::basis_index(Index r) const {
  if (d_v > 62) throw ValidationError("dataset too wide for basis indices");
  Index k = 0;
  for (int c = 0; c < d_v; ++c) k = (k << 1) | bit(r, c);
  return k;
}

std::vector<std::uint8_t> BinaryDataset::bits() const {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] > 0 ? 1 : 0;
  return out;
}

void BinaryDataset::validate() const {
  if (d_v < 1) throw ValidationError("dataset: d_v must be positive");
  if (values.size() % static_cast<std::size_t>(d_v) != 0)
    throw ValidationError("dataset: value count is not a multiple of d_v");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::int8_t v = values[i];
    const bool ok = encoding == Encoding::ZeroOne ? (v == 0 || v == 1) : (v == -1 || v == 1);
    if (!ok) {
      std::ostringstream os;
      os << "dataset: entry " << i << " has value " << int(v) << ", not valid in " << to_string(encoding)
         << " encoding";
      throw ValidationError(os.str());
    }
  }
}

BinaryDataset BinaryDataset::to_encoding(Encoding enc) const {
  return from_bits(d_v, bits(), enc, provenance);
}

RealMatrix BinaryDataset::matrix(Encoding enc) const {
  RealMatrix m(rows(), d_v);
  for (Index r = 0; r < rows(); ++r)
    for (int c = 0; c < d_v; ++c) {
      const int b = bit(r, c);
      m(r, c) = enc == Encoding::ZeroOne ? b : 2.0 * b - 1.0;
    }
  return m;
}

BinaryDataset BinaryDataset::subset_rows(const std::vector<Index>& rows_wanted) const {
  BinaryDataset out;
  out.d_v = d_v;
  out.encoding = encoding;
  out.provenance = provenance;
  out.values.reserve(rows_wanted.size() * static_cast<std::size_t>(d_v));
  for (Index r : rows_wanted) {
    if (r < 0 || r >= rows()) throw ValidationError("dataset: row index out of range");
    auto first = values.begin() + static_cast<std::ptrdiff_t>(r * d_v);
    out.values.insert(out.values.end(), first, first + d_v);
  }
  return out;
}

BinaryDataset BinaryDataset::subset_columns(const std::vector<int>& cols) const {
  if (cols.empty()) throw ValidationError("dataset: empty column selection");
  BinaryDataset out;
  out.d_v = static_cast<int>(cols.size());
  out.encoding = encoding;
  out.provenance = provenance;
  out.provenance["columns"] = cols;
  out.values.reserve(static_cast<std::size_t>(rows()) * cols.size());
  for (Index r = 0; r < rows(); ++r)
    for (int c : cols) {
      if (c < 0 || c >= d_v) throw ValidationError("dataset: column index out of range");
      out.values.push_back(values[static_cast<std::size_t>(r * d_v + c)]);
    }
  return out;
}

void BernoulliMixtureSpec::validate() const {
  if (n_bits < 1 || n_bits > 62) throw ValidationError("bernoulli mixture: n_bits out of range");
  if (n_modes < 1) throw ValidationError("bernoulli mixture: need at least one mode");
  if (n_bits < 62 && static_cast<Index>(n_modes) > (Index{1} << n_bits))
    throw ValidationError("bernoulli mixture: more modes than distinct bit patterns");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("bernoulli mixture: p must lie in (0, 1)");
  if (n_samples < 0) throw ValidationError("bernoulli mixture: negative sample count");
}

RealVector bernoulli_mixture_table(int n_bits, const std::vector<Index>& modes, double p) {
  if (n_bits > 20) throw ValidationError("exact mixture table limited to 20 bits");
  if (modes.empty()) throw ValidationError("mixture table needs at least one mode");
  const Index size = Index{1} << n_bits;
  RealVector table(size);
  const double inv_m = 1.0 / static_cast<double>(modes.size());
  for (Index v = 0; v < size; ++v) {
    double s = 0.0;
    for (Index mode : modes) {
      const int d = __builtin_popcountll(static_cast<unsigned long long>(v ^ mode));
      s += std::pow(p, n_bits - d) * std::pow(1.0 - p, d);
    }
    table(v) = inv_m * s;
  }
  return table;
}

BernoulliMixture gen_bernoulli_mixture(const BernoulliMixtureSpec& spec) {
  spec.validate();
  BernoulliMixture out;
  RngStream mode_rng = RngStream::derive(spec.seed, {0x6d6f646573ULL});
  const Index space = Index{1} << spec.n_bits;
  // Without replacement: rejection on a sorted set keeps this cheap for any n_bits.
  std::vector<Index> chosen;
  while (static_cast<int>(chosen.size()) < spec.n_modes) {
    const Index cand = static_cast<Index>(mode_rng.below(static_cast<std::uint64_t>(space)));
    if (std::find(chosen.begin(), chosen.end(), cand) == chosen.end()) chosen.push_back(cand);
  }
  out.modes = chosen;

  const int n = spec.n_bits;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(spec.n_samples) * static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(spec.n_samples), [&](std::size_t row) {
    RngStream rng = RngStream::derive(spec.seed, {0x726f77ULL, row});
    const Index mode = out.modes[rng.below(out.modes.size())];
    for (int c = 0; c < n; ++c) {
      std::uint8_t b = static_cast<std::uint8_t>((mode >> (n - 1 - c)) & 1);
      if (rng.uniform() >= spec.p) b ^= 1;
      bits[row * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)] = b;
    }
  });
  nlohmann::json prov;
  prov["generator"] = "bernoulli_mixture";
  prov["n_bits"] = spec.n_bits;
  prov["n_modes"] = spec.n_modes;
  prov["p"] = spec.p;
  prov["n_samples"] = spec.n_samples;
  prov["seed"] = spec.seed;
  prov["modes"] = out.modes;
  out.dataset = BinaryDataset::from_bits(n, std::move(bits), Encoding::ZeroOne, prov);
  if (spec.n_bits <= 20) out.table = bernoulli_mixture_table(spec.n_bits, out.modes, spec.p);
  return out;
}

namespace {

void check_images(const IdxTensor& t) {
  if (t.dims.size() != 3) throw ValidationError("expected an image tensor of shape (n, height, width)");
  if (t.data.size() != static_cast<std::size_t>(t.count() * t.item_size()))
    throw ValidationError("image tensor payload does not match its shape");
}

IdxTensor image_tensor(std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  IdxTensor t;
  t.magic = 0x00000803;
  t.dims = {n, h, w};
  t.data.assign(static_cast<std::size_t>(n) * h * w, 0);
  return t;
}

}  // namespace

BinaryDataset binarize_1bit(const IdxTensor& images, int threshold) {
  check_images(images);
  std::vector<std::uint8_t> bits(images.data.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = images.data[i] >= threshold ? 1 : 0;
  nlohmann::json prov;
  prov["transform"] = "binarize_1bit";
  prov["threshold"] = threshold;
  prov["shape"] = images.dims;
  return BinaryDataset::from_bits(static_cast<int>(images.item_size()), std::move(bits), Encoding::ZeroOne, prov);
}

BinaryDataset encode_8bit_planes(const IdxTensor& images) {
  check_images(images);
  std::vector<std::uint8_t> bits(images.data.size() * 8);
  for (std::size_t i = 0; i < images.data.size(); ++i)
    for (int k = 0; k < 8; ++k) bits[8 * i + static_cast<std::size_t>(k)] = (images.data[i] >> (7 - k)) & 1;
  nlohmann::json prov;
  prov["transform"] = "encode_8bit_planes";
  prov["shape"] = images.dims;
  return BinaryDataset::from_bits(static_cast<int>(images.item_size() * 8), std::move(bits), Encoding::ZeroOne, prov);
}

IdxTensor decode_8bit_planes(const BinaryDataset& ds, std::uint32_t height, std::uint32_t width) {
  if (static_cast<Index>(ds.d_v) != static_cast<Index>(height) * width * 8)
    throw ValidationError("decode_8bit_planes: d_v must equal 8 * height * width");
  IdxTensor t = image_tensor(static_cast<std::uint32_t>(ds.rows()), height, width);
  for (Index r = 0; r < ds.rows(); ++r)
    for (Index p = 0; p < static_cast<Index>(height) * width; ++p) {
      std::uint8_t v = 0;
      for (int k = 0; k < 8; ++k) v = static_cast<std::uint8_t>((v << 1) | ds.bit(r, static_cast<int>(8 * p + k)));
      t.data[static_cast<std::size_t>(r * height * width + p)] = v;
    }
  return t;
}

namespace {

// Integer block mean, halves rounded up.
std::uint8_t block_mean(std::uint32_t sum, std::uint32_t count) {
  return static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
}

}  // namespace

IdxTensor downscale(const IdxTensor& images, int factor) {
  check_images(images);
  const std::uint32_t h = images.dims[1], w = images.dims[2];
  if (factor < 1 || h % static_cast<std::uint32_t>(factor) != 0 || w % static_cast<std::uint32_t>(factor) != 0) {
    std::ostringstream os;
    os << "downscale factor " << factor << " must divide the image sides " << h << "x" << w;
    throw ValidationError(os.str());
  }
  const std::uint32_t f = static_cast<std::uint32_t>(factor);
  IdxTensor out = image_tensor(images.dims[0], h / f, w / f);
  for (std::uint32_t n = 0; n < images.dims[0]; ++n)
    for (std::uint32_t i = 0; i < h / f; ++i)
      for (std::uint32_t j = 0; j < w / f; ++j) {
        std::uint32_t s = 0;
        for (std::uint32_t a = 0; a < f; ++a)
          for (std::uint32_t b = 0; b < f; ++b)
            s += images.data[static_cast<std::size_t>(n) * h * w + (i * f + a) * w + (j * f + b)];
        out.data[static_cast<std::size_t>(n) * (h / f) * (w / f) + i * (w / f) + j] = block_mean(s, f * f);
      }
  return out;
}

IdxTensor downscale_28_to_8(const IdxTensor& images) {
  check_images(images);
  if (images.dims[1] != 28 || images.dims[2] != 28) throw ValidationError("downscale_28_to_8 needs 28x28 images");
  IdxTensor padded = image_tensor(images.dims[0], 32, 32);
  for (std::uint32_t n = 0; n < images.dims[0]; ++n)
    for (std::uint32_t i = 0; i < 28; ++i)
      for (std::uint32_t j = 0; j < 28; ++j)
        padded.data[static_cast<std::size_t>(n) * 1024 + (i + 2) * 32 + (j + 2)] =
            images.data[static_cast<std::size_t>(n) * 784 + i * 28 + j];
  return downscale(padded, 4);
}

VisibleDistribution EmpiricalTable::distribution() const {
  VisibleDistribution d;
  d.d_v = d_v;
  d.index = index;
  d.prob.reserve(counts.size());
  for (std::uint64_t c : counts) d.prob.push_back(static_cast<double>(c) / static_cast<double>(total));
  return d;
}

EmpiricalTable empirical_table(const BinaryDataset& ds) {
  ds.validate();
  if (ds.rows() == 0) throw ValidationError("empirical table of an empty dataset");
  if (ds.d_v > 62) throw ValidationError("empirical table limited to 62 visible bits");
  std::map<Index, std::uint64_t> counts;
  for (Index r = 0; r < ds.rows(); ++r) ++counts[ds.basis_index(r)];
  EmpiricalTable t;
  t.d_v = ds.d_v;
  t.total = static_cast<std::uint64_t>(ds.rows());
  for (const auto& [k, c] : counts) {
    t.index.push_back(k);
    t.counts.push_back(c);
  }
  return t;
}

DensityOperator empirical_density(const BinaryDataset& ds) {
  if (ds.d_v > kExactQubitCap) {
    std::ostringstream os;
    os << "dense empirical density refused: d_v = " << ds.d_v << " exceeds the cap of " << kExactQubitCap;
    throw ValidationError(os.str());
  }
  return empirical_table(ds).distribution().density();
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

namespace {

constexpr char kDatasetMagic[8] = {'D', 'O', 'E', 'M', 'D', 'S', 'E', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t& at, const char* field) {
  if (at + sizeof(T) > in.size()) throw SchemaError(field, std::string("dataset dump truncated in field '") + field + "'");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  at += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const BinaryDataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out(kDatasetMagic, kDatasetMagic + 8);
  put_le<std::uint32_t>(out, kDatasetVersion);
  put_le<std::uint32_t>(out, ds.encoding == Encoding::ZeroOne ? 0u : 1u);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ds.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ds.d_v));
  const std::size_t payload_at = out.size();
  for (std::int8_t v : ds.values) out.push_back(static_cast<std::uint8_t>(v));
  const std::uint64_t sum = fnv1a64(std::span<const std::uint8_t>(out).subspan(payload_at));
  put_le<std::uint64_t>(out, sum);
  write_file_bytes(path, out);

  nlohmann::json m;
  m["format"] = "doem.dataset";
  m["version"] = kDatasetVersion;
  m["rows"] = ds.rows();
  m["d_v"] = ds.d_v;
  m["encoding"] = to_string(ds.encoding);
  m["fnv1a64"] = sum;
  m["provenance"] = ds.provenance;
  m["code_version"] = code_version();
  const std::string text = m.dump(2) + "\n";
  auto mp = path;
  mp += ".json";
  write_file_bytes(mp, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

BinaryDataset read_dataset(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> in = read_file_bytes(path);
  if (in.size() < 8 || std::memcmp(in.data(), kDatasetMagic, 8) != 0)
    throw SchemaError("magic", "dataset dump " + path.string() + ": bad magic");
  std::size_t at = 8;
  const auto version = get_le<std::uint32_t>(in, at, "version");
  if (version != kDatasetVersion) throw SchemaError("version", "dataset dump: unsupported version");
  const auto enc = get_le<std::uint32_t>(in, at, "encoding");
  if (enc > 1) throw SchemaError("encoding", "dataset dump: unknown encoding tag");
  const auto rows = get_le<std::uint64_t>(in, at, "rows");
  const auto cols = get_le<std::uint64_t>(in, at, "d_v");
  if (cols == 0 || cols > (1u << 30) || rows > (std::uint64_t{1} << 40) / cols)
    throw SchemaError("d_v", "dataset dump: implausible shape");
  const std::size_t n = static_cast<std::size_t>(rows * cols);
  if (at + n + 8 > in.size()) throw SchemaError("values", "dataset dump truncated in field 'values'");
  BinaryDataset ds;
  ds.d_v = static_cast<int>(cols);
  ds.encoding = enc == 0 ? Encoding::ZeroOne : Encoding::PlusMinus;
  ds.values.resize(n);
  std::memcpy(ds.values.data(), in.data() + at, n);
  const std::uint64_t sum = fnv1a64(std::span<const std::uint8_t>(in).subspan(at, n));
  at += n;
  if (get_le<std::uint64_t>(in, at, "checksum") != sum) throw SchemaError("checksum", "dataset dump: checksum mismatch");
  auto mp = path;
  mp += ".json";
  if (std::filesystem::exists(mp)) {
    const auto text = read_file_bytes(mp);
    try {
      ds.provenance = nlohmann::json::parse(text.begin(), text.end()).value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("manifest", "dataset manifest " + mp.string() + " is not valid JSON");
    }
  }
  try {
    ds.validate();
  } catch (const ValidationError& e) {
    throw SchemaError("values", e.what());
  }
  return ds;
}

void write_distribution_csv(std::ostream& os, const RealVector& table) {
  os << "index,probability\n";
  char buf[48];
  for (Index i = 0; i < table.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", table(i));
    os << i << ',' << buf << '\n';
  }
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericError("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

void verify_sha256_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open checksum manifest " + manifest.string());
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string digest, name;
    ls >> digest >> name;
    if (name.empty()) throw IoError("malformed checksum manifest line: " + line);
    if (!name.empty() && name[0] == '*') name.erase(0, 1);
    const auto file = manifest.parent_path() / name;
    const std::string got = sha256_file(file);
    if (got != digest) throw IoError("sha256 mismatch for " + file.string() + ": expected " + digest + ", got " + got);
    ++checked;
  }
  if (checked == 0) throw IoError("checksum manifest " + manifest.string() + " lists no files");
}

}  // namespace doem
