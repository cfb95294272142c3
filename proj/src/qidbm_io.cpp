#include <cstring>
#include <fstream>
#include <sstream>

#include "doem/errors.hpp"
#include "doem/qidbm.hpp"
#include "doem/version.hpp"

namespace doem {

namespace {

constexpr char kCkptMagic[8] = {'D', 'O', 'E', 'M', 'C', 'K', 'P', 'T'};
constexpr char kBitsMagic[8] = {'D', 'O', 'E', 'M', 'B', 'I', 'T', 'S'};
constexpr std::uint32_t kCkptVersion = 1;
constexpr std::uint32_t kBitsVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    std::uint64_t u = 0;
    std::memcpy(&u, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void field(const std::string& name, const double* data, std::size_t count) {
    put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    raw(name.data(), name.size());
    put<std::uint64_t>(count);
    for (std::size_t i = 0; i < count; ++i) put<double>(data[i]);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, std::string file) : b_(b), file_(std::move(file)) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(b_[at_ + i]) << (8 * i);
    at_ += sizeof(T);
    T v;
    std::memcpy(&v, &u, sizeof(T));
    return v;
  }
  void need(std::size_t n, const std::string& field) {
    if (at_ + n > b_.size())
      throw SchemaError(field, file_ + ": truncated while reading field '" + field + "'");
  }
  std::vector<double> field(const std::string& expected_name, std::uint64_t expected_count) {
    const auto len = get<std::uint16_t>(expected_name.c_str());
    need(len, expected_name);
    const std::string name(reinterpret_cast<const char*>(b_.data() + at_), len);
    at_ += len;
    if (name != expected_name)
      throw SchemaError(expected_name, file_ + ": expected field '" + expected_name + "', found '" + name + "'");
    const auto count = get<std::uint64_t>(expected_name.c_str());
    if (count != expected_count) {
      std::ostringstream os;
      os << file_ << ": field '" << name << "' has " << count << " values, header implies " << expected_count;
      throw SchemaError(name, os.str());
    }
    need(count * 8, name);
    std::vector<double> out(count);
    for (auto& x : out) x = get<double>(name.c_str());
    return out;
  }
  std::size_t position() const { return at_; }

 private:
  std::span<const std::uint8_t> b_;
  std::string file_;
  std::size_t at_ = 0;
};

std::vector<double> row_major(const RealMatrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return out;
}

void fill_row_major(RealMatrix& m, const std::vector<double>& v) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = v[static_cast<std::size_t>(i * m.cols() + j)];
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const QidbmParams& p, const CheckpointMeta& meta) {
  p.validate();
  Writer w;
  w.raw(kCkptMagic, 8);
  w.put<std::uint32_t>(kCkptVersion);
  w.put<std::uint32_t>(meta.encoding == Encoding::ZeroOne ? 0u : 1u);
  w.put<std::uint32_t>(meta.kind == ModelKind::Qidbm ? 0u : 1u);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.l));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.m));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.n));
  w.put<std::uint64_t>(meta.seed);
  w.put<std::uint64_t>(meta.epoch);
  w.put<std::uint32_t>(meta.image_height);
  w.put<std::uint32_t>(meta.image_width);
  w.put<std::uint32_t>(meta.bits_per_pixel);
  w.field("b", p.b.data(), static_cast<std::size_t>(p.b.size()));
  const auto w1 = row_major(p.W1);
  w.field("W1", w1.data(), w1.size());
  const auto w2 = row_major(p.W2);
  w.field("W2", w2.data(), w2.size());
  w.field("gamma", p.gamma.data(), static_cast<std::size_t>(p.gamma.size()));
  const std::uint64_t sum = fnv1a64(w.buf);
  w.put<std::uint64_t>(sum);
  write_file_bytes(path, w.buf);

  nlohmann::json m;
  m["format"] = "doem.qidbm_checkpoint";
  m["version"] = kCkptVersion;
  m["dims"] = {{"l", p.l}, {"m", p.m}, {"n", p.n}};
  m["encoding"] = to_string(meta.encoding);
  m["kind"] = to_string(meta.kind);
  m["seed"] = meta.seed;
  m["epoch"] = meta.epoch;
  m["config_hash"] = meta.config_hash;
  m["image"] = {{"height", meta.image_height}, {"width", meta.image_width}, {"bits_per_pixel", meta.bits_per_pixel}};
  m["fnv1a64"] = sum;
  m["code_version"] = code_version();
  auto mp = path;
  mp += ".json";
  write_text(mp, m.dump(2) + "\n");
}

QidbmParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  const std::string file = path.string();
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
    throw SchemaError("magic", file + ": not a checkpoint (bad magic)");
  if (bytes.size() < 16) throw SchemaError("checksum", file + ": truncated checkpoint");
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
  Reader r(bytes, file);
  std::vector<std::uint8_t> magic(8);
  for (auto& c : magic) c = r.get<std::uint8_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCkptVersion) throw SchemaError("version", file + ": unsupported checkpoint version");
  const auto enc = r.get<std::uint32_t>("encoding");
  if (enc > 1) throw SchemaError("encoding", file + ": unknown encoding tag");
  const auto kind = r.get<std::uint32_t>("kind");
  if (kind > 1) throw SchemaError("kind", file + ": unknown model kind tag");
  const auto l = r.get<std::uint64_t>("l");
  const auto m = r.get<std::uint64_t>("m");
  const auto n = r.get<std::uint64_t>("n");
  const std::uint64_t cap = std::uint64_t{1} << 20;
  if (l == 0 || m == 0 || n == 0 || l > cap || m > cap || n > cap)
    throw SchemaError("dims", file + ": implausible layer sizes");
  CheckpointMeta md;
  md.encoding = enc == 0 ? Encoding::ZeroOne : Encoding::PlusMinus;
  md.kind = kind == 0 ? ModelKind::Qidbm : ModelKind::Dbm;
  md.seed = r.get<std::uint64_t>("seed");
  md.epoch = r.get<std::uint64_t>("epoch");
  md.image_height = r.get<std::uint32_t>("image_height");
  md.image_width = r.get<std::uint32_t>("image_width");
  md.bits_per_pixel = r.get<std::uint32_t>("bits_per_pixel");
  QidbmParams p = QidbmParams::zeros(static_cast<int>(l), static_cast<int>(m), static_cast<int>(n));
  const auto b = r.field("b", l + m + n);
  const auto w1 = r.field("W1", l * m);
  const auto w2 = r.field("W2", m * n);
  const auto g = r.field("gamma", m);
  if (r.position() + 8 != bytes.size()) throw SchemaError("checksum", file + ": unexpected bytes before checksum");
  const auto stored = r.get<std::uint64_t>("checksum");
  if (stored != fnv1a64(body)) throw SchemaError("checksum", file + ": checksum mismatch (file corrupted)");
  p.b = Eigen::Map<const RealVector>(b.data(), static_cast<Index>(b.size()));
  fill_row_major(p.W1, w1);
  fill_row_major(p.W2, w2);
  p.gamma = Eigen::Map<const RealVector>(g.data(), static_cast<Index>(g.size()));
  if (!p.all_finite()) throw SchemaError("b", file + ": non-finite parameter values");
  auto mp = path;
  mp += ".json";
  if (std::filesystem::exists(mp)) {
    const auto text = read_file_bytes(mp);
    try {
      const auto j = nlohmann::json::parse(text.begin(), text.end());
      md.config_hash = j.value("config_hash", std::string());
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("manifest", mp.string() + ": manifest is not valid JSON");
    }
  }
  if (meta) *meta = md;
  return p;
}

void write_bit_matrix(const std::filesystem::path& path, const std::vector<std::uint8_t>& bits, Index rows, Index cols) {
  if (static_cast<Index>(bits.size()) != rows * cols) throw ValidationError("bit matrix size does not match its shape");
  Writer w;
  w.raw(kBitsMagic, 8);
  w.put<std::uint32_t>(kBitsVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(rows));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(cols));
  w.raw(bits.data(), bits.size());
  write_file_bytes(path, w.buf);
}

std::vector<std::uint8_t> read_bit_matrix(const std::filesystem::path& path, Index* rows, Index* cols) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kBitsMagic, 8) != 0)
    throw SchemaError("magic", path.string() + ": not a bit-matrix dump");
  Reader r(bytes, path.string());
  for (int i = 0; i < 8; ++i) r.get<std::uint8_t>("magic");
  if (r.get<std::uint32_t>("version") != kBitsVersion) throw SchemaError("version", path.string() + ": bad version");
  const auto nr = r.get<std::uint64_t>("rows");
  const auto nc = r.get<std::uint64_t>("cols");
  if (nc != 0 && nr > (std::uint64_t{1} << 40) / nc) throw SchemaError("rows", path.string() + ": implausible shape");
  r.need(nr * nc, "bits");
  std::vector<std::uint8_t> out(bytes.begin() + static_cast<std::ptrdiff_t>(r.position()),
                                bytes.begin() + static_cast<std::ptrdiff_t>(r.position() + nr * nc));
  if (rows) *rows = static_cast<Index>(nr);
  if (cols) *cols = static_cast<Index>(nc);
  return out;
}

void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, Index n,
                    std::uint32_t h, std::uint32_t w, int cols) {
  if (static_cast<Index>(pixels.size()) != n * h * w) throw ValidationError("pgm grid: pixel count does not match");
  if (cols < 1 || n < 1) throw ValidationError("pgm grid: need at least one image and one column");
  const Index grid_rows = (n + cols - 1) / cols;
  const Index gw = static_cast<Index>(cols) * (w + 1) + 1;
  const Index gh = grid_rows * (h + 1) + 1;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(gw * gh), 128);
  for (Index k = 0; k < n; ++k) {
    const Index gr = k / cols, gc = k % cols;
    for (std::uint32_t i = 0; i < h; ++i)
      for (std::uint32_t j = 0; j < w; ++j)
        img[static_cast<std::size_t>((gr * (h + 1) + 1 + i) * gw + gc * (w + 1) + 1 + j)] =
            pixels[static_cast<std::size_t>(k * h * w + i * w + j)];
  }
  std::ostringstream header;
  header << "P5\n" << gw << " " << gh << "\n255\n";
  std::vector<std::uint8_t> out;
  const std::string hs = header.str();
  out.insert(out.end(), hs.begin(), hs.end());
  out.insert(out.end(), img.begin(), img.end());
  write_file_bytes(path, out);
}

}  // namespace doem
