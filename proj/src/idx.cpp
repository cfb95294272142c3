#include <zlib.h>

#include <sstream>

#include "doem/data_io.hpp"
#include "doem/errors.hpp"

namespace doem {

namespace {

constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 36;

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> in, const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed for " + name);
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      if (rc == Z_BUF_ERROR) throw IdxError(IdxError::Kind::Truncated, zs.total_in, "gzip stream truncated in " + name);
      throw IoError("corrupt gzip stream in " + name);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (out.size() > kMaxPayload) {
      inflateEnd(&zs);
      throw IdxError(IdxError::Kind::DimensionOverflow, 0, "decompressed IDX exceeds size limit: " + name);
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

}  // namespace

Index IdxTensor::item_size() const {
  Index s = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) s *= dims[i];
  return s;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    std::ostringstream os;
    os << "IDX header truncated: expected 4 magic bytes, got " << bytes.size();
    throw IdxError(IdxError::Kind::Truncated, bytes.size(), os.str());
  }
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000801 && magic != 0x00000803) {
    std::size_t off = 0;
    const std::uint8_t want3 = bytes[3] == 1 ? 1 : 3;
    const std::uint8_t want[4] = {0, 0, 0x08, want3};
    while (off < 4 && bytes[off] == want[off]) ++off;
    std::ostringstream os;
    os << "bad IDX magic 0x" << std::hex << magic << std::dec << " (mismatch at byte offset " << off
       << "; expected 0x00000801 or 0x00000803)";
    throw IdxError(IdxError::Kind::BadMagic, off, os.str());
  }
  const std::size_t ndims = magic & 0xff;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    std::ostringstream os;
    os << "IDX header truncated: expected " << header << " bytes, got " << bytes.size();
    throw IdxError(IdxError::Kind::Truncated, bytes.size(), os.str());
  }
  IdxTensor t;
  t.magic = magic;
  std::uint64_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::uint32_t v = be32(bytes, 4 + 4 * d);
    t.dims.push_back(v);
    if (v != 0 && total > kMaxPayload / v) {
      std::ostringstream os;
      os << "IDX dimension overflow at byte offset " << 4 + 4 * d << ": payload exceeds " << kMaxPayload << " bytes";
      throw IdxError(IdxError::Kind::DimensionOverflow, 4 + 4 * d, os.str());
    }
    total *= v;
  }
  if (bytes.size() - header < total) {
    std::ostringstream os;
    os << "IDX payload truncated: expected " << total << " bytes, got " << bytes.size() - header;
    throw IdxError(IdxError::Kind::Truncated, bytes.size(), os.str());
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                bytes.begin() + static_cast<std::ptrdiff_t>(header + total));
  return t;
}

IdxTensor read_idx(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("input file not found: " + path.string());
  std::vector<std::uint8_t> raw = read_file_bytes(path);
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) raw = gunzip(raw, path.string());
  return parse_idx(raw);
}

void write_idx(const std::filesystem::path& path, const IdxTensor& t) {
  if (t.magic != 0x00000801 && t.magic != 0x00000803) throw ValidationError("write_idx: unsupported magic");
  if (t.dims.size() != (t.magic & 0xff)) throw ValidationError("write_idx: dims do not match magic");
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(t.magic);
  for (auto d : t.dims) put(d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  write_file_bytes(path, out);
}

}  // namespace doem
