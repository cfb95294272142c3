#include "config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>

#include "doem/data_io.hpp"
#include "doem/errors.hpp"
#include "doem/version.hpp"

namespace doem::cli {

namespace {

// Keys that never influence primary outputs.
const char* const kVolatileKeys[] = {"out", "threads", "config_hash", "code_version", "with_time"};

}  // namespace

json Bindings::resolve(const std::string& command, const std::string& config_path) const {
  json cfg = defaults_;
  if (!config_path.empty()) {
    json file = load_json_file(config_path);
    if (!file.is_object()) throw ValidationError("config " + config_path + " is not a JSON object");
    if (file.contains("command") && file["command"] != command)
      throw ValidationError("config " + config_path + " was written by '" + file["command"].get<std::string>() +
                            "', not '" + command + "'");
    for (auto& [k, v] : file.items())
      if (cfg.contains(k)) cfg[k] = v;
  }
  for (auto& it : items_)
    if (it.first->count() > 0) it.second(cfg);
  cfg["command"] = command;
  return cfg;
}

json load_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::filesystem::path prepare_output(json& cfg, const std::string& dir_name) {
  std::string out = cfg.value("out", std::string());
  if (out.empty()) {
    const char* root = std::getenv("DOEM_OUTPUT_ROOT");
    out = (std::filesystem::path(root && *root ? root : "runs") / dir_name).string();
    cfg["out"] = out;
  }
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  cfg["code_version"] = code_version();
  cfg["config_hash"] = config_hash(cfg);
  write_text_file(std::filesystem::path(out) / "config.json", cfg.dump(2) + "\n");
  return out;
}

std::string config_hash(const json& cfg) {
  json c = cfg;
  for (const char* k : kVolatileKeys) c.erase(k);
  const std::string text = c.dump();
  const std::uint64_t h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace doem::cli
