#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace doem::cli {

using nlohmann::json;

// Flags of one subcommand, each tied to a key of the resolved config.
// Resolution order: built-in defaults, then a replayed --config file, then
// flags given on this command line.
class Bindings {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key, T& var,
                      const std::string& help) {
    CLI::Option* o = app->add_option(flag, var, help)->capture_default_str();
    items_.push_back({o, [key, &var](json& j) { j[key] = var; }});
    return o;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, bool& var,
                    const std::string& help) {
    CLI::Option* o = app->add_flag(flag, var, help);
    items_.push_back({o, [key, &var](json& j) { j[key] = var; }});
    return o;
  }

  // Call before parsing.
  void snapshot_defaults() {
    for (auto& it : items_) it.second(defaults_);
  }

  json resolve(const std::string& command, const std::string& config_path) const;

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> items_;
  json defaults_ = json::object();
};

json load_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Picks the output directory (flag, or $DOEM_OUTPUT_ROOT/<command>, or
// runs/<command>), creates it and writes config.json there.
std::filesystem::path prepare_output(json& cfg, const std::string& dir_name);

// Hash of everything in the config that can change the outputs.
std::string config_hash(const json& cfg);

std::string fmt_double(double x);

}  // namespace doem::cli
