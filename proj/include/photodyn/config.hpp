#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "photodyn/model.hpp"
#include "photodyn/protocols.hpp"

namespace photodyn {

struct Diagnostic {
  int line = 0;  // 1-based; 0 when no position applies
  std::string message;
};

/// Invalid configuration. what() lists every diagnostic as `source:line: message`.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, std::vector<Diagnostic> diagnostics);
  [[nodiscard]] const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }
  [[nodiscard]] const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::vector<Diagnostic> diagnostics_;
};

/// One analysis stage and its scalar, string and list parameters.
struct StageSpec {
  std::string name;
  std::map<std::string, double> numbers;
  std::map<std::string, std::string> strings;
  std::map<std::string, std::vector<double>> lists;
  int line = 0;

  [[nodiscard]] double number(const std::string& key, double fallback) const;
  [[nodiscard]] std::string string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] std::optional<std::vector<double>> list(const std::string& key) const;
};

/// Stage names in canonical order.
const std::vector<std::string>& stage_names();
/// Stages run when neither the config nor the command line names any.
std::vector<std::string> default_stages(const Protocol& protocol);

struct RunConfig {
  std::uint64_t seed = 0;
  EmitterModel model;
  DetectionModel detection;
  Protocol protocol;
  std::vector<StageSpec> analysis;
  std::optional<std::filesystem::path> output_dir;
  std::string text;  // the raw document, hashed into the run manifest

  /// Parameters of a stage as configured, or an empty spec of that name.
  [[nodiscard]] StageSpec stage(const std::string& name) const;
};

/// Parses a TOML document. Unknown keys, wrong types and invalid values are
/// all reported with their line; throws ConfigError.
RunConfig parse_config(std::string_view text, std::string_view source_name = "config");

/// Reads and parses a file; throws io::IoError when it cannot be read.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace photodyn
