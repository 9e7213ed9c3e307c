#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkgd/distill.hpp"

namespace tkgd {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value configuration. Resolution order: defaults, then file,
/// then explicit overrides (command-line flags).
class RunConfig {
public:
  RunConfig();

  /// Lines `key=value`; '#' starts a comment. Unknown keys are an error.
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);
  bool explicitly_set(const std::string& key) const { return explicit_.contains(key); }

  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;

  /// Resolved `key=value` lines in key order.
  std::string dump() const;
  /// fnv1a64 of dump(), hex.
  std::string hash() const;

  DistillConfig distill() const;
  TrainOptions train_options() const;
  ParseOptions parse_options() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;

private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

inline constexpr std::size_t kMaxEpochs = 10000;

}  // namespace tkgd
