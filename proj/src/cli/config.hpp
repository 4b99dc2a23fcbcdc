#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigma/error.hpp"
#include "sigma/hyperprior.hpp"
#include "sigma/priors.hpp"

namespace sigma::cli {

/// Read access to one JSON object that remembers which keys were consumed,
/// so that `finish()` can reject anything unrecognized.
class Section {
 public:
  Section(nlohmann::json value, std::string path);

  /// True when the key is present and not null. Marks the key as known.
  bool has(const std::string& key);
  /// Every entry, all marked as known.
  std::vector<std::pair<std::string, nlohmann::json>> items();
  const nlohmann::json& raw(const std::string& key);
  Section child(const std::string& key);

  template <class T>
  T get(const std::string& key) {
    const auto& v = raw(key);
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  /// Throws ConfigError naming the first unknown key.
  void finish() const;
  std::string where(const std::string& key) const;

 private:
  nlohmann::json value_;
  std::string path_;
  std::set<std::string> used_;
};

/// A parsed configuration file plus command-line overrides.
struct RunContext {
  Section root;
  std::filesystem::path config_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::filesystem::path resolve(const std::string& p) const;
};

RunContext load_run_context(const std::filesystem::path& config, const std::filesystem::path& out,
                            std::optional<std::uint64_t> seed_override);

/// A dependent prior together with its client partition.
struct Problem {
  PriorSpec prior;
  ClientPartition partition;
  std::optional<Grid1D> grid;
  std::optional<AdjacencyGraph> graph;
};

Problem parse_problem(Section s, const RunContext& ctx);
Hyperprior parse_hyperprior(Section s);
nlohmann::json hyperprior_to_json(const Hyperprior& h);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace sigma::cli
