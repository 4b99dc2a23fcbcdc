#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigma/tensor.hpp"

namespace sigma::cli {

/// Named scalar metrics and per-coordinate vectors of one command run.
class Report {
 public:
  Report(std::string command, std::string config_hash, std::uint64_t seed);

  void metric(const std::string& name, double value);
  void flag(const std::string& name, bool value);
  void vector(const std::string& name, std::span<const double> values);

  /// Writes report.json and report.csv into `dir`. Throws NumericError if a
  /// metric or vector entry is not finite.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  std::string config_hash_;
  std::uint64_t seed_;
  std::vector<std::pair<std::string, double>> metrics_;
  std::vector<std::pair<std::string, bool>> flags_;
  std::vector<std::pair<std::string, Tensor1>> vectors_;
};

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Comma-separated matrix, one row per line, no header.
void write_matrix_csv(const std::filesystem::path& path, const Tensor2& m);

}  // namespace sigma::cli
