#include "report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sigma/dataset_io.hpp"
#include "sigma/error.hpp"

namespace sigma::cli {

Report::Report(std::string command, std::string config_hash, std::uint64_t seed)
    : command_(std::move(command)), config_hash_(std::move(config_hash)), seed_(seed) {}

void Report::metric(const std::string& name, double value) { metrics_.emplace_back(name, value); }

void Report::flag(const std::string& name, bool value) { flags_.emplace_back(name, value); }

void Report::vector(const std::string& name, std::span<const double> values) {
  vectors_.emplace_back(name, Tensor1(values.begin(), values.end()));
}

void Report::write(const std::filesystem::path& dir) const {
  for (const auto& [name, v] : metrics_)
    if (!std::isfinite(v)) throw NumericError("metric '" + name + "' is not finite");
  for (const auto& [name, v] : vectors_)
    if (!all_finite(v)) throw NumericError("vector '" + name + "' has non-finite entries");

  nlohmann::ordered_json j;
  j["command"] = command_;
  j["version"] = SIGMA_VERSION;
  j["config_hash"] = config_hash_;
  j["seed"] = seed_;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [name, v] : metrics_) j["metrics"][name] = v;
  j["flags"] = nlohmann::ordered_json::object();
  for (const auto& [name, v] : flags_) j["flags"][name] = v;
  j["vectors"] = nlohmann::ordered_json::object();
  for (const auto& [name, v] : vectors_) j["vectors"][name] = v;
  write_text(dir / "report.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "name,index,value\n";
  for (const auto& [name, v] : metrics_) csv << name << ",," << format_double(v) << "\n";
  for (const auto& [name, v] : flags_) csv << name << ",," << (v ? 1 : 0) << "\n";
  for (const auto& [name, v] : vectors_)
    for (std::size_t i = 0; i < v.size(); ++i) csv << name << "," << i << "," << format_double(v[i]) << "\n";
  write_text(dir / "report.csv", csv.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor2& m) {
  std::ostringstream s;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) s << (c ? "," : "") << format_double(m(r, c));
    s << "\n";
  }
  write_text(path, s.str());
}

}  // namespace sigma::cli
