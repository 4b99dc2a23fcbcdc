#include "sigma/dataset_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sigma/error.hpp"

namespace sigma {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("dataset line " + std::to_string(line) + ": cannot parse '" + std::string(s) +
                  "' as a number");
  return v;
}

void write_row(std::ostream& out, std::span<const double> a, std::span<const double> b) {
  bool first = true;
  for (auto part : {a, b})
    for (double v : part) {
      if (!first) out << ',';
      out << format_double(v);
      first = false;
    }
  out << '\n';
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
  nlohmann::ordered_json header;
  header["n_draws"] = data.size();
  header["dim"] = data.dim();
  header["phi_dim"] = data.phi_dim();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::span<const double> phi =
        data.phi_dim() ? data.phi.row(i) : std::span<const double>();
    write_row(out, phi, data.theta.row(i));
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset(out, data);
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: missing header line");
  std::size_t n = 0, dim = 0, phi_dim = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    n = h.at("n_draws").get<std::size_t>();
    dim = h.at("dim").get<std::size_t>();
    phi_dim = h.at("phi_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset: malformed header: ") + e.what());
  }
  Dataset data{Tensor2(n, phi_dim), Tensor2(n, dim)};
  const std::size_t width = dim + phi_dim;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw IoError("dataset: expected " + std::to_string(n) + " rows, found " + std::to_string(i));
    std::size_t col = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      auto end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      if (col >= width)
        throw IoError("dataset line " + std::to_string(i + 2) + ": more than " +
                      std::to_string(width) + " values");
      const double v = parse_double(std::string_view(line).substr(start, end - start), i + 2);
      if (col < phi_dim)
        data.phi(i, col) = v;
      else
        data.theta(i, col - phi_dim) = v;
      ++col;
      start = end + 1;
    }
    if (col != width)
      throw IoError("dataset line " + std::to_string(i + 2) + ": expected " +
                    std::to_string(width) + " values, found " + std::to_string(col));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

void save_vector(const std::filesystem::path& path, std::span<const double> v) {
  Dataset d{Tensor2(1, 0), Tensor2(1, v.size(), Tensor1(v.begin(), v.end()))};
  save_dataset(path, d);
}

Tensor1 load_vector(const std::filesystem::path& path) {
  const Dataset d = load_dataset(path);
  if (d.size() != 1) throw IoError(path.string() + ": expected exactly one row");
  auto r = d.theta.row(0);
  return Tensor1(r.begin(), r.end());
}

}  // namespace sigma
