#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "sigma/priors.hpp"

namespace sigma {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Row format: a JSON header line {"n_draws", "dim", "phi_dim"} followed by
/// one comma-separated row per draw, φ values first.
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

/// A single vector in the row format (one row, phi_dim 0).
void save_vector(const std::filesystem::path& path, std::span<const double> v);
Tensor1 load_vector(const std::filesystem::path& path);

}  // namespace sigma
