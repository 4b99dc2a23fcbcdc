#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "report.hpp"

namespace sigma::cli {

struct Command {
  std::string name;
  std::string help;
  void (*run)(RunContext& ctx, Report& report);
};

const std::vector<Command>& commands();

}  // namespace sigma::cli
