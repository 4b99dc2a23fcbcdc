#include "sigma/cli.hpp"

#include <algorithm>
#include <optional>

#include <CLI11.hpp>

#include "commands.hpp"

namespace sigma {

namespace {

int run_command(const cli::Command& cmd, const std::string& config, const std::string& out_dir,
                std::optional<std::uint64_t> seed, std::ostream& out) {
  cli::RunContext ctx = cli::load_run_context(config, out_dir, seed);
  cli::Report report(cmd.name, ctx.config_hash, ctx.seed);
  std::filesystem::create_directories(ctx.out_dir);
  cmd.run(ctx, report);
  report.write(ctx.out_dir);
  out << cmd.name << ": wrote " << (ctx.out_dir / "report.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Client-factorized approximate priors and federated variational inference"};
  app.set_version_flag("--version", std::string(SIGMA_VERSION));
  std::vector<std::string> names;
  std::string help = "one of:";
  for (const auto& c : cli::commands()) {
    names.push_back(c.name);
    help += "\n  " + c.name + "  " + c.help;
  }
  std::string command, config, out_dir = ".";
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, help)->required()->check(CLI::IsMember(names));
  app.add_option("--config", config, "JSON configuration file")->required();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "overrides the seed in the configuration");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << SIGMA_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  const auto& all = cli::commands();
  const auto it = std::find_if(all.begin(), all.end(), [&](const auto& c) { return c.name == command; });
  try {
    return run_command(*it, config, out_dir, seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace sigma
