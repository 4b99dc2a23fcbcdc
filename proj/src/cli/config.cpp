#include "config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sigma/graph.hpp"

namespace sigma::cli {

using nlohmann::json;

Section::Section(json value, std::string path) : value_(std::move(value)), path_(std::move(path)) {
  if (!value_.is_object()) throw ConfigError(path_ + " must be a JSON object");
}

bool Section::has(const std::string& key) {
  used_.insert(key);
  return value_.contains(key) && !value_.at(key).is_null();
}

const json& Section::raw(const std::string& key) {
  used_.insert(key);
  if (!value_.contains(key)) throw ConfigError("missing required key " + where(key));
  return value_.at(key);
}

std::vector<std::pair<std::string, json>> Section::items() {
  std::vector<std::pair<std::string, json>> out;
  for (const auto& [k, v] : value_.items()) {
    used_.insert(k);
    out.emplace_back(k, v);
  }
  return out;
}

Section Section::child(const std::string& key) { return Section(raw(key), where(key)); }

void Section::finish() const {
  for (const auto& [k, v] : value_.items())
    if (!used_.contains(k)) throw ConfigError("unknown key " + where(k));
}

std::string Section::where(const std::string& key) const { return "'" + path_ + "." + key + "'"; }

std::filesystem::path RunContext::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : config_dir / path;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunContext load_run_context(const std::filesystem::path& config, const std::filesystem::path& out,
                            std::optional<std::uint64_t> seed_override) {
  std::ifstream in(config);
  if (!in) throw IoError("cannot open config file " + config.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + config.string() + " is not valid JSON: " + e.what());
  }
  RunContext ctx{Section(j, "config"), config.parent_path(), out, 0, fnv1a_hex(j.dump())};
  if (ctx.config_dir.empty()) ctx.config_dir = ".";
  const std::uint64_t from_file = ctx.root.get_or<std::uint64_t>("seed", 0);
  ctx.seed = seed_override.value_or(from_file);
  return ctx;
}

Problem parse_problem(Section s, const RunContext& ctx) {
  const auto kind = s.get<std::string>("kind");
  if (kind == "gp") {
    auto g = s.child("grid");
    Grid1D grid = Grid1D::equidistant(g.get<std::size_t>("n"), g.get_or("lo", 0.0), g.get_or("hi", 1.0));
    g.finish();
    const double variance = s.get_or("variance", 1.0);
    if (!(variance > 0.0)) throw ConfigError(s.where("variance") + " must be positive");
    const auto bounds = s.get_or("boundaries", std::vector<double>{});
    ClientPartition part = partition_grid(grid, bounds);
    s.finish();
    return {PriorSpec{GpPrior{grid, variance}}, std::move(part), grid, std::nullopt};
  }
  if (kind == "pcar") {
    const double sigma2 = s.get_or("sigma2", 1.0);
    if (!(sigma2 > 0.0)) throw ConfigError(s.where("sigma2") + " must be positive");
    AdjacencyGraph graph;
    std::vector<std::size_t> labels;
    if (s.has("graph")) {
      if (s.has("lattice")) throw ConfigError("give either " + s.where("graph") + " or " + s.where("lattice"));
      GraphFile f = load_graph(ctx.resolve(s.get<std::string>("graph")));
      graph = std::move(f.graph);
      labels = f.labels.value_or(std::vector<std::size_t>(graph.size(), 0));
    } else {
      auto l = s.child("lattice");
      const auto rows = l.get<std::size_t>("rows"), cols = l.get<std::size_t>("cols");
      graph = lattice_graph(rows, cols);
      labels = lattice_block_labels(rows, cols, l.get_or<std::size_t>("row_blocks", 1),
                                    l.get_or<std::size_t>("col_blocks", 1));
      l.finish();
    }
    ClientPartition part = partition_graph(graph, labels);
    s.finish();
    return {PriorSpec{PcarPrior{graph, sigma2}}, std::move(part), std::nullopt, graph};
  }
  throw ConfigError(s.where("kind") + " must be \"gp\" or \"pcar\"");
}

Hyperprior parse_hyperprior(Section s) {
  const auto kind = s.get<std::string>("kind");
  Hyperprior h;
  if (kind == "uniform") {
    h = Hyperprior::uniform(s.get<double>("lo"), s.get<double>("hi"));
  } else if (kind == "logit_normal") {
    h = Hyperprior::logit_normal(s.get_or("loc", 0.0), s.get_or("scale", 2.0),
                                 s.get_or("scale_is_variance", true));
  } else {
    throw ConfigError(s.where("kind") + " must be \"uniform\" or \"logit_normal\"");
  }
  s.finish();
  h.validate();
  return h;
}

json hyperprior_to_json(const Hyperprior& h) {
  if (h.kind == Hyperprior::Kind::Uniform) return {{"kind", "uniform"}, {"lo", h.lo}, {"hi", h.hi}};
  return {{"kind", "logit_normal"},
          {"loc", h.loc},
          {"scale", h.scale},
          {"scale_is_variance", h.scale_is_variance}};
}

}  // namespace sigma::cli
