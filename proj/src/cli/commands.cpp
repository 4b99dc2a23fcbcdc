#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "report.hpp"
#include "sigma/approx_model.hpp"
#include "sigma/checkpoint.hpp"
#include "sigma/conjugate.hpp"
#include "sigma/dataset_io.hpp"
#include "sigma/federated.hpp"
#include "sigma/metrics.hpp"

namespace sigma::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

inline constexpr std::uint64_t kSignalStream = 0;
inline constexpr std::uint64_t kIndexStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kSummaryStream = 7;
/// Standard normal 95% quantile.
inline constexpr double kZ95 = 1.6448536269514722;

std::pair<double, double> parse_range(Section& s, const std::string& key,
                                      std::pair<double, double> fallback) {
  if (!s.has(key)) return fallback;
  const auto v = s.get<std::vector<double>>(key);
  if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(s.where(key) + " must be [lo, hi] with lo < hi");
  return {v[0], v[1]};
}

std::size_t positive_count(Section& s, const std::string& key, std::size_t fallback) {
  const auto n = s.get_or<std::size_t>(key, fallback);
  if (n == 0) throw ConfigError(s.where(key) + " must be at least 1");
  return n;
}

double positive(Section& s, const std::string& key, double fallback) {
  const double v = s.get_or(key, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(s.where(key) + " must be positive");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& text, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw IoError(path.string() + ": cannot parse number '" + text + "'");
}

std::size_t parse_index(const std::string& text, const std::filesystem::path& path) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    try {
      return static_cast<std::size_t>(std::stoull(text));
    } catch (const std::exception&) {
    }
  }
  throw IoError(path.string() + ": cannot parse index '" + text + "'");
}

/// Two-column CSV with the given header: an index column and a value column.
std::pair<std::vector<std::size_t>, Tensor1> read_indexed_csv(const std::filesystem::path& path,
                                                              const std::string& header) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw IoError(path.string() + ": expected header '" + header + "'");
  std::vector<std::size_t> index;
  Tensor1 values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw IoError(path.string() + ": expected two columns in '" + line + "'");
    index.push_back(parse_index(cells[0], path));
    values.push_back(parse_double(cells[1], path));
  }
  return {std::move(index), std::move(values)};
}

void write_indexed_csv(const std::filesystem::path& path, const std::string& header,
                       std::span<const std::size_t> index, std::span<const double> values) {
  std::ostringstream s;
  s << header << "\n";
  for (std::size_t k = 0; k < index.size(); ++k) s << index[k] << "," << format_double(values[k]) << "\n";
  write_text(path, s.str());
}

Observations load_observations(const std::filesystem::path& path) {
  auto [index, y] = read_indexed_csv(path, "index,y");
  if (index.empty()) throw ConfigError(path.string() + " holds no observations");
  return {std::move(index), std::move(y)};
}

SigmaVaeConfig parse_vae_config(Section vae, Section training, ClientPartition partition,
                                std::uint64_t seed) {
  SigmaVaeConfig cfg;
  cfg.partition = std::move(partition);
  cfg.phi_dim = 1;
  cfg.global_latent = positive_count(vae, "global_latent", 5);
  if (vae.has("local_latent") && vae.raw("local_latent").is_array()) {
    cfg.local_latents = vae.get<std::vector<std::size_t>>("local_latent");
  } else {
    cfg.local_latents.assign(cfg.clients(), positive_count(vae, "local_latent", 5));
  }
  cfg.global_encoder_hidden = positive_count(vae, "global_encoder_hidden", 16);
  cfg.local_encoder_hidden = positive_count(vae, "local_encoder_hidden", 16);
  cfg.decoder_hidden = positive_count(vae, "decoder_hidden", 16);
  cfg.gamma = positive(vae, "gamma", 0.5);
  vae.finish();
  cfg.training.iterations = training.get_or<std::size_t>("iterations", 20000);
  cfg.training.batch_size = positive_count(training, "batch_size", 32);
  cfg.training.learning_rate = positive(training, "learning_rate", 1e-3);
  cfg.training.smoothing_window = positive_count(training, "smoothing_window", 500);
  cfg.training.seed = seed;
  training.finish();
  cfg.validate();
  return cfg;
}

void require_dim(std::size_t prior_dim, std::size_t model_dim) {
  if (prior_dim != model_dim)
    throw DimensionError("prior dimension " + std::to_string(prior_dim) +
                         " does not match checkpoint dimension " + std::to_string(model_dim));
}

double tail_mean(const std::vector<double>& v, std::size_t n) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::min(n, v.size());
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(k), v.end(), 0.0) / static_cast<double>(k);
}

ModelVariant parse_variant(Section& s) {
  const auto v = s.get<std::string>("variant");
  if (v == "deterministic") return ModelVariant::Deterministic;
  if (v == "aux") return ModelVariant::Auxiliary;
  throw ConfigError(s.where("variant") + " must be \"deterministic\" or \"aux\"");
}

std::string prefix(std::size_t k) { return "phi" + std::to_string(k) + "."; }

// sample-prior ------------------------------------------------------------

void sample_prior(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  const Problem problem = parse_problem(root.child("prior"), ctx);
  const auto range = parse_range(root, "phi_range", {0.2, 1.0});
  const auto n = positive_count(root, "n_draws", 10000);
  root.finish();
  Rng rng(ctx.seed);
  const Dataset data = generate_training_set(rng, problem.prior, range.first, range.second, n);
  save_dataset(ctx.out_dir / "dataset.csv", data);
  report.metric("n_draws", static_cast<double>(data.size()));
  report.metric("dim", static_cast<double>(data.dim()));
}

// train -------------------------------------------------------------------

void train_cmd(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  Problem problem = parse_problem(root.child("prior"), ctx);
  const auto dataset_path = ctx.resolve(root.get<std::string>("dataset"));
  const SigmaVaeConfig cfg =
      parse_vae_config(root.child("vae"), root.child("training"), problem.partition, ctx.seed);
  root.finish();
  const Dataset data = load_dataset(dataset_path);
  require_dim(data.dim(), cfg.total_dim());
  const TrainingRun run = train(cfg, data);
  save_checkpoint(run.checkpoint, ctx.out_dir / "checkpoint.json");

  std::ostringstream trace;
  trace << "iteration,elbo,smoothed_elbo\n";
  for (const auto& p : run.trace)
    trace << p.iteration << "," << format_double(p.elbo) << "," << format_double(p.smoothed_elbo) << "\n";
  write_text(ctx.out_dir / "elbo_trace.csv", trace.str());

  report.metric("iterations", static_cast<double>(run.checkpoint.metadata.iterations_completed));
  report.metric("final_smoothed_elbo", run.checkpoint.metadata.final_smoothed_elbo);
  if (run.trace.size() >= 100) {
    report.metric("smoothed_elbo_at_100", run.trace[99].smoothed_elbo);
    report.flag("elbo_improved", run.trace.back().smoothed_elbo >= run.trace[99].smoothed_elbo);
  }
}

// eval-cov ----------------------------------------------------------------

void eval_cov(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  const Problem problem = parse_problem(root.child("prior"), ctx);
  const auto ckpt_path = ctx.resolve(root.get<std::string>("checkpoint"));
  const auto phis = root.get_or("phis", std::vector<double>{0.2, 0.5, 0.8});
  const auto n = positive_count(root, "n_draws", 10000);
  const auto range = parse_range(root, "phi_range", {0.2, 1.0});
  const bool write_cov = root.get_or("write_covariances", false);
  root.finish();
  if (phis.empty()) throw ConfigError("'config.phis' must not be empty");
  if (n < 2) throw ConfigError("'config.n_draws' must be at least 2");

  SigmaPriorModel model{load_checkpoint(ckpt_path), Hyperprior::uniform(range.first, range.second), 1.0};
  model.validate();
  require_dim(problem.prior.dim(), model.config().total_dim());
  const auto& partition = model.partition();
  const auto pairs = problem.graph ? graph_boundary_pairs(*problem.graph, partition)
                                   : grid_boundary_pairs(partition);

  bool any_out_of_range = false;
  for (std::size_t k = 0; k < phis.size(); ++k) {
    const double phi = phis[k];
    const bool out_of_range = phi < range.first || phi > range.second;
    any_out_of_range = any_out_of_range || out_of_range;
    const Tensor2 truth = problem.prior.covariance(phi);

    Rng sigma_rng = Rng::derive(ctx.seed, k, 0);
    const Tensor2 sigma_cov = empirical_covariance(draws_matrix(sample_sigma_prior(model, sigma_rng, n, phi)));
    Rng true_rng = Rng::derive(ctx.seed, k, 1);
    Tensor2 true_draws(n, truth.rows());
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor1 t = problem.prior.sample(true_rng, phi);
      std::copy(t.begin(), t.end(), true_draws.row(i).begin());
    }
    const Tensor2 baseline_cov = empirical_covariance(true_draws);

    const double err = relative_frobenius_error(sigma_cov, truth);
    const double base = relative_frobenius_error(baseline_cov, truth);
    const auto p = prefix(k);
    report.metric(p + "value", phi);
    report.metric(p + "sigma_frobenius_error", err);
    report.metric(p + "baseline_frobenius_error", base);
    report.metric(p + "error_ratio", err / base);
    report.flag(p + "out_of_range", out_of_range);

    const Tensor2 sigma_corr = correlation_from_covariance(sigma_cov);
    const Tensor2 true_corr = correlation_from_covariance(truth);
    Tensor1 sc, tc;
    double worst = 0.0;
    for (const auto& [i, j] : pairs) {
      sc.push_back(sigma_corr(i, j));
      tc.push_back(true_corr(i, j));
      worst = std::max(worst, std::abs(sc.back() - tc.back()));
    }
    report.metric(p + "boundary_max_abs_diff", worst);
    report.vector(p + "boundary_sigma_corr", sc);
    report.vector(p + "boundary_kernel_corr", tc);
    if (write_cov) {
      write_matrix_csv(ctx.out_dir / ("cov_" + p + "sigma.csv"), sigma_cov);
      write_matrix_csv(ctx.out_dir / ("cov_" + p + "true.csv"), truth);
    }
  }
  report.flag("out_of_range", any_out_of_range);
}

// make-data ---------------------------------------------------------------

void make_data(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  const Problem problem = parse_problem(root.child("prior"), ctx);
  const auto phi = root.get<double>("phi");
  const auto signal = root.get_or<std::string>("signal", "prior");
  const double noise_sd = root.get_or("noise_sd", 0.5);
  if (!(noise_sd >= 0.0)) throw ConfigError("'config.noise_sd' must be non-negative");
  auto observe = root.child("observe");
  const std::size_t dim = problem.prior.dim();

  std::vector<std::size_t> index;
  if (observe.has("indices")) {
    index = observe.get<std::vector<std::size_t>>("indices");
    std::sort(index.begin(), index.end());
    if (std::adjacent_find(index.begin(), index.end()) != index.end())
      throw ConfigError("'config.observe.indices' contains duplicates");
  } else if (observe.has("count")) {
    const auto count = positive_count(observe, "count", 1);
    if (count > dim) throw ConfigError("'config.observe.count' exceeds the dimension");
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), 0);
    Rng rng = Rng::derive(ctx.seed, kIndexStream);
    for (std::size_t k = 0; k < count; ++k) std::swap(all[k], all[k + rng.below(dim - k)]);
    index.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(index.begin(), index.end());
  } else if (observe.get_or("all", false)) {
    index.resize(dim);
    std::iota(index.begin(), index.end(), 0);
  } else {
    throw ConfigError("'config.observe' needs one of indices, count or all");
  }
  observe.finish();
  root.finish();
  for (auto i : index)
    if (i >= dim) throw ConfigError("observation index " + std::to_string(i) + " out of range");
  if (index.empty()) throw ConfigError("no coordinates selected for observation");

  Tensor1 truth;
  if (signal == "prior") {
    Rng rng = Rng::derive(ctx.seed, kSignalStream);
    truth = problem.prior.sample(rng, phi);
  } else if (signal == "sin") {
    if (!problem.grid) throw ConfigError("'config.signal' sin needs a gp prior");
    for (double x : problem.grid->points()) truth.push_back(std::sin(x));
  } else {
    throw ConfigError("'config.signal' must be \"prior\" or \"sin\"");
  }

  Rng noise = Rng::derive(ctx.seed, kNoiseStream);
  Tensor1 y;
  for (auto i : index) y.push_back(truth[i] + noise_sd * noise.normal());
  write_indexed_csv(ctx.out_dir / "data.csv", "index,y", index, y);
  save_vector(ctx.out_dir / "truth.csv", truth);
  report.metric("observations", static_cast<double>(index.size()));
  report.metric("phi", phi);
  report.vector("y", y);
}

// estimate-tau2 -----------------------------------------------------------

void estimate_tau2_cmd(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  const Problem problem = parse_problem(root.child("prior"), ctx);
  const auto ckpt_path = ctx.resolve(root.get<std::string>("checkpoint"));
  const auto range = parse_range(root, "phi_range", {0.0, 1.0});
  const auto n = positive_count(root, "n_draws", 10000);
  const auto clip = parse_range(root, "clip", {0.01, 100.0});
  root.finish();
  if (n < 2) throw ConfigError("'config.n_draws' must be at least 2");

  SigmaPriorModel model{load_checkpoint(ckpt_path), Hyperprior::uniform(range.first, range.second), 1.0};
  model.validate();
  const std::size_t dim = problem.prior.dim();
  require_dim(dim, model.config().total_dim());

  Tensor2 true_draws(n, dim), sigma_draws(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    Rng phi_rng = Rng::derive(ctx.seed, i, 0);
    const double phi = phi_rng.uniform(range.first, range.second);
    Rng true_rng = Rng::derive(ctx.seed, i, 1);
    const Tensor1 t = problem.prior.sample(true_rng, phi);
    std::copy(t.begin(), t.end(), true_draws.row(i).begin());
    Rng sigma_rng = Rng::derive(ctx.seed, i, 2);
    const auto d = sample_sigma_prior(model, sigma_rng, 1, phi);
    std::copy(d[0].theta.begin(), d[0].theta.end(), sigma_draws.row(i).begin());
  }
  const Tau2Estimate est = estimate_tau2(true_draws, sigma_draws, clip.first, clip.second);
  save_vector(ctx.out_dir / "tau2.csv", est.values);
  report.metric("clipped_fraction", est.clipped_fraction);
  report.metric("tau2_mean", std::accumulate(est.values.begin(), est.values.end(), 0.0) /
                                 static_cast<double>(est.values.size()));
  report.metric("tau2_min", *std::min_element(est.values.begin(), est.values.end()));
  report.metric("tau2_max", *std::max_element(est.values.begin(), est.values.end()));
  report.vector("tau2", est.values);
}

// infer -------------------------------------------------------------------

/// Builds client j's term from its own partition files and nothing else.
std::shared_ptr<const ClientTerm> load_client_term(std::shared_ptr<const SigmaPriorModel> model,
                                                   std::size_t j, ModelVariant variant,
                                                   const std::filesystem::path& data_file,
                                                   const std::filesystem::path& tau2_file) {
  auto [local_index, y] = read_indexed_csv(data_file, "local_index,y");
  Tensor1 tau2;
  if (variant == ModelVariant::Auxiliary) tau2 = load_vector(tau2_file);
  return std::make_shared<SigmaClientTerm>(model, j, variant,
                                           ClientObservations{std::move(local_index), std::move(y)},
                                           std::move(tau2));
}

FactorizedModel federated_model(std::shared_ptr<const SigmaPriorModel> model, ModelVariant variant,
                                const Observations& obs, std::span<const double> tau2,
                                const std::filesystem::path& dir) {
  const auto& partition = model->partition();
  const auto per_client = split_observations(partition, obs);
  std::vector<std::filesystem::path> data_files, tau2_files;
  for (std::size_t j = 0; j < partition.clients(); ++j) {
    const auto stem = dir / ("client_" + std::to_string(j));
    data_files.push_back(stem.string() + "_data.csv");
    tau2_files.push_back(stem.string() + "_tau2.csv");
    write_indexed_csv(data_files[j], "local_index,y", per_client[j].local_index, per_client[j].y);
    if (variant == ModelVariant::Auxiliary) save_vector(tau2_files[j], partition.gather(tau2, j));
  }
  FactorizedModel fm;
  fm.layout = latent_layout(model->config(), variant);
  fm.global = std::make_shared<SigmaGlobalTerm>(model);
  for (std::size_t j = 0; j < partition.clients(); ++j)
    fm.clients.push_back(load_client_term(model, j, variant, data_files[j], tau2_files[j]));
  fm.validate();
  return fm;
}

void infer(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  const auto ckpt_path = ctx.resolve(root.get<std::string>("checkpoint"));
  const auto data_path = ctx.resolve(root.get<std::string>("data"));
  const ModelVariant variant = parse_variant(root);
  const auto mode = root.get_or<std::string>("mode", "central");
  if (mode != "central" && mode != "federated")
    throw ConfigError("'config.mode' must be \"central\" or \"federated\"");
  const Hyperprior hyperprior = parse_hyperprior(root.child("hyperprior"));
  const double noise_sd = positive(root, "noise_sd", 0.5);
  const auto steps = root.get_or<std::size_t>("steps", 10000);
  const double lr = positive(root, "learning_rate", 1e-3);
  std::optional<double> clip;
  if (root.has("clip_norm")) clip = positive(root, "clip_norm", 1e-3);
  const auto draws = positive_count(root, "posterior_draws", 1000);
  const double init_log_sigma = root.get_or("init_log_sigma", -1.0);
  std::optional<std::filesystem::path> tau2_path;
  if (root.has("tau2")) tau2_path = ctx.resolve(root.get<std::string>("tau2"));
  root.finish();
  if (variant == ModelVariant::Auxiliary && !tau2_path)
    throw ConfigError("the aux variant needs 'config.tau2'");
  if (variant == ModelVariant::Deterministic && tau2_path)
    throw ConfigError("'config.tau2' only applies to the aux variant");

  auto model = std::make_shared<SigmaPriorModel>(SigmaPriorModel{load_checkpoint(ckpt_path), hyperprior, noise_sd});
  model->validate();
  const Observations obs = load_observations(data_path);
  obs.validate(model->config().total_dim());
  Tensor1 tau2;
  if (tau2_path) {
    tau2 = load_vector(*tau2_path);
    require_size(tau2.size(), model->config().total_dim(), "tau2");
  }

  const BlockLayout layout = latent_layout(model->config(), variant);
  const MeanFieldApprox init = MeanFieldApprox::initial(layout, 0.0, init_log_sigma);
  const AdamConfig adam{lr};
  MfviResult fit;
  if (mode == "central") {
    const FactorizedModel fm = make_factorized_model(model, variant, obs, tau2);
    MfviOptions opt;
    opt.steps = steps;
    opt.adam = adam;
    opt.clip_norm = clip;
    opt.noise = block_keyed_noise(layout, ctx.seed);
    fit = mfvi_fit(fm.as_log_joint(), init, opt);
  } else {
    const FactorizedModel fm = federated_model(model, variant, obs, tau2, ctx.out_dir / "clients");
    SfviOptions opt;
    opt.rounds = steps;
    opt.config = SfviConfig{adam, clip, ctx.seed};
    fit = sfvi_fit(fm, init, opt);
  }

  Rng summary_rng = Rng::derive(ctx.seed, kSummaryStream);
  const ThetaPosterior theta = summarize_theta(*model, variant, fit.approx, summary_rng, draws);
  const double phi_median = hyperprior.to_phi(fit.approx.block_mean("logit_phi")[0]);

  Tensor1 residual;
  for (std::size_t k = 0; k < obs.index.size(); ++k) residual.push_back(theta.mean[obs.index[k]] - obs.y[k]);

  ordered_json post;
  post["format"] = "sigma-posterior";
  post["version"] = 1;
  post["variant"] = variant == ModelVariant::Auxiliary ? "aux" : "deterministic";
  post["mode"] = mode;
  post["hyperprior"] = hyperprior_to_json(hyperprior);
  post["noise_sd"] = noise_sd;
  post["phi_median"] = phi_median;
  ordered_json blocks = ordered_json::array();
  for (const auto& b : layout.blocks()) blocks.push_back({{"name", b.name}, {"size", b.size}, {"owner", b.owner}});
  post["blocks"] = blocks;
  post["mean"] = fit.approx.mean;
  post["log_sigma"] = fit.approx.log_sigma;
  post["theta"] = {{"mean", theta.mean}, {"sd", theta.sd}, {"lower", theta.lower}, {"upper", theta.upper}};
  post["observations"] = {{"index", obs.index}, {"y", obs.y}};
  write_text(ctx.out_dir / "posterior.json", post.dump(2) + "\n");

  std::ostringstream trace;
  trace << "step,elbo\n";
  for (std::size_t t = 0; t < fit.elbo_trace.size(); ++t) trace << t << "," << format_double(fit.elbo_trace[t]) << "\n";
  write_text(ctx.out_dir / "elbo_trace.csv", trace.str());

  report.metric("steps", static_cast<double>(steps));
  report.metric("final_elbo", tail_mean(fit.elbo_trace, 100));
  report.metric("phi_median", phi_median);
  report.metric("observations", static_cast<double>(obs.index.size()));
  report.metric("residual_variance", sample_variance(residual));
  report.metric("residual_rmse", std::sqrt(std::inner_product(residual.begin(), residual.end(),
                                                              residual.begin(), 0.0) /
                                           static_cast<double>(residual.size())));
  report.vector("residual", residual);
  report.vector("theta_mean", theta.mean);
  report.vector("theta_sd", theta.sd);
}

// eval-posterior ----------------------------------------------------------

struct PosteriorFile {
  std::string variant;
  double phi_median = 0.0;
  double noise_sd = 0.0;
  ThetaPosterior theta;
  Observations obs;
};

PosteriorFile load_posterior(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
    if (j.at("format") != "sigma-posterior" || j.at("version") != 1)
      throw IoError(path.string() + " is not a posterior file of version 1");
    PosteriorFile p;
    p.variant = j.at("variant").get<std::string>();
    p.phi_median = j.at("phi_median").get<double>();
    p.noise_sd = j.at("noise_sd").get<double>();
    const auto& t = j.at("theta");
    p.theta = {t.at("mean").get<Tensor1>(), t.at("sd").get<Tensor1>(), t.at("lower").get<Tensor1>(),
               t.at("upper").get<Tensor1>()};
    p.obs.index = j.at("observations").at("index").get<std::vector<std::size_t>>();
    p.obs.y = j.at("observations").at("y").get<Tensor1>();
    return p;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed posterior file: " + e.what());
  }
}

void eval_posterior(RunContext& ctx, Report& report) {
  auto& root = ctx.root;
  auto posteriors = root.child("posteriors");
  auto oracle = root.child("oracle");
  root.finish();
  const Problem problem = parse_problem(oracle.child("prior"), ctx);
  const double noise_sd = positive(oracle, "noise_sd", 0.5);
  const auto& phi_raw = oracle.raw("phi");
  std::optional<double> fixed_phi;
  if (phi_raw.is_number()) {
    fixed_phi = phi_raw.get<double>();
  } else if (!(phi_raw.is_string() && phi_raw.get<std::string>() == "posterior_median")) {
    throw ConfigError("'config.oracle.phi' must be a number or \"posterior_median\"");
  }
  const bool marginal = oracle.get_or("marginal", false);
  oracle.finish();
  if (marginal && !problem.graph) throw ConfigError("'config.oracle.marginal' needs a pcar prior");

  const std::size_t dim = problem.prior.dim();
  for (const auto& [label, value] : posteriors.items()) {
    if (!value.is_string()) throw ConfigError("posterior path for '" + label + "' must be a string");
    const PosteriorFile post = load_posterior(ctx.resolve(value.get<std::string>()));
    require_dim(dim, post.theta.mean.size());
    post.obs.validate(dim);
    const double phi = fixed_phi.value_or(post.phi_median);

    GaussianPosterior truth;
    if (problem.grid) {
      Tensor1 x_obs;
      for (auto i : post.obs.index) x_obs.push_back((*problem.grid)[i]);
      truth = gp_conjugate_posterior(x_obs, post.obs.y,
                                     RbfSpec{phi, std::get<GpPrior>(problem.prior.kind).variance},
                                     noise_sd, *problem.grid);
    } else {
      const double sigma2 = std::get<PcarPrior>(problem.prior.kind).sigma2;
      truth = pcar_conjugate_posterior(*problem.graph, PcarSpec{phi, sigma2}, noise_sd, post.obs.y,
                                       std::span<const std::size_t>(post.obs.index));
    }

    Tensor1 diff(dim);
    for (std::size_t i = 0; i < dim; ++i) diff[i] = post.theta.mean[i] - truth.mean[i];
    Tensor1 residual, y_lo, y_hi, pred_lo, pred_hi;
    for (std::size_t k = 0; k < post.obs.index.size(); ++k) {
      const auto i = post.obs.index[k];
      residual.push_back(post.theta.mean[i] - post.obs.y[k]);
      y_lo.push_back(post.theta.lower[i]);
      y_hi.push_back(post.theta.upper[i]);
      const double half = kZ95 * std::hypot(post.theta.sd[i], post.noise_sd);
      pred_lo.push_back(post.theta.mean[i] - half);
      pred_hi.push_back(post.theta.mean[i] + half);
    }
    const std::string p = label + ".";
    report.metric(p + "oracle_phi", phi);
    report.metric(p + "rmse", rmse(post.theta.mean, truth.mean));
    report.metric(p + "max_abs_diff",
                  std::abs(*std::max_element(diff.begin(), diff.end(),
                                             [](double a, double b) { return std::abs(a) < std::abs(b); })));
    report.metric(p + "oracle_coverage", coverage(truth.mean, post.theta.lower, post.theta.upper));
    report.metric(p + "observation_coverage", coverage(post.obs.y, y_lo, y_hi));
    report.metric(p + "predictive_coverage", coverage(post.obs.y, pred_lo, pred_hi));
    report.metric(p + "residual_variance", sample_variance(residual));
    if (marginal) {
      const double sigma2 = std::get<PcarPrior>(problem.prior.kind).sigma2;
      const auto m = pcar_marginal_posterior_mean(*problem.graph, sigma2, noise_sd, post.obs.y,
                                                  post.obs.index);
      report.metric(p + "marginal_rmse", rmse(post.theta.mean, m.mean));
      report.metric(p + "marginal_alpha_mean", m.alpha_mean);
    }
    report.vector(p + "difference", diff);
    report.vector(p + "residual", residual);
  }
}

}  // namespace

const std::vector<Command>& commands() {
  static const std::vector<Command> all = {
      {"sample-prior", "draw (phi, theta) pairs from the exact prior", sample_prior},
      {"train", "train the client-factorized VAE on a dataset", train_cmd},
      {"eval-cov", "compare approximate-prior covariance against the exact prior", eval_cov},
      {"make-data", "simulate noisy observations of a latent field", make_data},
      {"estimate-tau2", "estimate the per-coordinate variance deficit", estimate_tau2_cmd},
      {"infer", "fit a mean-field posterior centrally or federated", infer},
      {"eval-posterior", "compare fitted posteriors against the conjugate oracle", eval_posterior},
  };
  return all;
}

}  // namespace sigma::cli
