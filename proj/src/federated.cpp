#include "sigma/federated.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "sigma/error.hpp"

namespace sigma {

using nlohmann::json;

std::string GradMessage::to_json() const {
  json j;
  j["round"] = round;
  j["client_id"] = client_id;
  json b = json::object();
  for (const auto& [name, values] : blocks) b[name] = values;
  j["blocks"] = std::move(b);
  j["local_elbo"] = local_elbo;
  j["local_grad_sq_norm"] = local_grad_sq_norm;
  return j.dump();
}

GradMessage GradMessage::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    static const std::set<std::string> keys{"round", "client_id", "blocks", "local_elbo",
                                            "local_grad_sq_norm"};
    for (const auto& [k, v] : j.items())
      if (!keys.contains(k)) throw ProtocolError("unknown message field '" + k + "'");
    GradMessage m;
    m.round = j.at("round").get<std::uint64_t>();
    m.client_id = j.at("client_id").get<std::size_t>();
    for (const auto& [name, values] : j.at("blocks").items())
      m.blocks[name] = values.get<Tensor1>();
    m.local_elbo = j.at("local_elbo").get<double>();
    m.local_grad_sq_norm = j.at("local_grad_sq_norm").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed gradient message: ") + e.what());
  }
}

std::optional<std::string> MessageQueue::pop() {
  if (queue_.empty()) return std::nullopt;
  std::string m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

namespace {

std::size_t total_size(const std::vector<BlockSpec>& blocks) {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size;
  return n;
}

double clip_scale_for(double sq_norm, const std::optional<double>& clip) {
  if (!clip) return 1.0;
  if (!(*clip > 0.0)) throw ConfigError("clip norm must be positive");
  const double norm = std::sqrt(sq_norm);
  return norm > *clip ? *clip / norm : 1.0;
}

void negate_stl(std::span<const double> grad_x, std::span<const double> log_sigma,
                std::span<const double> eps, Tensor1& d_mean, Tensor1& d_log_sigma) {
  d_mean.assign(grad_x.size(), 0.0);
  d_log_sigma.assign(grad_x.size(), 0.0);
  stl_chain(grad_x, log_sigma, eps, d_mean, d_log_sigma);
  for (auto& v : d_mean) v = -v;
  for (auto& v : d_log_sigma) v = -v;
  if (!all_finite(d_mean) || !all_finite(d_log_sigma))
    throw NumericError("non-finite STL gradient");
}

void scale_in_place(Tensor1& v, double s) {
  if (s != 1.0)
    for (auto& x : v) x *= s;
}

}  // namespace

SfviClient::SfviClient(std::size_t id, std::shared_ptr<const ClientTerm> term,
                       std::vector<BlockSpec> global_blocks, Tensor1 local_mean,
                       Tensor1 local_log_sigma, const SfviConfig& config)
    : id_(id),
      term_(std::move(term)),
      global_blocks_(std::move(global_blocks)),
      global_size_(total_size(global_blocks_)),
      mean_(std::move(local_mean)),
      log_sigma_(std::move(local_log_sigma)),
      config_(config),
      adam_(config.adam, std::vector<std::size_t>{mean_.size(), mean_.size()}) {
  if (!term_) throw ConfigError("client " + std::to_string(id_) + " has no model term");
  require_size(term_->global_size(), global_size_, "client global size");
  require_size(mean_.size(), term_->local_size(), "client local mean");
  require_size(log_sigma_.size(), term_->local_size(), "client local log sigma");
}

std::string SfviClient::compute(const GlobalBroadcast& broadcast) {
  if (broadcast.round != round_)
    throw ProtocolError("client " + std::to_string(id_) + " at round " + std::to_string(round_) +
                        " received broadcast for round " + std::to_string(broadcast.round));
  require_size(broadcast.mean.size(), global_size_, "broadcast mean");
  require_size(broadcast.log_sigma.size(), global_size_, "broadcast log sigma");
  Tensor1 eps_g(global_size_), eps_l(mean_.size());
  fill_keyed_noise(config_.seed, round_, 0, eps_g);
  fill_keyed_noise(config_.seed, round_, id_ + 1, eps_l);
  const Tensor1 xg = mean_field_sample(broadcast.mean, broadcast.log_sigma, eps_g);
  const Tensor1 xl = mean_field_sample(mean_, log_sigma_, eps_l);
  Tensor1 gg(global_size_), gl(mean_.size());
  const double value = term_->evaluate(xg, xl, gg, gl);
  if (!std::isfinite(value) || !all_finite(gg))
    throw NumericError("client " + std::to_string(id_) + " round " + std::to_string(round_) +
                       ": non-finite log density");
  negate_stl(gl, log_sigma_, eps_l, pending_mean_, pending_log_sigma_);
  has_pending_ = true;

  GradMessage msg;
  msg.round = round_;
  msg.client_id = id_;
  std::size_t off = 0;
  for (const auto& b : global_blocks_) {
    msg.blocks[b.name] = Tensor1(gg.begin() + static_cast<std::ptrdiff_t>(off),
                                 gg.begin() + static_cast<std::ptrdiff_t>(off + b.size));
    off += b.size;
  }
  msg.local_elbo = value - mean_field_log_density(mean_, log_sigma_, xl);
  msg.local_grad_sq_norm = squared_norm(pending_mean_) + squared_norm(pending_log_sigma_);
  return msg.to_json();
}

void SfviClient::apply(double clip_scale) {
  if (!has_pending_) throw ProtocolError("client " + std::to_string(id_) + " has no pending update");
  scale_in_place(pending_mean_, clip_scale);
  scale_in_place(pending_log_sigma_, clip_scale);
  adam_.step({{"mean", mean_}, {"log_sigma", log_sigma_}},
             {{"mean", pending_mean_}, {"log_sigma", pending_log_sigma_}});
  has_pending_ = false;
  ++round_;
}

SfviServer::SfviServer(std::shared_ptr<const GlobalTerm> term, std::vector<BlockSpec> global_blocks,
                       Tensor1 mean, Tensor1 log_sigma, std::size_t clients,
                       const SfviConfig& config)
    : term_(std::move(term)),
      global_blocks_(std::move(global_blocks)),
      mean_(std::move(mean)),
      log_sigma_(std::move(log_sigma)),
      clients_(clients),
      config_(config),
      adam_(config.adam, std::vector<std::size_t>{mean_.size(), mean_.size()}) {
  if (!term_) throw ConfigError("server has no global term");
  require_size(mean_.size(), total_size(global_blocks_), "server global mean");
  require_size(term_->global_size(), mean_.size(), "server global term size");
  require_size(log_sigma_.size(), mean_.size(), "server global log sigma");
}

GlobalBroadcast SfviServer::broadcast() const { return {round_, mean_, log_sigma_}; }

double SfviServer::aggregate(MessageQueue& inbox) {
  std::vector<std::optional<GradMessage>> received(clients_);
  while (auto raw = inbox.pop()) {
    GradMessage m = GradMessage::from_json(*raw);
    if (m.round != round_)
      throw ProtocolError("round " + std::to_string(round_) + " aborted: message for round " +
                          std::to_string(m.round));
    if (m.client_id >= clients_)
      throw ProtocolError("round " + std::to_string(round_) + " aborted: unknown client " +
                          std::to_string(m.client_id));
    if (received[m.client_id])
      throw ProtocolError("round " + std::to_string(round_) + " aborted: duplicate message from client " +
                          std::to_string(m.client_id));
    if (m.blocks.size() != global_blocks_.size())
      throw ProtocolError("round " + std::to_string(round_) + " aborted: client " +
                          std::to_string(m.client_id) + " sent unexpected blocks");
    for (const auto& b : global_blocks_) {
      const auto it = m.blocks.find(b.name);
      if (it == m.blocks.end() || it->second.size() != b.size)
        throw ProtocolError("round " + std::to_string(round_) + " aborted: client " +
                            std::to_string(m.client_id) + " block '" + b.name + "' malformed");
    }
    received[m.client_id] = std::move(m);
  }
  for (std::size_t j = 0; j < clients_; ++j)
    if (!received[j])
      throw ProtocolError("round " + std::to_string(round_) + " aborted: missing message from client " +
                          std::to_string(j));

  const std::size_t n = mean_.size();
  Tensor1 eps(n), grad(n);
  fill_keyed_noise(config_.seed, round_, 0, eps);
  const Tensor1 x = mean_field_sample(mean_, log_sigma_, eps);
  double elbo = term_->evaluate(x, grad);
  double sq = 0.0;
  for (std::size_t j = 0; j < clients_; ++j) {
    const auto& m = *received[j];
    std::size_t off = 0;
    for (const auto& b : global_blocks_) {
      const auto& v = m.blocks.at(b.name);
      for (std::size_t i = 0; i < b.size; ++i) grad[off + i] += v[i];
      off += b.size;
    }
    elbo += m.local_elbo;
  }
  negate_stl(grad, log_sigma_, eps, pending_mean_, pending_log_sigma_);
  has_pending_ = true;
  sq = squared_norm(pending_mean_) + squared_norm(pending_log_sigma_);
  for (std::size_t j = 0; j < clients_; ++j) sq += received[j]->local_grad_sq_norm;
  last_elbo_ = elbo - mean_field_log_density(mean_, log_sigma_, x);
  if (!std::isfinite(last_elbo_))
    throw NumericError("round " + std::to_string(round_) + ": non-finite ELBO");
  return clip_scale_for(sq, config_.clip_norm);
}

void SfviServer::apply(double clip_scale) {
  if (!has_pending_) throw ProtocolError("server has no pending update");
  scale_in_place(pending_mean_, clip_scale);
  scale_in_place(pending_log_sigma_, clip_scale);
  adam_.step({{"mean", mean_}, {"log_sigma", log_sigma_}},
             {{"mean", pending_mean_}, {"log_sigma", pending_log_sigma_}});
  has_pending_ = false;
  ++round_;
}

SfviSystem make_sfvi_system(const FactorizedModel& model, const MeanFieldApprox& init,
                            const SfviConfig& config) {
  model.validate();
  const auto& layout = model.layout;
  require_size(init.mean.size(), layout.total(), "initial approximation");
  require_size(init.log_sigma.size(), layout.total(), "initial approximation");
  const std::size_t ng = layout.global_size();
  const auto slice = [](const Tensor1& v, std::size_t off, std::size_t n) {
    return Tensor1(v.begin() + static_cast<std::ptrdiff_t>(off),
                   v.begin() + static_cast<std::ptrdiff_t>(off + n));
  };
  SfviSystem sys{SfviServer(model.global, layout.global_blocks(), slice(init.mean, 0, ng),
                            slice(init.log_sigma, 0, ng), model.clients.size(), config),
                 {}};
  for (std::size_t j = 0; j < model.clients.size(); ++j) {
    const auto off = layout.client_offset(j);
    const auto n = layout.client_size(j);
    sys.clients.emplace_back(j, model.clients[j], layout.global_blocks(), slice(init.mean, off, n),
                             slice(init.log_sigma, off, n), config);
  }
  return sys;
}

double sfvi_round(SfviSystem& system) {
  const GlobalBroadcast b = system.server.broadcast();
  for (const auto& c : system.clients)
    if (c.round() != b.round)
      throw ProtocolError("client " + std::to_string(c.id()) + " is at round " +
                          std::to_string(c.round()) + ", server at " + std::to_string(b.round));
  MessageQueue inbox;
  for (auto& c : system.clients) inbox.push(c.compute(b));
  const double scale = system.server.aggregate(inbox);
  for (auto& c : system.clients) c.apply(scale);
  system.server.apply(scale);
  return system.server.last_elbo();
}

MeanFieldApprox gather_approx(const SfviSystem& system, const BlockLayout& layout) {
  MeanFieldApprox q = MeanFieldApprox::initial(layout);
  const auto& gm = system.server.mean();
  const auto& gs = system.server.log_sigma();
  std::copy(gm.begin(), gm.end(), q.mean.begin());
  std::copy(gs.begin(), gs.end(), q.log_sigma.begin());
  for (std::size_t j = 0; j < system.clients.size(); ++j) {
    const auto off = static_cast<std::ptrdiff_t>(layout.client_offset(j));
    const auto& c = system.clients[j];
    std::copy(c.local_mean().begin(), c.local_mean().end(), q.mean.begin() + off);
    std::copy(c.local_log_sigma().begin(), c.local_log_sigma().end(), q.log_sigma.begin() + off);
  }
  return q;
}

MfviResult sfvi_fit(const FactorizedModel& model, MeanFieldApprox init, const SfviOptions& options) {
  SfviSystem sys = make_sfvi_system(model, init, options.config);
  MfviResult res;
  res.elbo_trace.reserve(options.rounds);
  for (std::size_t r = 0; r < options.rounds; ++r) {
    res.elbo_trace.push_back(sfvi_round(sys));
    if (options.on_round) options.on_round(r, sys);
  }
  res.approx = gather_approx(sys, model.layout);
  return res;
}

}  // namespace sigma
