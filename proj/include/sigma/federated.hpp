#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sigma/optim.hpp"
#include "sigma/variational.hpp"

namespace sigma {

/// Client-to-server payload of one round. `blocks` holds the gradient of
/// the client's log-density term with respect to the sampled value of each
/// global block. The scalars are the client's ELBO contribution
/// (diagnostic) and the squared norm of its local update, which the server
/// needs for global-norm clipping.
struct GradMessage {
  std::uint64_t round = 0;
  std::size_t client_id = 0;
  std::map<std::string, Tensor1> blocks;
  double local_elbo = 0.0;
  double local_grad_sq_norm = 0.0;

  std::string to_json() const;
  static GradMessage from_json(const std::string& text);
  bool operator==(const GradMessage&) const = default;
};

/// Server-to-client payload: the current global variational parameters.
struct GlobalBroadcast {
  std::uint64_t round = 0;
  Tensor1 mean;
  Tensor1 log_sigma;
};

/// FIFO of serialized messages standing in for a byte-stream transport.
class MessageQueue {
 public:
  void push(std::string message) { queue_.push_back(std::move(message)); }
  std::optional<std::string> pop();
  std::size_t size() const noexcept { return queue_.size(); }

 private:
  std::deque<std::string> queue_;
};

struct SfviConfig {
  AdamConfig adam{};
  std::optional<double> clip_norm;
  /// Seed of the round-keyed noise streams.
  std::uint64_t seed = 0;
};

/// One data holder: its log-density term, its local variational blocks and
/// their Adam state. It never sees another client's data or blocks.
class SfviClient {
 public:
  /// `global_blocks` names and sizes the shared blocks; `local_mean` and
  /// `local_log_sigma` initialize this client's blocks.
  SfviClient(std::size_t id, std::shared_ptr<const ClientTerm> term,
             std::vector<BlockSpec> global_blocks, Tensor1 local_mean, Tensor1 local_log_sigma,
             const SfviConfig& config);

  std::size_t id() const noexcept { return id_; }
  std::uint64_t round() const noexcept { return round_; }
  const Tensor1& local_mean() const noexcept { return mean_; }
  const Tensor1& local_log_sigma() const noexcept { return log_sigma_; }

  /// Phase one: sample, differentiate and serialize the message. The local
  /// update is held back until the server's clip scale arrives.
  std::string compute(const GlobalBroadcast& broadcast);
  /// Phase two: scale the pending local update and step the local Adam.
  void apply(double clip_scale);

 private:
  std::size_t id_;
  std::shared_ptr<const ClientTerm> term_;
  std::vector<BlockSpec> global_blocks_;
  std::size_t global_size_ = 0;
  Tensor1 mean_;
  Tensor1 log_sigma_;
  SfviConfig config_;
  AdamState adam_;
  std::uint64_t round_ = 0;
  Tensor1 pending_mean_;
  Tensor1 pending_log_sigma_;
  bool has_pending_ = false;
};

/// Holder of the global blocks. Adds the global prior and entropy terms
/// once, sums client messages in client-id order and steps its Adam.
class SfviServer {
 public:
  SfviServer(std::shared_ptr<const GlobalTerm> term, std::vector<BlockSpec> global_blocks,
             Tensor1 mean, Tensor1 log_sigma, std::size_t clients, const SfviConfig& config);

  std::uint64_t round() const noexcept { return round_; }
  const Tensor1& mean() const noexcept { return mean_; }
  const Tensor1& log_sigma() const noexcept { return log_sigma_; }
  GlobalBroadcast broadcast() const;

  /// Drains exactly one message per client for the current round. A
  /// missing, duplicate, foreign or stale message aborts the round before
  /// any state changes. Returns the clip scale to send back.
  double aggregate(MessageQueue& inbox);
  /// Steps the server Adam with the aggregated update.
  void apply(double clip_scale);
  /// Single-sample ELBO of the last aggregated round.
  double last_elbo() const noexcept { return last_elbo_; }

 private:
  std::shared_ptr<const GlobalTerm> term_;
  std::vector<BlockSpec> global_blocks_;
  Tensor1 mean_;
  Tensor1 log_sigma_;
  std::size_t clients_;
  SfviConfig config_;
  AdamState adam_;
  std::uint64_t round_ = 0;
  Tensor1 pending_mean_;
  Tensor1 pending_log_sigma_;
  bool has_pending_ = false;
  double last_elbo_ = 0.0;
};

struct SfviSystem {
  SfviServer server;
  std::vector<SfviClient> clients;
};

/// Splits a factorized model and an initial mean-field approximation into a
/// server and its clients.
SfviSystem make_sfvi_system(const FactorizedModel& model, const MeanFieldApprox& init,
                            const SfviConfig& config);

/// One synchronous round over an in-process queue. Returns the ELBO sample.
double sfvi_round(SfviSystem& system);

/// Reassembles the full approximation from server and client blocks.
MeanFieldApprox gather_approx(const SfviSystem& system, const BlockLayout& layout);

struct SfviOptions {
  std::size_t rounds = 10000;
  SfviConfig config;
  /// Called after each round with the round index.
  std::function<void(std::size_t, const SfviSystem&)> on_round;
};

/// Runs `rounds` rounds; with the same seed, Adam and clip settings the
/// trajectory matches mfvi_fit driven by block_keyed_noise.
MfviResult sfvi_fit(const FactorizedModel& model, MeanFieldApprox init, const SfviOptions& options);

}  // namespace sigma
