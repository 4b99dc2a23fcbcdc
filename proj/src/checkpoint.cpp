#include "sigma/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "sigma/error.hpp"

namespace sigma {

using ojson = nlohmann::ordered_json;

ojson vae_config_to_json(const SigmaVaeConfig& c) {
  ojson j;
  j["blocks"] = c.partition.blocks();
  j["phi_dim"] = c.phi_dim;
  j["global_latent"] = c.global_latent;
  j["local_latents"] = c.local_latents;
  j["global_encoder_hidden"] = c.global_encoder_hidden;
  j["local_encoder_hidden"] = c.local_encoder_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  j["gamma"] = c.gamma;
  ojson t;
  t["iterations"] = c.training.iterations;
  t["batch_size"] = c.training.batch_size;
  t["learning_rate"] = c.training.learning_rate;
  t["seed"] = c.training.seed;
  t["smoothing_window"] = c.training.smoothing_window;
  j["training"] = std::move(t);
  return j;
}

SigmaVaeConfig vae_config_from_json(const nlohmann::json& j) {
  SigmaVaeConfig c;
  const auto blocks = j.at("blocks").get<std::vector<std::vector<std::size_t>>>();
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  c.partition = ClientPartition(blocks, n);
  c.phi_dim = j.at("phi_dim").get<std::size_t>();
  c.global_latent = j.at("global_latent").get<std::size_t>();
  c.local_latents = j.at("local_latents").get<std::vector<std::size_t>>();
  c.global_encoder_hidden = j.at("global_encoder_hidden").get<std::size_t>();
  c.local_encoder_hidden = j.at("local_encoder_hidden").get<std::size_t>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  const auto& t = j.at("training");
  c.training.iterations = t.at("iterations").get<std::size_t>();
  c.training.batch_size = t.at("batch_size").get<std::size_t>();
  c.training.learning_rate = t.at("learning_rate").get<double>();
  c.training.seed = t.at("seed").get<std::uint64_t>();
  c.training.smoothing_window = t.at("smoothing_window").get<std::size_t>();
  c.validate();
  return c;
}

namespace {

/// Tensor shapes in the same order as SigmaVaeParams::blocks().
void append_shapes(const Mlp& m, std::vector<std::vector<std::size_t>>& out) {
  for (const auto& l : m.layers()) {
    out.push_back({l.out_dim(), l.in_dim()});
    out.push_back({l.out_dim()});
  }
}

void append_shapes(const GaussianEncoder& e, std::vector<std::vector<std::size_t>>& out) {
  append_shapes(e.trunk, out);
  for (const auto* l : {&e.mean_head, &e.log_var_head}) {
    out.push_back({l->out_dim(), l->in_dim()});
    out.push_back({l->out_dim()});
  }
}

std::vector<std::vector<std::size_t>> shapes_of(const SigmaVaeParams& p) {
  std::vector<std::vector<std::size_t>> out;
  append_shapes(p.global_encoder, out);
  for (const auto& e : p.local_encoders) append_shapes(e, out);
  append_shapes(p.global_decoder, out);
  for (const auto& l : p.local_decoders) {
    out.push_back({l.out_dim(), l.in_dim()});
    out.push_back({l.out_dim()});
  }
  return out;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  ojson j;
  j["format"] = "sigma-vae-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = vae_config_to_json(ckpt.config);
  ojson meta;
  meta["iterations_completed"] = ckpt.metadata.iterations_completed;
  meta["final_smoothed_elbo"] = ckpt.metadata.final_smoothed_elbo;
  meta["seed"] = ckpt.metadata.seed;
  j["metadata"] = std::move(meta);

  auto params = ckpt.params;
  const auto blocks = params.blocks();
  const auto shapes = shapes_of(params);
  auto tensors = ojson::array();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ojson t;
    t["name"] = blocks[i].name;
    t["shape"] = shapes[i];
    t["data"] = std::vector<double>(blocks[i].data.begin(), blocks[i].data.end());
    tensors.push_back(std::move(t));
  }
  j["tensors"] = std::move(tensors);
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "sigma-vae-checkpoint")
      throw IoError("not a SIGMA VAE checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw IoError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    ckpt.config = vae_config_from_json(j.at("config"));
    const auto& meta = j.at("metadata");
    ckpt.metadata.iterations_completed = meta.at("iterations_completed").get<std::size_t>();
    ckpt.metadata.final_smoothed_elbo = meta.at("final_smoothed_elbo").get<double>();
    ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();

    ckpt.params = SigmaVaeParams::zeros(ckpt.config);
    const auto blocks = ckpt.params.blocks();
    const auto shapes = shapes_of(ckpt.params);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != blocks.size())
      throw IoError("checkpoint has " + std::to_string(tensors.size()) + " tensors, expected " +
                    std::to_string(blocks.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      if (name != blocks[i].name)
        throw IoError("checkpoint tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                      blocks[i].name + "'");
      if (t.at("shape").get<std::vector<std::size_t>>() != shapes[i])
        throw IoError("checkpoint tensor '" + name + "' has the wrong shape");
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != blocks[i].data.size())
        throw IoError("checkpoint tensor '" + name + "' has the wrong number of values");
      std::copy(data.begin(), data.end(), blocks[i].data.begin());
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint config: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(ckpt);
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace sigma
