#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clg/adversarial.hpp"
#include "clg/data_synth.hpp"
#include "clg/hier_pool.hpp"
#include "clg/metrics.hpp"
#include "clg/nk/optim.hpp"
#include "clg/text_qa.hpp"

namespace clg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainConfig {
  std::size_t d = 64;
  std::size_t P = 8;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double tau = 0.1;
  bool adv = true;
  bool contrastive = true;
  bool qa = true;
  std::size_t encoder_depth = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  // Batch standardization of the fused graph vector; running statistics
  // are used at evaluation time.
  bool graph_norm = true;
  double norm_momentum = 0.1;
  double norm_eps = 1e-5;

  void validate() const;
  nk::AdamWOptions adam() const { return {lr, beta1, beta2, adam_eps, weight_decay}; }
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);

// All learnable state. Trained in single precision.
struct Model {
  TrainConfig config;
  std::size_t d_in = 0;
  std::size_t M = 0;
  HierParams<float> graph;
  TextEncoder<float> text;
  QaHead<float> head;
  Discriminator<float> disc;
  nk::Parameter<float> norm_mean;  // 1 x d running statistics
  nk::Parameter<float> norm_var;

  static Model init(const TrainConfig& c, std::size_t d_in, std::size_t M, std::size_t vocab);

  // Parameters updated by the main optimizer (everything but D).
  std::vector<nk::Parameter<float>*> main_parameters();
  std::vector<nk::Parameter<float>*> disc_parameters();
  // Every stored tensor in checkpoint order, running statistics last.
  std::vector<nk::Parameter<float>*> all_tensors();
};

struct LossBundle {
  double l_d = 0, l_g = 0, l_n = 0, l_kl = 0, l_qa = 0, total = 0;
};

// total = l_d + l_g + l_n + l_kl + l_qa over the switched-on terms, in that
// order; switched-off terms are zero.
LossBundle make_bundle(const TrainConfig& c, double l_d, double l_g, double l_n, double l_kl, double l_qa);

struct TrainHooks {
  std::function<void(std::uint64_t iteration, const LossBundle&)> on_iteration;
  std::function<void(const MetricsRow&)> on_row;
  // Stop after this many iterations (0 = run all epochs).
  std::uint64_t max_iterations = 0;
};

struct TrainResult {
  Model best;    // parameters at the best validation epoch (or the last one without val)
  Model last;
  MetricsLog log;
  double best_val_accuracy = -1.0;
  std::size_t best_epoch = 0;
};

// Worker count from CLANG_THREADS (default 1). Results do not depend on it.
std::size_t thread_count_from_env();

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* val_set,
                  const TrainHooks& hooks = {}, std::size_t threads = 1);

struct Prediction {
  std::size_t choice = 0;
  std::vector<float> logits;
};

// Deterministic: uses running statistics and a fixed-seed prior stream.
MetricsRow evaluate(Model& model, const Dataset& data, const std::string& split, std::size_t epoch = 0,
                    std::vector<Prediction>* predictions = nullptr, std::size_t threads = 1);

// Versioned binary checkpoint: magic "CLGC", version, config echo, flat
// named parameter table of little-endian f32.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
// Throws CheckpointError when the dataset's node count or feature width
// disagree with the model.
void check_compatible(const Model& model, const Dataset& data);

}  // namespace clg
