#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bitlab/bitrep.hpp"
#include "bitlab/data.hpp"
#include "bitlab/rng.hpp"

namespace bitlab {

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // out_dim x in_dim, row-major
  std::vector<double> biases;   // out_dim
};

// Feed-forward net: tanh on hidden layers, linear output.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
  std::size_t parameter_count() const;
  std::vector<double> forward(const std::vector<double>& input) const;
};

// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases.
Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng);

struct ChannelConfig {
  double train_noise_std = 0.5;  // sigma of the Gaussian white noise
  double hard_threshold = 0.5;
};

// Encoder -> discretization channel -> shared candidate scorer. The
// candidate embedder and scorer are shared across all k candidates, so the
// distinguisher is permutation equivariant by construction and independent
// of k.
struct ContrastiveModel {
  Mlp encoder;             // observable -> L pre-channel logits
  ChannelConfig channel;
  Mlp candidate_embedder;  // observable -> embedding
  Mlp scorer;              // concat(embedding, rep [, context mean]) -> 1 logit
  std::size_t rep_length = 0;
  bool scorer_context_mean = false;  // append mean candidate embedding to scorer input

  std::size_t embed_dim() const { return candidate_embedder.output_dim(); }
  std::size_t parameter_count() const;
  void validate() const;
};

struct ModelDims {
  std::size_t input_dim = 0;
  std::size_t rep_length = 0;
  std::size_t embed_dim = 0;
  std::vector<std::size_t> encoder_hidden;
  std::vector<std::size_t> embedder_hidden;
  std::vector<std::size_t> scorer_hidden;
  bool scorer_context_mean = false;
};

ContrastiveModel make_model(const ModelDims& dims, std::uint64_t init_seed);

enum class EncodeMode {
  Soft,           // sigmoid(logits + GWN), seeded
  SoftNoiseless,  // sigmoid(logits)
  Hard,           // 1 where sigmoid(logits) >= threshold, else 0
};

// Channel outputs for one input; Hard outputs are exactly 0 or 1.
std::vector<double> encode(const ContrastiveModel& model, const std::vector<double>& input,
                           EncodeMode mode, std::uint64_t noise_seed = 0);

// One logit per candidate: scorer(concat(embed(candidate), rep)).
std::vector<double> distinguish(const ContrastiveModel& model, const std::vector<double>& rep,
                                const std::vector<std::vector<double>>& candidates);

// -log softmax(logits)[correct_index], max-subtraction stabilized.
double contrastive_loss(const std::vector<double>& logits, int correct_index);

// Index of the highest logit, ties broken toward the lowest index.
int predict(const std::vector<double>& logits);

// Gradients have the same layer shapes as the model parameters.
struct ModelGrad {
  Mlp encoder;
  Mlp candidate_embedder;
  Mlp scorer;
};

struct BackwardResult {
  ModelGrad grad;
  double loss = 0.0;  // mean over the batch
};

// Exact reverse-mode gradients of the mean batch loss; the channel noise is
// fixed by the seed and treated as a constant (pathwise estimator).
BackwardResult backward(const ContrastiveModel& model, const std::vector<ContrastTask>& batch,
                        std::uint64_t noise_seed);

// Flat parameter vector in a fixed order (encoder, embedder, scorer; per
// layer weights then biases). Used by the optimizer and gradient checks.
std::vector<double> flatten_parameters(const ContrastiveModel& model);
void set_parameters(ContrastiveModel& model, const std::vector<double>& params);
std::vector<double> flatten_gradient(const ModelGrad& grad);

class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon,
                std::size_t size);
  void step(std::vector<double>& params, const std::vector<double>& grads);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;  // tasks per Adam step
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  int contrast_size = 2;  // k
  AugmentationSpec augmentation;  // applied per presentation during training
};

struct TrainHistory {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;        // mean training loss per epoch
  std::vector<double> train_accuracy;    // soft-noiseless, unmasked
  std::vector<double> heldout_accuracy;  // soft-noiseless, unmasked

  double best_loss() const;
  double best_heldout_accuracy() const;
};

struct TrainResult {
  ContrastiveModel model;  // best checkpoint by held-out accuracy
  TrainHistory history;
};

// Adam training with fresh channel-noise seeds per forward pass, fully
// deterministic per config.seed. Aborts with a diagnostic on non-finite
// loss.
TrainResult train(ContrastiveModel model, const std::vector<ContrastTask>& train_tasks,
                  const std::vector<ContrastTask>& heldout_tasks, const TrainConfig& config);

// True iff the best epoch loss reached an 80% drop from the initial loss.
bool converged(const TrainHistory& history);

// Fraction of tasks whose correct candidate gets the highest logit, with the
// correct candidate's representation encoded in the given mode.
double task_accuracy(const ContrastiveModel& model, const std::vector<ContrastTask>& tasks,
                     EncodeMode mode, std::uint64_t noise_seed = 0);

// Hard channel outputs of every dataset sample, one row per sample.
BitMatrix hard_encode_dataset(const ContrastiveModel& model, const LabeledDataset& dataset);

// Self-describing versioned JSON checkpoint, parameters at full precision.
void save_checkpoint(const ContrastiveModel& model, const TrainConfig& train_config,
                     const std::filesystem::path& path);

struct Checkpoint {
  ContrastiveModel model;
  TrainConfig train_config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bitlab
