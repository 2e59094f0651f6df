#include "bitlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace bitlab {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Forward pass with per-layer outputs kept for the backward pass.
// activations[0] is the input, activations[i + 1] the output of layer i
// (post-tanh on hidden layers, raw on the last).
struct MlpTrace {
  std::vector<std::vector<double>> activations;
};

std::vector<double> forward_trace(const Mlp& net, const std::vector<double>& input,
                                  MlpTrace& trace) {
  trace.activations.clear();
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(input);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    const std::vector<double>& x = trace.activations.back();
    std::vector<double> y(layer.out_dim);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      double acc = layer.biases[o];
      const double* row = layer.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
    if (l + 1 < net.layers.size()) {
      for (double& v : y) v = std::tanh(v);
    }
    trace.activations.push_back(std::move(y));
  }
  return trace.activations.back();
}

// Accumulates parameter gradients into grad and returns d loss / d input.
std::vector<double> backward_trace(const Mlp& net, const MlpTrace& trace,
                                   std::vector<double> d_output, Mlp& grad) {
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& layer = net.layers[li];
    DenseLayer& glayer = grad.layers[li];
    const std::vector<double>& x = trace.activations[li];
    if (li + 1 < net.layers.size()) {
      const std::vector<double>& y = trace.activations[li + 1];
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        d_output[o] *= 1.0 - y[o] * y[o];  // tanh'
      }
    }
    std::vector<double> d_input(layer.in_dim, 0.0);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double d = d_output[o];
      glayer.biases[o] += d;
      double* grow = glayer.weights.data() + o * layer.in_dim;
      const double* wrow = layer.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        grow[i] += d * x[i];
        d_input[i] += wrow[i] * d;
      }
    }
    d_output = std::move(d_input);
  }
  return d_output;
}

Mlp zeros_like(const Mlp& net) {
  Mlp out = net;
  for (DenseLayer& layer : out.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
  }
  return out;
}

// Permutation-invariant mean: addends summed in sorted order per dimension,
// so reordering candidates cannot change the result in the last ulp.
std::vector<double> stable_mean(const std::vector<std::vector<double>>& vectors) {
  const std::size_t dim = vectors.front().size();
  std::vector<double> mean(dim, 0.0);
  std::vector<double> column(vectors.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t j = 0; j < vectors.size(); ++j) column[j] = vectors[j][d];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double v : column) acc += v;
    mean[d] = acc / static_cast<double>(vectors.size());
  }
  return mean;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

// Seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kStepNoiseStream = 2;
constexpr std::uint64_t kStepAugmentStream = 3;
constexpr std::uint64_t kInitialNoiseStream = 4;
constexpr std::uint64_t kInitialAugmentStream = 5;

std::vector<ContrastTask> augment_batch(const std::vector<ContrastTask>& tasks,
                                        const std::vector<std::size_t>& indices,
                                        const AugmentationSpec& aug, std::uint64_t aug_seed) {
  std::vector<ContrastTask> batch;
  batch.reserve(indices.size());
  for (std::size_t pos = 0; pos < indices.size(); ++pos) {
    ContrastTask task = tasks[indices[pos]];
    if (!aug.is_identity()) {
      const std::uint64_t task_seed = derive_seed(aug_seed, pos);
      for (std::size_t c = 0; c < task.candidates.size(); ++c) {
        task.candidates[c] = augment(task.candidates[c], aug, derive_seed(task_seed, c));
      }
    }
    batch.push_back(std::move(task));
  }
  return batch;
}

double mean_task_loss(const ContrastiveModel& model, const std::vector<ContrastTask>& tasks,
                      const AugmentationSpec& aug, std::uint64_t aug_seed,
                      std::uint64_t noise_seed) {
  std::vector<std::size_t> all(tasks.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::vector<ContrastTask> prepared = augment_batch(tasks, all, aug, aug_seed);
  double total = 0.0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const ContrastTask& task = prepared[i];
    const std::vector<double> rep =
        encode(model, task.candidates[static_cast<std::size_t>(task.correct_index)],
               EncodeMode::Soft, derive_seed(noise_seed, i));
    const std::vector<double> logits = distinguish(model, rep, task.candidates);
    total += contrastive_loss(logits, task.correct_index);
  }
  return total / static_cast<double>(prepared.size());
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& layer : net.layers) {
    layers.push_back({{"in", layer.in_dim},
                      {"out", layer.out_dim},
                      {"weights", layer.weights},
                      {"biases", layer.biases}});
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& entry : j) {
    DenseLayer layer;
    layer.in_dim = entry.at("in").get<std::size_t>();
    layer.out_dim = entry.at("out").get<std::size_t>();
    layer.weights = entry.at("weights").get<std::vector<double>>();
    layer.biases = entry.at("biases").get<std::vector<double>>();
    if (layer.weights.size() != layer.in_dim * layer.out_dim ||
        layer.biases.size() != layer.out_dim) {
      throw std::runtime_error("checkpoint: layer dimensions do not match arrays");
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const DenseLayer& layer : layers) count += layer.weights.size() + layer.biases.size();
  return count;
}

std::vector<double> Mlp::forward(const std::vector<double>& input) const {
  if (input.size() != input_dim()) throw std::domain_error("Mlp::forward: input dim mismatch");
  MlpTrace trace;
  return forward_trace(*this, input, trace);
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::domain_error("make_mlp: need input and output dims");
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = dims[l];
    layer.out_dim = dims[l + 1];
    if (layer.in_dim == 0 || layer.out_dim == 0) {
      throw std::domain_error("make_mlp: zero layer dimension");
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
    layer.weights.resize(layer.in_dim * layer.out_dim);
    for (double& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.biases.assign(layer.out_dim, 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t ContrastiveModel::parameter_count() const {
  return encoder.parameter_count() + candidate_embedder.parameter_count() +
         scorer.parameter_count();
}

void ContrastiveModel::validate() const {
  if (rep_length == 0 || encoder.output_dim() != rep_length) {
    throw std::domain_error("ContrastiveModel: encoder must output rep_length values");
  }
  if (encoder.input_dim() != candidate_embedder.input_dim()) {
    throw std::domain_error("ContrastiveModel: encoder/embedder input dims differ");
  }
  const std::size_t expected =
      embed_dim() + rep_length + (scorer_context_mean ? embed_dim() : 0);
  if (scorer.input_dim() != expected) {
    throw std::domain_error("ContrastiveModel: scorer input dim must be embed+rep(+context)");
  }
  if (scorer.output_dim() != 1) {
    throw std::domain_error("ContrastiveModel: scorer must output one logit");
  }
}

ContrastiveModel make_model(const ModelDims& dims, std::uint64_t init_seed) {
  ContrastiveModel model;
  model.rep_length = dims.rep_length;
  model.scorer_context_mean = dims.scorer_context_mean;

  Rng enc_rng(derive_seed(init_seed, 0));
  std::vector<std::size_t> enc_dims{dims.input_dim};
  enc_dims.insert(enc_dims.end(), dims.encoder_hidden.begin(), dims.encoder_hidden.end());
  enc_dims.push_back(dims.rep_length);
  model.encoder = make_mlp(enc_dims, enc_rng);

  Rng emb_rng(derive_seed(init_seed, 1));
  std::vector<std::size_t> emb_dims{dims.input_dim};
  emb_dims.insert(emb_dims.end(), dims.embedder_hidden.begin(), dims.embedder_hidden.end());
  emb_dims.push_back(dims.embed_dim);
  model.candidate_embedder = make_mlp(emb_dims, emb_rng);

  Rng sc_rng(derive_seed(init_seed, 2));
  std::vector<std::size_t> sc_dims{dims.embed_dim + dims.rep_length +
                                   (dims.scorer_context_mean ? dims.embed_dim : 0)};
  sc_dims.insert(sc_dims.end(), dims.scorer_hidden.begin(), dims.scorer_hidden.end());
  sc_dims.push_back(1);
  model.scorer = make_mlp(sc_dims, sc_rng);

  model.validate();
  return model;
}

std::vector<double> encode(const ContrastiveModel& model, const std::vector<double>& input,
                           EncodeMode mode, std::uint64_t noise_seed) {
  std::vector<double> logits = model.encoder.forward(input);
  switch (mode) {
    case EncodeMode::Soft: {
      Rng rng(noise_seed);
      for (double& z : logits) z = sigmoid(z + rng.normal(model.channel.train_noise_std));
      break;
    }
    case EncodeMode::SoftNoiseless:
      for (double& z : logits) z = sigmoid(z);
      break;
    case EncodeMode::Hard:
      for (double& z : logits) {
        z = sigmoid(z) < model.channel.hard_threshold ? 0.0 : 1.0;
      }
      break;
  }
  return logits;
}

std::vector<double> distinguish(const ContrastiveModel& model, const std::vector<double>& rep,
                                const std::vector<std::vector<double>>& candidates) {
  if (rep.size() != model.rep_length) throw std::domain_error("distinguish: rep length mismatch");
  if (candidates.empty()) throw std::domain_error("distinguish: need at least one candidate");
  std::vector<std::vector<double>> embeddings;
  embeddings.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    embeddings.push_back(model.candidate_embedder.forward(candidate));
  }
  std::vector<double> context;
  if (model.scorer_context_mean) context = stable_mean(embeddings);

  std::vector<double> logits(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    std::vector<double> scorer_in;
    scorer_in.reserve(model.scorer.input_dim());
    scorer_in.insert(scorer_in.end(), embeddings[j].begin(), embeddings[j].end());
    scorer_in.insert(scorer_in.end(), rep.begin(), rep.end());
    scorer_in.insert(scorer_in.end(), context.begin(), context.end());
    logits[j] = model.scorer.forward(scorer_in)[0];
  }
  return logits;
}

double contrastive_loss(const std::vector<double>& logits, int correct_index) {
  if (correct_index < 0 || static_cast<std::size_t>(correct_index) >= logits.size()) {
    throw std::domain_error("contrastive_loss: correct index out of range");
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - max_logit);
  return std::log(denom) - (logits[static_cast<std::size_t>(correct_index)] - max_logit);
}

int predict(const std::vector<double>& logits) {
  if (logits.empty()) throw std::domain_error("predict: empty logits");
  int best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j) {
    if (logits[j] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

BackwardResult backward(const ContrastiveModel& model, const std::vector<ContrastTask>& batch,
                        std::uint64_t noise_seed) {
  if (batch.empty()) throw std::domain_error("backward: empty batch");
  model.validate();
  const std::size_t embed_dim = model.embed_dim();
  const std::size_t rep_len = model.rep_length;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  BackwardResult result;
  result.grad.encoder = zeros_like(model.encoder);
  result.grad.candidate_embedder = zeros_like(model.candidate_embedder);
  result.grad.scorer = zeros_like(model.scorer);

  for (std::size_t t = 0; t < batch.size(); ++t) {
    const ContrastTask& task = batch[t];
    const auto k = task.candidates.size();
    if (task.correct_index < 0 || static_cast<std::size_t>(task.correct_index) >= k) {
      throw std::domain_error("backward: correct index out of range");
    }

    // Forward. Channel noise depends only on (seed, task index, bit index),
    // never on parameter values, so finite differences see the same noise.
    MlpTrace enc_trace;
    const std::vector<double>& correct_input =
        task.candidates[static_cast<std::size_t>(task.correct_index)];
    const std::vector<double> pre_channel = forward_trace(model.encoder, correct_input, enc_trace);
    Rng noise_rng(derive_seed(noise_seed, t));
    std::vector<double> rep(rep_len);
    for (std::size_t i = 0; i < rep_len; ++i) {
      rep[i] = sigmoid(pre_channel[i] + noise_rng.normal(model.channel.train_noise_std));
    }

    std::vector<MlpTrace> embed_traces(k);
    std::vector<std::vector<double>> embeddings(k);
    for (std::size_t j = 0; j < k; ++j) {
      embeddings[j] = forward_trace(model.candidate_embedder, task.candidates[j], embed_traces[j]);
    }
    std::vector<double> context;
    if (model.scorer_context_mean) context = stable_mean(embeddings);

    std::vector<MlpTrace> scorer_traces(k);
    std::vector<double> logits(k);
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> scorer_in;
      scorer_in.reserve(model.scorer.input_dim());
      scorer_in.insert(scorer_in.end(), embeddings[j].begin(), embeddings[j].end());
      scorer_in.insert(scorer_in.end(), rep.begin(), rep.end());
      scorer_in.insert(scorer_in.end(), context.begin(), context.end());
      logits[j] = forward_trace(model.scorer, scorer_in, scorer_traces[j])[0];
    }
    result.loss += contrastive_loss(logits, task.correct_index) * inv_batch;

    // Backward.
    const std::vector<double> probs = softmax(logits);
    std::vector<std::vector<double>> d_embeddings(k, std::vector<double>(embed_dim, 0.0));
    std::vector<double> d_rep(rep_len, 0.0);
    std::vector<double> d_context(model.scorer_context_mean ? embed_dim : 0, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double d_logit =
          (probs[j] - (static_cast<int>(j) == task.correct_index ? 1.0 : 0.0)) * inv_batch;
      std::vector<double> d_scorer_in =
          backward_trace(model.scorer, scorer_traces[j], {d_logit}, result.grad.scorer);
      for (std::size_t i = 0; i < embed_dim; ++i) d_embeddings[j][i] += d_scorer_in[i];
      for (std::size_t i = 0; i < rep_len; ++i) d_rep[i] += d_scorer_in[embed_dim + i];
      for (std::size_t i = 0; i < d_context.size(); ++i) {
        d_context[i] += d_scorer_in[embed_dim + rep_len + i];
      }
    }
    if (model.scorer_context_mean) {
      const double inv_k = 1.0 / static_cast<double>(k);
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < embed_dim; ++i) d_embeddings[j][i] += d_context[i] * inv_k;
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      backward_trace(model.candidate_embedder, embed_traces[j], std::move(d_embeddings[j]),
                     result.grad.candidate_embedder);
    }
    std::vector<double> d_pre(rep_len);
    for (std::size_t i = 0; i < rep_len; ++i) {
      d_pre[i] = d_rep[i] * rep[i] * (1.0 - rep[i]);  // sigmoid', noise held constant
    }
    backward_trace(model.encoder, enc_trace, std::move(d_pre), result.grad.encoder);
  }
  return result;
}

namespace {

template <typename Fn>
void for_each_mlp(const ContrastiveModel& model, Fn&& fn) {
  fn(model.encoder);
  fn(model.candidate_embedder);
  fn(model.scorer);
}

}  // namespace

std::vector<double> flatten_parameters(const ContrastiveModel& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  for_each_mlp(model, [&](const Mlp& net) {
    for (const DenseLayer& layer : net.layers) {
      flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
      flat.insert(flat.end(), layer.biases.begin(), layer.biases.end());
    }
  });
  return flat;
}

void set_parameters(ContrastiveModel& model, const std::vector<double>& params) {
  if (params.size() != model.parameter_count()) {
    throw std::domain_error("set_parameters: size mismatch");
  }
  std::size_t pos = 0;
  const auto assign = [&](Mlp& net) {
    for (DenseLayer& layer : net.layers) {
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), layer.weights.size(),
                  layer.weights.begin());
      pos += layer.weights.size();
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos), layer.biases.size(),
                  layer.biases.begin());
      pos += layer.biases.size();
    }
  };
  assign(model.encoder);
  assign(model.candidate_embedder);
  assign(model.scorer);
}

std::vector<double> flatten_gradient(const ModelGrad& grad) {
  std::vector<double> flat;
  const auto append = [&](const Mlp& net) {
    for (const DenseLayer& layer : net.layers) {
      flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
      flat.insert(flat.end(), layer.biases.begin(), layer.biases.end());
    }
  };
  append(grad.encoder);
  append(grad.candidate_embedder);
  append(grad.scorer);
  return flat;
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon,
                             std::size_t size)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      m_(size, 0.0),
      v_(size, 0.0) {
  if (!(learning_rate >= 0.0)) throw std::domain_error("AdamOptimizer: learning rate must be >= 0");
}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::domain_error("AdamOptimizer::step: size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + epsilon_);
  }
}

double TrainHistory::best_loss() const {
  return epoch_loss.empty() ? initial_loss
                            : *std::min_element(epoch_loss.begin(), epoch_loss.end());
}

double TrainHistory::best_heldout_accuracy() const {
  return heldout_accuracy.empty()
             ? 0.0
             : *std::max_element(heldout_accuracy.begin(), heldout_accuracy.end());
}

TrainResult train(ContrastiveModel model, const std::vector<ContrastTask>& train_tasks,
                  const std::vector<ContrastTask>& heldout_tasks, const TrainConfig& config) {
  model.validate();
  if (train_tasks.empty() || heldout_tasks.empty()) {
    throw std::domain_error("train: task sets must be nonempty");
  }
  if (config.batch_size == 0) throw std::domain_error("train: batch size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw std::domain_error("train: learning rate must be > 0");

  TrainHistory history;
  history.initial_loss = mean_task_loss(model, train_tasks, config.augmentation,
                                        derive_seed(config.seed, kInitialAugmentStream),
                                        derive_seed(config.seed, kInitialNoiseStream));

  std::vector<double> params = flatten_parameters(model);
  AdamOptimizer optimizer(config.learning_rate, config.adam_beta1, config.adam_beta2,
                          config.adam_epsilon, params.size());
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  const std::uint64_t step_noise_base = derive_seed(config.seed, kStepNoiseStream);
  const std::uint64_t step_aug_base = derive_seed(config.seed, kStepAugmentStream);

  std::vector<std::size_t> order(train_tasks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> best_params = params;
  double best_heldout = -1.0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.below(i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
      const std::vector<ContrastTask> batch = augment_batch(
          train_tasks, indices, config.augmentation, derive_seed(step_aug_base, step));
      const BackwardResult back = backward(model, batch, derive_seed(step_noise_base, step));
      if (!std::isfinite(back.loss)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step));
      }
      const std::vector<double> grads = flatten_gradient(back.grad);
      optimizer.step(params, grads);
      set_parameters(model, params);
      epoch_loss_sum += back.loss * static_cast<double>(batch.size());
      seen += batch.size();
      ++step;
    }
    history.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(seen));
    history.train_accuracy.push_back(task_accuracy(model, train_tasks, EncodeMode::SoftNoiseless));
    history.heldout_accuracy.push_back(
        task_accuracy(model, heldout_tasks, EncodeMode::SoftNoiseless));
    if (history.heldout_accuracy.back() > best_heldout) {
      best_heldout = history.heldout_accuracy.back();
      best_params = params;
    }
  }

  set_parameters(model, best_params);
  TrainResult result;
  result.model = std::move(model);
  result.history = std::move(history);
  return result;
}

bool converged(const TrainHistory& history) {
  if (history.epoch_loss.empty()) return false;
  return history.best_loss() <= 0.2 * history.initial_loss;
}

double task_accuracy(const ContrastiveModel& model, const std::vector<ContrastTask>& tasks,
                     EncodeMode mode, std::uint64_t noise_seed) {
  if (tasks.empty()) throw std::domain_error("task_accuracy: empty task list");
  std::size_t correct = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const ContrastTask& task = tasks[t];
    const std::vector<double> rep =
        encode(model, task.candidates[static_cast<std::size_t>(task.correct_index)], mode,
               derive_seed(noise_seed, t));
    const std::vector<double> logits = distinguish(model, rep, task.candidates);
    if (predict(logits) == task.correct_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

BitMatrix hard_encode_dataset(const ContrastiveModel& model, const LabeledDataset& dataset) {
  if (dataset.size() == 0) throw std::domain_error("hard_encode_dataset: empty dataset");
  BitMatrix bits(dataset.size(), model.rep_length);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const std::vector<double> rep = encode(model, dataset.samples[r], EncodeMode::Hard);
    for (std::size_t c = 0; c < model.rep_length; ++c) {
      bits.set(r, c, rep[c] >= 0.5 ? 1 : 0);
    }
  }
  return bits;
}

void save_checkpoint(const ContrastiveModel& model, const TrainConfig& train_config,
                     const std::filesystem::path& path) {
  model.validate();
  nlohmann::json j;
  j["format"] = "bitlab-checkpoint-v1";
  j["rep_length"] = model.rep_length;
  j["scorer_context_mean"] = model.scorer_context_mean;
  j["channel"] = {{"train_noise_std", model.channel.train_noise_std},
                  {"hard_threshold", model.channel.hard_threshold}};
  j["train_config"] = {{"learning_rate", train_config.learning_rate},
                       {"adam_beta1", train_config.adam_beta1},
                       {"adam_beta2", train_config.adam_beta2},
                       {"adam_epsilon", train_config.adam_epsilon},
                       {"batch_size", train_config.batch_size},
                       {"epochs", train_config.epochs},
                       {"seed", train_config.seed},
                       {"contrast_size", train_config.contrast_size},
                       {"augment_noise_std", train_config.augmentation.additive_noise_std},
                       {"augment_scale_jitter", train_config.augmentation.scale_jitter},
                       {"augment_dropout_prob", train_config.augmentation.dropout_prob}};
  j["encoder"] = mlp_to_json(model.encoder);
  j["candidate_embedder"] = mlp_to_json(model.candidate_embedder);
  j["scorer"] = mlp_to_json(model.scorer);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "bitlab-checkpoint-v1") {
    throw std::runtime_error("load_checkpoint: unsupported format tag in " + path.string());
  }
  Checkpoint ckpt;
  ckpt.model.rep_length = j.at("rep_length").get<std::size_t>();
  ckpt.model.scorer_context_mean = j.at("scorer_context_mean").get<bool>();
  ckpt.model.channel.train_noise_std = j.at("channel").at("train_noise_std").get<double>();
  ckpt.model.channel.hard_threshold = j.at("channel").at("hard_threshold").get<double>();
  ckpt.model.encoder = mlp_from_json(j.at("encoder"));
  ckpt.model.candidate_embedder = mlp_from_json(j.at("candidate_embedder"));
  ckpt.model.scorer = mlp_from_json(j.at("scorer"));
  const auto& tc = j.at("train_config");
  ckpt.train_config.learning_rate = tc.at("learning_rate").get<double>();
  ckpt.train_config.adam_beta1 = tc.at("adam_beta1").get<double>();
  ckpt.train_config.adam_beta2 = tc.at("adam_beta2").get<double>();
  ckpt.train_config.adam_epsilon = tc.at("adam_epsilon").get<double>();
  ckpt.train_config.batch_size = tc.at("batch_size").get<std::size_t>();
  ckpt.train_config.epochs = tc.at("epochs").get<std::size_t>();
  ckpt.train_config.seed = tc.at("seed").get<std::uint64_t>();
  ckpt.train_config.contrast_size = tc.at("contrast_size").get<int>();
  ckpt.train_config.augmentation.additive_noise_std = tc.at("augment_noise_std").get<double>();
  ckpt.train_config.augmentation.scale_jitter = tc.at("augment_scale_jitter").get<double>();
  ckpt.train_config.augmentation.dropout_prob = tc.at("augment_dropout_prob").get<double>();
  ckpt.model.validate();
  return ckpt;
}

}  // namespace bitlab
