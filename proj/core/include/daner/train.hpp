#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daner/corpus.hpp"
#include "daner/model.hpp"
#include "daner/tensor.hpp"

namespace daner {

struct TrainConfig {
  int batch_size = 16;
  double lr = 2e-5;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 16;
  double alpha = 2.0;        // weight of the adversarial term in the total loss
  double grl_lambda = 1.0;   // gradient-reversal strength
  double warmup_frac = 0.1;  // fraction of total steps spent in linear warmup
  std::uint64_t seed = 42;
  std::string early_stop_metric = "token_accuracy";  // or "span_f1"
  int patience = 3;                                  // epochs without improvement
  bool adapt = true;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws InvalidConfig on out-of-range fields or an unknown metric name.
void validate_train_config(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double l_ner = 0.0;   // epoch mean
  double l_adv = 0.0;   // epoch mean; 0 when the domain branch is off
  double l_total = 0.0; // epoch mean
  double val_metric = 0.0;
  double lr_last = 0.0; // learning rate of the epoch's final step
};

struct History {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_metric = 0.0;
};

/// History as a JSON array of per-epoch records.
std::string history_to_json(const History& history);

/// Index batches for one epoch: `source[k]` and (when a target corpus is
/// present) `target[k]` list the sentence indices of step k.
struct BatchPlan {
  std::vector<std::vector<std::size_t>> source;
  std::vector<std::vector<std::size_t>> target;  // empty without a target corpus
};

/// Shuffles source indices with seed xor epoch; ceil(n_source / batch_size)
/// steps. Each step also draws batch_size indices from an independently
/// shuffled target stream that wraps around when exhausted. n_target = 0
/// means no target corpus.
BatchPlan make_batches(std::size_t n_source, std::size_t n_target, int batch_size,
                       std::uint64_t seed, int epoch);

/// AdamW moment buffers, one pair per parameter tensor, plus the step count.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;
};

template <typename T>
AdamState<T> init_adam_state(const ParamSet<T>& params);

/// One decoupled-weight-decay update:
///   p <- p - lr_t * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// with bias-corrected moments. Parameters flagged decay=false (biases,
/// layer-norm) skip the decay term. Throws NonFiniteGradient.
template <typename T>
void adamw_step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
                double lr_t, const TrainConfig& config);

/// Linear warmup from 0 to config.lr over floor(warmup_frac * total_steps)
/// steps, then linear decay to 0 at total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config);

struct TrainResult {
  Model<float> model;  // best-validation snapshot, not the final state
  History history;
};

/// The full training loop: per step, forward the tagging branch on a source
/// batch (and, when adapting, the domain branch on a source/target pair),
/// backward on the combined loss, clip the global gradient norm to 1.0 and
/// apply AdamW with the scheduled rate. After each epoch the early-stop
/// metric is computed on splits.val; training stops at max_epochs or after
/// `patience` epochs without improvement. `target` may be null. vocab and
/// tag_index must be built from splits.train and match model_config's
/// vocab_size / n_tags. Throws Diverged when the loss turns non-finite.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const DatasetSplits& splits, const Dataset* target, const Vocab& vocab,
                  const TagIndex& tag_index);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template AdamState<float> init_adam_state<float>(const ParamSet<float>&);
extern template AdamState<double> init_adam_state<double>(const ParamSet<double>&);
extern template void adamw_step<float>(ParamSet<float>&, const std::vector<Tensor<float>>&,
                                       AdamState<float>&, double, const TrainConfig&);
extern template void adamw_step<double>(ParamSet<double>&, const std::vector<Tensor<double>>&,
                                        AdamState<double>&, double, const TrainConfig&);

}  // namespace daner
