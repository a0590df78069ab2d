#include "daner/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "daner/error.hpp"
#include "daner/eval.hpp"
#include "daner/graph.hpp"
#include "daner/objective.hpp"
#include "daner/rng.hpp"

namespace daner {

void validate_train_config(const TrainConfig& config) {
  if (config.batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (!(config.lr > 0.0)) fail(ErrorKind::InvalidConfig, "lr must be > 0");
  if (config.weight_decay < 0.0) fail(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
  if (config.adam_beta1 < 0.0 || config.adam_beta1 >= 1.0 || config.adam_beta2 < 0.0 ||
      config.adam_beta2 >= 1.0)
    fail(ErrorKind::InvalidConfig, "adam betas must lie in [0, 1)");
  if (!(config.adam_eps > 0.0)) fail(ErrorKind::InvalidConfig, "adam_eps must be > 0");
  if (config.max_epochs < 1) fail(ErrorKind::InvalidConfig, "max_epochs must be >= 1");
  if (config.alpha < 0.0) fail(ErrorKind::InvalidConfig, "alpha must be >= 0");
  if (config.warmup_frac < 0.0 || config.warmup_frac >= 1.0)
    fail(ErrorKind::InvalidConfig, "warmup_frac must lie in [0, 1)");
  if (config.patience < 1) fail(ErrorKind::InvalidConfig, "patience must be >= 1");
  if (config.early_stop_metric != "token_accuracy" && config.early_stop_metric != "span_f1")
    fail(ErrorKind::InvalidConfig,
         "early_stop_metric must be token_accuracy or span_f1, got \"" +
             config.early_stop_metric + "\"");
  if (config.adapt && config.alpha > 0.0 && !(config.grl_lambda > 0.0))
    fail(ErrorKind::InvalidConfig, "grl_lambda must be > 0 when adapting");
}

std::string history_to_json(const History& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EpochRecord& e : history.epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"l_ner", e.l_ner},
                   {"l_adv", e.l_adv},
                   {"l_total", e.l_total},
                   {"val_metric", e.val_metric},
                   {"lr_last", e.lr_last}});
  }
  return arr.dump(2) + "\n";
}

BatchPlan make_batches(std::size_t n_source, std::size_t n_target, int batch_size,
                       std::uint64_t seed, int epoch) {
  if (n_source == 0) fail(ErrorKind::EmptyInput, "no source sentences to batch");
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");

  const std::uint64_t epoch_seed = seed ^ static_cast<std::uint64_t>(epoch);
  std::vector<std::size_t> src(n_source);
  std::iota(src.begin(), src.end(), std::size_t{0});
  RandomSource src_rng(epoch_seed);
  src_rng.shuffle(src);

  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t steps = (n_source + bs - 1) / bs;
  BatchPlan plan;
  plan.source.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t lo = k * bs;
    const std::size_t hi = std::min(n_source, lo + bs);
    plan.source.emplace_back(src.begin() + static_cast<std::ptrdiff_t>(lo),
                             src.begin() + static_cast<std::ptrdiff_t>(hi));
  }

  if (n_target > 0) {
    std::vector<std::size_t> tgt(n_target);
    std::iota(tgt.begin(), tgt.end(), std::size_t{0});
    RandomSource tgt_rng(mix_seed(epoch_seed));
    tgt_rng.shuffle(tgt);
    plan.target.reserve(steps);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<std::size_t> batch(bs);
      for (std::size_t j = 0; j < bs; ++j) batch[j] = tgt[cursor++ % n_target];
      plan.target.push_back(std::move(batch));
    }
  }
  return plan;
}

template <typename T>
AdamState<T> init_adam_state(const ParamSet<T>& params) {
  AdamState<T> state;
  state.m.reserve(static_cast<std::size_t>(params.count()));
  state.v.reserve(static_cast<std::size_t>(params.count()));
  for (int i = 0; i < params.count(); ++i) {
    state.m.push_back(Tensor<T>(params.entry(i).value.shape()));
    state.v.push_back(Tensor<T>(params.entry(i).value.shape()));
  }
  return state;
}

template <typename T>
void adamw_step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
                double lr_t, const TrainConfig& config) {
  if (static_cast<int>(grads.size()) != params.count())
    fail(ErrorKind::ShapeMismatch, "gradient list does not match the parameter set");
  state.t += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (int i = 0; i < params.count(); ++i) {
    ParamEntry<T>& entry = params.entry(i);
    const Tensor<T>& g = grads[static_cast<std::size_t>(i)];
    if (!g.same_shape(entry.value))
      fail(ErrorKind::ShapeMismatch, "gradient shape mismatch for " + entry.name);
    if (!g.all_finite())
      fail(ErrorKind::NonFiniteGradient, "non-finite gradient for " + entry.name);
    const double wd = entry.decay ? config.weight_decay : 0.0;
    T* p = entry.value.data();
    T* m = state.m[static_cast<std::size_t>(i)].data();
    T* v = state.v[static_cast<std::size_t>(i)].data();
    const T* gd = g.data();
    const std::int64_t n = entry.value.size();
    for (std::int64_t j = 0; j < n; ++j) {
      const double gj = static_cast<double>(gd[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      const double pj = static_cast<double>(p[j]);
      p[j] = static_cast<T>(pj - lr_t * (m_hat / (std::sqrt(v_hat) + config.adam_eps) + wd * pj));
    }
  }
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config) {
  if (total_steps < 1) fail(ErrorKind::InvalidConfig, "total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    fail(ErrorKind::OutOfRange, "step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(total_steps) + "]");
  const std::int64_t warmup =
      static_cast<std::int64_t>(config.warmup_frac * static_cast<double>(total_steps));
  if (step < warmup)
    return config.lr * static_cast<double>(step) / static_cast<double>(warmup);
  return config.lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

namespace {

// Gradient tensors in parameter order, clipped in place to global norm 1.
void clip_global_norm(std::vector<Tensor<float>>& grads) {
  double sq = 0.0;
  for (const Tensor<float>& g : grads) {
    const float* d = g.data();
    for (std::int64_t j = 0; j < g.size(); ++j) sq += static_cast<double>(d[j]) * d[j];
  }
  const double norm = std::sqrt(sq);
  if (norm <= 1.0) return;
  const float scale = static_cast<float>(1.0 / norm);
  for (Tensor<float>& g : grads) {
    float* d = g.data();
    for (std::int64_t j = 0; j < g.size(); ++j) d[j] *= scale;
  }
}

std::vector<Sentence> gather(const std::vector<Sentence>& pool,
                             const std::vector<std::size_t>& indices) {
  std::vector<Sentence> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) out.push_back(pool[idx]);
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const DatasetSplits& splits, const Dataset* target, const Vocab& vocab,
                  const TagIndex& tag_index) {
  validate_config(model_config);
  validate_train_config(train_config);
  if (model_config.vocab_size != vocab.size())
    fail(ErrorKind::InvalidConfig, "model vocab_size " + std::to_string(model_config.vocab_size) +
                                       " != vocabulary size " + std::to_string(vocab.size()));
  if (model_config.n_tags != tag_index.size())
    fail(ErrorKind::InvalidConfig, "model n_tags " + std::to_string(model_config.n_tags) +
                                       " != tag set size " + std::to_string(tag_index.size()));
  if (splits.train.sentences.empty()) fail(ErrorKind::EmptyInput, "empty training split");
  if (!splits.train.labeled) fail(ErrorKind::InvalidConfig, "training split is unlabeled");
  if (splits.val.sentences.empty()) fail(ErrorKind::EmptyInput, "empty validation split");
  if (!splits.val.labeled) fail(ErrorKind::InvalidConfig, "validation split is unlabeled");

  const bool use_domain = train_config.adapt && train_config.alpha > 0.0 && target != nullptr &&
                          !target->sentences.empty();

  Model<float> model = init_model<float>(model_config, train_config.seed);
  AdamState<float> opt = init_adam_state(model.params);

  const std::size_t n_src = splits.train.sentences.size();
  const std::size_t n_tgt = use_domain ? target->sentences.size() : 0;
  const std::size_t bs = static_cast<std::size_t>(train_config.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n_src + bs - 1) / bs);
  const std::int64_t total_steps = steps_per_epoch * train_config.max_epochs;
  const float lambda = static_cast<float>(train_config.grl_lambda);
  const float alpha = static_cast<float>(train_config.alpha);

  History history;
  Model<float> best = model;
  double best_metric = -1.0;
  int best_epoch = 0;
  std::vector<Tensor<float>> grads;
  std::int64_t global_step = 0;

  for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
    const BatchPlan plan =
        make_batches(n_src, n_tgt, train_config.batch_size, train_config.seed, epoch);
    double sum_ner = 0.0;
    double sum_adv = 0.0;
    double sum_total = 0.0;
    double last_lr = 0.0;

    for (std::size_t k = 0; k < plan.source.size(); ++k) {
      const EncodedBatch src_batch = encode_batch(gather(splits.train.sentences, plan.source[k]),
                                                  vocab, tag_index, model_config.max_len);

      // Separate stream from the two shuffles so no two consumers share a
      // generator state.
      const std::uint64_t dropout_seed =
          mix_seed(mix_seed(train_config.seed ^ static_cast<std::uint64_t>(epoch)) + 1 +
                   static_cast<std::uint64_t>(k));
      Graph<float> graph(dropout_seed);
      ModelForward<float> fwd(graph, model, /*train_mode=*/true);

      const auto src_feats = fwd.extract_features(src_batch);
      const NodeId ner_lp = fwd.ner_log_probs(src_feats.last);
      const NodeId l_ner = ner_loss(graph, ner_lp, src_batch.tags);
      NodeId l_total = l_ner;
      double adv_value = 0.0;

      if (use_domain) {
        const EncodedBatch tgt_batch = encode_batch(gather(target->sentences, plan.target[k]),
                                                    vocab, tag_index, model_config.max_len);
        const auto tgt_feats = fwd.extract_features(tgt_batch);
        const NodeId src_dom = fwd.domain_log_probs(src_feats, src_batch, lambda);
        const NodeId tgt_dom = fwd.domain_log_probs(tgt_feats, tgt_batch, lambda);
        const AdversarialNodes<float> adv = adversarial_loss(graph, src_dom, tgt_dom);
        l_total = total_loss(graph, l_ner, adv.l_adv, alpha);
        adv_value = static_cast<double>(graph.value(adv.l_adv)[0]);
      }

      const double ner_value = static_cast<double>(graph.value(l_ner)[0]);
      const double total_value = static_cast<double>(graph.value(l_total)[0]);
      if (!std::isfinite(total_value))
        fail(ErrorKind::Diverged, "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(k));
      graph.backward(l_total);

      grads.clear();
      for (int i = 0; i < model.params.count(); ++i) grads.push_back(graph.grad(fwd.param_node(i)));
      clip_global_norm(grads);

      const double lr_t = lr_at(global_step, total_steps, train_config);
      adamw_step(model.params, grads, opt, lr_t, train_config);
      ++global_step;

      sum_ner += ner_value;
      sum_adv += adv_value;
      sum_total += total_value;
      last_lr = lr_t;
    }

    const auto preds = predict_tags_all(model, splits.val.sentences, vocab, tag_index);
    const MetricsReport report = score(splits.val, preds);
    const double metric =
        train_config.early_stop_metric == "span_f1" ? report.f1 : report.token_accuracy;

    const double steps = static_cast<double>(plan.source.size());
    history.epochs.push_back({epoch, sum_ner / steps, sum_adv / steps, sum_total / steps, metric,
                              last_lr});

    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best = model;
    } else if (epoch - best_epoch >= train_config.patience) {
      break;
    }
  }

  history.best_epoch = best_epoch;
  history.best_val_metric = best_metric;
  return {std::move(best), std::move(history)};
}

template struct AdamState<float>;
template struct AdamState<double>;
template AdamState<float> init_adam_state<float>(const ParamSet<float>&);
template AdamState<double> init_adam_state<double>(const ParamSet<double>&);
template void adamw_step<float>(ParamSet<float>&, const std::vector<Tensor<float>>&,
                                AdamState<float>&, double, const TrainConfig&);
template void adamw_step<double>(ParamSet<double>&, const std::vector<Tensor<double>>&,
                                 AdamState<double>&, double, const TrainConfig&);

}  // namespace daner
