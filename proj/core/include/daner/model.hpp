#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "daner/corpus.hpp"
#include "daner/graph.hpp"
#include "daner/tensor.hpp"

namespace daner {

/// Network hyperparameters. Defaults are desk-scale so the whole pipeline
/// trains in seconds on a CPU; paper_scale_preset() holds the full-size
/// variant.
struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_encoder_layers = 2;  // >= 2: the discriminator reads the last two
  int n_heads = 4;
  int d_ffn = 128;
  int max_len = 256;
  int n_tags = 0;
  double dropout = 0.1;
  int head_hidden = 0;  // 0 means d_model

  int resolved_head_hidden() const { return head_hidden > 0 ? head_hidden : d_model; }
  bool operator==(const ModelConfig&) const = default;
};

/// Full-size configuration: 768-dimensional embeddings with a 512-unit
/// feed-forward in each encoder layer. Provided for completeness; the test
/// suite never trains it.
ModelConfig paper_scale_preset();

/// Throws InvalidConfig on a bad combination (width not divisible by heads,
/// fewer than two encoder layers, ...).
void validate_config(const ModelConfig& config);

/// Name, shape and decay flag of one parameter tensor.
struct ParamShape {
  std::string name;
  std::vector<int> dims;
  bool decay = true;
};

/// The fixed parameter order shared by initialization, optimizer state and
/// checkpoints.
std::vector<ParamShape> param_layout(const ModelConfig& config);

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;
  bool decay = true;  // false for biases and layer-norm parameters
};

/// Ordered, named collection of trainable tensors. Order is fixed at
/// construction and shared with optimizer state and checkpoints.
template <typename T>
class ParamSet {
 public:
  int add(std::string name, Tensor<T> value, bool decay);
  int count() const { return static_cast<int>(entries_.size()); }
  ParamEntry<T>& entry(int i) { return entries_[static_cast<std::size_t>(i)]; }
  const ParamEntry<T>& entry(int i) const { return entries_[static_cast<std::size_t>(i)]; }
  int find(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;
  std::int64_t total_size() const;
  bool same_layout(const ParamSet& other) const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.decay);
    return out;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, int> index_;
};

/// The three-part network: shared feature extractor (token + positional
/// embeddings and the encoder stack), NER head, and domain-discriminator
/// head behind the gradient-reversal layer. Parameter names are prefixed
/// "tok_embed"/"pos_embed"/"encN." (extractor), "ner." and "dom." (heads).
template <typename T>
struct Model {
  ModelConfig config;
  ParamSet<T> params;
};

/// Deterministic initialization: dense weights truncated-normal(0, 0.02),
/// embeddings normal(0, 0.02) with the PAD row zeroed, biases zero,
/// layer-norm gain 1 / shift 0. Draws are made in double and cast, so the
/// same seed yields the same model at either precision.
template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed);

/// Builds the forward pass for one training or inference step on `graph`.
/// All parameters are registered as differentiable leaves on construction;
/// dropout is active only in train mode.
template <typename T>
class ModelForward {
 public:
  struct Features {
    NodeId last = -1;  // output of the final encoder layer   [B, T, D]
    NodeId prev = -1;  // output of the layer before it       [B, T, D]
  };

  ModelForward(Graph<T>& graph, const Model<T>& model, bool train_mode);

  Features extract_features(const EncodedBatch& batch);
  /// Two dense layers (GELU between) + log_softmax per token. [B, T, n_tags]
  NodeId ner_log_probs(NodeId features_last);
  /// Masked mean-pool of both feature maps, concatenated, through the
  /// gradient-reversal layer (skippable for diagnostics) and the
  /// discriminator stack. [B, 2]; class 0 = source, 1 = target.
  NodeId domain_log_probs(const Features& features, const EncodedBatch& batch, T lambda,
                          bool use_grl = true);

  NodeId param_node(int index) const { return param_nodes_[static_cast<std::size_t>(index)]; }
  NodeId param_node(std::string_view name) const;
  int param_count() const { return static_cast<int>(param_nodes_.size()); }

 private:
  Graph<T>& graph_;
  const Model<T>& model_;
  bool train_mode_;
  std::vector<NodeId> param_nodes_;
};

/// Greedy per-token decode with dropout disabled; argmax ties resolve to the
/// lowest tag id. Output is repaired to valid IOB2 (an entity-opening I-X
/// becomes B-X).
template <typename T>
std::vector<std::string> predict_tags(const Model<T>& model, const Sentence& sentence,
                                      const Vocab& vocab, const TagIndex& tag_index);

/// Batched variant; one graph per chunk of `batch_size` sentences.
template <typename T>
std::vector<std::vector<std::string>> predict_tags_all(const Model<T>& model,
                                                       const std::vector<Sentence>& sentences,
                                                       const Vocab& vocab,
                                                       const TagIndex& tag_index,
                                                       int batch_size = 32);

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template Model<float> init_model<float>(const ModelConfig&, std::uint64_t);
extern template Model<double> init_model<double>(const ModelConfig&, std::uint64_t);
extern template class ModelForward<float>;
extern template class ModelForward<double>;
extern template std::vector<std::string> predict_tags<float>(const Model<float>&,
                                                             const Sentence&, const Vocab&,
                                                             const TagIndex&);
extern template std::vector<std::string> predict_tags<double>(const Model<double>&,
                                                              const Sentence&, const Vocab&,
                                                              const TagIndex&);
extern template std::vector<std::vector<std::string>> predict_tags_all<float>(
    const Model<float>&, const std::vector<Sentence>&, const Vocab&, const TagIndex&, int);
extern template std::vector<std::vector<std::string>> predict_tags_all<double>(
    const Model<double>&, const std::vector<Sentence>&, const Vocab&, const TagIndex&, int);

}  // namespace daner
