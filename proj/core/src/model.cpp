#include "daner/model.hpp"

#include <algorithm>

#include "daner/error.hpp"
#include "daner/rng.hpp"

namespace daner {

ModelConfig paper_scale_preset() {
  ModelConfig config;
  config.d_model = 768;
  config.d_ffn = 512;
  config.n_heads = 12;
  config.n_encoder_layers = 2;
  config.max_len = 256;
  config.dropout = 0.1;
  return config;
}

void validate_config(const ModelConfig& config) {
  if (config.vocab_size < 2)
    fail(ErrorKind::InvalidConfig, "vocab_size must cover PAD and UNK");
  if (config.n_tags < 1) fail(ErrorKind::InvalidConfig, "n_tags must be >= 1");
  if (config.d_model < 1 || config.n_heads < 1 || config.d_model % config.n_heads != 0)
    fail(ErrorKind::InvalidConfig, "d_model must be a positive multiple of n_heads");
  if (config.n_encoder_layers < 2)
    fail(ErrorKind::InvalidConfig,
         "need at least 2 encoder layers (the discriminator reads the last two)");
  if (config.d_ffn < 1) fail(ErrorKind::InvalidConfig, "d_ffn must be >= 1");
  if (config.max_len < 1) fail(ErrorKind::InvalidConfig, "max_len must be >= 1");
  if (config.dropout < 0.0 || config.dropout >= 1.0)
    fail(ErrorKind::InvalidConfig, "dropout must be in [0, 1)");
}

template <typename T>
int ParamSet<T>::add(std::string name, Tensor<T> value, bool decay) {
  if (index_.count(name)) fail(ErrorKind::InvalidConfig, "duplicate parameter " + name);
  const int id = count();
  index_.emplace(name, id);
  entries_.push_back({std::move(name), std::move(value), decay});
  return id;
}

template <typename T>
int ParamSet<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(std::string_view name) {
  const int id = find(name);
  if (id < 0) fail(ErrorKind::InvalidConfig, "unknown parameter " + std::string(name));
  return entries_[static_cast<std::size_t>(id)].value;
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

template <typename T>
std::int64_t ParamSet<T>::total_size() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
bool ParamSet<T>::same_layout(const ParamSet& other) const {
  if (count() != other.count()) return false;
  for (int i = 0; i < count(); ++i) {
    if (entries_[static_cast<std::size_t>(i)].name !=
        other.entries_[static_cast<std::size_t>(i)].name)
      return false;
    if (entries_[static_cast<std::size_t>(i)].value.shape() !=
        other.entries_[static_cast<std::size_t>(i)].value.shape())
      return false;
  }
  return true;
}

std::vector<ParamShape> param_layout(const ModelConfig& config) {
  validate_config(config);
  const int d = config.d_model;
  const int hh = config.resolved_head_hidden();
  std::vector<ParamShape> layout;
  layout.push_back({"tok_embed", {config.vocab_size, d}, true});
  layout.push_back({"pos_embed", {config.max_len, d}, true});
  for (int layer = 0; layer < config.n_encoder_layers; ++layer) {
    const std::string prefix = "enc" + std::to_string(layer) + ".";
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      layout.push_back({prefix + w, {d, d}, true});
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      layout.push_back({prefix + b, {d}, false});
    layout.push_back({prefix + "ln1.gain", {d}, false});
    layout.push_back({prefix + "ln1.shift", {d}, false});
    layout.push_back({prefix + "ffn.w1", {d, config.d_ffn}, true});
    layout.push_back({prefix + "ffn.b1", {config.d_ffn}, false});
    layout.push_back({prefix + "ffn.w2", {config.d_ffn, d}, true});
    layout.push_back({prefix + "ffn.b2", {d}, false});
    layout.push_back({prefix + "ln2.gain", {d}, false});
    layout.push_back({prefix + "ln2.shift", {d}, false});
  }
  layout.push_back({"ner.w1", {d, hh}, true});
  layout.push_back({"ner.b1", {hh}, false});
  layout.push_back({"ner.w2", {hh, config.n_tags}, true});
  layout.push_back({"ner.b2", {config.n_tags}, false});
  layout.push_back({"dom.w1", {2 * d, hh}, true});
  layout.push_back({"dom.b1", {hh}, false});
  layout.push_back({"dom.w2", {hh, 2}, true});
  layout.push_back({"dom.b2", {2}, false});
  return layout;
}

template <typename T>
Model<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  RandomSource rng(seed);
  Model<T> model;
  model.config = config;
  for (ParamShape& ps : param_layout(config)) {
    Tensor<T> t(ps.dims);
    if (ps.name == "tok_embed" || ps.name == "pos_embed") {
      for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(0.0, 0.02));
      if (ps.name == "tok_embed")
        for (int c = 0; c < config.d_model; ++c) t[c] = T(0);  // PAD row
    } else if (ps.decay) {
      for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.truncated_normal(0.02));
    } else if (ps.name.ends_with(".gain")) {
      for (std::int64_t i = 0; i < t.size(); ++i) t[i] = T(1);
    }
    model.params.add(std::move(ps.name), std::move(t), ps.decay);
  }
  return model;
}

template <typename T>
ModelForward<T>::ModelForward(Graph<T>& graph, const Model<T>& model, bool train_mode)
    : graph_(graph), model_(model), train_mode_(train_mode) {
  validate_config(model.config);
  param_nodes_.reserve(static_cast<std::size_t>(model.params.count()));
  for (int i = 0; i < model.params.count(); ++i)
    param_nodes_.push_back(graph_.param(model.params.entry(i).value));
}

template <typename T>
NodeId ModelForward<T>::param_node(std::string_view name) const {
  const int id = model_.params.find(name);
  if (id < 0) fail(ErrorKind::InvalidConfig, "unknown parameter " + std::string(name));
  return param_nodes_[static_cast<std::size_t>(id)];
}

template <typename T>
typename ModelForward<T>::Features ModelForward<T>::extract_features(const EncodedBatch& batch) {
  const ModelConfig& cfg = model_.config;
  if (batch.cols > cfg.max_len)
    fail(ErrorKind::OutOfRange, "batch width exceeds max_len");
  const int b_dim = batch.rows, t_dim = batch.cols;
  const double rate = train_mode_ ? cfg.dropout : 0.0;

  std::vector<std::int32_t> positions(static_cast<std::size_t>(b_dim) * t_dim);
  for (int b = 0; b < b_dim; ++b)
    for (int t = 0; t < t_dim; ++t) positions[static_cast<std::size_t>(b) * t_dim + t] = t;

  Tensor<T> additive_mask({b_dim, t_dim});
  for (std::int64_t i = 0; i < additive_mask.size(); ++i)
    additive_mask[i] = batch.mask[static_cast<std::size_t>(i)] ? T(0) : T(-1e9);

  NodeId x = graph_.add(graph_.embedding(param_node("tok_embed"), batch.ids, b_dim, t_dim),
                        graph_.embedding(param_node("pos_embed"), positions, b_dim, t_dim));
  x = graph_.dropout(x, rate);

  NodeId prev = x;  // after the loop: output of the second-to-last layer
  for (int layer = 0; layer < cfg.n_encoder_layers; ++layer) {
    const NodeId layer_input = x;
    const std::string pre = "enc" + std::to_string(layer) + ".";
    auto dense = [&](NodeId in, const std::string& w, const std::string& b) {
      return graph_.add(graph_.matmul(in, param_node(pre + w)), param_node(pre + b));
    };
    NodeId q = graph_.split_heads(dense(x, "attn.wq", "attn.bq"), cfg.n_heads);
    NodeId k = graph_.split_heads(dense(x, "attn.wk", "attn.bk"), cfg.n_heads);
    NodeId v = graph_.split_heads(dense(x, "attn.wv", "attn.bv"), cfg.n_heads);
    NodeId att = graph_.merge_heads(graph_.attention(q, k, v, additive_mask));
    att = graph_.dropout(dense(att, "attn.wo", "attn.bo"), rate);
    x = graph_.layer_norm(graph_.add(x, att), param_node(pre + "ln1.gain"),
                          param_node(pre + "ln1.shift"));

    NodeId ff = graph_.gelu(dense(x, "ffn.w1", "ffn.b1"));
    ff = graph_.dropout(dense(ff, "ffn.w2", "ffn.b2"), rate);
    x = graph_.layer_norm(graph_.add(x, ff), param_node(pre + "ln2.gain"),
                          param_node(pre + "ln2.shift"));
    prev = layer_input;
  }
  return Features{x, prev};
}

template <typename T>
NodeId ModelForward<T>::ner_log_probs(NodeId features_last) {
  NodeId h = graph_.add(graph_.matmul(features_last, param_node("ner.w1")),
                        param_node("ner.b1"));
  h = graph_.gelu(h);
  NodeId logits = graph_.add(graph_.matmul(h, param_node("ner.w2")), param_node("ner.b2"));
  return graph_.log_softmax(logits);
}

template <typename T>
NodeId ModelForward<T>::domain_log_probs(const Features& features, const EncodedBatch& batch,
                                         T lambda, bool use_grl) {
  NodeId pooled = graph_.concat_last(graph_.masked_mean_pool(features.last, batch.mask),
                                     graph_.masked_mean_pool(features.prev, batch.mask));
  NodeId x = use_grl ? graph_.gradient_reversal(pooled, lambda) : pooled;
  NodeId h = graph_.add(graph_.matmul(x, param_node("dom.w1")), param_node("dom.b1"));
  h = graph_.gelu(h);
  NodeId logits = graph_.add(graph_.matmul(h, param_node("dom.w2")), param_node("dom.b2"));
  return graph_.log_softmax(logits);
}

namespace {

/// Illegal entity-opening I-X tags become B-X; everything else is kept.
/// Same rule as the IOB1 repair, which is exactly the legality condition.
std::vector<std::string> repair_iob(std::vector<std::string> tags) {
  return iob1_to_iob2(tags);
}

}  // namespace

template <typename T>
std::vector<std::vector<std::string>> predict_tags_all(const Model<T>& model,
                                                       const std::vector<Sentence>& sentences,
                                                       const Vocab& vocab,
                                                       const TagIndex& tag_index,
                                                       int batch_size) {
  for (const auto& s : sentences)
    if (s.tokens.empty()) fail(ErrorKind::EmptySentence, "cannot tag an empty sentence");
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");

  std::vector<std::vector<std::string>> out;
  out.reserve(sentences.size());
  for (std::size_t begin = 0; begin < sentences.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(sentences.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<Sentence> chunk;
    chunk.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      Sentence stripped;  // gold tags, if any, must not influence encoding
      stripped.tokens = sentences[i].tokens;
      chunk.push_back(std::move(stripped));
    }
    EncodedBatch batch = encode_batch(chunk, vocab, tag_index, model.config.max_len);

    Graph<T> graph(0);
    ModelForward<T> forward(graph, model, /*train_mode=*/false);
    auto features = forward.extract_features(batch);
    const Tensor<T>& lp = graph.value(forward.ner_log_probs(features.last));

    const int n_tags = model.config.n_tags;
    for (int r = 0; r < batch.rows; ++r) {
      const int len = static_cast<int>(chunk[static_cast<std::size_t>(r)].tokens.size());
      const int used = std::min(len, batch.cols);
      std::vector<std::string> tags;
      tags.reserve(static_cast<std::size_t>(len));
      for (int t = 0; t < used; ++t) {
        const T* row = lp.data() + (static_cast<std::int64_t>(r) * batch.cols + t) * n_tags;
        int best = 0;
        for (int c = 1; c < n_tags; ++c)
          if (row[c] > row[best]) best = c;  // ties keep the lowest id
        tags.push_back(tag_index.id_to_tag[static_cast<std::size_t>(best)]);
      }
      // truncated tail (sentences beyond max_len) falls back to O
      for (int t = used; t < len; ++t) tags.push_back("O");
      out.push_back(repair_iob(std::move(tags)));
    }
  }
  return out;
}

template <typename T>
std::vector<std::string> predict_tags(const Model<T>& model, const Sentence& sentence,
                                      const Vocab& vocab, const TagIndex& tag_index) {
  return predict_tags_all(model, {sentence}, vocab, tag_index, 1).front();
}

template class ParamSet<float>;
template class ParamSet<double>;
template Model<float> init_model<float>(const ModelConfig&, std::uint64_t);
template Model<double> init_model<double>(const ModelConfig&, std::uint64_t);
template class ModelForward<float>;
template class ModelForward<double>;
template std::vector<std::string> predict_tags<float>(const Model<float>&, const Sentence&,
                                                      const Vocab&, const TagIndex&);
template std::vector<std::string> predict_tags<double>(const Model<double>&, const Sentence&,
                                                       const Vocab&, const TagIndex&);
template std::vector<std::vector<std::string>> predict_tags_all<float>(
    const Model<float>&, const std::vector<Sentence>&, const Vocab&, const TagIndex&, int);
template std::vector<std::vector<std::string>> predict_tags_all<double>(
    const Model<double>&, const std::vector<Sentence>&, const Vocab&, const TagIndex&, int);

}  // namespace daner
