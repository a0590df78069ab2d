// Micro benchmarks for the hot paths: corpus I/O, batch encoding, the
// adversarial training step (graph build, forward, backward), greedy
// inference, and span scoring. Run with --benchmark_min_time=... to trade
// noise for wall time.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "daner/corpus.hpp"
#include "daner/eval.hpp"
#include "daner/graph.hpp"
#include "daner/model.hpp"
#include "daner/objective.hpp"
#include "daner/synth.hpp"

namespace {

using namespace daner;

struct BenchData {
  SynthOutput corpora;
  std::string source_text;
  Vocab vocab;
  TagIndex tag_index;
  Model<float> model;
  EncodedBatch source_batch;
  EncodedBatch target_batch;
  std::int64_t batch_tokens = 0;
  std::vector<std::vector<std::string>> predictions;
};

const BenchData& data() {
  static const BenchData d = [] {
    BenchData out;
    SynthConfig sc;
    sc.n_source_labeled = 256;
    sc.n_target_unlabeled = 256;
    sc.n_test_shifted = 64;
    sc.seed = 7;
    out.corpora = generate(sc);
    out.source_text = serialize_conll(out.corpora.source);
    out.vocab = build_vocab(out.corpora.source, 2);
    out.tag_index = make_tag_index(out.corpora.source.classes);

    ModelConfig mc;
    mc.vocab_size = out.vocab.size();
    mc.n_tags = out.tag_index.size();
    mc.d_model = 64;
    mc.n_heads = 4;
    mc.d_ffn = 128;
    mc.max_len = 32;
    mc.dropout = 0.1;
    out.model = init_model<float>(mc, 1);

    const std::vector<Sentence> src(out.corpora.source.sentences.begin(),
                                    out.corpora.source.sentences.begin() + 16);
    const std::vector<Sentence> tgt(out.corpora.target.sentences.begin(),
                                    out.corpora.target.sentences.begin() + 16);
    out.source_batch = encode_batch(src, out.vocab, out.tag_index, mc.max_len);
    out.target_batch = encode_batch(tgt, out.vocab, out.tag_index, mc.max_len);
    out.batch_tokens = std::accumulate(out.source_batch.mask.begin(),
                                       out.source_batch.mask.end(), std::int64_t{0});

    out.predictions =
        predict_tags_all(out.model, out.corpora.test_in.sentences, out.vocab, out.tag_index);
    return out;
  }();
  return d;
}

void BM_ParseConll(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    Dataset parsed = parse_conll(d.source_text, true);
    benchmark::DoNotOptimize(parsed);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(d.source_text.size()));
}
BENCHMARK(BM_ParseConll);

void BM_SerializeConll(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    std::string text = serialize_conll(d.corpora.source);
    benchmark::DoNotOptimize(text);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(d.source_text.size()));
}
BENCHMARK(BM_SerializeConll);

void BM_EncodeBatch(benchmark::State& state) {
  const auto& d = data();
  const std::vector<Sentence> batch(d.corpora.source.sentences.begin(),
                                    d.corpora.source.sentences.begin() + 16);
  for (auto _ : state) {
    EncodedBatch encoded = encode_batch(batch, d.vocab, d.tag_index, d.model.config.max_len);
    benchmark::DoNotOptimize(encoded);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * d.batch_tokens);
}
BENCHMARK(BM_EncodeBatch);

// One full adversarial training step minus the optimizer: graph build,
// forward over source and target batches, loss composition, backward.
void BM_TrainStep(benchmark::State& state) {
  const auto& d = data();
  std::vector<std::int32_t> tags(d.source_batch.tags.begin(), d.source_batch.tags.end());
  for (auto _ : state) {
    Graph<float> graph(42);
    ModelForward<float> fwd(graph, d.model, true);
    const auto src_feats = fwd.extract_features(d.source_batch);
    const NodeId log_probs = fwd.ner_log_probs(src_feats.last);
    const NodeId l_ner = ner_loss(graph, log_probs, tags);
    const auto tgt_feats = fwd.extract_features(d.target_batch);
    const NodeId src_dom = fwd.domain_log_probs(src_feats, d.source_batch, 1.0f);
    const NodeId tgt_dom = fwd.domain_log_probs(tgt_feats, d.target_batch, 1.0f);
    const auto adv = adversarial_loss(graph, src_dom, tgt_dom);
    const NodeId l_total = total_loss(graph, l_ner, adv.l_adv, 2.0f);
    graph.backward(l_total);
    benchmark::DoNotOptimize(graph.value(l_total)[0]);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * d.batch_tokens);
}
BENCHMARK(BM_TrainStep);

void BM_PredictTags(benchmark::State& state) {
  const auto& d = data();
  std::int64_t tokens = 0;
  for (const auto& s : d.corpora.test_in.sentences) {
    tokens += static_cast<std::int64_t>(s.tokens.size());
  }
  for (auto _ : state) {
    auto tags = predict_tags_all(d.model, d.corpora.test_in.sentences, d.vocab, d.tag_index);
    benchmark::DoNotOptimize(tags);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * tokens);
}
BENCHMARK(BM_PredictTags);

void BM_ScoreSpans(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    MetricsReport m = score(d.corpora.test_in, d.predictions);
    benchmark::DoNotOptimize(m.f1);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(d.corpora.test_in.sentences.size()));
}
BENCHMARK(BM_ScoreSpans);

}  // namespace

BENCHMARK_MAIN();
