// End-to-end acceptance checks. Each criterion prints one line:
//   criterion N: PASS — <description>
// and the process exits 0 only if every criterion passes. Pass criterion
// numbers as arguments to run a subset, e.g. "acceptance 4 5".

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "daner/checkpoint.hpp"
#include "daner/corpus.hpp"
#include "daner/error.hpp"
#include "daner/eval.hpp"
#include "daner/grad_check.hpp"
#include "daner/graph.hpp"
#include "daner/model.hpp"
#include "daner/objective.hpp"
#include "daner/rng.hpp"
#include "daner/synth.hpp"
#include "daner/train.hpp"

namespace fs = std::filesystem;
using namespace daner;

namespace {

// Adapted minus baseline mean span F1 on the shifted test set must exceed
// this. Pinned from a five-seed calibration run of this binary; the per-seed
// scores are printed on stderr every time criterion 4 executes.
constexpr double kShiftF1Margin = 0.05;

// --- criterion plumbing -----------------------------------------------------

struct CheckFailure {
  std::string detail;
};

void require(bool ok, const std::string& detail) {
  if (!ok) throw CheckFailure{detail};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- shared generators ------------------------------------------------------

const std::vector<std::string> kSpanClasses = {"PER", "LOC", "ORG", "MISC", "GPE"};

std::vector<std::string> random_tags(RandomSource& rng, std::size_t len) {
  std::vector<std::string> tags;
  while (tags.size() < len) {
    if (rng.uniform() < 0.55) {
      tags.push_back("O");
      continue;
    }
    const std::string& cls = kSpanClasses[rng.uniform_int(kSpanClasses.size())];
    tags.push_back("B-" + cls);
    while (tags.size() < len && rng.uniform() < 0.4) tags.push_back("I-" + cls);
  }
  return tags;
}

std::vector<std::string> random_pred(RandomSource& rng, const std::vector<std::string>& gold_tags) {
  const std::size_t n = gold_tags.size();
  if (rng.uniform() < 0.5) return random_tags(rng, n);

  std::vector<EntitySpan> kept;
  auto overlaps_kept = [&](const EntitySpan& sp) {
    for (const EntitySpan& k : kept)
      if (sp.start < k.end && k.start < sp.end) return true;
    return false;
  };
  for (EntitySpan sp : tags_to_spans(gold_tags)) {
    const double u = rng.uniform();
    if (u < 0.25) continue;
    if (u < 0.45) {
      if (rng.bernoulli(0.5)) {
        if (sp.end < static_cast<int>(n)) ++sp.end;
      } else {
        if (sp.start > 0) --sp.start;
      }
    } else if (u < 0.6) {
      sp.cls = kSpanClasses[rng.uniform_int(kSpanClasses.size())];
    }
    if (!overlaps_kept(sp)) kept.push_back(sp);
  }
  std::sort(kept.begin(), kept.end());
  return spans_to_tags(kept, n);
}

std::string random_token(RandomSource& rng) {
  const int len = 1 + static_cast<int>(rng.uniform_int(8));
  std::string word;
  for (int i = 0; i < len; ++i)
    word += static_cast<char>('a' + rng.uniform_int(26));
  return word;
}

/// Token identity determines the tag, so a tagger only has to memorize the
/// lexicon. Used where training must make fast, visible progress.
Dataset easy_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::pair<std::string, std::string>> words = {
      {"jean", "B-PER"},  {"marie", "B-PER"}, {"luc", "B-PER"},
      {"paris", "B-LOC"}, {"lyon", "B-LOC"},  {"nice", "B-LOC"},
      {"le", "O"},        {"la", "O"},        {"et", "O"},
      {"dans", "O"},      {"va", "O"},        {"vers", "O"}};
  RandomSource rng(seed);
  Dataset data;
  data.labeled = true;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence sent;
    sent.tags.emplace();
    const int len = 4 + static_cast<int>(rng.uniform_int(5));
    for (int j = 0; j < len; ++j) {
      const auto& [token, tag] = words[rng.uniform_int(words.size())];
      sent.tokens.push_back(token);
      sent.tags->push_back(tag);
    }
    data.sentences.push_back(std::move(sent));
  }
  data.classes = collect_classes(data.sentences);
  return data;
}

// --- tiny double-precision model fixture ------------------------------------

struct TinyFixture {
  ModelConfig config;
  Model<double> model;
  EncodedBatch source;
  EncodedBatch target;
};

EncodedBatch hand_batch(RandomSource& rng, const std::vector<int>& lengths, int vocab_size,
                        int n_tags, bool labeled) {
  EncodedBatch batch;
  batch.rows = static_cast<int>(lengths.size());
  batch.cols = *std::max_element(lengths.begin(), lengths.end());
  for (int len : lengths) {
    for (int c = 0; c < batch.cols; ++c) {
      const bool real = c < len;
      batch.ids.push_back(real ? 2 + static_cast<std::int32_t>(rng.uniform_int(
                                         static_cast<std::uint64_t>(vocab_size - 2)))
                               : Vocab::kPad);
      batch.mask.push_back(real ? 1 : 0);
      batch.tags.push_back(
          real && labeled
              ? static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(n_tags)))
              : EncodedBatch::kIgnore);
    }
  }
  return batch;
}

TinyFixture tiny_fixture() {
  TinyFixture fx;
  fx.config.vocab_size = 50;
  fx.config.d_model = 16;
  fx.config.n_encoder_layers = 2;
  fx.config.n_heads = 4;
  fx.config.d_ffn = 32;
  fx.config.max_len = 16;
  fx.config.n_tags = 5;
  fx.config.dropout = 0.0;
  fx.model = init_model<double>(fx.config, 123);
  RandomSource rng(4242);
  fx.source = hand_batch(rng, {7, 5}, fx.config.vocab_size, fx.config.n_tags, true);
  fx.target = hand_batch(rng, {6, 4}, fx.config.vocab_size, fx.config.n_tags, false);
  return fx;
}

// --- criterion 1 ------------------------------------------------------------

void criterion_grl_contract() {
  const auto start = std::chrono::steady_clock::now();
  RandomSource rng(1001);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> shape;
    const int rank = 1 + static_cast<int>(rng.uniform_int(3));
    for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int>(rng.uniform_int(6)));
    Tensor<double> x(shape);
    Tensor<double> upstream(shape);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal() * 3.0;
      upstream[i] = rng.normal() * 2.0;
    }
    const double lambda = 0.25 + rng.uniform() * 3.0;

    Graph<double> graph;
    const NodeId xn = graph.param(x);
    const NodeId yn = graph.gradient_reversal(xn, lambda);
    require(std::memcmp(graph.value(yn).data(), x.data(),
                        sizeof(double) * static_cast<std::size_t>(x.size())) == 0,
            "forward pass altered at least one bit");

    graph.backward(graph.weighted_sum(yn, upstream));
    const Tensor<double>& gx = graph.grad(xn);
    for (std::int64_t i = 0; i < x.size(); ++i)
      require(gx[i] == -lambda * upstream[i],
              "backward grad is not exactly -lambda * upstream");
  }
  const double elapsed = seconds_since(start);
  require(elapsed < 1.0, "took " + std::to_string(elapsed) + " s, limit 1 s");
}

// --- criterion 2 ------------------------------------------------------------

void criterion_finite_differences() {
  const auto start = std::chrono::steady_clock::now();
  TinyFixture fx = tiny_fixture();

  std::vector<int> theta_f, theta_n, theta_d;
  for (int i = 0; i < fx.model.params.count(); ++i) {
    const std::string& name = fx.model.params.entry(i).name;
    if (name.rfind("ner.", 0) == 0)
      theta_n.push_back(i);
    else if (name.rfind("dom.", 0) == 0)
      theta_d.push_back(i);
    else
      theta_f.push_back(i);
  }

  const auto tag_loss = [&]() {
    Graph<double> graph;
    ModelForward<double> mf(graph, fx.model, /*train_mode=*/false);
    const auto feats = mf.extract_features(fx.source);
    return graph.value(ner_loss(graph, mf.ner_log_probs(feats.last), fx.source.tags))[0];
  };
  const auto domain_loss = [&](bool use_grl) {
    Graph<double> graph;
    ModelForward<double> mf(graph, fx.model, /*train_mode=*/false);
    const auto fs = mf.extract_features(fx.source);
    const auto ft = mf.extract_features(fx.target);
    const NodeId ds = mf.domain_log_probs(fs, fx.source, 1.0, use_grl);
    const NodeId dt = mf.domain_log_probs(ft, fx.target, 1.0, use_grl);
    return graph.value(adversarial_loss(graph, ds, dt).l_adv)[0];
  };

  // Analytic gradients, one backward per loss.
  std::vector<Tensor<double>> rev_tag(static_cast<std::size_t>(fx.model.params.count()));
  {
    Graph<double> graph;
    ModelForward<double> mf(graph, fx.model, false);
    const auto feats = mf.extract_features(fx.source);
    graph.backward(ner_loss(graph, mf.ner_log_probs(feats.last), fx.source.tags));
    for (int i : theta_f) rev_tag[static_cast<std::size_t>(i)] = graph.grad(mf.param_node(i));
    for (int i : theta_n) rev_tag[static_cast<std::size_t>(i)] = graph.grad(mf.param_node(i));
  }
  std::vector<Tensor<double>> rev_adv(static_cast<std::size_t>(fx.model.params.count()));
  {
    Graph<double> graph;
    ModelForward<double> mf(graph, fx.model, false);
    const auto fs = mf.extract_features(fx.source);
    const auto ft = mf.extract_features(fx.target);
    const NodeId ds = mf.domain_log_probs(fs, fx.source, 1.0, /*use_grl=*/true);
    const NodeId dt = mf.domain_log_probs(ft, fx.target, 1.0, /*use_grl=*/true);
    graph.backward(adversarial_loss(graph, ds, dt).l_adv);
    for (int i : theta_f) rev_adv[static_cast<std::size_t>(i)] = graph.grad(mf.param_node(i));
    for (int i : theta_d) rev_adv[static_cast<std::size_t>(i)] = graph.grad(mf.param_node(i));
  }

  // Finite-difference noise is about |f| * ulp / eps, so gradients far below
  // 1e-4 cannot be resolved to a meaningful ratio; the floor absorbs them
  // while leaving scale-level disagreements visible.
  constexpr double kFloor = 1e-4;
  constexpr double kTol = 1e-6;

  const auto fd_for = [&](const std::vector<int>& indices, const std::function<double()>& f) {
    std::vector<Tensor<double>*> ptrs;
    for (int i : indices) ptrs.push_back(&fx.model.params.entry(i).value);
    return finite_diff_grad(f, ptrs);
  };

  double worst_tag = 0.0;
  {
    std::vector<int> tag_params = theta_f;
    tag_params.insert(tag_params.end(), theta_n.begin(), theta_n.end());
    const auto fd = fd_for(tag_params, tag_loss);
    for (std::size_t k = 0; k < tag_params.size(); ++k)
      worst_tag = std::max(
          worst_tag,
          max_relative_error(rev_tag[static_cast<std::size_t>(tag_params[k])], fd[k], kFloor));
    require(worst_tag <= kTol,
            "tagging-loss gradients: max rel err " + std::to_string(worst_tag));
  }

  double worst_dom = 0.0;
  double worst_neg = 0.0;
  {
    std::vector<int> adv_params = theta_d;
    adv_params.insert(adv_params.end(), theta_f.begin(), theta_f.end());
    const auto fd = fd_for(adv_params, [&] { return domain_loss(false); });
    for (std::size_t k = 0; k < theta_d.size(); ++k)
      worst_dom = std::max(
          worst_dom,
          max_relative_error(rev_adv[static_cast<std::size_t>(theta_d[k])], fd[k], kFloor));
    require(worst_dom <= kTol,
            "discriminator gradients: max rel err " + std::to_string(worst_dom));

    // With the reversal layer in place, the extractor's analytic gradient
    // must be the exact negation of the finite-difference gradient taken
    // with the identity in its place.
    for (std::size_t k = 0; k < theta_f.size(); ++k) {
      Tensor<double> negated = fd[theta_d.size() + k];
      for (std::int64_t i = 0; i < negated.size(); ++i) negated[i] = -negated[i];
      worst_neg = std::max(
          worst_neg,
          max_relative_error(rev_adv[static_cast<std::size_t>(theta_f[k])], negated, kFloor));
    }
    require(worst_neg <= kTol,
            "reversed extractor gradients: max rel err " + std::to_string(worst_neg));
  }

  const double elapsed = seconds_since(start);
  std::fprintf(stderr,
               "  gradient checks: max rel err %.3g (tagging), %.3g (discriminator), "
               "%.3g (reversed extractor); %.1f s\n",
               worst_tag, worst_dom, worst_neg, elapsed);
  require(elapsed < 120.0, "took " + std::to_string(elapsed) + " s, limit 120 s");
}

// --- criterion 3 ------------------------------------------------------------

void criterion_loss_composition() {
  TinyFixture fx = tiny_fixture();
  for (const double alpha : {0.0, 1.0, 2.0}) {
    Graph<double> graph;
    ModelForward<double> mf(graph, fx.model, false);
    const auto fs = mf.extract_features(fx.source);
    const auto ft = mf.extract_features(fx.target);
    const NodeId l_ner = ner_loss(graph, mf.ner_log_probs(fs.last), fx.source.tags);
    const NodeId ds = mf.domain_log_probs(fs, fx.source, 1.0);
    const NodeId dt = mf.domain_log_probs(ft, fx.target, 1.0);
    const auto adv = adversarial_loss(graph, ds, dt);
    const NodeId total = total_loss(graph, l_ner, adv.l_adv, alpha);

    const double ner_v = graph.value(l_ner)[0];
    const double adv_v = graph.value(adv.l_adv)[0];
    const double total_v = graph.value(total)[0];
    require(total_v == ner_v + alpha * adv_v,
            "alpha " + std::to_string(alpha) + ": total is not exactly l_ner + alpha * l_adv");
    require(combine_total(ner_v, adv_v, alpha) == total_v,
            "combine_total disagrees with the graph");
    require(graph.value(adv.l_adv)[0] ==
                graph.value(adv.l_ds)[0] + graph.value(adv.l_dt)[0],
            "l_adv is not exactly l_ds + l_dt");
  }

  // A run with the adversarial weight at zero must equal adaptation off, to
  // the last bit of both the history and the weights.
  Dataset corpus = easy_corpus(80, 2024);
  Dataset target_corpus;
  target_corpus.labeled = false;
  for (const Sentence& sent : corpus.sentences)
    target_corpus.sentences.push_back(Sentence{sent.tokens, std::nullopt});

  DatasetSplits splits;
  splits.train = corpus;
  splits.val = corpus;
  splits.test = corpus;
  const Vocab vocab = build_vocab(splits.train, 1);
  const TagIndex tag_index = make_tag_index(splits.train.classes);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.n_tags = tag_index.size();
  mc.d_model = 16;
  mc.n_heads = 4;
  mc.d_ffn = 32;
  mc.max_len = 16;

  TrainConfig tc;
  tc.batch_size = 16;
  tc.lr = 1e-3;
  tc.max_epochs = 3;
  tc.seed = 7;

  TrainConfig zero_alpha = tc;
  zero_alpha.adapt = true;
  zero_alpha.alpha = 0.0;
  TrainConfig no_adapt = tc;
  no_adapt.adapt = false;

  const TrainResult a = train(mc, zero_alpha, splits, &target_corpus, vocab, tag_index);
  const TrainResult b = train(mc, no_adapt, splits, nullptr, vocab, tag_index);

  require(a.history.epochs.size() == b.history.epochs.size(), "epoch counts differ");
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    const EpochRecord& ra = a.history.epochs[e];
    const EpochRecord& rb = b.history.epochs[e];
    require(ra.l_ner == rb.l_ner && ra.l_adv == rb.l_adv && ra.l_total == rb.l_total &&
                ra.val_metric == rb.val_metric && ra.lr_last == rb.lr_last,
            "history record " + std::to_string(e) + " differs");
  }
  for (int i = 0; i < a.model.params.count(); ++i) {
    const Tensor<float>& pa = a.model.params.entry(i).value;
    const Tensor<float>& pb = b.model.params.entry(i).value;
    require(std::memcmp(pa.data(), pb.data(),
                        sizeof(float) * static_cast<std::size_t>(pa.size())) == 0,
            "weights differ at " + a.model.params.entry(i).name);
  }
}

// --- criteria 4 and 5: the transfer study -----------------------------------

struct SeedScores {
  int seed = 0;
  double base_shift = 0.0;
  double adapt_shift = 0.0;
  double base_in = 0.0;
  double adapt_in = 0.0;
};

struct TransferStudy {
  std::vector<SeedScores> seeds;
  double elapsed = 0.0;
};

TransferStudy run_transfer_study() {
  const auto start = std::chrono::steady_clock::now();
  TransferStudy study;

  for (int seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.seed = static_cast<std::uint64_t>(seed);
    const SynthOutput corpora = generate(sc);

    const DatasetSplits splits = split_dataset(corpora.source, static_cast<std::uint64_t>(seed));
    const Vocab vocab = build_vocab(splits.train, 2);
    const TagIndex tag_index = make_tag_index(splits.train.classes);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.n_tags = tag_index.size();
    mc.d_model = 32;
    mc.n_heads = 4;
    mc.d_ffn = 64;
    mc.max_len = 32;
    mc.dropout = 0.1;

    // Both arms share every knob but `adapt`. The small reversal strength
    // matters: the discriminator separates these domains easily, and a
    // strong reversed gradient flattens the features the tagger needs.
    TrainConfig tc;
    tc.batch_size = 16;
    tc.lr = 1e-3;
    tc.max_epochs = 32;
    tc.patience = 8;
    tc.early_stop_metric = "span_f1";
    tc.grl_lambda = 0.015;
    tc.seed = static_cast<std::uint64_t>(seed);

    TrainConfig baseline = tc;
    baseline.adapt = false;
    TrainConfig adapted = tc;
    adapted.adapt = true;

    const TrainResult base = train(mc, baseline, splits, nullptr, vocab, tag_index);
    const TrainResult adapt = train(mc, adapted, splits, &corpora.target, vocab, tag_index);

    const auto f1_on = [&](const Model<float>& model, const Dataset& data) {
      return score(data, predict_tags_all(model, data.sentences, vocab, tag_index)).f1;
    };
    SeedScores scores;
    scores.seed = seed;
    scores.base_shift = f1_on(base.model, corpora.test_shift);
    scores.adapt_shift = f1_on(adapt.model, corpora.test_shift);
    scores.base_in = f1_on(base.model, corpora.test_in);
    scores.adapt_in = f1_on(adapt.model, corpora.test_in);
    study.seeds.push_back(scores);

    std::fprintf(stderr,
                 "  seed %d: shifted F1 baseline %.3f adapted %.3f | in-domain F1 "
                 "baseline %.3f adapted %.3f\n",
                 seed, scores.base_shift, scores.adapt_shift, scores.base_in, scores.adapt_in);
  }

  study.elapsed = seconds_since(start);
  std::fprintf(stderr, "  transfer study: %.1f s\n", study.elapsed);
  return study;
}

const TransferStudy& transfer_study() {
  static const TransferStudy study = run_transfer_study();
  return study;
}

void criterion_shifted_gain() {
  const TransferStudy& study = transfer_study();
  double base_mean = 0.0, adapt_mean = 0.0;
  int wins = 0;
  for (const SeedScores& s : study.seeds) {
    base_mean += s.base_shift;
    adapt_mean += s.adapt_shift;
    if (s.adapt_shift > s.base_shift) ++wins;
  }
  base_mean /= static_cast<double>(study.seeds.size());
  adapt_mean /= static_cast<double>(study.seeds.size());

  char detail[160];
  std::snprintf(detail, sizeof detail,
                "mean shifted F1 %.3f adapted vs %.3f baseline, %d/5 wins", adapt_mean,
                base_mean, wins);
  require(adapt_mean > base_mean + kShiftF1Margin, std::string(detail) + ", margin not met");
  require(wins >= 4, std::string(detail) + ", too few wins");
  require(study.elapsed < 900.0,
          "study took " + std::to_string(study.elapsed) + " s, limit 900 s");
  std::fprintf(stderr, "  %s\n", detail);
}

void criterion_in_domain_held() {
  const TransferStudy& study = transfer_study();
  double base_mean = 0.0, adapt_mean = 0.0;
  for (const SeedScores& s : study.seeds) {
    base_mean += s.base_in;
    adapt_mean += s.adapt_in;
  }
  base_mean /= static_cast<double>(study.seeds.size());
  adapt_mean /= static_cast<double>(study.seeds.size());

  char detail[120];
  std::snprintf(detail, sizeof detail, "mean in-domain F1 %.3f adapted vs %.3f baseline",
                adapt_mean, base_mean);
  require(adapt_mean >= base_mean - 0.02, std::string(detail) + ", dropped more than 0.02");
  std::fprintf(stderr, "  %s\n", detail);
}

// --- criterion 6 ------------------------------------------------------------

bool has_span(const std::vector<std::string>& tags, std::size_t start, std::size_t end,
              const std::string& cls) {
  if (tags[start] != "B-" + cls) return false;
  for (std::size_t k = start + 1; k < end; ++k)
    if (tags[k] != "I-" + cls) return false;
  return end == tags.size() || tags[end] != "I-" + cls;
}

void criterion_scoring_oracle() {
  const auto start = std::chrono::steady_clock::now();
  RandomSource rng(66001);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_sent = 1 + rng.uniform_int(4);
    Dataset gold;
    gold.labeled = true;
    std::vector<std::vector<std::string>> pred;
    for (std::size_t s = 0; s < n_sent; ++s) {
      Sentence sent;
      sent.tags = random_tags(rng, 1 + rng.uniform_int(12));
      for (std::size_t i = 0; i < sent.tags->size(); ++i)
        sent.tokens.push_back("t" + std::to_string(i));
      pred.push_back(random_pred(rng, *sent.tags));
      gold.sentences.push_back(std::move(sent));
    }
    gold.classes = collect_classes(gold.sentences);

    std::int64_t n_gold = 0, n_pred = 0, n_correct = 0;
    std::map<std::string, std::int64_t> support;
    for (std::size_t s = 0; s < n_sent; ++s) {
      const auto& gt = *gold.sentences[s].tags;
      const auto& pt = pred[s];
      std::set<std::string> classes;
      for (const auto& t : gt)
        if (t != "O") classes.insert(t.substr(2));
      for (const auto& t : pt)
        if (t != "O") classes.insert(t.substr(2));
      for (std::size_t b = 0; b < gt.size(); ++b) {
        for (std::size_t e = b + 1; e <= gt.size(); ++e) {
          for (const std::string& cls : classes) {
            const bool in_gold = has_span(gt, b, e, cls);
            const bool in_pred = has_span(pt, b, e, cls);
            if (in_gold) {
              ++n_gold;
              ++support[cls];
            }
            if (in_pred) ++n_pred;
            if (in_gold && in_pred) ++n_correct;
          }
        }
      }
    }

    const MetricsReport report = score(gold, pred);
    require(report.n_gold == n_gold && report.n_pred == n_pred && report.n_correct == n_correct,
            "span counts differ from the brute-force enumeration at trial " +
                std::to_string(trial));
    const double p = n_pred == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_pred);
    const double r = n_gold == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_gold);
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    require(report.precision == p && report.recall == r && report.f1 == f1,
            "micro metrics differ at trial " + std::to_string(trial));
    for (const auto& [cls, n] : support)
      require(report.per_class.at(cls).support == n,
              "support differs for " + cls + " at trial " + std::to_string(trial));
  }
  const double elapsed = seconds_since(start);
  require(elapsed < 10.0, "took " + std::to_string(elapsed) + " s, limit 10 s");
}

// --- criterion 7 ------------------------------------------------------------

void criterion_corpus_round_trips() {
  RandomSource rng(77001);

  for (int trial = 0; trial < 1000; ++trial) {
    Dataset data;
    data.labeled = trial % 2 == 0;
    const std::size_t n_sent = 1 + rng.uniform_int(8);
    for (std::size_t s = 0; s < n_sent; ++s) {
      Sentence sent;
      const std::size_t len = 1 + rng.uniform_int(12);
      for (std::size_t i = 0; i < len; ++i) sent.tokens.push_back(random_token(rng));
      if (data.labeled) sent.tags = random_tags(rng, len);
      data.sentences.push_back(std::move(sent));
    }
    data.classes = collect_classes(data.sentences);

    const Dataset back = parse_conll(serialize_conll(data), data.labeled);
    require(back.sentences.size() == data.sentences.size(),
            "sentence count changed in a parse/serialize round trip");
    for (std::size_t s = 0; s < n_sent; ++s) {
      require(back.sentences[s].tokens == data.sentences[s].tokens,
              "tokens changed in a parse/serialize round trip");
      if (data.labeled)
        require(*back.sentences[s].tags == *data.sentences[s].tags,
                "tags changed in a parse/serialize round trip");
    }
  }

  const std::vector<std::string> iob1_menu = {"O", "B-PER", "I-PER", "B-LOC", "I-LOC"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> tags;
    const std::size_t len = 1 + rng.uniform_int(14);
    for (std::size_t i = 0; i < len; ++i)
      tags.push_back(iob1_menu[rng.uniform_int(iob1_menu.size())]);
    const std::vector<std::string> repaired = iob1_to_iob2(tags);
    require(validate_iob2(repaired).empty(), "IOB1 repair left an invalid sequence");
    require(iob1_to_iob2(repaired) == repaired, "IOB1 repair is not idempotent");
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng.uniform_int(14);
    const std::vector<std::string> tags = random_tags(rng, len);
    const std::vector<EntitySpan> spans = tags_to_spans(tags);
    require(spans_to_tags(spans, len) == tags, "tags -> spans -> tags is not the identity");

    std::vector<EntitySpan> random_spans;
    std::size_t pos = 0;
    while (pos < len) {
      if (rng.uniform() < 0.4) {
        EntitySpan sp;
        sp.start = static_cast<int>(pos);
        sp.end = static_cast<int>(std::min(len, pos + 1 + rng.uniform_int(3)));
        sp.cls = kSpanClasses[rng.uniform_int(kSpanClasses.size())];
        random_spans.push_back(sp);
        pos = static_cast<std::size_t>(sp.end);
      } else {
        ++pos;
      }
    }
    require(tags_to_spans(spans_to_tags(random_spans, len)) == random_spans,
            "spans -> tags -> spans is not the identity");
  }
}

// --- criterion 8 ------------------------------------------------------------

void criterion_overfits_small_corpus() {
  const auto start = std::chrono::steady_clock::now();
  Dataset corpus = easy_corpus(50, 404);

  DatasetSplits splits;
  splits.train = corpus;
  splits.val = corpus;
  splits.test = corpus;
  const Vocab vocab = build_vocab(splits.train, 1);
  const TagIndex tag_index = make_tag_index(splits.train.classes);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.n_tags = tag_index.size();
  mc.d_model = 32;
  mc.n_heads = 4;
  mc.d_ffn = 48;
  mc.max_len = 16;

  TrainConfig tc;
  tc.batch_size = 16;
  tc.lr = 5e-3;
  tc.max_epochs = 16;
  tc.patience = 16;
  tc.adapt = false;
  tc.seed = 7;

  const TrainResult result = train(mc, tc, splits, nullptr, vocab, tag_index);
  require(result.history.epochs.size() <= 16, "trained more than 16 epochs");

  const MetricsReport report =
      score(corpus, predict_tags_all(result.model, corpus.sentences, vocab, tag_index));
  char detail[96];
  std::snprintf(detail, sizeof detail, "token accuracy %.4f after %zu epoch(s)",
                report.token_accuracy, result.history.epochs.size());
  require(report.token_accuracy >= 0.99, std::string(detail) + ", need 0.99");
  std::fprintf(stderr, "  %s\n", detail);

  const double elapsed = seconds_since(start);
  require(elapsed < 120.0, "took " + std::to_string(elapsed) + " s, limit 120 s");
}

// --- criterion 9 ------------------------------------------------------------

void criterion_checkpoint_integrity() {
  Dataset sample;
  sample.sentences.push_back({{"jean", "va", "vers", "paris", "lyon"}, std::nullopt});
  const Vocab vocab = build_vocab(sample, 1);
  const TagIndex tag_index = make_tag_index({"LOC", "PER"});

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.n_tags = tag_index.size();
  mc.d_model = 16;
  mc.n_heads = 4;
  mc.d_ffn = 24;
  mc.max_len = 12;
  const Model<float> model = init_model<float>(mc, 31337);

  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model, vocab, tag_index);
  const Checkpoint restored = deserialize_checkpoint(bytes);
  require(restored.config == mc, "config changed in a round trip");
  require(restored.vocab.id_to_token == vocab.id_to_token, "vocabulary changed in a round trip");
  for (int i = 0; i < model.params.count(); ++i) {
    const Tensor<float>& a = model.params.entry(i).value;
    const Tensor<float>& b = restored.params.entry(i).value;
    require(a.same_shape(b) &&
                std::memcmp(a.data(), b.data(),
                            sizeof(float) * static_cast<std::size_t>(a.size())) == 0,
            "weights changed in a round trip at " + model.params.entry(i).name);
  }
  require(serialize_checkpoint(restored.to_model(), restored.vocab, restored.tag_index) == bytes,
          "re-serialization is not byte-identical");

  RandomSource rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> corrupted = bytes;
    const std::size_t pos = rng.uniform_int(corrupted.size());
    corrupted[pos] ^= static_cast<std::uint8_t>(1 + rng.uniform_int(255));
    try {
      deserialize_checkpoint(corrupted);
      require(false, "byte flip at " + std::to_string(pos) + " loaded silently");
    } catch (const Error&) {
      // corruption must surface as a typed error, nothing else
    }
  }
}

// --- criterion 10 -----------------------------------------------------------

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_reproducible_cli_training() {
  const fs::path dir =
      fs::temp_directory_path() / ("daner_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto cleanup = [&] {
    std::error_code ec;
    fs::remove_all(dir, ec);
  };

  try {
    SynthConfig sc;
    sc.n_source_labeled = 120;
    sc.n_target_unlabeled = 60;
    sc.n_test_shifted = 20;
    sc.seed = 3;
    const SynthOutput corpora = generate(sc);
    std::ofstream(dir / "source.conll") << serialize_conll(corpora.source);
    std::ofstream(dir / "target.txt") << serialize_conll(corpora.target);

    std::ofstream(dir / "run.conf")
        << "model.d_model = 16\nmodel.n_heads = 4\nmodel.d_ffn = 32\nmodel.max_len = 32\n"
        << "train.batch_size = 8\ntrain.max_epochs = 2\ntrain.lr = 1e-3\ntrain.seed = 9\n"
        << "data.source = " << (dir / "source.conll").string() << "\n"
        << "data.target = " << (dir / "target.txt").string() << "\n";

    for (const char* out : {"run1", "run2"}) {
      const std::string command = std::string("'") + DANER_CLI_PATH + "' train --config '" +
                                  (dir / "run.conf").string() + "' --out-dir '" +
                                  (dir / out).string() + "' > '" + (dir / "stdout.txt").string() +
                                  "' 2> '" + (dir / "stderr.txt").string() + "'";
      if (run_command(command) != 0)
        throw CheckFailure{std::string("train into ") + out +
                           " failed: " + read_bytes(dir / "stderr.txt")};
    }

    require(read_bytes(dir / "run1" / "history.json") == read_bytes(dir / "run2" / "history.json"),
            "history.json differs between identical invocations");
    require(read_bytes(dir / "run1" / "model.ckpt") == read_bytes(dir / "run2" / "model.ckpt"),
            "model.ckpt differs between identical invocations");
    require(read_bytes(dir / "run1" / "resolved_config.txt") ==
                read_bytes(dir / "run2" / "resolved_config.txt"),
            "resolved_config.txt differs between identical invocations");
  } catch (...) {
    cleanup();
    throw;
  }
  cleanup();
}

// --- runner -----------------------------------------------------------------

struct CriterionEntry {
  int id;
  const char* description;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<CriterionEntry> criteria = {
      {1, "gradient reversal is the identity forward and exactly -lambda times the upstream "
          "gradient backward",
       criterion_grl_contract},
      {2, "analytic gradients match central differences; the reversal layer flips the "
          "extractor's adversarial gradient",
       criterion_finite_differences},
      {3, "the total loss is exactly l_ner + alpha * l_adv, and alpha = 0 reproduces a "
          "non-adaptive run bit for bit",
       criterion_loss_composition},
      {4, "adversarial adaptation beats the source-only baseline on the shifted test set",
       criterion_shifted_gain},
      {5, "adaptation costs at most 0.02 mean F1 on the in-domain test set",
       criterion_in_domain_held},
      {6, "span scoring matches a brute-force enumeration on 1000 random sentence pairs",
       criterion_scoring_oracle},
      {7, "parse/serialize, IOB1 repair, and tags/spans conversions round-trip on 1000 "
          "random cases each",
       criterion_corpus_round_trips},
      {8, "training overfits a 50-sentence corpus to 99% token accuracy within 16 epochs",
       criterion_overfits_small_corpus},
      {9, "checkpoints round-trip bit for bit and any corrupted byte raises a typed error",
       criterion_checkpoint_integrity},
      {10, "the train command writes byte-identical outputs across identical invocations",
       criterion_reproducible_cli_training},
  };

  bool all_ok = true;
  for (const CriterionEntry& entry : criteria) {
    if (!only.empty() && only.count(entry.id) == 0) continue;
    std::string failure;
    try {
      entry.run();
    } catch (const CheckFailure& f) {
      failure = f.detail;
    } catch (const std::exception& e) {
      failure = std::string("unexpected exception: ") + e.what();
    }
    if (failure.empty()) {
      std::printf("criterion %d: PASS — %s\n", entry.id, entry.description);
    } else {
      std::printf("criterion %d: FAIL — %s (%s)\n", entry.id, entry.description,
                  failure.c_str());
      all_ok = false;
    }
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
