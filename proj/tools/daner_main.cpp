#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "daner/checkpoint.hpp"
#include "daner/corpus.hpp"
#include "daner/error.hpp"
#include "daner/eval.hpp"
#include "daner/run_config.hpp"
#include "daner/synth.hpp"
#include "daner/train.hpp"

namespace fs = std::filesystem;
using namespace daner;

namespace {

constexpr int kOk = 0;
constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kRuntimeError = 3;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::ConfigError:
      return kUsageError;
    case ErrorKind::EmptyInput:
    case ErrorKind::MalformedLine:
    case ErrorKind::InvalidTag:
    case ErrorKind::InvalidScheme:
    case ErrorKind::Overlap:
    case ErrorKind::OutOfRange:
    case ErrorKind::TooSmall:
    case ErrorKind::UnknownTag:
    case ErrorKind::LengthMismatch:
    case ErrorKind::EmptySentence:
    case ErrorKind::Io:
    case ErrorKind::BadMagic:
    case ErrorKind::ChecksumMismatch:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::Truncated:
      return kDataError;
    default:  // Diverged, NonFinite..., AllIgnored, EmptyBatch, ...
      return kRuntimeError;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "error reading " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out << content;
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

// --- data subcommands -------------------------------------------------------

int cmd_convert(const std::string& in, const std::string& out, bool from_iob1) {
  ParseOptions options;
  options.labeled = true;
  options.convert_iob1 = from_iob1;
  const Dataset dataset = parse_conll(read_file(in), options);
  write_file(out, serialize_conll(dataset));
  return kOk;
}

int cmd_validate(const std::string& in) {
  ParseOptions options;
  options.labeled = true;
  options.convert_iob1 = false;
  options.validate = false;
  const Dataset dataset = parse_conll(read_file(in), options);
  int violations = 0;
  for (std::size_t s = 0; s < dataset.sentences.size(); ++s) {
    for (const TagViolation& v : validate_iob2(*dataset.sentences[s].tags)) {
      std::cerr << "sentence " << s << " token " << v.index << ": " << v.reason << "\n";
      ++violations;
    }
  }
  if (violations > 0) {
    std::cerr << violations << " violation" << (violations == 1 ? "" : "s") << " found\n";
    return kDataError;
  }
  return kOk;
}

int cmd_stats(const std::string& in) {
  const std::string text = read_file(in);
  Dataset dataset;
  try {
    dataset = parse_conll(text, /*labeled=*/true);
  } catch (const Error& e) {
    // Single-column files have no tags; retry as an unlabeled corpus.
    if (e.kind() != ErrorKind::MalformedLine) throw;
    dataset = parse_conll(text, /*labeled=*/false);
  }

  std::int64_t n_tokens = 0;
  std::map<int, std::int64_t> length_histogram;
  std::map<std::string, std::int64_t> class_spans;
  for (const Sentence& sentence : dataset.sentences) {
    n_tokens += static_cast<std::int64_t>(sentence.tokens.size());
    ++length_histogram[static_cast<int>(sentence.tokens.size())];
    if (sentence.tags)
      for (const EntitySpan& span : tags_to_spans(*sentence.tags)) ++class_spans[span.cls];
  }

  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [len, count] : length_histogram) hist.push_back({len, count});
  nlohmann::json spans = nlohmann::json::object();
  for (const auto& [cls, count] : class_spans) spans[cls] = count;
  const nlohmann::json j = {{"n_sentences", dataset.sentences.size()},
                            {"n_tokens", n_tokens},
                            {"labeled", dataset.labeled},
                            {"classes", dataset.classes},
                            {"class_spans", spans},
                            {"length_histogram", hist}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const RunConfig config = load_config_file(config_path);
  const SynthOutput corpora = generate(config.synth);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_file((dir / "source.conll").string(), serialize_conll(corpora.source));
  write_file((dir / "target.txt").string(), serialize_conll(corpora.target));
  write_file((dir / "test_in.conll").string(), serialize_conll(corpora.test_in));
  write_file((dir / "test_shift.conll").string(), serialize_conll(corpora.test_shift));
  write_file((dir / "resolved_config.txt").string(), resolved_config_text(config));
  return kOk;
}

// --- train / eval / predict -------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides, int adapt_flag) {
  RunConfig config = load_config_file(config_path);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::ConfigError, "--set needs key=value, got \"" + kv + "\"");
    set_config_key(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (adapt_flag >= 0) config.train.adapt = adapt_flag != 0;
  if (config.data_source.empty())
    fail(ErrorKind::ConfigError, "data.source is required for training");
  validate_train_config(config.train);

  const Dataset source = parse_conll(read_file(config.data_source), /*labeled=*/true);
  Dataset target;
  const bool have_target = !config.data_target.empty();
  if (have_target) target = parse_conll(read_file(config.data_target), /*labeled=*/false);

  const DatasetSplits splits = split_dataset(source, config.train.seed);
  const Vocab vocab = build_vocab(splits.train, /*min_freq=*/2);
  const TagIndex tag_index = make_tag_index(splits.train.classes);
  config.model.vocab_size = vocab.size();
  config.model.n_tags = tag_index.size();

  TrainResult result = train(config.model, config.train, splits,
                             have_target ? &target : nullptr, vocab, tag_index);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  save_checkpoint(result.model, vocab, tag_index, (dir / "model.ckpt").string());
  write_file((dir / "history.json").string(), history_to_json(result.history));
  write_file((dir / "resolved_config.txt").string(), resolved_config_text(config));

  const auto& best = result.history.epochs[static_cast<std::size_t>(result.history.best_epoch)];
  std::cerr << "trained " << result.history.epochs.size() << " epoch(s); best epoch "
            << result.history.best_epoch << " with validation " << config.train.early_stop_metric
            << " " << best.val_metric << "\n";
  return kOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& report_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset gold = parse_conll(read_file(data_path), /*labeled=*/true);
  const Model<float> model = ck.to_model();
  const auto predictions =
      predict_tags_all(model, gold.sentences, ck.vocab, ck.tag_index);
  const MetricsReport report = score(gold, predictions);
  write_file(report_path, metrics_to_json(report));
  const fs::path table_path = fs::path(report_path).replace_extension(".txt");
  write_file(table_path.string(), metrics_to_table(report));
  std::cerr << metrics_to_table(report);
  return kOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& in,
                const std::string& out, bool plain_text) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Model<float> model = ck.to_model();

  Dataset dataset;
  if (plain_text) {
    // One sentence per line, whitespace-tokenized.
    std::stringstream ss(read_file(in));
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::stringstream ls(line);
      Sentence sentence;
      std::string token;
      while (ls >> token) sentence.tokens.push_back(token);
      if (!sentence.tokens.empty()) dataset.sentences.push_back(std::move(sentence));
    }
    if (dataset.sentences.empty()) fail(ErrorKind::EmptyInput, "no sentences in input");
  } else {
    dataset = parse_conll(read_file(in), /*labeled=*/false);
  }

  const auto predictions = predict_tags_all(model, dataset.sentences, ck.vocab, ck.tag_index);
  Dataset tagged;
  tagged.labeled = true;
  tagged.sentences = dataset.sentences;
  for (std::size_t i = 0; i < tagged.sentences.size(); ++i)
    tagged.sentences[i].tags = predictions[i];
  write_file(out, serialize_conll(tagged));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial domain adaptation for named entity recognition"};
  app.require_subcommand(1);

  auto* data = app.add_subcommand("data", "Corpus tooling");
  data->require_subcommand(1);

  std::string in_path, out_path, config_path, out_dir, from_scheme;
  auto* convert = data->add_subcommand("convert", "Canonicalize a CoNLL file");
  convert->add_option("--in", in_path, "input CoNLL file")->required();
  convert->add_option("--out", out_path, "output CoNLL file")->required();
  convert->add_option("--from", from_scheme, "source tag scheme to repair from")
      ->check(CLI::IsMember({"iob1"}));

  auto* validate = data->add_subcommand("validate", "Check IOB2 tag discipline");
  validate->add_option("--in", in_path, "input CoNLL file")->required();

  auto* stats = data->add_subcommand("stats", "Corpus statistics as JSON on stdout");
  stats->add_option("--in", in_path, "input CoNLL file")->required();

  auto* synth = data->add_subcommand("synth", "Generate the paired synthetic corpora");
  synth->add_option("--config", config_path, "run configuration file")->required();
  synth->add_option("--out-dir", out_dir, "output directory")->required();

  std::vector<std::string> overrides;
  bool flag_adapt = false, flag_no_adapt = false;
  auto* train_cmd = app.add_subcommand("train", "Train a tagger");
  train_cmd->add_option("--config", config_path, "run configuration file")->required();
  train_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  train_cmd->add_option("--set", overrides, "override a config key (key=value, repeatable)");
  auto* adapt_opt = train_cmd->add_flag("--adapt", flag_adapt, "force adversarial adaptation on");
  train_cmd->add_flag("--no-adapt", flag_no_adapt, "force adversarial adaptation off")
      ->excludes(adapt_opt);

  std::string checkpoint_path, data_path, report_path;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on labeled data");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval_cmd->add_option("--data", data_path, "labeled CoNLL file")->required();
  eval_cmd->add_option("--report", report_path, "JSON report path")->required();

  bool plain_text = false;
  auto* predict_cmd = app.add_subcommand("predict", "Tag an unlabeled file");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  predict_cmd->add_option("--in", in_path, "unlabeled CoNLL or text file")->required();
  predict_cmd->add_option("--out", out_path, "tagged CoNLL output")->required();
  predict_cmd->add_flag("--text", plain_text, "input is plain text, one sentence per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (convert->parsed()) return cmd_convert(in_path, out_path, from_scheme == "iob1");
    if (validate->parsed()) return cmd_validate(in_path);
    if (stats->parsed()) return cmd_stats(in_path);
    if (synth->parsed()) return cmd_synth(config_path, out_dir);
    if (train_cmd->parsed())
      return cmd_train(config_path, out_dir, overrides,
                       flag_adapt ? 1 : (flag_no_adapt ? 0 : -1));
    if (eval_cmd->parsed()) return cmd_eval(checkpoint_path, data_path, report_path);
    if (predict_cmd->parsed()) return cmd_predict(checkpoint_path, in_path, out_path, plain_text);
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
