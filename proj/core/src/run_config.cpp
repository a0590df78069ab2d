#include "daner/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "daner/error.hpp"

namespace daner {

namespace {

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  fail(ErrorKind::ConfigError,
       "key \"" + key + "\": cannot read \"" + value + "\" as " + expected);
}

int to_int(const std::string& key, const std::string& value) {
  int v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
    bad_value(key, value, "an integer");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
    bad_value(key, value, "an unsigned integer");
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
    bad_value(key, value, "a number");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_classes(const std::string& key, const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) bad_value(key, value, "a comma-separated class list");
    out.push_back(part);
  }
  if (out.empty()) bad_value(key, value, "a comma-separated class list");
  return out;
}

std::string join_classes(const std::vector<std::string>& classes) {
  std::string out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) out += ",";
    out += classes[i];
  }
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_KEY(name, field)                                                      \
  {name, [](RunConfig& c, const std::string& v) { c.field = to_int(name, v); },   \
   [](const RunConfig& c) { return std::to_string(c.field); }}
#define U64_KEY(name, field)                                                      \
  {name, [](RunConfig& c, const std::string& v) { c.field = to_u64(name, v); },   \
   [](const RunConfig& c) { return std::to_string(c.field); }}
#define REAL_KEY(name, field)                                                     \
  {name, [](RunConfig& c, const std::string& v) { c.field = to_double(name, v); },\
   [](const RunConfig& c) { return format_double(c.field); }}
#define BOOL_KEY(name, field)                                                     \
  {name, [](RunConfig& c, const std::string& v) { c.field = to_bool(name, v); },  \
   [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define STR_KEY(name, field)                                                      \
  {name, [](RunConfig& c, const std::string& v) { c.field = v; },                 \
   [](const RunConfig& c) { return c.field; }}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      INT_KEY("train.batch_size", train.batch_size),
      REAL_KEY("train.lr", train.lr),
      REAL_KEY("train.weight_decay", train.weight_decay),
      REAL_KEY("train.adam_beta1", train.adam_beta1),
      REAL_KEY("train.adam_beta2", train.adam_beta2),
      REAL_KEY("train.adam_eps", train.adam_eps),
      INT_KEY("train.max_epochs", train.max_epochs),
      REAL_KEY("train.alpha", train.alpha),
      REAL_KEY("train.grl_lambda", train.grl_lambda),
      REAL_KEY("train.warmup_frac", train.warmup_frac),
      U64_KEY("train.seed", train.seed),
      STR_KEY("train.early_stop_metric", train.early_stop_metric),
      INT_KEY("train.patience", train.patience),
      BOOL_KEY("train.adapt", train.adapt),
      INT_KEY("model.vocab_size", model.vocab_size),
      INT_KEY("model.d_model", model.d_model),
      INT_KEY("model.n_encoder_layers", model.n_encoder_layers),
      INT_KEY("model.n_heads", model.n_heads),
      INT_KEY("model.d_ffn", model.d_ffn),
      INT_KEY("model.max_len", model.max_len),
      INT_KEY("model.n_tags", model.n_tags),
      REAL_KEY("model.dropout", model.dropout),
      INT_KEY("model.head_hidden", model.head_hidden),
      INT_KEY("synth.n_source_labeled", synth.n_source_labeled),
      INT_KEY("synth.n_target_unlabeled", synth.n_target_unlabeled),
      INT_KEY("synth.n_test_shifted", synth.n_test_shifted),
      REAL_KEY("synth.shift", synth.shift),
      {"synth.classes",
       [](RunConfig& c, const std::string& v) { c.synth.classes = split_classes("synth.classes", v); },
       [](const RunConfig& c) { return join_classes(c.synth.classes); }},
      INT_KEY("synth.entity_lexicon_size", synth.entity_lexicon_size),
      REAL_KEY("synth.shared_entity_frac", synth.shared_entity_frac),
      INT_KEY("synth.templates_per_domain", synth.templates_per_domain),
      U64_KEY("synth.seed", synth.seed),
      STR_KEY("data.source", data_source),
      STR_KEY("data.target", data_target),
      STR_KEY("data.out_dir", data_out_dir),
  };
  return table;
}

#undef INT_KEY
#undef U64_KEY
#undef REAL_KEY
#undef BOOL_KEY
#undef STR_KEY

}  // namespace

void set_config_key(RunConfig& config, const std::string& key, const std::string& value) {
  for (const KeyHandler& h : handlers()) {
    if (key == h.key) {
      h.set(config, value);
      return;
    }
  }
  fail(ErrorKind::ConfigError, "unknown config key \"" + key + "\"");
}

RunConfig parse_config_text(const std::string& text, const RunConfig& base) {
  RunConfig config = base;
  std::stringstream ss(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::ConfigError,
           "line " + std::to_string(line_no) + ": expected key = value, got \"" + line + "\"");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": empty key");
    try {
      set_config_key(config, key, value);
    } catch (const Error& e) {
      fail(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), base);
}

std::string resolved_config_text(const RunConfig& config) {
  std::string out;
  for (const KeyHandler& h : handlers()) {
    out += h.key;
    out += " = ";
    out += h.get(config);
    out += "\n";
  }
  return out;
}

}  // namespace daner
