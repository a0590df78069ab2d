#include "daner/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "daner/error.hpp"
#include "daner/rng.hpp"

namespace daner {

namespace {

constexpr int kFunctionWords = 40;   // function-word inventory per domain
constexpr double kNoiseRate = 0.1;   // chance an entity slot gets a one-off surface form
constexpr int kLeakageRetries = 1000;

/// Pronounceable consonant-vowel pseudo-words, globally unique across the
/// whole corpus pair so lexical overlap between domains is exactly what the
/// construction dictates.
class WordFactory {
 public:
  explicit WordFactory(RandomSource& rng) : rng_(rng) {}

  std::string fresh_lower() {
    for (;;) {
      std::string w = make();
      if (used_.insert(w).second) return w;
    }
  }

  std::string fresh_capital() {
    std::string w = fresh_lower();
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    return w;
  }

 private:
  std::string make() {
    static constexpr char kConsonants[] = "bdfgklmnprstvz";
    static constexpr char kVowels[] = "aeiou";
    const int syllables = 2 + static_cast<int>(rng_.uniform_int(3));
    std::string w;
    w.reserve(static_cast<std::size_t>(syllables) * 2);
    for (int i = 0; i < syllables; ++i) {
      w += kConsonants[rng_.uniform_int(sizeof kConsonants - 1)];
      w += kVowels[rng_.uniform_int(sizeof kVowels - 1)];
    }
    return w;
  }

  RandomSource& rng_;
  std::unordered_set<std::string> used_;
};

struct TemplateItem {
  bool is_slot = false;
  int index = 0;  // function-word index, or class index for a slot
};
using Template = std::vector<TemplateItem>;

using EntityForm = std::vector<std::string>;  // 1-3 capitalized tokens

EntityForm fresh_form(WordFactory& words, RandomSource& rng) {
  const int n = 1 + static_cast<int>(rng.uniform_int(3));
  EntityForm form;
  form.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) form.push_back(words.fresh_capital());
  return form;
}

/// 1-3 entity slots; enough function words that the sentence lands in
/// [5, 25] tokens whatever the entity lengths turn out to be.
Template make_template(RandomSource& rng, int n_classes) {
  const int n_slots = 1 + static_cast<int>(rng.uniform_int(3));
  const int lo = std::max(2, 5 - n_slots);
  const int hi = 25 - 3 * n_slots;
  const int n_func = static_cast<int>(rng.uniform_range(lo, hi));

  Template tmpl;
  tmpl.reserve(static_cast<std::size_t>(n_slots + n_func));
  for (int i = 0; i < n_slots; ++i)
    tmpl.push_back({true, static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_classes)))});
  for (int i = 0; i < n_func; ++i)
    tmpl.push_back({false, static_cast<int>(rng.uniform_int(kFunctionWords))});
  rng.shuffle(tmpl);
  return tmpl;
}

struct Domain {
  std::vector<std::string> function_words;       // kFunctionWords entries
  std::vector<Template> templates;               // templates_per_domain entries
  std::vector<std::vector<EntityForm>> lexicon;  // [class][entity_lexicon_size]
};

Sentence make_sentence(const Domain& dom, const std::vector<std::string>& classes,
                       WordFactory& words, RandomSource& rng, bool labeled) {
  const Template& tmpl = dom.templates[rng.uniform_int(dom.templates.size())];
  Sentence sentence;
  if (labeled) sentence.tags.emplace();
  for (const TemplateItem& item : tmpl) {
    if (!item.is_slot) {
      sentence.tokens.push_back(dom.function_words[static_cast<std::size_t>(item.index)]);
      if (labeled) sentence.tags->push_back("O");
      continue;
    }
    const auto& forms = dom.lexicon[static_cast<std::size_t>(item.index)];
    const EntityForm form =
        rng.bernoulli(kNoiseRate) ? fresh_form(words, rng) : forms[rng.uniform_int(forms.size())];
    const std::string& cls = classes[static_cast<std::size_t>(item.index)];
    for (std::size_t j = 0; j < form.size(); ++j) {
      sentence.tokens.push_back(form[j]);
      if (labeled) sentence.tags->push_back((j == 0 ? "B-" : "I-") + cls);
    }
  }
  return sentence;
}

std::string join_key(const std::vector<std::string>& tokens) {
  std::string key;
  for (const std::string& t : tokens) {
    key += t;
    key += '\x1f';
  }
  return key;
}

}  // namespace

void validate_synth_config(const SynthConfig& config) {
  if (config.n_source_labeled < 1 || config.n_target_unlabeled < 1 || config.n_test_shifted < 1 ||
      config.entity_lexicon_size < 1 || config.templates_per_domain < 1)
    fail(ErrorKind::InvalidConfig, "all corpus counts must be >= 1");
  if (config.shift < 0.0 || config.shift > 1.0)
    fail(ErrorKind::InvalidConfig, "shift must lie in [0, 1]");
  if (config.shared_entity_frac < 0.0 || config.shared_entity_frac > 1.0)
    fail(ErrorKind::InvalidConfig, "shared_entity_frac must lie in [0, 1]");
  if (config.classes.empty()) fail(ErrorKind::InvalidConfig, "need at least one entity class");
  std::vector<std::string> sorted = config.classes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    fail(ErrorKind::InvalidConfig, "duplicate entity class");
  for (const std::string& cls : config.classes) {
    if (cls.empty()) fail(ErrorKind::InvalidConfig, "empty entity class name");
    for (char c : cls)
      if (std::isspace(static_cast<unsigned char>(c)) || c == '-')
        fail(ErrorKind::InvalidConfig, "entity class \"" + cls + "\" contains '-' or whitespace");
  }
}

SynthOutput generate(const SynthConfig& config) {
  validate_synth_config(config);
  RandomSource rng(config.seed);
  WordFactory words(rng);
  const int n_classes = static_cast<int>(config.classes.size());

  Domain a;
  a.function_words.reserve(kFunctionWords);
  for (int i = 0; i < kFunctionWords; ++i) a.function_words.push_back(words.fresh_lower());

  Domain b;
  b.function_words = a.function_words;
  const int replaced = static_cast<int>(std::ceil(config.shift * kFunctionWords));
  for (int i = 0; i < replaced; ++i)
    b.function_words[static_cast<std::size_t>(i)] = words.fresh_lower();

  a.templates.reserve(static_cast<std::size_t>(config.templates_per_domain));
  for (int i = 0; i < config.templates_per_domain; ++i)
    a.templates.push_back(make_template(rng, n_classes));

  const int unique_b =
      static_cast<int>(std::ceil(config.shift * config.templates_per_domain));
  b.templates.assign(a.templates.begin(),
                     a.templates.end() - unique_b);
  for (int i = 0; i < unique_b; ++i) b.templates.push_back(make_template(rng, n_classes));

  const int shared_forms =
      static_cast<int>(std::floor(config.shared_entity_frac * config.entity_lexicon_size));
  a.lexicon.resize(static_cast<std::size_t>(n_classes));
  b.lexicon.resize(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < shared_forms; ++i) {
      EntityForm form = fresh_form(words, rng);
      a.lexicon[static_cast<std::size_t>(c)].push_back(form);
      b.lexicon[static_cast<std::size_t>(c)].push_back(form);
    }
    for (int i = shared_forms; i < config.entity_lexicon_size; ++i)
      a.lexicon[static_cast<std::size_t>(c)].push_back(fresh_form(words, rng));
    for (int i = shared_forms; i < config.entity_lexicon_size; ++i)
      b.lexicon[static_cast<std::size_t>(c)].push_back(fresh_form(words, rng));
  }

  std::vector<std::string> sorted_classes = config.classes;
  std::sort(sorted_classes.begin(), sorted_classes.end());

  SynthOutput out;
  out.source.labeled = true;
  out.source.classes = sorted_classes;
  std::unordered_set<std::string> source_keys;
  for (int i = 0; i < config.n_source_labeled; ++i) {
    Sentence s = make_sentence(a, config.classes, words, rng, true);
    source_keys.insert(join_key(s.tokens));
    out.source.sentences.push_back(std::move(s));
  }

  out.target.labeled = false;
  for (int i = 0; i < config.n_target_unlabeled; ++i)
    out.target.sentences.push_back(make_sentence(b, config.classes, words, rng, false));

  const auto make_test = [&](const Domain& dom, Dataset& dataset) {
    dataset.labeled = true;
    dataset.classes = sorted_classes;
    for (int i = 0; i < config.n_test_shifted; ++i) {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= kLeakageRetries)
          fail(ErrorKind::InvalidConfig,
               "cannot generate a test sentence absent from the source corpus; "
               "the template space is too small");
        Sentence s = make_sentence(dom, config.classes, words, rng, true);
        if (source_keys.count(join_key(s.tokens))) continue;
        dataset.sentences.push_back(std::move(s));
        break;
      }
    }
  };
  make_test(a, out.test_in);
  make_test(b, out.test_shift);
  return out;
}

}  // namespace daner
