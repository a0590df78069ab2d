#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "daner/corpus.hpp"
#include "daner/error.hpp"
#include "daner/synth.hpp"

using namespace daner;

namespace {

ErrorKind thrown_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::EmptyInput;
}

SynthConfig small_config() {
  SynthConfig config;
  config.n_source_labeled = 300;
  config.n_target_unlabeled = 400;
  config.n_test_shifted = 100;
  config.entity_lexicon_size = 20;
  config.templates_per_domain = 12;
  config.seed = 99;
  return config;
}

std::set<std::string> token_types(const Dataset& data) {
  std::set<std::string> types;
  for (const Sentence& sent : data.sentences)
    for (const std::string& tok : sent.tokens) types.insert(tok);
  return types;
}

std::set<std::string> lowercase_types(const Dataset& data) {
  std::set<std::string> types;
  for (const std::string& tok : token_types(data))
    if (std::islower(static_cast<unsigned char>(tok[0]))) types.insert(tok);
  return types;
}

std::set<std::string> merged(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::set<std::string> out = a;
  out.insert(b.begin(), b.end());
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const double unions = static_cast<double>(a.size() + b.size() - common.size());
  return unions == 0.0 ? 0.0 : static_cast<double>(common.size()) / unions;
}

std::string sentence_key(const Sentence& sent) {
  std::string key;
  for (const std::string& t : sent.tokens) {
    key += t;
    key += '\x1f';
  }
  return key;
}

void check_labeled_shape(const Dataset& data, int expected_size) {
  REQUIRE(static_cast<int>(data.sentences.size()) == expected_size);
  CHECK(data.labeled);
  for (const Sentence& sent : data.sentences) {
    REQUIRE(sent.tags.has_value());
    REQUIRE(sent.tags->size() == sent.tokens.size());
    CHECK(validate_iob2(*sent.tags).empty());

    CHECK(sent.tokens.size() >= 5);
    CHECK(sent.tokens.size() <= 25);
    int entities = 0;
    for (const std::string& tag : *sent.tags)
      if (tag.rfind("B-", 0) == 0) ++entities;
    CHECK(entities >= 1);
    CHECK(entities <= 3);
  }
}

}  // namespace

TEST_CASE("outputs have the configured sizes, labels, and sentence shapes") {
  SynthConfig config = small_config();
  SynthOutput out = generate(config);

  check_labeled_shape(out.source, config.n_source_labeled);
  check_labeled_shape(out.test_in, config.n_test_shifted);
  check_labeled_shape(out.test_shift, config.n_test_shifted);

  CHECK_FALSE(out.target.labeled);
  REQUIRE(static_cast<int>(out.target.sentences.size()) == config.n_target_unlabeled);
  for (const Sentence& sent : out.target.sentences) {
    CHECK_FALSE(sent.tags.has_value());
    CHECK(sent.tokens.size() >= 5);
    CHECK(sent.tokens.size() <= 25);
  }

  std::vector<std::string> expected = config.classes;
  std::sort(expected.begin(), expected.end());
  CHECK(out.source.classes == expected);
  CHECK(out.test_in.classes == expected);
  CHECK(out.test_shift.classes == expected);
}

TEST_CASE("every tag uses a configured class") {
  SynthConfig config = small_config();
  config.classes = {"DRUG", "DOSE"};
  SynthOutput out = generate(config);

  for (const Dataset* data : {&out.source, &out.test_in, &out.test_shift})
    for (const Sentence& sent : data->sentences)
      for (const std::string& tag : *sent.tags)
        CHECK((tag == "O" || tag == "B-DRUG" || tag == "I-DRUG" || tag == "B-DOSE" ||
               tag == "I-DOSE"));
}

TEST_CASE("the same seed reproduces every corpus byte for byte") {
  SynthConfig config = small_config();
  SynthOutput first = generate(config);
  SynthOutput second = generate(config);

  CHECK(serialize_conll(first.source) == serialize_conll(second.source));
  CHECK(serialize_conll(first.target) == serialize_conll(second.target));
  CHECK(serialize_conll(first.test_in) == serialize_conll(second.test_in));
  CHECK(serialize_conll(first.test_shift) == serialize_conll(second.test_shift));

  config.seed = 100;
  SynthOutput other = generate(config);
  CHECK(serialize_conll(first.source) != serialize_conll(other.source));
}

TEST_CASE("full shift with no shared entities makes the domains lexically disjoint") {
  SynthConfig config = small_config();
  config.shift = 1.0;
  config.shared_entity_frac = 0.0;
  SynthOutput out = generate(config);

  std::set<std::string> side_a = merged(token_types(out.source), token_types(out.test_in));
  std::set<std::string> side_b = merged(token_types(out.target), token_types(out.test_shift));

  std::vector<std::string> common;
  std::set_intersection(side_a.begin(), side_a.end(), side_b.begin(), side_b.end(),
                        std::back_inserter(common));
  CHECK(common.empty());
}

TEST_CASE("zero shift gives both domains the same function-word inventory") {
  SynthConfig config = small_config();
  config.shift = 0.0;
  config.shared_entity_frac = 1.0;
  SynthOutput out = generate(config);

  std::set<std::string> side_a = merged(lowercase_types(out.source), lowercase_types(out.test_in));
  std::set<std::string> side_b =
      merged(lowercase_types(out.target), lowercase_types(out.test_shift));
  CHECK(side_a == side_b);

  // One-off noise surface forms keep full-vocabulary overlap well below 1
  // even when the domains are otherwise identical.
  CHECK(jaccard(token_types(out.source), token_types(out.target)) > 0.3);
}

TEST_CASE("vocabulary overlap between domains shrinks as shift grows") {
  SynthConfig config = small_config();
  auto overlap_at = [&](double shift) {
    SynthConfig c = config;
    c.shift = shift;
    SynthOutput out = generate(c);
    return jaccard(token_types(out.source), token_types(out.target));
  };

  const double at_zero = overlap_at(0.0);
  const double at_mid = overlap_at(0.7);
  const double at_one = overlap_at(1.0);
  CHECK(at_zero > at_mid);
  CHECK(at_mid > at_one);
}

TEST_CASE("no test sentence repeats a training sentence verbatim") {
  SynthConfig config = small_config();
  SynthOutput out = generate(config);

  std::set<std::string> train_keys;
  for (const Sentence& sent : out.source.sentences) train_keys.insert(sentence_key(sent));
  for (const Sentence& sent : out.test_in.sentences)
    CHECK(train_keys.count(sentence_key(sent)) == 0);
  for (const Sentence& sent : out.test_shift.sentences)
    CHECK(train_keys.count(sentence_key(sent)) == 0);
}

TEST_CASE("generated corpora survive a serialize and parse round trip") {
  SynthConfig config = small_config();
  config.n_source_labeled = 50;
  SynthOutput out = generate(config);

  Dataset parsed = parse_conll(serialize_conll(out.source), true);
  REQUIRE(parsed.sentences.size() == out.source.sentences.size());
  for (std::size_t i = 0; i < parsed.sentences.size(); ++i) {
    CHECK(parsed.sentences[i].tokens == out.source.sentences[i].tokens);
    CHECK(*parsed.sentences[i].tags == *out.source.sentences[i].tags);
  }
  CHECK(parsed.classes == out.source.classes);

  Dataset target = parse_conll(serialize_conll(out.target), false);
  REQUIRE(target.sentences.size() == out.target.sentences.size());
  for (std::size_t i = 0; i < target.sentences.size(); ++i)
    CHECK(target.sentences[i].tokens == out.target.sentences[i].tokens);
}

TEST_CASE("config validation rejects out-of-range or malformed settings") {
  auto broken = [](const std::function<void(SynthConfig&)>& mutate) {
    SynthConfig config;
    mutate(config);
    return thrown_kind([&] { validate_synth_config(config); });
  };

  CHECK(broken([](SynthConfig& c) { c.n_source_labeled = 0; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.n_target_unlabeled = -1; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.n_test_shifted = 0; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.entity_lexicon_size = 0; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.templates_per_domain = 0; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.shift = -0.1; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.shift = 1.1; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.shared_entity_frac = 1.5; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.classes.clear(); }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.classes = {"PER", "PER"}; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.classes = {"PER", ""}; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.classes = {"X-Y"}; }) == ErrorKind::InvalidConfig);
  CHECK(broken([](SynthConfig& c) { c.classes = {"A B"}; }) == ErrorKind::InvalidConfig);

  SynthConfig bad;
  bad.shift = 2.0;
  CHECK(thrown_kind([&] { generate(bad); }) == ErrorKind::InvalidConfig);

  CHECK_NOTHROW(validate_synth_config(SynthConfig{}));
}
