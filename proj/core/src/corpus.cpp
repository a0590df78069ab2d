#include "daner/corpus.hpp"

#include <algorithm>
#include <set>

#include "daner/error.hpp"
#include "daner/rng.hpp"

namespace daner {
namespace {

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) cols.push_back(line.substr(start, i - start));
  }
  return cols;
}

/// "O", or "B-X"/"I-X" with a non-empty class X.
bool tag_well_formed(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3) return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return tag[1] == '-';
}

std::string tag_class(const std::string& tag) { return tag.substr(2); }

}  // namespace

Dataset parse_conll(const std::string& text, const ParseOptions& options) {
  Dataset out;
  out.labeled = options.labeled;

  Sentence current;
  if (options.labeled) current.tags.emplace();
  int sentence_idx = 0;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    if (options.labeled && options.validate) {
      auto repaired = options.convert_iob1 ? iob1_to_iob2(*current.tags) : *current.tags;
      if (!validate_iob2(repaired).empty())
        fail(ErrorKind::InvalidScheme,
             "sentence " + std::to_string(sentence_idx) + " has an unrepairable tag sequence");
      current.tags = std::move(repaired);
    }
    out.sentences.push_back(std::move(current));
    current = Sentence{};
    if (options.labeled) current.tags.emplace();
    ++sentence_idx;
  };

  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    if (is_blank(line)) {
      flush();
      continue;
    }
    auto cols = split_columns(line);
    if (cols.front() == "-DOCSTART-") continue;
    if (options.labeled) {
      if (cols.size() < 2)
        fail(ErrorKind::MalformedLine,
             "line " + std::to_string(line_no) + " has fewer than 2 columns");
      const std::string& tag = cols.back();
      if (options.validate && !tag_well_formed(tag))
        fail(ErrorKind::InvalidTag, "line " + std::to_string(line_no) + ": '" + tag + "'");
      current.tags->push_back(tag);
    }
    current.tokens.push_back(cols.front());
  }
  flush();  // trailing unterminated sentence

  if (out.sentences.empty()) fail(ErrorKind::EmptyInput, "no sentences in input");
  if (out.labeled) out.classes = collect_classes(out.sentences);
  return out;
}

Dataset parse_conll(const std::string& text, bool labeled) {
  ParseOptions options;
  options.labeled = labeled;
  return parse_conll(text, options);
}

std::string serialize_conll(const Dataset& dataset) {
  std::string out;
  for (const auto& sentence : dataset.sentences) {
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
      out += sentence.tokens[i];
      if (sentence.tags) {
        out += ' ';
        out += (*sentence.tags)[i];
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

std::vector<TagViolation> validate_iob2(const std::vector<std::string>& tags) {
  std::vector<TagViolation> violations;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (!tag_well_formed(tag)) {
      violations.push_back({static_cast<int>(i), "malformed tag '" + tag + "'"});
      continue;
    }
    if (tag[0] != 'I') continue;
    if (i == 0 || tags[i - 1] == "O" || !tag_well_formed(tags[i - 1])) {
      violations.push_back({static_cast<int>(i), "I- without preceding B-/I- of same class"});
    } else if (tag_class(tags[i - 1]) != tag_class(tag)) {
      violations.push_back({static_cast<int>(i), "class mismatch"});
    }
  }
  return violations;
}

std::vector<std::string> iob1_to_iob2(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (!tag_well_formed(tag))
      fail(ErrorKind::InvalidTag, "position " + std::to_string(i) + ": '" + tag + "'");
    if (tag[0] == 'I') {
      // In the IOB1 reading an I-X after start, O, or a different class
      // opens a new entity; IOB2 spells that B-X.
      bool opens = i == 0 || tags[i - 1] == "O" || tag_class(tags[i - 1]) != tag_class(tag);
      out.push_back(opens ? "B" + tag.substr(1) : tag);
    } else {
      out.push_back(tag);
    }
  }
  return out;
}

std::vector<EntitySpan> tags_to_spans(const std::vector<std::string>& tags) {
  auto violations = validate_iob2(tags);
  if (!violations.empty())
    fail(ErrorKind::InvalidScheme,
         "invalid IOB2 at index " + std::to_string(violations.front().index) + ": " +
             violations.front().reason);

  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i][0] != 'B') continue;
    EntitySpan span;
    span.start = static_cast<int>(i);
    span.cls = tag_class(tags[i]);
    std::size_t j = i + 1;
    while (j < tags.size() && tags[j][0] == 'I') ++j;
    span.end = static_cast<int>(j);
    spans.push_back(std::move(span));
  }
  return spans;
}

std::vector<std::string> spans_to_tags(const std::vector<EntitySpan>& spans, int len) {
  auto sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  int prev_end = 0;
  for (const auto& span : sorted) {
    if (span.start < 0 || span.end > len || span.start >= span.end)
      fail(ErrorKind::OutOfRange, "span [" + std::to_string(span.start) + ", " +
                                      std::to_string(span.end) + ") outside [0, " +
                                      std::to_string(len) + ")");
    if (span.start < prev_end)
      fail(ErrorKind::Overlap, "span starting at " + std::to_string(span.start) +
                                   " overlaps the previous span");
    prev_end = span.end;
  }

  std::vector<std::string> tags(static_cast<std::size_t>(len), "O");
  for (const auto& span : sorted) {
    tags[static_cast<std::size_t>(span.start)] = "B-" + span.cls;
    for (int i = span.start + 1; i < span.end; ++i)
      tags[static_cast<std::size_t>(i)] = "I-" + span.cls;
  }
  return tags;
}

DatasetSplits split_dataset(const Dataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n < 10) fail(ErrorKind::TooSmall, "need at least 10 sentences, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RandomSource rng(seed);
  rng.shuffle(order);

  std::size_t n_test = n / 5;                 // floor(0.2 n)
  std::size_t n_val = (n - n_test) / 10;      // floor(0.1 of the remainder)
  if (n_test == 0) n_test = 1;
  if (n_val == 0) n_val = 1;  // steal from train; n >= 10 keeps train nonempty

  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(idx.begin(), idx.end());  // keep original corpus order inside a split
    Dataset split;
    split.labeled = dataset.labeled;
    split.sentences.reserve(count);
    for (std::size_t i : idx) split.sentences.push_back(dataset.sentences[i]);
    if (split.labeled) split.classes = collect_classes(split.sentences);
    return split;
  };

  DatasetSplits splits;
  splits.test = take(0, n_test);
  splits.val = take(n_test, n_val);
  splits.train = take(n_test + n_val, n - n_test - n_val);
  return splits;
}

Vocab build_vocab(const Dataset& train, int min_freq) {
  if (min_freq < 1) fail(ErrorKind::InvalidConfig, "min_freq must be >= 1");
  std::map<std::string, std::int64_t> freq;
  for (const auto& sentence : train.sentences)
    for (const auto& token : sentence.tokens) ++freq[token];

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [token, count] : freq)
    if (count >= min_freq) kept.emplace_back(token, count);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  vocab.min_freq = min_freq;
  vocab.id_to_token = {"<PAD>", "<UNK>"};
  for (const auto& [token, count] : kept) {
    vocab.token_to_id.emplace(token, static_cast<std::int32_t>(vocab.id_to_token.size()));
    vocab.id_to_token.push_back(token);
  }
  return vocab;
}

TagIndex make_tag_index(const std::vector<std::string>& classes) {
  TagIndex index;
  auto add = [&](const std::string& tag) {
    index.tag_to_id.emplace(tag, static_cast<std::int32_t>(index.id_to_tag.size()));
    index.id_to_tag.push_back(tag);
  };
  add("O");
  auto sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& cls : sorted) {
    add("B-" + cls);
    add("I-" + cls);
  }
  return index;
}

std::string serialize_tag_index(const TagIndex& index) {
  std::string out;
  for (std::size_t id = 0; id < index.id_to_tag.size(); ++id) {
    out += index.id_to_tag[id];
    out += '\t';
    out += std::to_string(id);
    out += '\n';
  }
  return out;
}

TagIndex parse_tag_index(const std::string& text) {
  TagIndex index;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() : eol + 1;
    ++line_no;
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      fail(ErrorKind::MalformedLine, "tag index line " + std::to_string(line_no) + " has no tab");
    std::string tag = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(index.id_to_tag.size()))
      fail(ErrorKind::MalformedLine,
           "tag index ids must be dense and sorted, got " + std::to_string(id));
    index.tag_to_id.emplace(tag, id);
    index.id_to_tag.push_back(std::move(tag));
  }
  return index;
}

EncodedBatch encode_batch(const std::vector<Sentence>& sentences, const Vocab& vocab,
                          const TagIndex& tag_index, int max_len) {
  if (max_len < 1) fail(ErrorKind::InvalidConfig, "max_len must be >= 1");
  EncodedBatch batch;
  batch.rows = static_cast<int>(sentences.size());
  int widest = 1;
  for (const auto& sentence : sentences) {
    int len = static_cast<int>(sentence.tokens.size());
    if (len > max_len) {
      len = max_len;
      ++batch.truncated;
    }
    widest = std::max(widest, len);
  }
  batch.cols = widest;

  const std::size_t total = static_cast<std::size_t>(batch.rows) * batch.cols;
  batch.ids.assign(total, Vocab::kPad);
  batch.mask.assign(total, 0);
  batch.tags.assign(total, EncodedBatch::kIgnore);

  for (int r = 0; r < batch.rows; ++r) {
    const Sentence& sentence = sentences[static_cast<std::size_t>(r)];
    const int len = std::min<int>(static_cast<int>(sentence.tokens.size()), max_len);
    for (int c = 0; c < len; ++c) {
      const std::size_t at = static_cast<std::size_t>(r) * batch.cols + c;
      batch.ids[at] = vocab.lookup(sentence.tokens[static_cast<std::size_t>(c)]);
      batch.mask[at] = 1;
      if (sentence.tags) {
        const std::string& tag = (*sentence.tags)[static_cast<std::size_t>(c)];
        auto it = tag_index.tag_to_id.find(tag);
        if (it == tag_index.tag_to_id.end())
          fail(ErrorKind::UnknownTag, "'" + tag + "' not in tag index");
        batch.tags[at] = it->second;
      }
    }
  }
  return batch;
}

std::vector<std::string> collect_classes(const std::vector<Sentence>& sentences) {
  std::set<std::string> classes;
  for (const auto& sentence : sentences) {
    if (!sentence.tags) continue;
    for (const auto& tag : sentence.tags.value())
      if (tag != "O" && tag.size() > 2) classes.insert(tag.substr(2));
  }
  return {classes.begin(), classes.end()};
}

}  // namespace daner
