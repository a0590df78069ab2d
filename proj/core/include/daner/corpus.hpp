#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace daner {

/// One sentence: whitespace-free tokens plus, for labeled data, one IOB2 tag
/// per token. Unlabeled target corpora carry no tags.
struct Sentence {
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> tags;

  bool operator==(const Sentence&) const = default;
};

/// A parsed corpus. `labeled` distinguishes a labeled dataset (every
/// sentence tagged, `classes` holds the sorted entity class set) from an
/// unlabeled corpus (no tags, empty class set).
struct Dataset {
  std::vector<Sentence> sentences;
  std::vector<std::string> classes;  // sorted, unique; empty when unlabeled
  bool labeled = false;

  std::size_t size() const { return sentences.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Entity span over token indices: [start, end) with a class label.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string cls;

  bool operator==(const EntitySpan&) const = default;
  auto operator<=>(const EntitySpan&) const = default;
};

/// One IOB2 violation found by validate_iob2.
struct TagViolation {
  int index = 0;
  std::string reason;

  bool operator==(const TagViolation&) const = default;
};

/// Token-to-id mapping with reserved PAD=0 and UNK=1. Case-sensitive.
struct Vocab {
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  std::vector<std::string> id_to_token;  // [0]="<PAD>", [1]="<UNK>"
  std::unordered_map<std::string, std::int32_t> token_to_id;  // real tokens only
  int min_freq = 2;

  int size() const { return static_cast<int>(id_to_token.size()); }

  std::int32_t lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

/// Tag-to-id mapping. Id 0 is always "O"; each class contributes B-/I- ids
/// in sorted class order.
struct TagIndex {
  std::vector<std::string> id_to_tag;
  std::unordered_map<std::string, std::int32_t> tag_to_id;

  int size() const { return static_cast<int>(id_to_tag.size()); }
  bool operator==(const TagIndex& o) const { return id_to_tag == o.id_to_tag; }
};

/// Integer-encoded batch ready for the model. Row-major [rows x cols];
/// tags use kIgnore at padded positions and for unlabeled sentences.
struct EncodedBatch {
  static constexpr std::int32_t kIgnore = -1;

  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> ids;    // rows*cols, PAD-padded
  std::vector<std::uint8_t> mask;   // rows*cols, 1 = real token
  std::vector<std::int32_t> tags;   // rows*cols, kIgnore where not scored
  int truncated = 0;                // sentences cut to max_len

  std::int32_t id_at(int r, int c) const { return ids[static_cast<std::size_t>(r) * cols + c]; }
  bool is_real(int r, int c) const { return mask[static_cast<std::size_t>(r) * cols + c] != 0; }
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// -- CoNLL 2002 parsing and serialization -----------------------------------

struct ParseOptions {
  bool labeled = true;
  /// Repair IOB1-style sequences to IOB2 after reading. Off, any sequence
  /// that is not already valid IOB2 is an InvalidScheme error.
  bool convert_iob1 = true;
  /// Off, tags are kept exactly as read, however malformed; callers then
  /// inspect them with validate_iob2. Structural errors still throw.
  bool validate = true;
};

/// Parse CoNLL 2002 column text: first column is the token, last column the
/// tag (when labeled). Blank lines delimit sentences, -DOCSTART- lines are
/// skipped, a trailing unterminated sentence is accepted.
Dataset parse_conll(const std::string& text, const ParseOptions& options);
Dataset parse_conll(const std::string& text, bool labeled);

/// Inverse of parse_conll on canonical files: "token tag" (or bare token)
/// lines, one blank line after every sentence, \n endings.
std::string serialize_conll(const Dataset& dataset);

// -- IOB tag scheme utilities ------------------------------------------------

/// Empty iff `tags` is valid IOB2 (every I-X preceded by B-X/I-X of class X).
std::vector<TagViolation> validate_iob2(const std::vector<std::string>& tags);

/// Convert an IOB1 reading to IOB2: an I-X opening an entity (after start,
/// O, or a different class) becomes B-X. Identity on valid IOB2 input.
std::vector<std::string> iob1_to_iob2(const std::vector<std::string>& tags);

/// Extract entity spans from a valid IOB2 sequence, sorted by start.
std::vector<EntitySpan> tags_to_spans(const std::vector<std::string>& tags);

/// Render non-overlapping spans as an IOB2 sequence of length `len`.
std::vector<std::string> spans_to_tags(const std::vector<EntitySpan>& spans, int len);

// -- Dataset-level operations ------------------------------------------------

/// Deterministic (seeded) split: test = 20% of sentences, val = 10% of the
/// remainder, train = rest; every split gets at least one sentence. Each
/// split's class set is recomputed from its own sentences. Requires n >= 10.
DatasetSplits split_dataset(const Dataset& dataset, std::uint64_t seed);

/// Frequency-then-lexicographic vocabulary over the training split.
Vocab build_vocab(const Dataset& train, int min_freq);

TagIndex make_tag_index(const std::vector<std::string>& classes);

/// Tag-index file: one "tag<TAB>id" line per tag, sorted by id.
std::string serialize_tag_index(const TagIndex& index);
TagIndex parse_tag_index(const std::string& text);

/// Encode sentences to padded id/mask/tag rows. Sentences longer than
/// max_len are truncated (counted in EncodedBatch::truncated). Unlabeled
/// sentences get an all-ignore tag row.
EncodedBatch encode_batch(const std::vector<Sentence>& sentences, const Vocab& vocab,
                          const TagIndex& tag_index, int max_len);

/// Class set of a tag sequence collection (sorted, unique).
std::vector<std::string> collect_classes(const std::vector<Sentence>& sentences);

}  // namespace daner
