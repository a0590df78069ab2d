#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daner/corpus.hpp"
#include "daner/model.hpp"

namespace daner {

/// Everything needed to run a saved model: its configuration, the token and
/// tag mappings it was trained with, and the weights.
struct Checkpoint {
  ModelConfig config;
  Vocab vocab;
  TagIndex tag_index;
  ParamSet<float> params;

  Model<float> to_model() const { return {config, params}; }
};

/// Binary layout: magic "ADNERCK1"; u32-LE byte length + UTF-8 metadata
/// text (config keys, vocabulary and tag table); u32-LE tensor count; per
/// tensor a u16-LE name length, the name, a u8 rank, rank u32-LE dims and
/// the raw little-endian float32 data; finally a CRC32 of all preceding
/// bytes. Identical inputs serialize to identical bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const Vocab& vocab,
                                               const TagIndex& tag_index);

/// Throws BadMagic / ChecksumMismatch / ShapeMismatch; a corrupted or
/// truncated buffer never crashes.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model<float>& model, const Vocab& vocab, const TagIndex& tag_index,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace daner
