#include "daner/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <string_view>

#include <zlib.h>

#include "daner/error.hpp"

namespace daner {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'N', 'E', 'R', 'C', 'K', '1'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (len > 0) {
    const std::size_t chunk = std::min<std::size_t>(len, 1u << 30);
    crc = crc32(crc, data, static_cast<uInt>(chunk));
    data += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string build_metadata(const ModelConfig& config, const Vocab& vocab,
                           const TagIndex& tag_index) {
  std::string meta;
  meta += "[model]\n";
  meta += "vocab_size = " + std::to_string(config.vocab_size) + "\n";
  meta += "d_model = " + std::to_string(config.d_model) + "\n";
  meta += "n_encoder_layers = " + std::to_string(config.n_encoder_layers) + "\n";
  meta += "n_heads = " + std::to_string(config.n_heads) + "\n";
  meta += "d_ffn = " + std::to_string(config.d_ffn) + "\n";
  meta += "max_len = " + std::to_string(config.max_len) + "\n";
  meta += "n_tags = " + std::to_string(config.n_tags) + "\n";
  meta += "dropout = " + format_double(config.dropout) + "\n";
  meta += "head_hidden = " + std::to_string(config.head_hidden) + "\n";
  meta += "vocab_min_freq = " + std::to_string(vocab.min_freq) + "\n";
  meta += "\n[vocab]\n";
  for (std::size_t id = 0; id < vocab.id_to_token.size(); ++id)
    meta += vocab.id_to_token[id] + "\t" + std::to_string(id) + "\n";
  meta += "\n[tags]\n";
  meta += serialize_tag_index(tag_index);
  return meta;
}

long long parse_int(std::string_view text, const std::string& what) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    fail(ErrorKind::ConfigError, "bad integer for " + what + ": \"" + std::string(text) + "\"");
  return v;
}

double parse_double(std::string_view text, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    fail(ErrorKind::ConfigError, "bad number for " + what + ": \"" + std::string(text) + "\"");
  return v;
}

void parse_metadata(const std::string& meta, ModelConfig& config, Vocab& vocab,
                    TagIndex& tag_index) {
  enum class Section { None, Model, VocabSec, Tags };
  Section section = Section::None;
  std::string tags_text;

  std::size_t pos = 0;
  while (pos <= meta.size()) {
    const std::size_t nl = meta.find('\n', pos);
    std::string_view line(meta.data() + pos,
                          (nl == std::string::npos ? meta.size() : nl) - pos);
    pos = nl == std::string::npos ? meta.size() + 1 : nl + 1;
    if (line.empty()) continue;

    if (line == "[model]") {
      section = Section::Model;
      continue;
    }
    if (line == "[vocab]") {
      section = Section::VocabSec;
      continue;
    }
    if (line == "[tags]") {
      section = Section::Tags;
      continue;
    }

    switch (section) {
      case Section::None:
        fail(ErrorKind::ConfigError, "checkpoint metadata line outside any section");
      case Section::Model: {
        const std::size_t eq = line.find(" = ");
        if (eq == std::string_view::npos)
          fail(ErrorKind::ConfigError, "malformed checkpoint config line");
        const std::string_view key = line.substr(0, eq);
        const std::string_view value = line.substr(eq + 3);
        if (key == "vocab_size")
          config.vocab_size = static_cast<int>(parse_int(value, "vocab_size"));
        else if (key == "d_model")
          config.d_model = static_cast<int>(parse_int(value, "d_model"));
        else if (key == "n_encoder_layers")
          config.n_encoder_layers = static_cast<int>(parse_int(value, "n_encoder_layers"));
        else if (key == "n_heads")
          config.n_heads = static_cast<int>(parse_int(value, "n_heads"));
        else if (key == "d_ffn")
          config.d_ffn = static_cast<int>(parse_int(value, "d_ffn"));
        else if (key == "max_len")
          config.max_len = static_cast<int>(parse_int(value, "max_len"));
        else if (key == "n_tags")
          config.n_tags = static_cast<int>(parse_int(value, "n_tags"));
        else if (key == "dropout")
          config.dropout = parse_double(value, "dropout");
        else if (key == "head_hidden")
          config.head_hidden = static_cast<int>(parse_int(value, "head_hidden"));
        else if (key == "vocab_min_freq")
          vocab.min_freq = static_cast<int>(parse_int(value, "vocab_min_freq"));
        else
          fail(ErrorKind::ConfigError, "unknown checkpoint config key \"" + std::string(key) + "\"");
        break;
      }
      case Section::VocabSec: {
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
          fail(ErrorKind::ConfigError, "malformed checkpoint vocabulary line");
        const std::string token(line.substr(0, tab));
        const long long id = parse_int(line.substr(tab + 1), "vocabulary id");
        if (id != static_cast<long long>(vocab.id_to_token.size()))
          fail(ErrorKind::ConfigError, "checkpoint vocabulary ids must be dense and ordered");
        vocab.id_to_token.push_back(token);
        if (id >= 2) vocab.token_to_id.emplace(token, static_cast<std::int32_t>(id));
        break;
      }
      case Section::Tags:
        tags_text += std::string(line) + "\n";
        break;
    }
  }

  if (vocab.id_to_token.size() < 2 || vocab.id_to_token[0] != "<PAD>" ||
      vocab.id_to_token[1] != "<UNK>")
    fail(ErrorKind::ConfigError, "checkpoint vocabulary is missing the PAD/UNK entries");
  tag_index = parse_tag_index(tags_text);
}

struct Reader {
  const std::uint8_t* data;
  std::size_t pos = 0;
  std::size_t end = 0;

  void need(std::size_t n) const {
    if (end - pos < n) fail(ErrorKind::Truncated, "checkpoint data ends early");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model<float>& model, const Vocab& vocab,
                                               const TagIndex& tag_index) {
  const std::vector<ParamShape> layout = param_layout(model.config);
  if (model.params.count() != static_cast<int>(layout.size()))
    fail(ErrorKind::ShapeMismatch, "parameter set does not match the model configuration");
  for (int i = 0; i < model.params.count(); ++i) {
    const ParamEntry<float>& e = model.params.entry(i);
    const ParamShape& want = layout[static_cast<std::size_t>(i)];
    if (e.name != want.name || e.value.shape() != want.dims)
      fail(ErrorKind::ShapeMismatch, "parameter " + e.name + " does not match the layout");
  }
  if (static_cast<int>(vocab.id_to_token.size()) != model.config.vocab_size)
    fail(ErrorKind::ShapeMismatch, "vocabulary size disagrees with the model configuration");
  if (tag_index.size() != model.config.n_tags)
    fail(ErrorKind::ShapeMismatch, "tag set size disagrees with the model configuration");

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);

  const std::string meta = build_metadata(model.config, vocab, tag_index);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());

  put_u32(out, static_cast<std::uint32_t>(model.params.count()));
  for (int i = 0; i < model.params.count(); ++i) {
    const ParamEntry<float>& e = model.params.entry(i);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.value.rank()));
    for (int d = 0; d < e.value.rank(); ++d)
      put_u32(out, static_cast<std::uint32_t>(e.value.dim(d)));
    out.reserve(out.size() + static_cast<std::size_t>(e.value.size()) * 4);
    for (std::int64_t j = 0; j < e.value.size(); ++j) put_f32(out, e.value[j]);
  }

  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    fail(ErrorKind::BadMagic, "not a checkpoint file");
  if (bytes.size() < 8 + 4 + 4 + 4)
    fail(ErrorKind::ChecksumMismatch, "checkpoint file is too short");

  const std::uint32_t stored =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
      static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  if (crc_of(bytes.data(), bytes.size() - 4) != stored)
    fail(ErrorKind::ChecksumMismatch, "checkpoint CRC32 does not match");

  Reader r{bytes.data(), 8, bytes.size() - 4};
  const std::uint32_t meta_len = r.u32();
  const std::string meta = r.str(meta_len);

  Checkpoint ck;
  parse_metadata(meta, ck.config, ck.vocab, ck.tag_index);
  const std::vector<ParamShape> layout = param_layout(ck.config);

  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != layout.size())
    fail(ErrorKind::ShapeMismatch, "checkpoint holds " + std::to_string(n_tensors) +
                                       " tensors, configuration needs " +
                                       std::to_string(layout.size()));
  for (const ParamShape& want : layout) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const int rank = r.u8();
    std::vector<int> dims(static_cast<std::size_t>(rank));
    std::int64_t total = 1;
    for (int d = 0; d < rank; ++d) {
      dims[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
      total *= dims[static_cast<std::size_t>(d)];
    }
    if (name != want.name || dims != want.dims)
      fail(ErrorKind::ShapeMismatch, "tensor " + name + " does not match the expected layout");
    Tensor<float> value(dims);
    r.need(static_cast<std::size_t>(total) * 4);
    for (std::int64_t j = 0; j < total; ++j) value[j] = r.f32();
    ck.params.add(name, std::move(value), want.decay);
  }
  if (r.pos != r.end)
    fail(ErrorKind::ChecksumMismatch, "checkpoint has trailing bytes");

  if (static_cast<int>(ck.vocab.id_to_token.size()) != ck.config.vocab_size)
    fail(ErrorKind::ShapeMismatch, "vocabulary size disagrees with the model configuration");
  if (ck.tag_index.size() != ck.config.n_tags)
    fail(ErrorKind::ShapeMismatch, "tag set size disagrees with the model configuration");
  return ck;
}

void save_checkpoint(const Model<float>& model, const Vocab& vocab, const TagIndex& tag_index,
                     const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model, vocab, tag_index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Io, "error reading " + path);
  return deserialize_checkpoint(bytes);
}

}  // namespace daner
