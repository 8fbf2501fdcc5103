#include "snmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>
#include <zlib.h>

namespace snmt {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::size_t kHeaderSize = 4 + 4 + 8;
constexpr std::size_t kCrcSize = 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]);
  }
  return v;
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t at = 0; at < bytes.size(); at += kChunk) {
    const auto n = std::min(kChunk, bytes.size() - at);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + at), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string model_id(std::uint32_t crc) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "snmt-%08x", crc);
  return buf;
}

Json config_to_json(const ModelConfig& c) {
  Json j;
  j["source_vocab_size"] = c.source_vocab_size;
  j["target_vocab_size"] = c.target_vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["cell_type"] = to_string(c.cell_type);
  j["bidirectional_encoder"] = c.bidirectional_encoder;
  j["attention_enabled"] = c.attention_enabled;
  j["max_decode_len"] = c.max_decode_len;
  return j;
}

ModelConfig config_from_json(const Json& j) {
  ModelConfig c;
  c.source_vocab_size = j.at("source_vocab_size").get<Index>();
  c.target_vocab_size = j.at("target_vocab_size").get<Index>();
  c.embed_dim = j.at("embed_dim").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.cell_type = parse_cell_type(j.at("cell_type").get<std::string>());
  c.bidirectional_encoder = j.at("bidirectional_encoder").get<bool>();
  c.attention_enabled = j.at("attention_enabled").get<bool>();
  c.max_decode_len = j.at("max_decode_len").get<Index>();
  return c;
}

Json vocab_to_json(const Vocabulary& v) {
  Json j;
  j["min_count"] = v.min_count();
  j["tokens"] = v.tokens();
  return j;
}

Vocabulary vocab_from_json(const Json& j) {
  return Vocabulary::from_tokens(j.at("tokens").get<std::vector<std::string>>(),
                                 j.at("min_count").get<std::size_t>());
}

struct ParsedMeta {
  ModelConfig config;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  HistorySummary history;
  std::size_t array_bytes = 0;
};

/// Parses the metadata and checks the manifest against the shapes the
/// config implies. Any inconsistency throws CheckpointError.
ParsedMeta parse_meta(std::string_view text) {
  ParsedMeta m;
  try {
    const auto j = Json::parse(text);
    m.config = config_from_json(j.at("config"));
    m.config.validate();
    m.source_vocab = vocab_from_json(j.at("source_vocab"));
    m.target_vocab = vocab_from_json(j.at("target_vocab"));
    const auto& h = j.at("history");
    m.history.stop_reason = h.at("stop_reason").get<std::string>();
    m.history.best_epoch = h.at("best_epoch").get<Index>();
    m.history.best_validation_loss = h.at("best_validation_loss").get<double>();
    m.history.train_loss = h.at("train_loss").get<std::vector<double>>();
    m.history.validation_loss = h.at("validation_loss").get<std::vector<double>>();

    if (static_cast<Index>(m.source_vocab.size()) != m.config.source_vocab_size ||
        static_cast<Index>(m.target_vocab.size()) != m.config.target_vocab_size) {
      throw CheckpointError("vocabulary sizes disagree with the model config");
    }
    const auto expected = make_zero_model<float>(m.config).named_parameters();
    const auto& manifest = j.at("parameters");
    if (manifest.size() != expected.size()) {
      throw CheckpointError("manifest lists " + std::to_string(manifest.size()) +
                            " tensors, config implies " + std::to_string(expected.size()));
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& entry = manifest[i];
      const auto& [name, t] = expected[i];
      const auto shape = entry.at("shape").get<std::vector<Index>>();
      if (entry.at("name").get<std::string>() != name || shape.size() != 2 ||
          shape[0] != t->rows() || shape[1] != t->cols() ||
          entry.at("offset").get<std::size_t>() != offset) {
        throw CheckpointError("manifest entry " + std::to_string(i) + " does not match " + name +
                              " " + to_string(t->shape()) + " at offset " +
                              std::to_string(offset));
      }
      offset += static_cast<std::size_t>(t->size()) * sizeof(float);
    }
    m.array_bytes = offset;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const DomainError& e) {
    throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
  } catch (const FormatError& e) {
    if (dynamic_cast<const CheckpointError*>(&e)) throw;
    throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
  }
  return m;
}

}  // namespace

HistorySummary summarize(const TrainHistory& history) {
  HistorySummary s;
  s.stop_reason = to_string(history.stop_reason);
  s.best_epoch = history.best_epoch;
  s.best_validation_loss = history.best_validation_loss;
  for (const auto& e : history.epochs) {
    s.train_loss.push_back(e.train_loss);
    s.validation_loss.push_back(e.validation_loss);
  }
  return s;
}

std::string serialize_checkpoint(const Seq2Seq<float>& model, const Vocabulary& source_vocab,
                                 const Vocabulary& target_vocab, const HistorySummary& history) {
  model.config.validate();
  if (static_cast<Index>(source_vocab.size()) != model.config.source_vocab_size ||
      static_cast<Index>(target_vocab.size()) != model.config.target_vocab_size) {
    throw DomainError("vocabulary sizes disagree with the model config");
  }
  Json meta;
  meta["config"] = config_to_json(model.config);
  meta["source_vocab"] = vocab_to_json(source_vocab);
  meta["target_vocab"] = vocab_to_json(target_vocab);
  Json manifest = Json::array();
  std::size_t offset = 0;
  std::string arrays;
  for (const auto& [name, t] : model.named_parameters()) {
    if (!t->value().allFinite()) throw DomainError("parameter " + name + " is not finite");
    Json entry;
    entry["name"] = name;
    entry["shape"] = {t->rows(), t->cols()};
    entry["offset"] = offset;
    manifest.push_back(std::move(entry));
    // Row-major order, independent of Eigen's storage.
    for (Index r = 0; r < t->rows(); ++r) {
      for (Index c = 0; c < t->cols(); ++c) {
        std::uint32_t bits;
        const float v = t->value()(r, c);
        std::memcpy(&bits, &v, sizeof bits);
        put_u32(arrays, bits);
      }
    }
    offset += static_cast<std::size_t>(t->size()) * sizeof(float);
  }
  meta["parameters"] = std::move(manifest);
  Json h;
  h["stop_reason"] = history.stop_reason;
  h["best_epoch"] = history.best_epoch;
  h["best_validation_loss"] = history.best_validation_loss;
  h["train_loss"] = history.train_loss;
  h["validation_loss"] = history.validation_loss;
  meta["history"] = std::move(h);

  const std::string meta_text = meta.dump();
  std::string out;
  out.reserve(kHeaderSize + meta_text.size() + arrays.size() + kCrcSize);
  out += kCheckpointMagic;
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta_text.size());
  out += meta_text;
  out += arrays;
  put_u32(out, crc_of(std::string_view(out).substr(kHeaderSize)));
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderSize) {
    if (bytes.size() >= 4 && bytes.substr(0, 4) != kCheckpointMagic) {
      throw CheckpointError("not an SNMT checkpoint (bad magic bytes)");
    }
    throw CheckpointTruncatedError("checkpoint truncated: " + std::to_string(bytes.size()) +
                                   " bytes is shorter than the header");
  }
  if (bytes.substr(0, 4) != kCheckpointMagic) {
    throw CheckpointError("not an SNMT checkpoint (bad magic bytes)");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 " is not supported; this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  const std::uint64_t meta_len = get_le(bytes, 8, 8);
  if (meta_len > bytes.size() || bytes.size() - kHeaderSize < meta_len + kCrcSize) {
    throw CheckpointTruncatedError("checkpoint truncated: metadata of " +
                                   std::to_string(meta_len) + " bytes does not fit in " +
                                   std::to_string(bytes.size()) + " bytes");
  }
  const auto payload = bytes.substr(kHeaderSize, bytes.size() - kHeaderSize - kCrcSize);
  const auto stored_crc = static_cast<std::uint32_t>(get_le(bytes, bytes.size() - kCrcSize, 4));
  const bool crc_ok = crc_of(payload) == stored_crc;

  ParsedMeta meta;
  try {
    meta = parse_meta(payload.substr(0, meta_len));
  } catch (const CheckpointError& e) {
    if (!crc_ok) throw CheckpointChecksumError("checkpoint checksum mismatch");
    throw;
  }
  const std::size_t have = payload.size() - meta_len;
  if (have < meta.array_bytes) {
    throw CheckpointTruncatedError("checkpoint truncated: parameter data has " +
                                   std::to_string(have) + " of " +
                                   std::to_string(meta.array_bytes) + " bytes");
  }
  if (!crc_ok) throw CheckpointChecksumError("checkpoint checksum mismatch");
  if (have > meta.array_bytes) {
    throw CheckpointError("checkpoint has " + std::to_string(have - meta.array_bytes) +
                          " unexpected trailing bytes");
  }

  Checkpoint cp;
  cp.model.model = make_zero_model<float>(meta.config);
  std::size_t at = kHeaderSize + meta_len;
  for (auto& [name, t] : cp.model.model.named_parameters()) {
    for (Index r = 0; r < t->rows(); ++r) {
      for (Index c = 0; c < t->cols(); ++c) {
        const auto bits = static_cast<std::uint32_t>(get_le(bytes, at, 4));
        float v;
        std::memcpy(&v, &bits, sizeof v);
        t->value()(r, c) = v;
        at += 4;
      }
    }
  }
  cp.model.source_vocab = std::move(meta.source_vocab);
  cp.model.target_vocab = std::move(meta.target_vocab);
  cp.model.id = model_id(stored_crc);
  cp.history = std::move(meta.history);
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Seq2Seq<float>& model,
                     const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                     const HistorySummary& history) {
  const std::string bytes = serialize_checkpoint(model, source_vocab, target_vocab, history);
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto file = checkpoint_path(path);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read error in " + file.string());
  return parse_checkpoint(buf.str());
}

std::filesystem::path checkpoint_path(const std::filesystem::path& model_or_dir) {
  if (std::filesystem::is_directory(model_or_dir)) return model_or_dir / kCheckpointFileName;
  return model_or_dir;
}

}  // namespace snmt
