#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snmt/tokens.hpp"

namespace snmt {

using TokenList = std::vector<std::string>;

/// NFC normalization, Devanagari digits mapped to ASCII, whitespace runs
/// collapsed to one space, ends trimmed. Idempotent. Throws EncodingError
/// carrying the byte offset of the first ill-formed sequence.
std::string normalize_text(std::string_view raw);

/// Whitespace split, then each of । ॥ ? ! , . becomes a token of its own.
TokenList tokenize(std::string_view normalized);

/// True for the punctuation marks that tokenize() detaches.
bool is_detached_punctuation(std::string_view token);

/// Decodes UTF-8 into code points; throws EncodingError on bad input.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view text);

struct SentencePair {
  TokenList source;
  TokenList target;
  std::size_t line_no = 0;  // 1-based
};

struct MalformedLine {
  std::size_t line_no = 0;
  std::string reason;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::size_t source_token_count = 0;
  std::size_t target_token_count = 0;
  std::vector<MalformedLine> rejected;
};

/// Parses `source<TAB>target` lines. Blank lines are skipped; lines with no
/// tab, several tabs, bad UTF-8 or an empty side are rejected and listed.
/// More than 10% rejected lines is a FormatError naming the offenders.
ParallelCorpus parse_corpus(std::istream& in, const std::string& origin = "<stream>");
ParallelCorpus load_corpus(const std::filesystem::path& path);

struct CorpusStats {
  std::size_t samples = 0;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;
  bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(const ParallelCorpus& corpus);

struct CorpusSplit {
  std::vector<SentencePair> train;
  std::vector<SentencePair> validation;
  std::vector<SentencePair> test;
};

/// Seeded shuffle, then 80/10/10 by count (train takes the rounding slack).
CorpusSplit split_corpus(std::span<const SentencePair> pairs, std::uint64_t seed);

/// Token <-> id map. Ids 0..3 are <pad>, <start>, <end>, <unk>; the rest are
/// assigned by descending frequency, ties in byte order.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(std::span<const TokenList> sentences, std::size_t min_count = 1);
  /// Rebuilds from tokens listed in id order, reserved entries included.
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  bool contains(std::string_view token) const;
  TokenId id(std::string_view token) const;  // kUnkId when absent
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// [<start>] + ids + [<end>], unknown tokens as <unk>.
  std::vector<TokenId> encode(std::span<const std::string> sentence) const;
  /// Inverse of encode: drops a leading <start>, stops at <end>, skips <pad>.
  TokenList decode(std::span<const TokenId> ids) const;

  /// {"min_count": n, "token_to_id": {...}} with reserved entries included.
  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && min_count_ == other.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> ids_;
  std::size_t min_count_ = 1;
};

}  // namespace snmt
