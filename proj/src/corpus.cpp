#include "snmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "snmt/error.hpp"
#include "snmt/random.hpp"

namespace snmt {

namespace {

constexpr char32_t kDevanagariZero = 0x0966;
constexpr char32_t kDevanagariNine = 0x096F;
constexpr char32_t kDanda = 0x0964;
constexpr char32_t kDoubleDanda = 0x0965;

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

bool is_punct(char32_t c) {
  return c == kDanda || c == kDoubleDanda || c == U'?' || c == U'!' || c == U',' || c == U'.';
}

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const auto* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) {
    throw Error(std::string("ICU NFC normalizer unavailable: ") + u_errorName(status));
  }
  return *n;
}

[[noreturn]] void bad_utf8(std::size_t offset, const char* why) {
  throw EncodingError("invalid UTF-8 at byte " + std::to_string(offset) + ": " + why, offset);
}

}  // namespace

std::u32string decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  auto fail = [&i](const char* why) { bad_utf8(i, why); };
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
      fail("unexpected lead byte");
    }
    if (i + len > n) fail("truncated sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) fail("missing continuation byte");
      cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min) fail("overlong encoding");
    if (cp > 0x10FFFF) fail("code point above U+10FFFF");
    if (cp >= 0xD800 && cp <= 0xDFFF) fail("surrogate code point");
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string normalize_text(std::string_view raw) {
  const std::u32string decoded = decode_utf8(raw);
  auto input = icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(decoded.data()),
                                             static_cast<int32_t>(decoded.size()));
  UErrorCode status = U_ZERO_ERROR;
  const icu::UnicodeString composed = nfc().normalize(input, status);
  if (U_FAILURE(status)) throw Error(std::string("NFC failed: ") + u_errorName(status));

  std::u32string out;
  out.reserve(static_cast<std::size_t>(composed.length()));
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length(); i = composed.moveIndex32(i, 1)) {
    auto c = static_cast<char32_t>(composed.char32At(i));
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    if (c >= kDevanagariZero && c <= kDevanagariNine) c = U'0' + (c - kDevanagariZero);
    out.push_back(c);
  }
  return encode_utf8(out);
}

bool is_detached_punctuation(std::string_view token) {
  const auto cps = decode_utf8(token);
  return cps.size() == 1 && is_punct(cps[0]);
}

TokenList tokenize(std::string_view normalized) {
  TokenList tokens;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(encode_utf8(current));
    current.clear();
  };
  for (char32_t c : decode_utf8(normalized)) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.push_back(encode_utf8(std::u32string(1, c)));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

// ---------------------------------------------------------------------------
// Corpus files

ParallelCorpus parse_corpus(std::istream& in, const std::string& origin) {
  ParallelCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::size_t content_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++content_lines;
    const auto tabs = std::count(line.begin(), line.end(), '\t');
    if (tabs != 1) {
      corpus.rejected.push_back(
          {line_no, tabs == 0 ? "no tab separator" : std::to_string(tabs) + " tab separators"});
      continue;
    }
    const auto tab = line.find('\t');
    SentencePair pair;
    pair.line_no = line_no;
    try {
      pair.source = tokenize(normalize_text(std::string_view(line).substr(0, tab)));
      pair.target = tokenize(normalize_text(std::string_view(line).substr(tab + 1)));
    } catch (const EncodingError& e) {
      corpus.rejected.push_back({line_no, e.what()});
      continue;
    }
    if (pair.source.empty() || pair.target.empty()) {
      corpus.rejected.push_back({line_no, pair.source.empty() ? "empty source" : "empty target"});
      continue;
    }
    corpus.source_token_count += pair.source.size();
    corpus.target_token_count += pair.target.size();
    corpus.pairs.push_back(std::move(pair));
  }
  if (in.bad()) throw IoError("read error in " + origin);
  if (corpus.rejected.size() * 10 > content_lines) {
    std::ostringstream os;
    os << origin << ": " << corpus.rejected.size() << " of " << content_lines
       << " lines are malformed";
    for (const auto& r : corpus.rejected) os << "\n  line " << r.line_no << ": " << r.reason;
    throw FormatError(os.str());
  }
  return corpus;
}

ParallelCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  return parse_corpus(in, path.string());
}

CorpusStats corpus_stats(const ParallelCorpus& corpus) {
  CorpusStats s;
  s.samples = corpus.pairs.size();
  for (const auto& p : corpus.pairs) {
    s.source_tokens += p.source.size();
    s.target_tokens += p.target.size();
  }
  return s;
}

CorpusSplit split_corpus(std::span<const SentencePair> pairs, std::uint64_t seed) {
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t tenth = (pairs.size() + 5) / 10;
  const std::size_t held = std::min(pairs.size(), 2 * tenth);
  const std::size_t n_train = pairs.size() - held;
  const std::size_t n_valid = std::min(tenth, held);
  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& p = pairs[order[i]];
    if (i < n_train) {
      split.train.push_back(p);
    } else if (i < n_train + n_valid) {
      split.validation.push_back(p);
    } else {
      split.test.push_back(p);
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (auto t : {kPadToken, kStartToken, kEndToken, kUnkToken}) {
    ids_.emplace(std::string(t), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocabulary Vocabulary::build(std::span<const TokenList> sentences, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (const auto& t : s) ++counts[t];
  }
  const Vocabulary reserved;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= min_count && !reserved.contains(token)) ranked.emplace_back(token, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens(reserved.tokens());
  for (auto& [token, count] : ranked) tokens.push_back(token);
  return from_tokens(std::move(tokens), min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t min_count) {
  Vocabulary v;
  if (tokens.size() < static_cast<std::size_t>(kReservedCount) ||
      !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw FormatError("vocabulary must start with <pad>, <start>, <end>, <unk>");
  }
  for (std::size_t i = v.tokens_.size(); i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw FormatError("vocabulary entry " + std::to_string(i) + " is empty");
    if (!v.ids_.emplace(tokens[i], static_cast<TokenId>(i)).second) {
      throw FormatError("vocabulary token '" + tokens[i] + "' appears twice");
    }
    v.tokens_.push_back(std::move(tokens[i]));
  }
  v.min_count_ = min_count;
  return v;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DomainError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> sentence) const {
  std::vector<TokenId> ids;
  ids.reserve(sentence.size() + 2);
  ids.push_back(kStartId);
  for (const auto& t : sentence) ids.push_back(id(t));
  ids.push_back(kEndId);
  return ids;
}

TokenList Vocabulary::decode(std::span<const TokenId> ids) const {
  TokenList out;
  std::size_t i = !ids.empty() && ids.front() == kStartId ? 1 : 0;
  for (; i < ids.size() && ids[i] != kEndId; ++i) {
    if (ids[i] != kPadId) out.push_back(token(ids[i]));
  }
  return out;
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json map = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) map[tokens_[i]] = i;
  nlohmann::ordered_json doc;
  doc["min_count"] = min_count_;
  doc["token_to_id"] = std::move(map);
  return doc.dump(2);
}

Vocabulary Vocabulary::from_json(std::string_view json) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
    std::vector<std::string> tokens(doc.at("token_to_id").size());
    for (auto& [token, id] : doc.at("token_to_id").items()) {
      const auto i = id.get<std::size_t>();
      if (i >= tokens.size() || !tokens[i].empty()) {
        throw FormatError("vocabulary ids are not a permutation of 0.." +
                          std::to_string(tokens.size() - 1));
      }
      tokens[i] = token;
    }
    return from_tokens(std::move(tokens), doc.at("min_count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed vocabulary document: ") + e.what());
  }
}

}  // namespace snmt
