#include <filesystem>
#include <set>
#include <sstream>

#include <doctest.h>

#include "oracles.hpp"
#include "snmt/corpus.hpp"
#include "snmt/error.hpp"
#include "snmt/random.hpp"

using namespace snmt;
using snmt::testing::random_devanagari;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(SNMT_SOURCE_DIR) / "fixtures";

std::string utf8(std::u32string_view cps) { return encode_utf8(cps); }

}  // namespace

TEST_CASE("normalize_text") {
  SUBCASE("Devanagari digits map to ASCII") {
    CHECK(normalize_text("१२३") == "123");
    CHECK(normalize_text("०१२३४५६७८९") == "0123456789");
  }

  SUBCASE("whitespace runs collapse and ends are trimmed") {
    CHECK(normalize_text("  अहं \t\t बहु  व्यस्तः  ") == "अहं बहु व्यस्तः");
    CHECK(normalize_text(" \t\n ").empty());
    CHECK(normalize_text("").empty());
  }

  SUBCASE("precomposed and decomposed qa agree") {
    const auto a = normalize_text(utf8(U"\u0958"));
    const auto b = normalize_text(utf8(U"\u0915\u093C"));
    CHECK(a == b);
    CHECK(decode_utf8(a) == std::u32string(U"\u0915\u093C"));
  }

  SUBCASE("every Devanagari canonical decomposition collapses") {
    // (character, canonical decomposition, NFC form) from the Unicode
    // character database.
    struct Row {
      char32_t composed;
      std::u32string decomposed;
      std::u32string canonical;
    };
    const Row table[] = {
        {0x0929, U"\u0928\u093C", U"\u0929"},
        {0x0931, U"\u0930\u093C", U"\u0931"},
        {0x0934, U"\u0933\u093C", U"\u0934"},
        {0x0958, U"\u0915\u093C", U"\u0915\u093C"},
        {0x0959, U"\u0916\u093C", U"\u0916\u093C"},
        {0x095A, U"\u0917\u093C", U"\u0917\u093C"},
        {0x095B, U"\u091C\u093C", U"\u091C\u093C"},
        {0x095C, U"\u0921\u093C", U"\u0921\u093C"},
        {0x095D, U"\u0922\u093C", U"\u0922\u093C"},
        {0x095E, U"\u092B\u093C", U"\u092B\u093C"},
        {0x095F, U"\u092F\u093C", U"\u092F\u093C"},
    };
    for (const auto& row : table) {
      INFO("U+" << std::hex << static_cast<unsigned>(row.composed));
      const auto from_composed = decode_utf8(normalize_text(utf8(std::u32string(1, row.composed))));
      const auto from_decomposed = decode_utf8(normalize_text(utf8(row.decomposed)));
      CHECK(from_composed == row.canonical);
      CHECK(from_decomposed == row.canonical);
      // Same collapse inside a word, followed by a vowel sign and virama.
      const auto word_a = normalize_text(utf8(U"अ" + std::u32string(1, row.composed) + U"ि"));
      const auto word_b = normalize_text(utf8(U"अ" + row.decomposed + U"ि"));
      CHECK(word_a == word_b);
    }
    // Nukta (ccc 7) and virama (ccc 9) are reordered canonically.
    CHECK(normalize_text(utf8(U"\u0915\u093C\u094D")) == normalize_text(utf8(U"\u0915\u094D\u093C")));
  }

  SUBCASE("idempotent on random Devanagari strings") {
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
      const auto s = random_devanagari(rng);
      const auto once = normalize_text(s);
      REQUIRE(normalize_text(once) == once);
      for (const auto& token : tokenize(once)) {
        CHECK_FALSE(token.empty());
        for (char32_t c : decode_utf8(token)) CHECK_FALSE((c == U' ' || c == U'\t' || c == 0xA0));
      }
    }
  }

  SUBCASE("invalid UTF-8 reports the byte offset") {
    const std::string bad = std::string("अहं ") + "\xC3\x28";
    try {
      normalize_text(bad);
      FAIL("expected EncodingError");
    } catch (const EncodingError& e) {
      CHECK(e.byte_offset() == 10);
      CHECK(std::string(e.what()).find("byte 10") != std::string::npos);
    }
    CHECK_THROWS_AS(normalize_text("\xC0\x80"), EncodingError);      // overlong NUL
    CHECK_THROWS_AS(normalize_text("\xED\xA0\x80"), EncodingError);  // surrogate
    CHECK_THROWS_AS(normalize_text("\xE0\xA4"), EncodingError);      // truncated
    CHECK_THROWS_AS(normalize_text("\xFF"), EncodingError);
  }
}

TEST_CASE("tokenize") {
  CHECK(tokenize("अहं तर्तुं शक्नोमि") == TokenList{"अहं", "तर्तुं", "शक्नोमि"});
  CHECK(tokenize("अन्तः आगन्तुं शक्नोमि?") == TokenList{"अन्तः", "आगन्तुं", "शक्नोमि", "?"});
  CHECK(tokenize("अन्तः आगन्तुं शक्नोमि ?") == TokenList{"अन्तः", "आगन्तुं", "शक्नोमि", "?"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("सर्वे सुखिनः भवन्तु।") == TokenList{"सर्वे", "सुखिनः", "भवन्तु", "।"});
  CHECK(tokenize("क,ख!ग॥") == TokenList{"क", ",", "ख", "!", "ग", "॥"});
  CHECK(tokenize("...") == TokenList{".", ".", "."});
  CHECK(is_detached_punctuation("?"));
  CHECK(is_detached_punctuation("।"));
  CHECK_FALSE(is_detached_punctuation("क्या"));
}

TEST_CASE("Vocabulary") {
  const std::vector<TokenList> one{{"a", "b", "a"}};

  SUBCASE("frequency order with reserved ids first") {
    auto v = Vocabulary::build(one, 1);
    CHECK(v.size() == 6);
    CHECK(v.token(kPadId) == "<pad>");
    CHECK(v.token(kStartId) == "<start>");
    CHECK(v.token(kEndId) == "<end>");
    CHECK(v.token(kUnkId) == "<unk>");
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);
  }

  SUBCASE("min_count drops rare tokens to unk") {
    auto v = Vocabulary::build(one, 2);
    CHECK(v.size() == 5);
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == kUnkId);
    const TokenList sentence{"b", "a"};
    CHECK(v.encode(sentence) == std::vector<TokenId>{kStartId, kUnkId, 4, kEndId});
    CHECK(v.decode(v.encode(sentence)) == TokenList{"<unk>", "a"});
  }

  SUBCASE("ties break in byte order") {
    const std::vector<TokenList> c{{"z", "y", "x", "y", "x"}};
    auto v = Vocabulary::build(c, 1);
    CHECK(v.tokens() == std::vector<std::string>{"<pad>", "<start>", "<end>", "<unk>", "x", "y", "z"});
  }

  SUBCASE("encode frames with markers, decode inverts") {
    auto v = Vocabulary::build(one, 1);
    CHECK(v.encode(TokenList{}) == std::vector<TokenId>{kStartId, kEndId});
    const TokenList t{"b", "a", "a"};
    CHECK(v.decode(v.encode(t)) == t);
    CHECK(v.encode(TokenList{"c"})[1] == kUnkId);
    CHECK(v.decode(std::vector<TokenId>{kStartId, 4, kPadId, 5, kEndId, 4}) == TokenList{"a", "b"});
    CHECK_THROWS_AS(v.token(99), DomainError);
  }

  SUBCASE("builds are deterministic and JSON round-trips") {
    auto corpus = load_corpus(kFixtures / "pairs.tsv");
    std::vector<TokenList> sides;
    for (const auto& p : corpus.pairs) sides.push_back(p.target);
    auto a = Vocabulary::build(sides, 1);
    auto b = Vocabulary::build(sides, 1);
    CHECK(a == b);
    CHECK(a.to_json() == b.to_json());
    auto c = Vocabulary::from_json(a.to_json());
    CHECK(c == a);
    CHECK(a.to_json().find("\"<start>\": 1") != std::string::npos);
    for (const auto& s : sides) CHECK(a.decode(a.encode(s)) == s);
    CHECK_THROWS_AS(Vocabulary::from_json("{\"min_count\": 1}"), FormatError);
    CHECK_THROWS_AS(Vocabulary::from_json("{\"min_count\":1,\"token_to_id\":{\"x\":0}}"),
                    FormatError);
  }
}

TEST_CASE("load_corpus") {
  SUBCASE("the seven sample pairs load with hand-counted totals") {
    auto corpus = load_corpus(kFixtures / "sample_pairs.tsv");
    CHECK(corpus.pairs.size() == 7);
    CHECK(corpus.rejected.empty());
    const auto stats = corpus_stats(corpus);
    CHECK(stats == CorpusStats{7, 31, 47});
    CHECK(corpus.source_token_count == 31);
    CHECK(corpus.target_token_count == 47);
    CHECK(corpus.pairs[0].source == TokenList{"अन्तः", "आगन्तुं", "शक्नोमि", "?"});
    CHECK(corpus.pairs[0].line_no == 1);
    CHECK(corpus_stats(load_corpus(kFixtures / "sample_pairs.tsv")) == stats);
  }

  SUBCASE("full fixture has 32 pairs in file order") {
    auto corpus = load_corpus(kFixtures / "pairs.tsv");
    CHECK(corpus.pairs.size() == 32);
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) CHECK(corpus.pairs[i].line_no == i + 1);
    // Devanagari digit in the source side is canonicalized.
    bool saw_digit = false;
    for (const auto& p : corpus.pairs) {
      for (const auto& t : p.source) saw_digit |= t == "3";
    }
    CHECK(saw_digit);
  }

  SUBCASE("hand-counted three-line file") {
    std::istringstream in("क ख ग\tघ ङ\n\nच छ?\tज झ ञ ट।\r\nठ\tड\n");
    auto corpus = parse_corpus(in);
    CHECK(corpus_stats(corpus) == CorpusStats{3, 7, 8});
  }

  SUBCASE("malformed lines are rejected with line numbers") {
    std::ostringstream text;
    for (int i = 0; i < 12; ++i) text << "क\tख\n";
    text << "only source text\n";
    std::istringstream in(text.str());
    auto corpus = parse_corpus(in);
    CHECK(corpus.pairs.size() == 12);
    REQUIRE(corpus.rejected.size() == 1);
    CHECK(corpus.rejected[0].line_no == 13);
  }

  SUBCASE("more than ten percent malformed is fatal and lists offenders") {
    std::istringstream in("क\tख\nonly source\nक\tख\tग\n \t \nक\tख\n");
    CHECK_THROWS_WITH_AS(parse_corpus(in, "mem"), doctest::Contains("line 2"), FormatError);
    std::istringstream again("क\tख\nonly source\n");
    CHECK_THROWS_WITH_AS(parse_corpus(again, "mem"), doctest::Contains("1 of 2"), FormatError);
  }

  SUBCASE("unreadable file is an I/O error") {
    CHECK_THROWS_AS(load_corpus(kFixtures / "does_not_exist.tsv"), IoError);
  }

  SUBCASE("empty corpus statistics") { CHECK(corpus_stats(ParallelCorpus{}) == CorpusStats{}); }
}

TEST_CASE("split_corpus") {
  auto corpus = load_corpus(kFixtures / "pairs.tsv");
  auto split = split_corpus(corpus.pairs, 7);
  CHECK(split.train.size() == 26);
  CHECK(split.validation.size() == 3);
  CHECK(split.test.size() == 3);
  std::set<std::size_t> lines;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& p : *part) lines.insert(p.line_no);
  }
  CHECK(lines.size() == 32);
  auto again = split_corpus(corpus.pairs, 7);
  CHECK(again.test.front().line_no == split.test.front().line_no);
  CHECK(split_corpus(std::span<const SentencePair>(), 1).train.empty());
}
