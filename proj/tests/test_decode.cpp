#include <cmath>

#include <doctest.h>

#include "fixture_model.hpp"
#include "model_fixtures.hpp"
#include "snmt/decode.hpp"

using namespace snmt;
using namespace snmt::testing;

namespace {

void check_rows(const std::vector<std::vector<double>>& rows, std::size_t width) {
  for (const auto& row : rows) {
    REQUIRE(row.size() == width);
    double total = 0.0;
    for (double a : row) {
      CHECK(a >= 0.0);
      total += a;
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("greedy_decode on the overfit fixture model") {
  const auto& run = fixture_run();
  const auto& tm = run.model;
  const auto sample = load_corpus(kFixtureDir / "sample_pairs.tsv");

  SUBCASE("sample sources decode to their references") {
    for (const auto& pair : sample.pairs) {
      const auto ids = tm.source_vocab.encode(pair.source);
      const auto out = greedy_decode(tm.model, std::span<const TokenId>(ids), 50);
      CHECK_FALSE(out.truncated);
      CHECK(tm.target_vocab.decode(out.ids) == pair.target);
      CHECK(out.ids.back() == kEndId);
      CHECK(out.attention.size() == out.ids.size());
      check_rows(out.attention, ids.size());
      CHECK(std::exp(out.log_prob) > 0.0);
      CHECK(std::exp(out.log_prob) <= 1.0);
    }
  }

  SUBCASE("max_len 1 truncates after one token") {
    const auto ids = tm.source_vocab.encode(sample.pairs[0].source);
    const auto out = greedy_decode(tm.model, std::span<const TokenId>(ids), 1);
    CHECK(out.ids.size() == 1);
    CHECK(out.truncated);
    CHECK(out.ids.back() != kEndId);
    CHECK(out.attention.size() == 1);
    CHECK_THROWS_AS(greedy_decode(tm.model, std::span<const TokenId>(ids), 0), DomainError);
  }

  SUBCASE("translate_text end to end") {
    auto r = translate_text(tm, "अहं एकाकिनी अस्मि", 50);
    CHECK(r.translation == "मैं अकेली हूँ");
    CHECK(r.source_tokens == TokenList{"<start>", "अहं", "एकाकिनी", "अस्मि", "<end>"});
    CHECK(r.target_tokens == TokenList{"मैं", "अकेली", "हूँ", "<end>"});
    REQUIRE(r.attention);
    CHECK(r.attention->rows() == 4);
    CHECK(r.attention->cols() == 5);
    CHECK(r.attention->source_tokens == r.source_tokens);
    CHECK(r.attention->target_tokens == r.target_tokens);
    CHECK(r.diagnostics.empty());

    auto q = translate_text(tm, "अन्तः आगन्तुं शक्नोमि?", 50);
    CHECK(q.target_tokens == TokenList{"अंदर", "आ", "सकता", "हूँ", "क्या", "?", "<end>"});
    CHECK(q.translation == "अंदर आ सकता हूँ क्या?");
  }

  SUBCASE("whitespace-only input is rejected") {
    CHECK_THROWS_WITH_AS(translate_text(tm, "  \t ", 50), "empty input", DomainError);
    CHECK_THROWS_WITH_AS(translate_text(tm, "", 50), "empty input", DomainError);
  }

  SUBCASE("unknown words still translate and are flagged") {
    auto r = translate_text(tm, "अहं कम्प्यूटरं पश्यामि", 50);
    CHECK_FALSE(r.target_tokens.empty());
    REQUIRE(r.diagnostics.size() == 2);
    CHECK(r.diagnostics[0].find("कम्प्यूटरं") != std::string::npos);
    CHECK(r.source_tokens[2] == "कम्प्यूटरं");
  }

  SUBCASE("decoding is deterministic") {
    auto a = translate_text(tm, "अहं बहु व्यस्तः अस्मि", 50);
    auto b = translate_text(tm, "अहं बहु व्यस्तः अस्मि", 50);
    CHECK(a.translation == "मैं बहुत व्यस्त हूँ");
    CHECK(a.attention->weights == b.attention->weights);
    CHECK(a.log_prob == b.log_prob);
  }
}

TEST_CASE("greedy_decode on synthetic models") {
  Rng rng(12);

  SUBCASE("log_prob equals the teacher-forced score of the emitted sequence") {
    for (int trial = 0; trial < 20; ++trial) {
      auto config = small_config(trial % 2 ? CellType::kGru : CellType::kLstm, trial % 3 != 0,
                                 trial % 4 == 0);
      auto model = make_initialized_model<double>(config, 50 + trial, 3.0);
      randomize_biases(model, rng, 1.0);
      model.params.output_bias.value()(kEndId) += 1.5;  // make <end> reachable
      const auto src = random_sequence(rng, 12, 1 + rng.below(5));
      const auto out = greedy_decode(model, std::span<const TokenId>(src), 30);
      if (config.attention_enabled) {
        CHECK(out.attention.size() == out.ids.size());
        check_rows(out.attention, src.size());
      } else {
        CHECK(out.attention.empty());
      }
      CHECK(out.truncated == (out.ids.back() != kEndId));
      if (out.truncated) continue;
      std::vector<TokenId> tgt{kStartId};
      tgt.insert(tgt.end(), out.ids.begin(), out.ids.end());
      const double oracle = sequence_log_prob(model, std::span<const TokenId>(src),
                                              std::span<const TokenId>(tgt));
      CHECK(std::abs(out.log_prob - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
      const auto again = greedy_decode(model, std::span<const TokenId>(src), 30);
      CHECK(again.ids == out.ids);
      CHECK(again.attention == out.attention);
      CHECK(again.log_prob == out.log_prob);
    }
  }

  SUBCASE("ties go to the lowest id") {
    auto model = make_zero_model<double>(small_config(CellType::kLstm, true));
    const std::vector<TokenId> src{kStartId, 5, kEndId};
    const auto out = greedy_decode(model, std::span<const TokenId>(src), 4);
    CHECK(out.ids == std::vector<TokenId>{kPadId, kPadId, kPadId, kPadId});
    CHECK(out.truncated);
    CHECK(std::abs(out.log_prob + 4.0 * std::log(12.0)) <= 1e-12);
  }

  SUBCASE("invalid source ids are rejected") {
    auto model = make_zero_model<double>(small_config(CellType::kGru, true));
    const std::vector<TokenId> bad{kStartId, 40, kEndId};
    CHECK_THROWS_AS(greedy_decode(model, std::span<const TokenId>(bad), 5), DomainError);
  }
}

TEST_CASE("detokenize") {
  CHECK(detokenize(TokenList{"मैं", "अकेली", "हूँ"}) == "मैं अकेली हूँ");
  CHECK(detokenize(TokenList{"क्या", "?"}) == "क्या?");
  CHECK(detokenize(TokenList{"सब", "सुखी", "हों", "।"}) == "सब सुखी हों।");
  CHECK(detokenize(TokenList{}).empty());
  CHECK(detokenize(TokenList{"?"}) == "?");
  const TokenList t{"a", ",", "b", ".", ".", "c", "!"};
  CHECK(tokenize(detokenize(t)) == t);
}
