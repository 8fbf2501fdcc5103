#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snmt/corpus.hpp"
#include "snmt/model.hpp"

namespace snmt {

/// A trained model together with the vocabularies that give its ids meaning.
template <typename Scalar>
struct TranslationModel {
  Seq2Seq<Scalar> model;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  std::string id;  // checkpoint identifier
};

/// T_y x T_x alignment weights; row i is the attention of emitted token i.
struct AttentionMatrix {
  std::vector<std::vector<double>> weights;
  TokenList source_tokens;  // column labels, markers included
  TokenList target_tokens;  // row labels, <end> included when emitted

  std::size_t rows() const { return weights.size(); }
  std::size_t cols() const { return weights.empty() ? 0 : weights.front().size(); }
};

struct DecodeOutput {
  std::vector<TokenId> ids;  // emitted ids, <end> included when reached
  std::vector<std::vector<double>> attention;  // one row per emitted id; empty without attention
  double log_prob = 0.0;
  bool truncated = false;
};

/// Argmax decoding from <start> until <end> or `max_len` emitted tokens.
/// Ties go to the lowest id.
template <typename Scalar>
DecodeOutput greedy_decode(const Seq2Seq<Scalar>& model, std::span<const TokenId> source_ids,
                           Index max_len) {
  if (max_len < 1) throw DomainError("max_len must be at least 1, got " + std::to_string(max_len));
  Graph<Scalar> g(GradMode::kDisabled);
  auto encoded = encode(g, model, source_ids);
  auto state = initial_decoder_state(g, model, encoded);
  DecodeOutput out;
  TokenId previous = kStartId;
  for (Index step = 0; step < max_len; ++step) {
    auto next = decoder_step(g, model, previous, state, encoded);
    const Matrix<Scalar> log_probs = log_softmax(next.logits.value());
    Index best = 0;
    for (Index k = 1; k < log_probs.size(); ++k) {
      if (log_probs(k) > log_probs(best)) best = k;
    }
    out.ids.push_back(static_cast<TokenId>(best));
    out.log_prob += static_cast<double>(log_probs(best));
    if (next.attention) {
      const auto& w = next.attention->value();
      out.attention.emplace_back(w.data(), w.data() + w.size());
    }
    if (best == kEndId) return out;
    previous = static_cast<TokenId>(best);
    state = next.state;
  }
  out.truncated = true;
  return out;
}

/// Space-joins tokens; detached punctuation is glued to the token before it.
std::string detokenize(std::span<const std::string> tokens);

struct TranslationResult {
  TokenList source_tokens;  // markers included
  TokenList target_tokens;  // emitted tokens, <end> included when reached
  std::string translation;  // detokenized, markers excluded
  std::optional<AttentionMatrix> attention;
  double log_prob = 0.0;
  bool truncated = false;
  std::vector<std::string> diagnostics;
};

/// normalize -> tokenize -> encode -> greedy_decode -> detokenize.
template <typename Scalar>
TranslationResult translate_text(const TranslationModel<Scalar>& tm, std::string_view raw,
                                 Index max_len) {
  const TokenList words = tokenize(normalize_text(raw));
  if (words.empty()) throw DomainError("empty input");

  TranslationResult r;
  r.source_tokens.emplace_back(kStartToken);
  for (const auto& w : words) {
    r.source_tokens.push_back(w);
    if (!tm.source_vocab.contains(w)) r.diagnostics.push_back("out-of-vocabulary source token: " + w);
  }
  r.source_tokens.emplace_back(kEndToken);

  const auto ids = tm.source_vocab.encode(words);
  const auto decoded = greedy_decode(tm.model, std::span<const TokenId>(ids), max_len);
  TokenList sentence;
  for (TokenId id : decoded.ids) {
    r.target_tokens.push_back(tm.target_vocab.token(id));
    if (id != kEndId) sentence.push_back(r.target_tokens.back());
  }
  r.translation = detokenize(sentence);
  r.log_prob = decoded.log_prob;
  r.truncated = decoded.truncated;
  if (r.truncated) r.diagnostics.push_back("output truncated at " + std::to_string(max_len) + " tokens");
  if (!decoded.attention.empty()) {
    r.attention = AttentionMatrix{decoded.attention, r.source_tokens, r.target_tokens};
  }
  return r;
}

}  // namespace snmt
