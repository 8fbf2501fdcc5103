#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snmt/corpus.hpp"

namespace snmt {

struct NgramMatch {
  std::size_t matched = 0;  // clipped by the reference counts
  std::size_t total = 0;    // candidate n-grams
  bool operator==(const NgramMatch&) const = default;
};

/// Corpus-wide clipped n-gram matches, one reference per candidate.
NgramMatch modified_precision(std::span<const TokenList> candidates,
                              std::span<const TokenList> references, int n);

/// 1 when c >= r, exp(1 - r/c) otherwise, 0 when c == 0.
double brevity_penalty(std::size_t candidate_length, std::size_t reference_length);

struct BleuReport {
  int max_n = 4;
  std::vector<NgramMatch> matches;  // index n-1
  std::vector<double> precisions;   // matched/total, 0 when total == 0
  int effective_order = 0;          // orders with at least one candidate n-gram
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  double score = 0.0;
};

/// Unsmoothed corpus BLEU: BP * exp(mean over orders of ln p_n), or 0 when
/// some p_n is 0. An order with no candidate n-grams anywhere in the corpus
/// has no precision and is left out of the mean.
BleuReport corpus_bleu(std::span<const TokenList> candidates, std::span<const TokenList> references,
                       int max_n = 4);

/// Sentence BLEU with add-one smoothing of p_n for n >= 2.
double sentence_bleu(const TokenList& candidate, const TokenList& reference, int max_n = 4);

/// Mean of sentence_bleu over aligned pairs.
double mean_sentence_bleu(std::span<const TokenList> candidates,
                          std::span<const TokenList> references, int max_n = 4);

/// Four-point adequacy score: 4 fully correct ... 1 incorrect.
struct HumanEvalRecord {
  std::string sentence_id;
  int score = 0;
  std::optional<std::string> annotator;
  bool operator==(const HumanEvalRecord&) const = default;
};

/// `sentence_id<TAB>score[<TAB>annotator]` per line, blank lines skipped.
std::vector<HumanEvalRecord> parse_human_eval(std::istream& in,
                                              const std::string& origin = "<stream>");
std::vector<HumanEvalRecord> load_human_eval(const std::filesystem::path& path);

struct HumanEvalSummary {
  double accuracy = 0.0;             // fraction with score >= threshold
  std::array<std::size_t, 4> histogram{};  // counts of scores 1..4
  int threshold = 3;
  std::size_t count = 0;
};

HumanEvalSummary human_eval_accuracy(std::span<const HumanEvalRecord> records, int threshold = 3);

/// Reads one sentence per line, normalized and tokenized.
std::vector<TokenList> load_tokenized_lines(const std::filesystem::path& path);

}  // namespace snmt
