#include "snmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string_view>

#include "snmt/error.hpp"

namespace snmt {

namespace {

using Ngram = std::span<const std::string>;

struct NgramLess {
  bool operator()(Ngram a, Ngram b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

using NgramCounts = std::map<Ngram, std::size_t, NgramLess>;

NgramCounts count_ngrams(const TokenList& tokens, int n) {
  NgramCounts counts;
  const auto k = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) ++counts[Ngram(tokens).subspan(i, k)];
  return counts;
}

NgramMatch sentence_matches(const TokenList& candidate, const TokenList& reference, int n) {
  NgramMatch m;
  const auto cand = count_ngrams(candidate, n);
  const auto ref = count_ngrams(reference, n);
  for (const auto& [gram, count] : cand) {
    m.total += count;
    auto it = ref.find(gram);
    if (it != ref.end()) m.matched += std::min(count, it->second);
  }
  return m;
}

void check_aligned(std::span<const TokenList> candidates, std::span<const TokenList> references) {
  if (candidates.size() != references.size()) {
    throw DimensionError("BLEU needs one reference per candidate, got " +
                         std::to_string(candidates.size()) + " candidates and " +
                         std::to_string(references.size()) + " references");
  }
}

void check_order(int n) {
  if (n < 1) throw DomainError("n-gram order must be at least 1, got " + std::to_string(n));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

NgramMatch modified_precision(std::span<const TokenList> candidates,
                              std::span<const TokenList> references, int n) {
  check_aligned(candidates, references);
  check_order(n);
  NgramMatch total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto m = sentence_matches(candidates[i], references[i], n);
    total.matched += m.matched;
    total.total += m.total;
  }
  return total;
}

double brevity_penalty(std::size_t candidate_length, std::size_t reference_length) {
  if (candidate_length == 0) return 0.0;
  if (candidate_length >= reference_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_length) /
                            static_cast<double>(candidate_length));
}

BleuReport corpus_bleu(std::span<const TokenList> candidates, std::span<const TokenList> references,
                       int max_n) {
  check_aligned(candidates, references);
  check_order(max_n);
  if (candidates.empty()) throw DomainError("BLEU of an empty corpus");
  BleuReport r;
  r.max_n = max_n;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r.candidate_length += candidates[i].size();
    r.reference_length += references[i].size();
  }
  bool any_zero = false;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto m = modified_precision(candidates, references, n);
    r.matches.push_back(m);
    const double p = m.total == 0 ? 0.0 : static_cast<double>(m.matched) / static_cast<double>(m.total);
    r.precisions.push_back(p);
    if (m.total == 0) continue;
    ++r.effective_order;
    if (m.matched == 0) {
      any_zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  r.brevity_penalty = brevity_penalty(r.candidate_length, r.reference_length);
  if (any_zero || r.effective_order == 0) {
    r.score = 0.0;
  } else {
    r.score = r.brevity_penalty * std::exp(log_sum / static_cast<double>(r.effective_order));
  }
  return r;
}

double sentence_bleu(const TokenList& candidate, const TokenList& reference, int max_n) {
  check_order(max_n);
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto m = sentence_matches(candidate, reference, n);
    if (n == 1) {
      if (m.matched == 0) return 0.0;
      log_sum += std::log(static_cast<double>(m.matched) / static_cast<double>(m.total));
    } else {
      log_sum += std::log(static_cast<double>(m.matched + 1) / static_cast<double>(m.total + 1));
    }
    ++orders;
  }
  return brevity_penalty(candidate.size(), reference.size()) *
         std::exp(log_sum / static_cast<double>(orders));
}

double mean_sentence_bleu(std::span<const TokenList> candidates,
                          std::span<const TokenList> references, int max_n) {
  check_aligned(candidates, references);
  if (candidates.empty()) throw DomainError("BLEU of an empty corpus");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += sentence_bleu(candidates[i], references[i], max_n);
  }
  return total / static_cast<double>(candidates.size());
}

std::vector<HumanEvalRecord> parse_human_eval(std::istream& in, const std::string& origin) {
  std::vector<HumanEvalRecord> records;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError(origin + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(trim(std::string_view(line).substr(start, tab - start)));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      fail("expected sentence_id<TAB>score[<TAB>annotator], got " + std::to_string(fields.size()) +
           " fields");
    }
    HumanEvalRecord r;
    r.sentence_id = fields[0];
    if (r.sentence_id.empty()) fail("empty sentence id");
    if (fields[1].size() != 1 || fields[1][0] < '1' || fields[1][0] > '4') {
      fail("score '" + fields[1] + "' is not one of 1, 2, 3, 4");
    }
    r.score = fields[1][0] - '0';
    if (fields.size() == 3 && !fields[2].empty()) r.annotator = fields[2];
    records.push_back(std::move(r));
  }
  if (in.bad()) throw IoError("read error in " + origin);
  return records;
}

std::vector<HumanEvalRecord> load_human_eval(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open human evaluation file " + path.string());
  return parse_human_eval(in, path.string());
}

HumanEvalSummary human_eval_accuracy(std::span<const HumanEvalRecord> records, int threshold) {
  if (records.empty()) throw DomainError("no human evaluation records");
  if (threshold < 2 || threshold > 4) {
    throw DomainError("threshold must be 2, 3 or 4, got " + std::to_string(threshold));
  }
  HumanEvalSummary s;
  s.threshold = threshold;
  s.count = records.size();
  std::size_t passed = 0;
  for (const auto& r : records) {
    if (r.score < 1 || r.score > 4) {
      throw DomainError("score " + std::to_string(r.score) + " for sentence " + r.sentence_id +
                        " is outside 1..4");
    }
    ++s.histogram[static_cast<std::size_t>(r.score - 1)];
    if (r.score >= threshold) ++passed;
  }
  s.accuracy = static_cast<double>(passed) / static_cast<double>(records.size());
  return s;
}

std::vector<TokenList> load_tokenized_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TokenList> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(tokenize(normalize_text(line)));
  }
  if (in.bad()) throw IoError("read error in " + path.string());
  return lines;
}

}  // namespace snmt
