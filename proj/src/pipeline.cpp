#include "snmt/pipeline.hpp"

namespace snmt {

std::vector<EncodedPair> encode_pairs(std::span<const SentencePair> pairs,
                                      const Vocabulary& source_vocab,
                                      const Vocabulary& target_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({source_vocab.encode(p.source), target_vocab.encode(p.target)});
  return out;
}

TrainedRun train_from_corpus(const ParallelCorpus& corpus, const PipelineOptions& options,
                             const EpochCallback& on_epoch) {
  if (corpus.pairs.empty()) throw DomainError("corpus has no usable sentence pairs");
  TrainedRun run;
  if (options.split) {
    auto split = split_corpus(corpus.pairs, options.train.seed);
    run.train_pairs = std::move(split.train);
    run.validation_pairs = std::move(split.validation);
    run.test_pairs = std::move(split.test);
    if (run.validation_pairs.empty()) {
      throw DomainError("corpus of " + std::to_string(corpus.pairs.size()) +
                        " pairs is too small to hold out a validation split");
    }
  } else {
    run.train_pairs = corpus.pairs;
    run.validation_pairs = corpus.pairs;
  }

  std::vector<TokenList> sources, targets;
  for (const auto& p : run.train_pairs) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }
  run.model.source_vocab = Vocabulary::build(sources, options.min_count);
  run.model.target_vocab = Vocabulary::build(targets, options.min_count);

  ModelConfig config = options.model;
  config.source_vocab_size = static_cast<Index>(run.model.source_vocab.size());
  config.target_vocab_size = static_cast<Index>(run.model.target_vocab.size());
  const auto train_ids = encode_pairs(run.train_pairs, run.model.source_vocab, run.model.target_vocab);
  const auto valid_ids =
      encode_pairs(run.validation_pairs, run.model.source_vocab, run.model.target_vocab);

  auto outcome = train(make_initialized_model<float>(config, options.train.seed),
                       std::span<const EncodedPair>(train_ids),
                       std::span<const EncodedPair>(valid_ids), options.train, on_epoch);
  run.model.model = std::move(outcome.model);
  run.history = std::move(outcome.history);
  return run;
}

}  // namespace snmt
