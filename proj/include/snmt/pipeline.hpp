#pragma once

#include <span>
#include <vector>

#include "snmt/corpus.hpp"
#include "snmt/decode.hpp"
#include "snmt/training.hpp"

namespace snmt {

std::vector<EncodedPair> encode_pairs(std::span<const SentencePair> pairs,
                                      const Vocabulary& source_vocab,
                                      const Vocabulary& target_vocab);

struct PipelineOptions {
  ModelConfig model;  // vocabulary sizes are filled in from the corpus
  TrainConfig train;
  std::size_t min_count = 1;
  /// Hold out a seeded 80/10/10 split and stop on the 10% validation part.
  /// Otherwise the training pairs double as the validation set.
  bool split = false;
};

struct TrainedRun {
  TranslationModel<float> model;
  TrainHistory history;
  std::vector<SentencePair> train_pairs;
  std::vector<SentencePair> validation_pairs;
  std::vector<SentencePair> test_pairs;
};

/// Builds vocabularies from the training pairs and trains a float model.
TrainedRun train_from_corpus(const ParallelCorpus& corpus, const PipelineOptions& options,
                             const EpochCallback& on_epoch = {});

}  // namespace snmt
