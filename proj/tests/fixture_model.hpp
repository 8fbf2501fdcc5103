#pragma once

#include <filesystem>

#include "snmt/pipeline.hpp"

namespace snmt::testing {

inline const std::filesystem::path kFixtureDir =
    std::filesystem::path(SNMT_SOURCE_DIR) / "fixtures";

/// Quick overfit of the 32-pair fixture corpus, trained once per process.
inline const TrainedRun& fixture_run() {
  static const TrainedRun run = [] {
    PipelineOptions options;
    options.model.embed_dim = 64;
    options.model.hidden_dim = 64;
    options.train.learning_rate = 1e-2;
    options.train.batch_size = 4;
    options.train.max_epochs = 100;
    options.train.patience = 100;
    return train_from_corpus(load_corpus(kFixtureDir / "pairs.tsv"), options);
  }();
  return run;
}

}  // namespace snmt::testing
