#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "snmt/decode.hpp"
#include "snmt/training.hpp"

namespace snmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "SNMT";

/// Any problem with a checkpoint file's contents.
class CheckpointError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Training record kept in a checkpoint. Wall times are left out so that
/// identical runs serialize identically.
struct HistorySummary {
  std::string stop_reason;
  Index best_epoch = -1;
  double best_validation_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;

  bool operator==(const HistorySummary&) const = default;
};

HistorySummary summarize(const TrainHistory& history);

struct Checkpoint {
  TranslationModel<float> model;  // model.id is derived from the checksum
  HistorySummary history;
};

/// Layout: "SNMT", u32 LE version, u64 LE metadata length, UTF-8 JSON
/// metadata, float32 LE arrays in manifest order, u32 LE CRC-32 of the
/// metadata and arrays.
std::string serialize_checkpoint(const Seq2Seq<float>& model, const Vocabulary& source_vocab,
                                 const Vocabulary& target_vocab, const HistorySummary& history);

/// Validates everything before building the model; throws a CheckpointError
/// subclass on any defect.
Checkpoint parse_checkpoint(std::string_view bytes);

/// Written to a temporary file beside `path`, then renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Seq2Seq<float>& model,
                     const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                     const HistorySummary& history);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Resolves a run directory to the checkpoint file inside it.
std::filesystem::path checkpoint_path(const std::filesystem::path& model_or_dir);

inline constexpr std::string_view kCheckpointFileName = "model.snmt";

}  // namespace snmt
