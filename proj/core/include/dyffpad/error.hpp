#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyffpad {

enum class ErrorCode {
  // imgproc
  NoForeground,
  ImageTooSmall,
  FlatBlock,
  BlockTooSmall,
  // lpq
  WindowOutOfBounds,
  // quality
  DegenerateSignature,
  EmptyProfile,
  NoValidBlocks,
  // tensornet / fusion
  ShapeMismatch,
  BatchTooSmall,
  InvalidConfig,
  ChecksumMismatch,
  ConfigMismatch,
  CorruptFile,
  // metrics / data
  SingleClassDataset,
  NoSpoofSamples,
  NoLiveSamples,
  ParseError,
  MissingFile,
  SingleClassTrainSplit,
  EmptySplit,
  IoError,
};

/// Coarse grouping used for process exit codes.
enum class ErrorFamily {
  Io = 3,
  Format = 4,
  Config = 5,
  Data = 6,
  Compute = 7,
};

std::string_view error_name(ErrorCode code) noexcept;
ErrorFamily error_family(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dyffpad
