#include "dyffpad/error.hpp"

namespace dyffpad {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NoForeground: return "NoForeground";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::FlatBlock: return "FlatBlock";
    case ErrorCode::BlockTooSmall: return "BlockTooSmall";
    case ErrorCode::WindowOutOfBounds: return "WindowOutOfBounds";
    case ErrorCode::DegenerateSignature: return "DegenerateSignature";
    case ErrorCode::EmptyProfile: return "EmptyProfile";
    case ErrorCode::NoValidBlocks: return "NoValidBlocks";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::NoSpoofSamples: return "NoSpoofSamples";
    case ErrorCode::NoLiveSamples: return "NoLiveSamples";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SingleClassTrainSplit: return "SingleClassTrainSplit";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

ErrorFamily error_family(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::MissingFile:
      return ErrorFamily::Io;
    case ErrorCode::ParseError:
    case ErrorCode::CorruptFile:
    case ErrorCode::ChecksumMismatch:
      return ErrorFamily::Format;
    case ErrorCode::InvalidConfig:
    case ErrorCode::ConfigMismatch:
      return ErrorFamily::Config;
    case ErrorCode::SingleClassDataset:
    case ErrorCode::NoSpoofSamples:
    case ErrorCode::NoLiveSamples:
    case ErrorCode::SingleClassTrainSplit:
    case ErrorCode::EmptySplit:
      return ErrorFamily::Data;
    default:
      return ErrorFamily::Compute;
  }
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

}  // namespace dyffpad
