#include "daner/error.hpp"

namespace daner {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::InvalidTag: return "InvalidTag";
    case ErrorKind::InvalidScheme: return "InvalidScheme";
    case ErrorKind::Overlap: return "Overlap";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::UnknownTag: return "UnknownTag";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::AllIgnored: return "AllIgnored";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::EmptySentence: return "EmptySentence";
    case ErrorKind::Io: return "Io";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace daner
