#pragma once

#include <stdexcept>
#include <string>

namespace daner {

/// Error taxonomy shared by every module. Callers that care about the
/// category catch daner::Error and switch on kind(); everyone else just
/// sees a std::runtime_error with a readable message.
enum class ErrorKind {
  // corpus
  EmptyInput,
  MalformedLine,
  InvalidTag,
  InvalidScheme,
  Overlap,
  OutOfRange,
  TooSmall,
  UnknownTag,
  // compute
  TargetOutOfRange,
  NonFinite,
  // objective
  AllIgnored,
  EmptyBatch,
  // model / train
  InvalidConfig,
  NonFiniteGradient,
  Diverged,
  EmptySentence,
  // checkpoint / files
  Io,
  BadMagic,
  ChecksumMismatch,
  ShapeMismatch,
  Truncated,
  // eval
  LengthMismatch,
  // cli / config files
  ConfigError,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace daner
