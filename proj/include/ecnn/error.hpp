#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ecnn {

enum class ErrorCode {
  invalid_argument,
  missing_channel,
  out_of_bounds,
  degenerate_depth,
  shape_mismatch,
  format,
  io,
  generation,
  sampling,
  training,
  expert,
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::missing_channel: return "missing-channel";
    case ErrorCode::out_of_bounds: return "out-of-bounds";
    case ErrorCode::degenerate_depth: return "degenerate-depth";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::format: return "format";
    case ErrorCode::io: return "io";
    case ErrorCode::generation: return "generation";
    case ErrorCode::sampling: return "sampling";
    case ErrorCode::training: return "training";
    case ErrorCode::expert: return "expert";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// An expert (or its adapters) failed; carries the id of the failing expert.
class ExpertError : public Error {
 public:
  ExpertError(std::string expert_id, ErrorCode cause, const std::string& message)
      : Error(ErrorCode::expert, "expert '" + expert_id + "': " + message),
        expert_id_(std::move(expert_id)),
        cause_(cause) {}

  const std::string& expert_id() const noexcept { return expert_id_; }
  ErrorCode cause() const noexcept { return cause_; }

 private:
  std::string expert_id_;
  ErrorCode cause_;
};

}  // namespace ecnn
