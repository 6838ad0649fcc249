#pragma once

#include <stdexcept>
#include <string>

namespace trustcal {

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Io,
  SchemaMismatch,
  EmptySequence,
  EmptyDataset,
  EmptyFixations,
  UnsortedFixations,
  NonFinite,
  EmptyWindow,
  EmptySpec,
  ZeroLikelihood,
  AmbiguousLabel,
  AllRestartsFailed,
  StratificationImpossible,
  NonConvergence,
  HorizonTooLarge,
  UnknownSession,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace trustcal
