#pragma once

#include <stdexcept>
#include <string>

namespace dipce {

enum class ErrorCode {
  InvalidArgument,
  InvalidSpec,
  ConfigInvalid,
  Parse,
  Io,
  SchemaMismatch,
  ShapeMismatch,
  DegenerateData,
  EmptySubset,
  InsufficientBootstrap,
  MissingInteraction,
  RankDeficient,
  CoverageMismatch,
  LengthMismatch,
  EmptyInput,
  InsufficientReplications,
  MissingAggregate,
  Numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace dipce
