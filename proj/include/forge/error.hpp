#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorKind {
  invalid_argument,
  io,
  malformed_record,
  duplicate_id,
  unparseable_transcript,
  too_short,
  missing_rewards,
  protocol,
  scorer_unavailable,
  transient,
  gateway_unavailable,
  context_overflow,
  auth,
  provider,
  generation_unparseable,
  precondition,
  not_found,
  conflict,
  busy,
  validation,
  upstream,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the toolkit is an Error carrying a kind, so
// callers (the CLI, the HTTP layer) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace forge
