#include "forge/error.hpp"

namespace forge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::io: return "io";
    case ErrorKind::malformed_record: return "malformed_record";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::unparseable_transcript: return "unparseable_transcript";
    case ErrorKind::too_short: return "too_short";
    case ErrorKind::missing_rewards: return "missing_rewards";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::scorer_unavailable: return "scorer_unavailable";
    case ErrorKind::transient: return "transient";
    case ErrorKind::gateway_unavailable: return "gateway_unavailable";
    case ErrorKind::context_overflow: return "context_overflow";
    case ErrorKind::auth: return "auth";
    case ErrorKind::provider: return "provider";
    case ErrorKind::generation_unparseable: return "generation_unparseable";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::busy: return "busy";
    case ErrorKind::validation: return "validation";
    case ErrorKind::upstream: return "upstream";
  }
  return "unknown";
}

}  // namespace forge
