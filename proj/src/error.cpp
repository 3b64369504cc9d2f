#include "npcviz/error.hpp"

namespace npcviz {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::bad_request: return "bad_request";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::upstream_failed: return "upstream_failed";
        case ErrorCode::busy: return "busy";
        case ErrorCode::internal: return "internal";
    }
    return "internal";
}

}  // namespace npcviz
