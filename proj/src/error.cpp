#include "meter/error.hpp"

namespace meter {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::authorization: return "authorization";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::state: return "state";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::storage: return "storage";
    }
    return "unknown";
}

} // namespace meter
