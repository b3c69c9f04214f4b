#include "sfc/errors.hpp"

namespace sfc {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : Error(source + ":" + std::to_string(line) + ": " + what), source_(source), line_(line) {}

}  // namespace sfc
