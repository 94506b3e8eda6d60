#pragma once

#include <stdexcept>
#include <string>

namespace thyme {

// Every failure the library can raise carries a stable machine-readable code
// (e.g. "dim-mismatch", "edge-requires-position") next to the human message.
// CLI exit codes are derived from the code, tests match on it.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

} // namespace thyme
