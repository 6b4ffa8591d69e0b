#pragma once

#include <stdexcept>
#include <string>

namespace eimtd {

// Raised when caller-supplied data violates a documented precondition
// (dimension mismatch, bad config value, missing artifact). The CLI maps it
// to exit code 2; anything else is an internal error.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

}  // namespace eimtd
