#pragma once

#include <stdexcept>
#include <string>

namespace ace {

/// Contract violation reported by the library. The message is the stable
/// identifier ("illegal action", "sequence complete", ...), optionally
/// followed by ": detail".
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    Error(const std::string& what, const std::string& detail) : std::runtime_error(what + ": " + detail) {}
};

/// Raised when a gradient or loss turns non-finite during training.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& detail) : Error("divergence detected", detail) {}
};

}  // namespace ace
