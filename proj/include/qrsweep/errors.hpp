#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qrsweep {

enum class ErrorKind {
    invalid_truncation,
    invalid_parameter,
    symmetry_violation,
    numerical_instability,
    insufficient_truncation,
    resource_limit,
    degenerate_crossing,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_truncation: return "invalid-truncation";
        case ErrorKind::invalid_parameter: return "invalid-parameter";
        case ErrorKind::symmetry_violation: return "symmetry-violation";
        case ErrorKind::numerical_instability: return "numerical-instability";
        case ErrorKind::insufficient_truncation: return "insufficient-truncation";
        case ErrorKind::resource_limit: return "resource-limit";
        case ErrorKind::degenerate_crossing: return "degenerate-crossing";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Validation failures map to exit code 1, everything numerical or I/O to 2.
    bool is_validation() const noexcept {
        return kind_ == ErrorKind::invalid_truncation || kind_ == ErrorKind::invalid_parameter ||
               kind_ == ErrorKind::resource_limit || kind_ == ErrorKind::degenerate_crossing;
    }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

}  // namespace qrsweep
