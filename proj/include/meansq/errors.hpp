#pragma once

#include <stdexcept>
#include <string>

namespace meansq {

// Error taxonomy; the CLI maps categories onto process exit codes.
enum class ErrorKind {
    dimension,    // non-conformable operands
    domain,       // input outside the operation's domain
    convergence,  // iteration exhausted without meeting tolerance
    singular,     // singular matrix / singular equation
    structural,   // unstabilizable, undetectable, not inner, not a spectrum
    scope,        // request outside the supported plant family
    schema,       // config/report schema violation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace meansq
