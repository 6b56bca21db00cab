#pragma once

#include <stdexcept>
#include <string>

namespace qse {

// Error taxonomy shared by the library and the CLI exit-code mapping.
enum class ErrorCode {
    InvalidParameter,  // bad argument or config value
    Format,            // malformed input data (CSV/JSON)
    DegenerateData,    // data cannot support the requested computation
    NonIdentifiable,   // singular design / collinear covariates
    NonConvergence,    // iteration limit reached
    Diverged,          // simulated or forecast counts overflowed
    Sequencing,        // out-of-order online update
    Internal,          // invariant violated (implementation fault)
    Io,                // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace qse
