#pragma once

#include <stdexcept>
#include <string>

namespace sbd {

enum class ErrorCode {
    InvalidArgument = 1,
    NoConvergence,
    Overflow,
    GridExhausted,
    Refused,
    Divergence,
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace sbd
