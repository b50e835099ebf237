#pragma once

#include <stdexcept>
#include <string>

namespace fslpn {

// Error taxonomy. Each kind maps to a fixed process exit code so callers can
// partition failures deterministically: parse=2, data=3, numeric=4, contract=5.
enum class ErrKind {
    parse,     // config / CLI / usage problems
    data,      // dataset, file format, sampling problems
    numeric,   // non-finite values, degenerate numerics
    contract,  // precondition / invariant violations (shape, freeze, state)
};

class Error : public std::runtime_error {
  public:
    Error(ErrKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrKind kind() const { return kind_; }

  private:
    ErrKind kind_;
};

inline int exit_code(ErrKind k) {
    switch (k) {
        case ErrKind::parse: return 2;
        case ErrKind::data: return 3;
        case ErrKind::numeric: return 4;
        case ErrKind::contract: return 5;
    }
    return 1;
}

[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(ErrKind::parse, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrKind::data, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrKind::numeric, msg); }
[[noreturn]] inline void throw_contract(const std::string& msg) { throw Error(ErrKind::contract, msg); }

}  // namespace fslpn
