#pragma once

#include <stdexcept>
#include <string>

namespace otseg {

enum class errc {
  parse,              // malformed input file
  empty_input,        // no data rows
  dimension_mismatch, // inconsistent point dimensions
  zero_mass,          // total mass is zero
  zero_weight,        // zero-weight atom where strict positivity is required
  mass_mismatch,      // balanced solver given unequal total masses
  parameter,          // invalid parameter value
  degenerate_epsilon, // epsilon heuristic degenerates to zero
  degenerate_plan,    // plan has a zero row/column sum where positivity is needed
  degenerate_cluster, // more clusters than distinct points
  unsupported_structure, // input lacks the structure an operation requires
  chain_mismatch,     // inconsistent plan chain / ragged trajectory
  singular_point,     // evaluation at a singular point of a field
  non_convergence,    // iteration budget exhausted (thrown only by callers)
  solver_failure,     // internal solver safeguard tripped
  io,                 // filesystem failure
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::parse: return "parse";
    case errc::empty_input: return "empty_input";
    case errc::dimension_mismatch: return "dimension_mismatch";
    case errc::zero_mass: return "zero_mass";
    case errc::zero_weight: return "zero_weight";
    case errc::mass_mismatch: return "mass_mismatch";
    case errc::parameter: return "parameter";
    case errc::degenerate_epsilon: return "degenerate_epsilon";
    case errc::degenerate_plan: return "degenerate_plan";
    case errc::degenerate_cluster: return "degenerate_cluster";
    case errc::unsupported_structure: return "unsupported_structure";
    case errc::chain_mismatch: return "chain_mismatch";
    case errc::singular_point: return "singular_point";
    case errc::non_convergence: return "non_convergence";
    case errc::solver_failure: return "solver_failure";
    case errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

  // Process exit code: 2 bad input, 3 non-convergence, 4 internal failure.
  int exit_code() const {
    switch (code_) {
      case errc::non_convergence: return 3;
      case errc::solver_failure: return 4;
      default: return 2;
    }
  }

private:
  errc code_;
};

} // namespace otseg
