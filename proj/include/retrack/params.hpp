#ifndef RETRACK_PARAMS_HPP
#define RETRACK_PARAMS_HPP

#include "retrack/tape.hpp"

#include <map>
#include <string>

namespace retrack {

/// Named parameter tensors, iterated in name order.
using ParamSet = std::map<std::string, Matrix>;
/// The same parameters recorded on a tape.
using ParamVars = std::map<std::string, Var>;

/// Records every parameter on `tape`, as leaves when `track` is set, else as constants.
ParamVars bind(Tape& tape, const ParamSet& params, bool track);

/// Lookup that reports the missing name.
const Var& param(const ParamVars& vars, const std::string& name);

std::size_t parameter_count(const ParamSet& params);

}  // namespace retrack

#endif  // RETRACK_PARAMS_HPP
