#include "retrack/params.hpp"

#include <stdexcept>

namespace retrack {

ParamVars bind(Tape& tape, const ParamSet& params, bool track) {
  ParamVars vars;
  for (const auto& [name, value] : params) {
    vars.emplace(name, track ? tape.leaf(value) : tape.constant(value));
  }
  return vars;
}

const Var& param(const ParamVars& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, value] : params) n += static_cast<std::size_t>(value.size());
  return n;
}

}  // namespace retrack
