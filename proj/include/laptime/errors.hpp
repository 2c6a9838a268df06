#pragma once

#include <stdexcept>
#include <string>

namespace laptime {

// Input could not be parsed (bad CSV row, malformed JSON, ...).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input parsed but violates a model invariant (non-uniform grid, v_max <= 0, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace laptime
