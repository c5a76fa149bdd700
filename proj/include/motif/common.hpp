#pragma once

#include <stdexcept>
#include <string>

namespace motif {

// Malformed or inconsistent input data (BVH, tensors, checkpoints).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or unknown config keys.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced non-finite losses repeatedly.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Worker-thread control for the compute kernels. Every kernel assigns each
// output element to exactly one thread and keeps a fixed per-element
// reduction order, so results are bitwise identical for any thread count.
int num_threads();
void set_num_threads(int n);

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

}  // namespace motif
