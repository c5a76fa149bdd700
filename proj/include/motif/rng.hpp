#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace motif {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent per-index seed for crowd sampling and similar fan-outs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 1));
}

// Seeded Gaussian/uniform stream with save/restore, so a training run can be
// checkpointed mid-stream and resumed bit-exactly.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_ << ' ' << uniform_;
    return os.str();
  }
  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_ >> normal_ >> uniform_;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace motif
