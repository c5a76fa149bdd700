#pragma once

#include <vector>

#include "motif/common.hpp"

namespace motif {

// Arrays are indexed t = 0..T with alpha_bar[0] = 1, so q_sample(t=0) is the
// identity and the posterior at t = 1 needs no special casing.
struct NoiseSchedule {
  int steps = 0;  // T
  std::vector<double> alpha;
  std::vector<double> alpha_bar;  // running product of alpha
  std::vector<double> beta;       // 1 - alpha

  void validate() const;
};

// Squared-cosine schedule with offset s = 0.008; per-step beta clipped to
// 0.999 and alpha_bar rebuilt as the exact running product afterwards.
NoiseSchedule make_cosine_schedule(int steps);

}  // namespace motif
