#include "motif/schedule.hpp"

#include <cmath>

namespace motif {

void NoiseSchedule::validate() const {
  require(steps >= 2, "schedule: needs at least 2 steps, got " + std::to_string(steps));
  require(static_cast<int>(alpha.size()) == steps + 1 &&
              static_cast<int>(alpha_bar.size()) == steps + 1 &&
              static_cast<int>(beta.size()) == steps + 1,
          "schedule: array sizes do not match step count");
  require(alpha_bar[0] == 1.0, "schedule: alpha_bar[0] must be 1");
  for (int t = 1; t <= steps; ++t) {
    require(alpha[t] > 0.0 && alpha[t] < 1.0, "schedule: alpha out of (0,1) at t=" +
                                                  std::to_string(t));
    require(beta[t] > 0.0 && beta[t] <= 0.999, "schedule: beta out of (0,0.999] at t=" +
                                                   std::to_string(t));
    require(alpha_bar[t] < alpha_bar[t - 1], "schedule: alpha_bar not strictly decreasing");
  }
}

NoiseSchedule make_cosine_schedule(int steps) {
  require(steps >= 2, "cosine schedule: needs at least 2 steps, got " + std::to_string(steps));
  const double s = 0.008;
  constexpr double kPi = 3.14159265358979323846;
  auto f = [&](double t) {
    const double u = (t / steps + s) / (1.0 + s) * (kPi / 2.0);
    const double c = std::cos(u);
    return c * c;
  };
  NoiseSchedule sched;
  sched.steps = steps;
  sched.alpha.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  sched.alpha_bar.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  sched.beta.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  const double f0 = f(0.0);
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double cur = f(static_cast<double>(t)) / f0;
    double beta = 1.0 - cur / prev;
    beta = std::min(beta, 0.999);
    sched.beta[t] = beta;
    sched.alpha[t] = 1.0 - beta;
    sched.alpha_bar[t] = sched.alpha_bar[t - 1] * sched.alpha[t];
    prev = cur;
  }
  sched.validate();
  return sched;
}

}  // namespace motif
