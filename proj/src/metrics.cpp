#include "motif/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace motif {

namespace {

std::vector<Eigen::Index> window_starts(Eigen::Index n, const WindowSpec& spec) {
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s + spec.window_len <= n; s += spec.stride) starts.push_back(s);
  return starts;
}

double nearest_window_distance(const Features& probe, Eigen::Index probe_start,
                               const Features& pool,
                               const std::vector<Eigen::Index>& pool_starts,
                               const WindowSpec& spec) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index s : pool_starts)
    best = std::min(best, window_distance(probe, probe_start, pool, s, spec.window_len));
  return best;
}

}  // namespace

double window_distance(const Features& a, Eigen::Index a_start, const Features& b,
                       Eigen::Index b_start, Eigen::Index len) {
  // Scalar double accumulation: window metrics are required to agree exactly
  // with plain double-loop recomputation.
  double acc = 0;
  for (Eigen::Index i = 0; i < len; ++i) {
    double d2 = 0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double d = static_cast<double>(a(a_start + i, c)) - b(b_start + i, c);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(len);
}

double coverage(const Features& input, const std::vector<Features>& generated,
                const WindowSpec& spec, double tau) {
  require(!generated.empty(), "coverage: needs at least one generated motion");
  spec.validate(input.rows());
  for (const auto& g : generated) spec.validate(g.rows());
  const auto in_starts = window_starts(input.rows(), spec);
  long covered = 0;
  for (Eigen::Index s : in_starts) {
    bool hit = false;
    for (const auto& g : generated) {
      for (Eigen::Index gs : window_starts(g.rows(), spec)) {
        if (window_distance(input, s, g, gs, spec.window_len) <= tau) {
          hit = true;
          break;
        }
      }
      if (hit) break;
    }
    if (hit) ++covered;
  }
  return 100.0 * static_cast<double>(covered) / static_cast<double>(in_starts.size());
}

double global_diversity(const Features& input, const Features& generated,
                        const WindowSpec& spec) {
  spec.validate(input.rows());
  spec.validate(generated.rows());
  const auto in_starts = window_starts(input.rows(), spec);
  // consecutive full segments; a trailing partial segment is dropped
  double acc = 0;
  long segments = 0;
  for (Eigen::Index s = 0; s + spec.window_len <= generated.rows(); s += spec.window_len) {
    acc += nearest_window_distance(generated, s, input, in_starts, spec);
    ++segments;
  }
  require(segments > 0, "global_diversity: generated motion shorter than one window");
  return acc / static_cast<double>(segments);
}

double local_diversity(const Features& input, const Features& generated,
                       const WindowSpec& spec) {
  spec.validate(input.rows());
  spec.validate(generated.rows());
  const auto in_starts = window_starts(input.rows(), spec);
  const auto gen_starts = window_starts(generated.rows(), spec);
  double acc = 0;
  for (Eigen::Index s : gen_starts)
    acc += nearest_window_distance(generated, s, input, in_starts, spec);
  return acc / static_cast<double>(gen_starts.size());
}

double inter_diversity(const std::vector<Features>& generated, const WindowSpec& spec) {
  require(generated.size() >= 2, "inter_diversity: needs at least two motions");
  for (const auto& g : generated) spec.validate(g.rows());
  auto one_sided = [&](const Features& a, const Features& b) {
    const auto b_starts = window_starts(b.rows(), spec);
    double acc = 0;
    const auto a_starts = window_starts(a.rows(), spec);
    for (Eigen::Index s : a_starts) acc += nearest_window_distance(a, s, b, b_starts, spec);
    return acc / static_cast<double>(a_starts.size());
  };
  double acc = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < generated.size(); ++i)
    for (std::size_t j = i + 1; j < generated.size(); ++j) {
      acc += 0.5 * (one_sided(generated[i], generated[j]) +
                    one_sided(generated[j], generated[i]));
      ++pairs;
    }
  return acc / static_cast<double>(pairs);
}

double intra_diversity(const Features& motion, const WindowSpec& spec) {
  spec.validate(motion.rows());
  const auto starts = window_starts(motion.rows(), spec);
  if (starts.size() < 2) return 0.0;
  double acc = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < starts.size(); ++i)
    for (std::size_t j = i + 1; j < starts.size(); ++j) {
      acc += window_distance(motion, starts[i], motion, starts[j], spec.window_len);
      ++pairs;
    }
  return acc / static_cast<double>(pairs);
}

double intra_diversity_diff(const Features& input, const std::vector<Features>& generated,
                            const WindowSpec& spec) {
  require(!generated.empty(), "intra_diversity_diff: needs generated motions");
  double acc = 0;
  for (const auto& g : generated) acc += intra_diversity(g, spec);
  return std::abs(acc / static_cast<double>(generated.size()) - intra_diversity(input, spec));
}

double percentile_of(std::vector<double> values, double percentile) {
  require(!values.empty(), "percentile: empty population");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double rank =
      std::clamp(percentile, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

double tau_from_input(const Features& input, const WindowSpec& spec, double percentile) {
  spec.validate(input.rows());
  const auto starts = window_starts(input.rows(), spec);
  require(starts.size() >= 2, "tau_from_input: needs at least two windows");
  std::vector<double> dists;
  for (std::size_t i = 0; i < starts.size(); ++i)
    for (std::size_t j = i + 1; j < starts.size(); ++j)
      dists.push_back(window_distance(input, starts[i], input, starts[j], spec.window_len));
  return percentile_of(std::move(dists), percentile);
}

double harmonic_mean_of_normalized(const std::vector<double>& normalized) {
  require(!normalized.empty(), "harmonic_mean: no scores");
  double denom = 0;
  for (double s : normalized) {
    if (s == 0.0) return 0.0;
    denom += 1.0 / s;
  }
  return static_cast<double>(normalized.size()) / denom;
}

HarmonicMeanResult harmonic_mean(const std::vector<ScoreSpec>& scores) {
  require(!scores.empty(), "harmonic_mean: no scores");
  HarmonicMeanResult out;
  std::vector<double> normalized;
  for (const auto& s : scores) {
    NormalizedScore ns;
    ns.name = s.name;
    ns.value = s.value;
    if (s.known_max.has_value()) {
      ns.max_used = *s.known_max;
      ns.max_source = "known";
    } else if (!s.population.empty()) {
      ns.max_used = percentile_of(s.population, 90.0);
      ns.max_source = "percentile";
    } else {
      ns.max_used = s.value;
      ns.max_source = "self";
    }
    if (ns.max_used == 0.0)
      ns.normalized = 0.0;
    else
      ns.normalized = s.higher_better ? s.value / ns.max_used
                                      : (ns.max_used - s.value) / ns.max_used;
    normalized.push_back(ns.normalized);
    out.scores.push_back(ns);
  }
  out.value = harmonic_mean_of_normalized(normalized);
  return out;
}

double frechet_distance(const std::vector<Eigen::VectorXf>& a,
                        const std::vector<Eigen::VectorXf>& b) {
  require(a.size() >= 2 && b.size() >= 2, "frechet: needs at least two embeddings per set");
  const Eigen::Index d = a[0].size();
  for (const auto& v : a) require(v.size() == d, "frechet: inconsistent embedding size");
  for (const auto& v : b) require(v.size() == d, "frechet: inconsistent embedding size");

  auto fit = [&](const std::vector<Eigen::VectorXf>& set) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (const auto& v : set) mu += v.cast<double>();
    mu /= static_cast<double>(set.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& v : set) {
      const Eigen::VectorXd c = v.cast<double>() - mu;
      cov += c * c.transpose();
    }
    cov /= static_cast<double>(set.size() - 1);
    return std::pair{mu, cov};
  };
  const auto [mu_a, cov_a] = fit(a);
  const auto [mu_b, cov_b] = fit(b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
  Eigen::MatrixXd root_a =
      es_a.eigenvectors() *
      es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      es_a.eigenvectors().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(root_a * cov_b * root_a);
  const double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
}

MetricsReport evaluate_suite(const Features& input, const std::vector<Features>& generated,
                             const WindowSpec& spec, double tau) {
  require(!generated.empty(), "metrics: no generated motions");
  MetricsReport rep;
  rep.window_len = spec.window_len;
  rep.stride = spec.stride;
  rep.tau = tau;
  rep.coverage_percent = coverage(input, generated, spec, tau);

  std::vector<double> global_pop, local_pop, intra_pop;
  for (const auto& g : generated) {
    global_pop.push_back(global_diversity(input, g, spec));
    local_pop.push_back(local_diversity(input, g, spec));
    intra_pop.push_back(std::abs(intra_diversity(g, spec) - intra_diversity(input, spec)));
  }
  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  rep.global_diversity = mean_of(global_pop);
  rep.local_diversity = mean_of(local_pop);
  rep.intra_diversity_diff = intra_diversity_diff(input, generated, spec);

  std::vector<ScoreSpec> scores;
  scores.push_back({"coverage", rep.coverage_percent, true, 100.0, {}});
  scores.push_back({"global_diversity", rep.global_diversity, true, std::nullopt, global_pop});
  scores.push_back({"local_diversity", rep.local_diversity, true, std::nullopt, local_pop});
  if (generated.size() >= 2) {
    rep.inter_diversity = inter_diversity(generated, spec);
    std::vector<double> inter_pop;
    for (std::size_t i = 0; i < generated.size(); ++i)
      for (std::size_t j = i + 1; j < generated.size(); ++j)
        inter_pop.push_back(inter_diversity({generated[i], generated[j]}, spec));
    scores.push_back({"inter_diversity", rep.inter_diversity, true, std::nullopt, inter_pop});
  }
  scores.push_back(
      {"intra_diversity_diff", rep.intra_diversity_diff, false, std::nullopt, intra_pop});

  const auto hm = harmonic_mean(scores);
  rep.harmonic_mean = hm.value;
  rep.normalization = hm.scores;
  return rep;
}

}  // namespace motif
