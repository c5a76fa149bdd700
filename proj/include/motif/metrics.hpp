#pragma once

// Window-based evaluation on raw (normalized) motion features plus the
// harmonic-mean aggregate. The window distance is the per-frame feature L2
// averaged over the window. Deep-feature metrics are out of scope; a plug-in
// extractor interface and the Frechet-distance stub are declared so a user
// supplied encoder can enable them.

#include <optional>
#include <string>
#include <vector>

#include "motif/skeleton.hpp"

namespace motif {

struct WindowSpec {
  Eigen::Index window_len = 15;
  Eigen::Index stride = 1;

  void validate(Eigen::Index n_frames) const {
    require(window_len >= 1 && window_len <= n_frames,
            "metrics: window length " + std::to_string(window_len) +
                " exceeds motion length " + std::to_string(n_frames));
    require(stride >= 1, "metrics: stride must be >= 1");
  }
};

using Features = MatRM<float>;  // n_frames x features, normalized

// Mean per-frame L2 between two equal-length windows.
double window_distance(const Features& a, Eigen::Index a_start, const Features& b,
                       Eigen::Index b_start, Eigen::Index len);

// Percent of input windows whose nearest window across all generated motions
// lies within tau.
double coverage(const Features& input, const std::vector<Features>& generated,
                const WindowSpec& spec, double tau);

// Mean per-frame L2 between the generated motion and its tessellation by
// nearest input windows (consecutive full segments of window_len).
double global_diversity(const Features& input, const Features& generated,
                        const WindowSpec& spec);

// Mean distance from generated windows to their nearest input window.
double local_diversity(const Features& input, const Features& generated,
                       const WindowSpec& spec);

// Mean over unordered pairs of the symmetrized nearest-window distance.
double inter_diversity(const std::vector<Features>& generated, const WindowSpec& spec);

// Mean pairwise window distance within one motion.
double intra_diversity(const Features& motion, const WindowSpec& spec);

// | mean over generated of intra - intra(input) |
double intra_diversity_diff(const Features& input, const std::vector<Features>& generated,
                            const WindowSpec& spec);

// Default coverage threshold: the given percentile of the input's own
// pairwise window distances.
double tau_from_input(const Features& input, const WindowSpec& spec,
                      double percentile = 10.0);

double percentile_of(std::vector<double> values, double percentile);

// ---------------------------------------------------------------------------
// Harmonic mean over normalized scores.

struct ScoreSpec {
  std::string name;
  double value = 0.0;
  bool higher_better = true;
  std::optional<double> known_max;    // normalization maximum when known
  std::vector<double> population;     // fallback: 90th percentile of these
};

struct NormalizedScore {
  std::string name;
  double value = 0.0;
  double normalized = 0.0;
  double max_used = 0.0;
  std::string max_source;  // "known" | "percentile" | "self"
};

// HM = E / (1/s_1 + ... + 1/s_E); any zero normalized score sends it to 0,
// negative normalized scores (from lower-is-better flips) are valid.
double harmonic_mean_of_normalized(const std::vector<double>& normalized);

struct HarmonicMeanResult {
  double value = 0.0;
  std::vector<NormalizedScore> scores;
};

HarmonicMeanResult harmonic_mean(const std::vector<ScoreSpec>& scores);

// ---------------------------------------------------------------------------
// Deep-feature plug-in contract (no encoder is shipped).

struct MotionFeatureExtractor {
  virtual ~MotionFeatureExtractor() = default;
  virtual Eigen::VectorXf embed(const Features& window) const = 0;
};

// Frechet distance between Gaussian fits of two embedding sets:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
double frechet_distance(const std::vector<Eigen::VectorXf>& a,
                        const std::vector<Eigen::VectorXf>& b);

// ---------------------------------------------------------------------------

struct MetricsReport {
  double coverage_percent = 0.0;
  double global_diversity = 0.0;
  double local_diversity = 0.0;
  double inter_diversity = 0.0;
  double intra_diversity_diff = 0.0;
  double harmonic_mean = 0.0;
  std::vector<NormalizedScore> normalization;
  Eigen::Index window_len = 0;
  Eigen::Index stride = 0;
  double tau = 0.0;
};

// The full suite on normalized features. inter_diversity needs >= 2 motions
// and is reported as 0 with a "self" record otherwise.
MetricsReport evaluate_suite(const Features& input, const std::vector<Features>& generated,
                             const WindowSpec& spec, double tau);

}  // namespace motif
