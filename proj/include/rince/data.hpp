#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <vector>

#include "rince/numeric.hpp"
#include "rince/rng.hpp"

namespace rince {

/// Two-level class hierarchy: S superclasses with C classes each.
struct HierarchySpec {
  std::size_t num_superclasses = 5;
  std::size_t classes_per_superclass = 4;
  std::size_t samples_per_class = 100;
  std::size_t dim = 16;
  double superclass_spread = 1.0;
  double class_spread = 0.1;
  double sample_noise = 0.07;

  std::size_t num_classes() const { return num_superclasses * classes_per_superclass; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct LabeledSample {
  Vec64 x;
  std::size_t class_id = 0;
  std::size_t superclass_id = 0;
};

/// Samples are stored class-major: all samples of class 0, then class 1, ...
struct HierarchyDataset {
  HierarchySpec spec;
  std::vector<LabeledSample> samples;
  std::vector<Vec64> class_centers;  ///< generator ground truth; empty after CSV load
};

HierarchyDataset gen_hierarchy(const HierarchySpec& spec, SeededRng& rng);

/// Empirical per-class means (ordered by class id).
std::vector<Vec64> class_means(const std::vector<LabeledSample>& samples, std::size_t num_classes);

/// Random walk in a latent space observed through a shared affine map.
struct SequenceSpec {
  std::size_t num_trajectories = 120;
  std::size_t length = 64;
  std::size_t latent_dim = 8;
  std::size_t dim = 16;
  double drift = 0.15;          ///< step size of the latent walk
  double smoothness = 0.8;      ///< AR(1) coefficient of the walk velocity
  double observation_noise = 0.1;
  std::size_t window = 4;       ///< steps averaged into one clip
  std::size_t min_gap = 12;     ///< minimum start distance between near and far clips

  void validate() const;
};

struct SequenceDataset {
  SequenceSpec spec;
  std::vector<std::vector<Vec64>> trajectories;  ///< [trajectory][step] observations
};

SequenceDataset gen_sequences(const SequenceSpec& spec, SeededRng& rng);

/// Mean observation over steps [start, start + window).
Vec64 clip(const SequenceDataset& data, std::size_t trajectory, std::size_t start);

/// Additive noise, a rotation in a random coordinate 2-plane and a random scale
/// in [1 − s, 1 + s]. Strength 0 returns x unchanged.
Vec64 augment(const Vec64& x, double strength, SeededRng& rng);

/// Ranked index sets for one query; the query itself never appears.
struct RankAssignment {
  std::vector<std::vector<std::size_t>> positives_by_rank;
  std::vector<std::size_t> negatives;
};

/// Rank 1 = same class, rank 2 = same superclass and different class, rest negatives.
RankAssignment assign_ranks_exact(const std::vector<LabeledSample>& samples, std::size_t query);

/// For each class, the classes whose center cosine (plus optional symmetric
/// N(0, σ²) noise per pair) exceeds θ. The class itself is never included.
std::vector<std::vector<std::size_t>> assign_ranks_noisy(const std::vector<Vec64>& class_centers, double threshold,
                                                         double noise_stddev = 0.0, SeededRng* rng = nullptr);

/// Ground-truth rank-2 class sets from the positional superclass layout.
std::vector<std::vector<std::size_t>> superclass_rank2_sets(std::size_t num_classes, std::size_t classes_per_superclass);

/// Midpoint between the lowest within-superclass and highest cross-superclass
/// class-center cosine; `gap` receives (min_within − max_cross).
double threshold_gap_midpoint(const std::vector<Vec64>& class_centers, std::size_t classes_per_superclass,
                              double* gap = nullptr);

/// CSV: header f0..f{d-1},class,superclass then one row per sample.
void write_hierarchy_csv(std::ostream& out, const HierarchyDataset& data);
HierarchyDataset read_hierarchy_csv(std::istream& in);
/// CSV: header f0..f{d-1},trajectory,step.
void write_sequence_csv(std::ostream& out, const SequenceDataset& data);
SequenceDataset read_sequence_csv(std::istream& in, const SequenceSpec& spec);

}  // namespace rince
