#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "rince/data.hpp"
#include "rince/encoder.hpp"
#include "rince/losses.hpp"

namespace rince {

/// Fixed-capacity FIFO of unit-norm key embeddings with two labels each
/// (class/superclass, or trajectory/step for sequences).
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim);

  void enqueue(std::span<const double> key, std::size_t label, std::size_t group);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  /// Entry i in insertion order (0 = oldest).
  std::span<const double> key(std::size_t i) const;
  std::size_t label(std::size_t i) const { return labels_[slot(i)]; }
  std::size_t group(std::size_t i) const { return groups_[slot(i)]; }

 private:
  std::size_t slot(std::size_t i) const { return (cursor_ + capacity_ - size_ + i) % capacity_; }

  std::size_t capacity_;
  std::size_t dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;  ///< next write slot
  std::vector<double> keys_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> groups_;
};

enum class RankSource { kExact, kNoisy };

/// How a sequence query's frame/shot/video positives enter the loss.
enum class SequenceMode {
  kRanked,        ///< x_f > x_s > x_v as three ranks
  kFrameOnly,     ///< {x_f}; x_s and x_v unused
  kHardPositive,  ///< {x_f, x_s, x_v} in one rank
  kEasyPositive,  ///< {x_f, x_s}; x_v unused
  kHardNegative,  ///< {x_f, x_s}; x_v joins the negatives
};

struct TrainConfig {
  LossSettings loss;
  MlpSpec mlp;
  double base_lr = 0.05;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::size_t bank_capacity = 1024;
  double encoder_momentum = 0.99;
  std::uint64_t seed = 123;
  double augment_strength = 0.2;
  bool in_batch_keys = true;
  RankSource rank_source = RankSource::kExact;
  double noisy_threshold = 0.5;
  double noisy_sigma = 0.05;
  SequenceMode sequence_mode = SequenceMode::kRanked;
  std::size_t clips_per_trajectory = 8;

  /// Throws ConfigError (e.g. τ order without the override).
  void validate() const;
};

/// Sequence-mode default for a loss variant: ranked for RINCE, frame-only for
/// InfoNCE, hard positives for log_in / log_out.
SequenceMode default_sequence_mode(LossVariant v);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::vector<double> rank_terms;  ///< mean ℓ_i per rank
  std::vector<double> mean_sim;    ///< per ground-truth rank, last entry = negatives
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t loss_terms = 0;   ///< header columns l1..lN, even with no epochs
  std::size_t sim_columns = 0;  ///< mean_sim entries, negatives included
  void write_csv(std::ostream& out) const;
};

/// Candidate key for a query: its ground-truth relation and the key index.
struct PoolLabels {
  std::vector<std::size_t> label;
  std::vector<std::size_t> group;
};

/// Ranked key sets for one hierarchical query over a pool made of the bank's
/// entries followed by in-batch keys. `self_key` is the pool index of the
/// query's own augmented view, always placed in rank 1. `rank2_classes`
/// overrides superclass membership when non-null (noisy rank source).
RankAssignment build_ranked_batch(std::size_t query_class, std::size_t query_superclass, std::size_t self_key,
                                  const PoolLabels& pool, LossVariant variant,
                                  const std::vector<std::vector<std::size_t>>* rank2_classes = nullptr);

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// Momentum buffers for SGD, shaped like the network.
struct SgdState {
  std::vector<double> velocity;
};

/// v ← μv + g + wd·θ; θ ← θ − lr·v. Throws NumericError on a non-finite gradient.
void sgd_step(Network& params, const Gradients& grads, SgdState& opt, double lr, double momentum, double weight_decay);

struct TrainResult {
  EncoderState state;
  TrainLog log;
  RngCursors cursors;
};

/// Sees every query's ranked key sets (pool indices) before the loss runs:
/// (global step, sample index, sets).
using BatchObserver = std::function<void(std::size_t, std::size_t, const RankAssignment&)>;

/// Trains on hierarchical samples. `class_centers` feeds the noisy rank source
/// (empirical class means are used when empty).
TrainResult train(const TrainConfig& config, const std::vector<LabeledSample>& samples,
                  std::size_t num_classes, const std::vector<Vec64>& class_centers = {},
                  const BatchObserver& observer = {});

/// Trains on the given trajectories of a sequence dataset.
TrainResult train_sequences(const TrainConfig& config, const SequenceDataset& data,
                            const std::vector<std::size_t>& trajectories);

/// Pre-head features (or projections) of a set of inputs.
std::vector<Vec64> embed(const EncoderState& state, const std::vector<Vec64>& inputs, bool projection = false);

}  // namespace rince
