#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rince/data.hpp"
#include "rince/evaluation.hpp"
#include "rince/training.hpp"

namespace rince {

enum class DataKind { kHierarchy, kSequence };

struct EvalConfig {
  double train_fraction = 0.8;             ///< per class (hierarchy) or of trajectories (sequence)
  std::optional<std::size_t> ood_superclass;  ///< held out of training; default: the last one
  bool hold_out_superclass = true;
  CovarianceKind covariance = CovarianceKind::kFull;
  ProbeConfig probe;
};

struct ExperimentConfig {
  DataKind data_kind = DataKind::kHierarchy;
  std::uint64_t data_seed = 7;
  HierarchySpec hierarchy;
  SequenceSpec sequence;
  TrainConfig train;
  /// Noisy rank source: θ = gap midpoint + offset unless `theta` is set.
  std::optional<double> theta;
  double theta_offset = 0.0;
  EvalConfig eval;
};

/// Parses and validates a JSON config; missing fields take defaults. Errors
/// (ConfigError) name the offending field, or the line and column for syntax.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Complete config with every default spelled out; stable key order.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical config dump plus `extra`.
std::string run_id(const ExperimentConfig& cfg, const std::string& extra = {});

struct Dataset {
  DataKind kind = DataKind::kHierarchy;
  HierarchyDataset hierarchy;
  SequenceDataset sequence;
};

Dataset generate_dataset(const ExperimentConfig& cfg);
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in, const ExperimentConfig& cfg);

struct HierarchySplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<LabeledSample> ood;
};

/// Held-out superclass goes to `ood`; each remaining class is split by index.
HierarchySplit split_hierarchy(const HierarchyDataset& data, const EvalConfig& eval);

struct SequenceSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SequenceSplit split_sequences(const SequenceDataset& data, const EvalConfig& eval);

/// θ actually used by the noisy rank source for this config and dataset.
double resolved_theta(const ExperimentConfig& cfg, const HierarchyDataset& data);

TrainResult train_experiment(const ExperimentConfig& cfg, const Dataset& data);

/// Evaluation report for a trained state: deterministic, no timestamps.
nlohmann::json evaluate_experiment(const ExperimentConfig& cfg, const Dataset& data, const EncoderState& state);

/// Leaderboard header and the row for one report.
std::string leaderboard_header();
std::string leaderboard_row(const nlohmann::json& report);

}  // namespace rince
