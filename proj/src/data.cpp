#include "rince/data.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>

namespace rince {
namespace {

Vec64 gaussian_vec(std::size_t d, double stddev, SeededRng& rng) {
  Vec64 v(d);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty())
    throw ConfigError("csv line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  return v;
}

std::size_t parse_index(const std::string& s, std::size_t line_no) {
  const double v = parse_double(s, line_no);
  if (v < 0.0 || v != std::floor(v))
    throw ConfigError("csv line " + std::to_string(line_no) + ": expected a non-negative integer label");
  return static_cast<std::size_t>(v);
}

void write_features(std::ostream& out, const Vec64& x) {
  for (double v : x) out << v << ',';
}

}  // namespace

void HierarchySpec::validate() const {
  if (num_superclasses == 0) throw ConfigError("num_superclasses must be >= 1");
  if (classes_per_superclass == 0) throw ConfigError("classes_per_superclass must be >= 1");
  if (samples_per_class == 0) throw ConfigError("samples_per_class must be >= 1");
  if (dim < 2) throw ConfigError("dim must be >= 2");
  if (!(sample_noise >= 0.0)) throw ConfigError("sample_noise must be >= 0");
  if (!(class_spread > sample_noise)) throw ConfigError("class_spread must exceed sample_noise");
  if (!(superclass_spread > class_spread)) throw ConfigError("superclass_spread must exceed class_spread");
}

HierarchyDataset gen_hierarchy(const HierarchySpec& spec, SeededRng& rng) {
  spec.validate();
  HierarchyDataset data;
  data.spec = spec;
  for (std::size_t s = 0; s < spec.num_superclasses; ++s) {
    Vec64 center = normalized(gaussian_vec(spec.dim, 1.0, rng));
    for (double& v : center) v *= spec.superclass_spread;
    for (std::size_t c = 0; c < spec.classes_per_superclass; ++c) {
      Vec64 cls = gaussian_vec(spec.dim, spec.class_spread, rng);
      for (std::size_t i = 0; i < spec.dim; ++i) cls[i] += center[i];
      data.class_centers.push_back(std::move(cls));
    }
  }
  for (std::size_t k = 0; k < data.class_centers.size(); ++k) {
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      LabeledSample s;
      s.x = data.class_centers[k];
      if (spec.sample_noise > 0.0)
        for (double& v : s.x) v += rng.normal(0.0, spec.sample_noise);
      s.class_id = k;
      s.superclass_id = k / spec.classes_per_superclass;
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

std::vector<Vec64> class_means(const std::vector<LabeledSample>& samples, std::size_t num_classes) {
  if (samples.empty()) return {};
  const std::size_t d = samples.front().x.size();
  std::vector<Vec64> means(num_classes, Vec64(d, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples) {
    if (s.class_id >= num_classes) throw ConfigError("class_means: class id out of range");
    for (std::size_t i = 0; i < d; ++i) means[s.class_id][i] += s.x[i];
    ++counts[s.class_id];
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] > 0)
      for (double& v : means[c]) v /= static_cast<double>(counts[c]);
  return means;
}

void SequenceSpec::validate() const {
  if (num_trajectories < 2) throw ConfigError("num_trajectories must be >= 2");
  if (latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (dim == 0) throw ConfigError("dim must be >= 1");
  if (window == 0) throw ConfigError("window must be >= 1");
  if (min_gap <= window) throw ConfigError("min_gap must exceed window");
  if (length < min_gap + window + 1) throw ConfigError("length too short for window and min_gap");
  if (!(drift >= 0.0)) throw ConfigError("drift must be >= 0");
  if (!(smoothness >= 0.0 && smoothness < 1.0)) throw ConfigError("smoothness must lie in [0, 1)");
  if (!(observation_noise >= 0.0)) throw ConfigError("observation_noise must be >= 0");
}

SequenceDataset gen_sequences(const SequenceSpec& spec, SeededRng& rng) {
  spec.validate();
  SequenceDataset data;
  data.spec = spec;
  Mat64 map(spec.dim, spec.latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  for (double& v : map.values()) v = rng.normal(0.0, scale);
  const double innovation = std::sqrt(1.0 - spec.smoothness * spec.smoothness);
  for (std::size_t t = 0; t < spec.num_trajectories; ++t) {
    Vec64 z = gaussian_vec(spec.latent_dim, 1.0, rng);
    Vec64 velocity = gaussian_vec(spec.latent_dim, 1.0, rng);
    std::vector<Vec64> steps;
    for (std::size_t k = 0; k < spec.length; ++k) {
      Vec64 x(spec.dim, 0.0);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        for (std::size_t j = 0; j < spec.latent_dim; ++j) x[i] += map(i, j) * z[j];
        if (spec.observation_noise > 0.0) x[i] += rng.normal(0.0, spec.observation_noise);
      }
      steps.push_back(std::move(x));
      for (std::size_t j = 0; j < spec.latent_dim; ++j) {
        velocity[j] = spec.smoothness * velocity[j] + innovation * rng.normal();
        z[j] += spec.drift * velocity[j];
      }
    }
    data.trajectories.push_back(std::move(steps));
  }
  return data;
}

Vec64 clip(const SequenceDataset& data, std::size_t trajectory, std::size_t start) {
  if (trajectory >= data.trajectories.size()) throw ConfigError("clip: trajectory out of range");
  const auto& steps = data.trajectories[trajectory];
  const std::size_t w = data.spec.window;
  if (start + w > steps.size()) throw ConfigError("clip: window extends past the end of the trajectory");
  Vec64 out(steps.front().size(), 0.0);
  for (std::size_t k = start; k < start + w; ++k)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += steps[k][i];
  for (double& v : out) v /= static_cast<double>(w);
  return out;
}

Vec64 augment(const Vec64& x, double strength, SeededRng& rng) {
  if (strength < 0.0) throw ConfigError("augment: strength must be >= 0");
  if (strength == 0.0) return x;
  const std::size_t d = x.size();
  Vec64 out = x;
  const double noise = strength * norm(x) / std::sqrt(static_cast<double>(d));
  for (double& v : out) v += rng.normal(0.0, noise);
  if (d >= 2) {
    const auto i = static_cast<std::size_t>(rng.below(d));
    auto j = static_cast<std::size_t>(rng.below(d - 1));
    if (j >= i) ++j;
    const double angle = rng.uniform(-strength, strength) * (std::numbers::pi / 2.0);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double a = out[i];
    const double b = out[j];
    out[i] = c * a - s * b;
    out[j] = s * a + c * b;
  }
  const double scale = rng.uniform(1.0 - strength, 1.0 + strength);
  for (double& v : out) v *= scale;
  return out;
}

RankAssignment assign_ranks_exact(const std::vector<LabeledSample>& samples, std::size_t query) {
  if (query >= samples.size()) throw ConfigError("assign_ranks_exact: query index out of range");
  RankAssignment out;
  out.positives_by_rank.resize(2);
  const auto& q = samples[query];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == query) continue;
    if (samples[i].class_id == q.class_id) out.positives_by_rank[0].push_back(i);
    else if (samples[i].superclass_id == q.superclass_id) out.positives_by_rank[1].push_back(i);
    else out.negatives.push_back(i);
  }
  return out;
}

std::vector<std::vector<std::size_t>> assign_ranks_noisy(const std::vector<Vec64>& class_centers, double threshold,
                                                         double noise_stddev, SeededRng* rng) {
  if (!(threshold > -1.0 && threshold < 1.0)) throw ConfigError("assign_ranks_noisy: threshold must lie in (-1, 1)");
  if (noise_stddev > 0.0 && rng == nullptr) throw ConfigError("assign_ranks_noisy: noise requires an rng");
  const std::size_t n = class_centers.size();
  std::vector<std::vector<std::size_t>> sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double sim = cosine_similarity(class_centers[i], class_centers[j]);
      if (noise_stddev > 0.0) sim += rng->normal(0.0, noise_stddev);
      if (sim > threshold) {
        sets[i].push_back(j);
        sets[j].push_back(i);
      }
    }
  for (auto& s : sets) std::sort(s.begin(), s.end());
  return sets;
}

std::vector<std::vector<std::size_t>> superclass_rank2_sets(std::size_t num_classes,
                                                            std::size_t classes_per_superclass) {
  std::vector<std::vector<std::size_t>> sets(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i)
    for (std::size_t j = 0; j < num_classes; ++j)
      if (i != j && i / classes_per_superclass == j / classes_per_superclass) sets[i].push_back(j);
  return sets;
}

double threshold_gap_midpoint(const std::vector<Vec64>& class_centers, std::size_t classes_per_superclass,
                              double* gap) {
  double min_within = INFINITY;
  double max_cross = -INFINITY;
  for (std::size_t i = 0; i < class_centers.size(); ++i)
    for (std::size_t j = i + 1; j < class_centers.size(); ++j) {
      const double sim = cosine_similarity(class_centers[i], class_centers[j]);
      if (i / classes_per_superclass == j / classes_per_superclass) min_within = std::min(min_within, sim);
      else max_cross = std::max(max_cross, sim);
    }
  if (!std::isfinite(min_within) || !std::isfinite(max_cross))
    throw ConfigError("threshold_gap_midpoint: need both within- and cross-superclass pairs");
  if (gap != nullptr) *gap = min_within - max_cross;
  return 0.5 * (min_within + max_cross);
}

void write_hierarchy_csv(std::ostream& out, const HierarchyDataset& data) {
  const std::size_t d = data.spec.dim;
  for (std::size_t i = 0; i < d; ++i) out << 'f' << i << ',';
  out << "class,superclass\n" << std::setprecision(17);
  for (const auto& s : data.samples) {
    write_features(out, s.x);
    out << s.class_id << ',' << s.superclass_id << '\n';
  }
}

HierarchyDataset read_hierarchy_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "class" || header.back() != "superclass")
    throw ConfigError("csv: header must end with class,superclass");
  const std::size_t d = header.size() - 2;
  HierarchyDataset data;
  std::size_t line_no = 1;
  std::size_t max_class = 0;
  std::size_t max_super = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 2) throw ConfigError("csv line " + std::to_string(line_no) + ": wrong column count");
    LabeledSample s;
    for (std::size_t i = 0; i < d; ++i) s.x.push_back(parse_double(cells[i], line_no));
    s.class_id = parse_index(cells[d], line_no);
    s.superclass_id = parse_index(cells[d + 1], line_no);
    max_class = std::max(max_class, s.class_id);
    max_super = std::max(max_super, s.superclass_id);
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw ConfigError("csv: no samples");
  data.spec.dim = d;
  data.spec.num_superclasses = max_super + 1;
  data.spec.classes_per_superclass = (max_class + 1) / data.spec.num_superclasses;
  data.spec.samples_per_class = data.samples.size() / (max_class + 1);
  for (const auto& s : data.samples)
    if (s.superclass_id != s.class_id / data.spec.classes_per_superclass)
      throw ConfigError("csv: superclass labels are not positional (class / classes_per_superclass)");
  return data;
}

void write_sequence_csv(std::ostream& out, const SequenceDataset& data) {
  for (std::size_t i = 0; i < data.spec.dim; ++i) out << 'f' << i << ',';
  out << "trajectory,step\n" << std::setprecision(17);
  for (std::size_t t = 0; t < data.trajectories.size(); ++t)
    for (std::size_t k = 0; k < data.trajectories[t].size(); ++k) {
      write_features(out, data.trajectories[t][k]);
      out << t << ',' << k << '\n';
    }
}

SequenceDataset read_sequence_csv(std::istream& in, const SequenceSpec& spec) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "trajectory" || header.back() != "step")
    throw ConfigError("csv: header must end with trajectory,step");
  const std::size_t d = header.size() - 2;
  SequenceDataset data;
  data.spec = spec;
  data.spec.dim = d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 2) throw ConfigError("csv line " + std::to_string(line_no) + ": wrong column count");
    Vec64 x;
    for (std::size_t i = 0; i < d; ++i) x.push_back(parse_double(cells[i], line_no));
    const std::size_t t = parse_index(cells[d], line_no);
    const std::size_t k = parse_index(cells[d + 1], line_no);
    if (t >= data.trajectories.size()) data.trajectories.resize(t + 1);
    if (k != data.trajectories[t].size()) throw ConfigError("csv line " + std::to_string(line_no) + ": steps out of order");
    data.trajectories[t].push_back(std::move(x));
  }
  data.spec.num_trajectories = data.trajectories.size();
  if (!data.trajectories.empty()) data.spec.length = data.trajectories.front().size();
  return data;
}

}  // namespace rince
