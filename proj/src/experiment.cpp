#include "rince/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace rince {
namespace {

using nlohmann::json;

/// Reads one JSON object, recording which keys were consumed so leftovers can
/// be reported as unknown fields.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError("field '" + prefix_ + "' must be an object");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError("field '" + path(key) + "' must be a number");
      out = v->get<double>();
    }
  }
  void count(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) out = as_count(*v, path(key));
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
        throw ConfigError("field '" + path(key) + "' must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void flag(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError("field '" + path(key) + "' must be true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(const std::string& key) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError("field '" + path(key) + "' must be a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError("field '" + path(key) + "' must be an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError("field '" + path(key) + "' must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError("field '" + path(key) + "' must be an array of integers");
      out.clear();
      for (const auto& e : *v) out.push_back(as_count(e, path(key)));
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown field '" + path(key) + "'");
  }

 private:
  static std::size_t as_count(const json& v, const std::string& where) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError("field '" + where + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string_view to_string(SequenceMode m) {
  switch (m) {
    case SequenceMode::kRanked: return "ranked";
    case SequenceMode::kFrameOnly: return "frame_only";
    case SequenceMode::kHardPositive: return "hard_positive";
    case SequenceMode::kEasyPositive: return "easy_positive";
    case SequenceMode::kHardNegative: return "hard_negative";
  }
  return "ranked";
}

std::optional<SequenceMode> parse_sequence_mode(std::string name) {
  std::replace(name.begin(), name.end(), '-', '_');
  for (SequenceMode m : {SequenceMode::kRanked, SequenceMode::kFrameOnly, SequenceMode::kHardPositive,
                         SequenceMode::kEasyPositive, SequenceMode::kHardNegative})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

/// Number of ranks a variant sees on the configured data.
std::size_t rank_count(const ExperimentConfig& cfg) {
  const LossVariant v = cfg.train.loss.variant;
  if (cfg.data_kind == DataKind::kHierarchy) return is_rince(v) || v == LossVariant::kTripletRanked ? 2 : 1;
  return cfg.train.sequence_mode == SequenceMode::kRanked ? 3 : 1;
}

void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.data_kind == DataKind::kHierarchy) {
    cfg.hierarchy.validate();
    if (cfg.train.mlp.input_dim() != cfg.hierarchy.dim)
      throw ConfigError("field 'train.mlp.encoder_widths' must start with the data dim " +
                        std::to_string(cfg.hierarchy.dim));
    if (cfg.train.loss.variant == LossVariant::kRinceUni)
      throw ConfigError("field 'train.variant': rince_uni needs one positive per rank, which hierarchy data cannot "
                        "provide; use rince_in, rince_out or rince_out_in");
    if (cfg.eval.ood_superclass && *cfg.eval.ood_superclass >= cfg.hierarchy.num_superclasses)
      throw ConfigError("field 'eval.ood_superclass' must be below num_superclasses");
  } else {
    cfg.sequence.validate();
    if (cfg.train.mlp.input_dim() != cfg.sequence.dim)
      throw ConfigError("field 'train.mlp.encoder_widths' must start with the data dim " +
                        std::to_string(cfg.sequence.dim));
    const LossVariant v = cfg.train.loss.variant;
    const SequenceMode m = cfg.train.sequence_mode;
    if ((v == LossVariant::kInfoNce && m != SequenceMode::kFrameOnly) ||
        (v == LossVariant::kRinceUni && m != SequenceMode::kRanked))
      throw ConfigError("field 'train.sequence_mode': " + std::string(to_string(m)) + " is incompatible with " +
                        std::string(to_string(v)));
    if (cfg.train.rank_source == RankSource::kNoisy)
      throw ConfigError("field 'train.rank_source': noisy ranks apply to hierarchy data only");
  }
  if (!(cfg.eval.train_fraction > 0.0 && cfg.eval.train_fraction < 1.0))
    throw ConfigError("field 'eval.train_fraction' must lie in (0, 1)");
  if (cfg.eval.probe.epochs == 0) throw ConfigError("field 'eval.probe.epochs' must be positive");
  if (!(cfg.eval.probe.lr > 0.0)) throw ConfigError("field 'eval.probe.lr' must be positive");
  const std::size_t ranks = rank_count(cfg);
  const LossVariant v = cfg.train.loss.variant;
  if (is_rince(v) && cfg.train.loss.taus.size() != ranks)
    throw ConfigError("field 'train.taus' needs " + std::to_string(ranks) + " temperatures for " +
                      std::string(to_string(v)) + " on this data");
  if (v == LossVariant::kTripletRanked && cfg.train.loss.triplet_margins.size() != ranks)
    throw ConfigError("field 'train.triplet_margins' needs " + std::to_string(ranks) + " margins on this data");
  try {
    cfg.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

std::vector<double> default_taus(const ExperimentConfig& cfg) {
  if (!is_rince(cfg.train.loss.variant)) return {0.1};
  if (cfg.data_kind == DataKind::kSequence) return {0.1, 0.15, 0.2};
  return {0.1, 0.225};
}

std::vector<double> default_margins(const ExperimentConfig& cfg) {
  if (cfg.data_kind == DataKind::kSequence && cfg.train.sequence_mode == SequenceMode::kRanked) return {0.5, 1.0, 1.5};
  if (cfg.data_kind == DataKind::kHierarchy) return {0.5, 1.0};
  return {0.5};
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<Vec64> inputs_of(const std::vector<LabeledSample>& s) {
  std::vector<Vec64> x;
  x.reserve(s.size());
  for (const auto& e : s) x.push_back(e.x);
  return x;
}

std::vector<std::size_t> classes_of(const std::vector<LabeledSample>& s) {
  std::vector<std::size_t> y;
  for (const auto& e : s) y.push_back(e.class_id);
  return y;
}

std::vector<std::size_t> superclasses_of(const std::vector<LabeledSample>& s) {
  std::vector<std::size_t> y;
  for (const auto& e : s) y.push_back(e.superclass_id);
  return y;
}

json matrix_json(const Mat64& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(std::isfinite(m(r, c)) ? json(m(r, c)) : json(nullptr));
    rows.push_back(row);
  }
  return rows;
}

json blocks_json(const BlockMeans& b) {
  return {{"within_class", b.within_class}, {"within_superclass", b.within_superclass}, {"cross", b.cross}};
}

json retrieval_json(const RetrievalResult& r) {
  return {{"recall_at_1", r.recall_at_1}, {"mean_ap", r.mean_ap}, {"pr_curve", r.pr_curve},
          {"queries", r.queries}, {"skipped", r.skipped}};
}

EncoderState untrained_state(const ExperimentConfig& cfg) {
  SeededRng init = SeededRng(cfg.train.seed).split(Stream::kInit);
  return init_encoder(cfg.train.mlp, cfg.train.encoder_momentum, init);
}

json evaluate_hierarchy(const ExperimentConfig& cfg, const HierarchyDataset& data, const EncoderState& state) {
  const HierarchySplit split = split_hierarchy(data, cfg.eval);
  const std::vector<Vec64> train_f = embed(state, inputs_of(split.train));
  const std::vector<Vec64> test_f = embed(state, inputs_of(split.test));
  const std::vector<Vec64> test_proj = embed(state, inputs_of(split.test), true);
  const auto train_y = classes_of(split.train);
  const auto test_y = classes_of(split.test);
  const auto test_super = superclasses_of(split.test);

  json m;
  m["probe_accuracy"] = linear_probe(train_f, train_y, test_f, test_y, cfg.eval.probe);
  const EncoderState init = untrained_state(cfg);
  m["probe_accuracy_untrained"] =
      linear_probe(embed(init, inputs_of(split.train)), train_y, embed(init, inputs_of(split.test)), test_y, cfg.eval.probe);
  m["retrieval_class"] = retrieval_json(retrieval(test_f, test_y));
  m["retrieval_superclass"] = retrieval_json(retrieval(test_f, test_super));

  if (!split.ood.empty()) {
    const GaussianClassModel model = fit_ood_model(train_f, train_y, cfg.eval.covariance);
    std::vector<double> in_scores;
    std::vector<double> out_scores;
    for (const auto& f : test_f) in_scores.push_back(ood_score(model, f));
    for (const auto& f : embed(state, inputs_of(split.ood))) out_scores.push_back(ood_score(model, f));
    m["ood_auroc"] = auroc(in_scores, out_scores);
  } else {
    m["ood_auroc"] = nullptr;
  }

  std::vector<Vec64> fine_a, fine_b, coarse_a, coarse_b;
  for (std::size_t i = 0; i < test_f.size(); ++i)
    for (std::size_t j = i + 1; j < test_f.size(); ++j) {
      if (test_y[i] == test_y[j]) {
        fine_a.push_back(test_f[i]);
        fine_b.push_back(test_f[j]);
      } else if (test_super[i] == test_super[j]) {
        coarse_a.push_back(test_f[i]);
        coarse_b.push_back(test_f[j]);
      }
    }
  const AlignmentUniformity fine = alignment_uniformity(fine_a, fine_b, test_f);
  const AlignmentUniformity coarse = alignment_uniformity(coarse_a, coarse_b, test_f);
  m["alignment_fine"] = fine.alignment;
  m["alignment_coarse"] = coarse.alignment;
  m["uniformity"] = fine.uniformity;

  const std::size_t classes = data.spec.num_classes();
  const Mat64 pre = class_similarity_matrix(test_f, test_y, classes);
  const Mat64 post = class_similarity_matrix(test_proj, test_y, classes);
  json sim;
  sim["pre_head"] = matrix_json(pre);
  sim["post_head"] = matrix_json(post);
  sim["block_means_pre_head"] = blocks_json(block_means(pre, data.spec.classes_per_superclass));
  sim["block_means_post_head"] = blocks_json(block_means(post, data.spec.classes_per_superclass));

  json report;
  report["metrics"] = m;
  report["similarity"] = sim;
  report["split"] = {{"train", split.train.size()}, {"test", split.test.size()}, {"ood", split.ood.size()}};
  return report;
}

json evaluate_sequences(const ExperimentConfig& cfg, const SequenceDataset& data, const EncoderState& state) {
  const SequenceSplit split = split_sequences(data, cfg.eval);
  const SequenceSpec& sp = data.spec;
  std::vector<Vec64> clips;
  std::vector<std::size_t> labels;
  for (std::size_t t : split.test)
    for (std::size_t start = 0; start + sp.window <= sp.length; start += sp.window) {
      clips.push_back(clip(data, t, start));
      labels.push_back(t);
    }
  const std::vector<Vec64> f = embed(state, clips);
  json m;
  m["retrieval_trajectory"] = retrieval_json(retrieval(f, labels));
  std::vector<Vec64> a, b;
  for (std::size_t i = 0; i + 1 < f.size(); ++i)
    if (labels[i] == labels[i + 1]) {
      a.push_back(f[i]);
      b.push_back(f[i + 1]);
    }
  const AlignmentUniformity au = alignment_uniformity(a, b, f);
  m["alignment_adjacent"] = au.alignment;
  m["uniformity"] = au.uniformity;
  json report;
  report["metrics"] = m;
  report["split"] = {{"train_trajectories", split.train.size()}, {"test_trajectories", split.test.size()},
                     {"test_clips", clips.size()}};
  return report;
}

std::string csv_number(const json& v) {
  if (!v.is_number()) return "";
  std::ostringstream s;
  s << std::setprecision(17) << v.get<double>();
  return s.str();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  FieldReader root(j, "");

  if (const json* d = root.find("data")) {
    FieldReader data(*d, "data");
    if (auto kind = data.text("kind")) {
      if (*kind == "hierarchy")
        cfg.data_kind = DataKind::kHierarchy;
      else if (*kind == "sequence")
        cfg.data_kind = DataKind::kSequence;
      else
        throw ConfigError("field 'data.kind' must be \"hierarchy\" or \"sequence\"");
    }
    data.seed("seed", cfg.data_seed);
    if (const json* h = data.find("hierarchy")) {
      FieldReader r(*h, "data.hierarchy");
      r.count("num_superclasses", cfg.hierarchy.num_superclasses);
      r.count("classes_per_superclass", cfg.hierarchy.classes_per_superclass);
      r.count("samples_per_class", cfg.hierarchy.samples_per_class);
      r.count("dim", cfg.hierarchy.dim);
      r.number("superclass_spread", cfg.hierarchy.superclass_spread);
      r.number("class_spread", cfg.hierarchy.class_spread);
      r.number("sample_noise", cfg.hierarchy.sample_noise);
      r.finish();
    }
    if (const json* s = data.find("sequence")) {
      FieldReader r(*s, "data.sequence");
      r.count("num_trajectories", cfg.sequence.num_trajectories);
      r.count("length", cfg.sequence.length);
      r.count("latent_dim", cfg.sequence.latent_dim);
      r.count("dim", cfg.sequence.dim);
      r.number("drift", cfg.sequence.drift);
      r.number("smoothness", cfg.sequence.smoothness);
      r.number("observation_noise", cfg.sequence.observation_noise);
      r.count("window", cfg.sequence.window);
      r.count("min_gap", cfg.sequence.min_gap);
      r.finish();
    }
    data.finish();
  }

  bool taus_given = false;
  bool margins_given = false;
  bool widths_given = false;
  std::string mode = "auto";
  if (const json* t = root.find("train")) {
    FieldReader r(*t, "train");
    TrainConfig& tc = cfg.train;
    if (auto v = r.text("variant")) {
      const auto parsed = parse_loss_variant(*v);
      if (!parsed) throw ConfigError("field 'train.variant': unknown loss variant '" + *v + "'");
      tc.loss.variant = *parsed;
    }
    taus_given = r.has("taus");
    r.numbers("taus", tc.loss.taus);
    r.flag("allow_unordered_taus", tc.loss.allow_unordered_taus);
    margins_given = r.has("triplet_margins");
    r.numbers("triplet_margins", tc.loss.triplet_margins);
    r.number("base_lr", tc.base_lr);
    r.number("sgd_momentum", tc.sgd_momentum);
    r.number("weight_decay", tc.weight_decay);
    r.count("batch_size", tc.batch_size);
    r.count("epochs", tc.epochs);
    r.count("bank_capacity", tc.bank_capacity);
    r.number("encoder_momentum", tc.encoder_momentum);
    r.seed("seed", tc.seed);
    r.number("augment_strength", tc.augment_strength);
    r.flag("in_batch_keys", tc.in_batch_keys);
    if (auto src = r.text("rank_source")) {
      if (*src == "exact")
        tc.rank_source = RankSource::kExact;
      else if (*src == "noisy")
        tc.rank_source = RankSource::kNoisy;
      else
        throw ConfigError("field 'train.rank_source' must be \"exact\" or \"noisy\"");
    }
    if (r.has("theta")) {
      double theta = 0.0;
      r.number("theta", theta);
      cfg.theta = theta;
    } else {
      r.find("theta");
    }
    r.number("theta_offset", cfg.theta_offset);
    r.number("noisy_sigma", tc.noisy_sigma);
    if (auto m = r.text("sequence_mode")) mode = *m;
    r.count("clips_per_trajectory", tc.clips_per_trajectory);
    if (const json* mlp = r.find("mlp")) {
      FieldReader mr(*mlp, "train.mlp");
      widths_given = mr.has("encoder_widths");
      mr.counts("encoder_widths", tc.mlp.encoder_widths);
      mr.count("head_hidden", tc.mlp.head_hidden);
      mr.count("projection_dim", tc.mlp.projection_dim);
      mr.finish();
    }
    r.finish();
  }

  if (const json* e = root.find("eval")) {
    FieldReader r(*e, "eval");
    r.number("train_fraction", cfg.eval.train_fraction);
    if (r.has("ood_superclass")) {
      std::size_t s = 0;
      r.count("ood_superclass", s);
      cfg.eval.ood_superclass = s;
    } else {
      r.find("ood_superclass");
    }
    r.flag("hold_out_superclass", cfg.eval.hold_out_superclass);
    if (auto cov = r.text("covariance")) {
      if (*cov == "full")
        cfg.eval.covariance = CovarianceKind::kFull;
      else if (*cov == "diagonal")
        cfg.eval.covariance = CovarianceKind::kDiagonal;
      else
        throw ConfigError("field 'eval.covariance' must be \"full\" or \"diagonal\"");
    }
    if (const json* p = r.find("probe")) {
      FieldReader pr(*p, "eval.probe");
      pr.count("epochs", cfg.eval.probe.epochs);
      pr.number("lr", cfg.eval.probe.lr);
      pr.counts("decay_epochs", cfg.eval.probe.decay_epochs);
      pr.number("decay", cfg.eval.probe.decay);
      pr.number("weight_decay", cfg.eval.probe.weight_decay);
      pr.finish();
    }
    r.finish();
  }
  root.finish();

  if (mode == "auto") {
    cfg.train.sequence_mode = default_sequence_mode(cfg.train.loss.variant);
  } else {
    const auto m = parse_sequence_mode(mode);
    if (!m) throw ConfigError("field 'train.sequence_mode': unknown mode '" + mode + "'");
    cfg.train.sequence_mode = *m;
  }
  if (!taus_given) cfg.train.loss.taus = default_taus(cfg);
  if (!margins_given) cfg.train.loss.triplet_margins = default_margins(cfg);
  if (!widths_given)
    cfg.train.mlp.encoder_widths.front() = cfg.data_kind == DataKind::kHierarchy ? cfg.hierarchy.dim : cfg.sequence.dim;
  validate_experiment(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  const HierarchySpec& h = cfg.hierarchy;
  const SequenceSpec& s = cfg.sequence;
  j["data"] = {{"kind", cfg.data_kind == DataKind::kHierarchy ? "hierarchy" : "sequence"},
               {"seed", cfg.data_seed},
               {"hierarchy",
                {{"num_superclasses", h.num_superclasses},
                 {"classes_per_superclass", h.classes_per_superclass},
                 {"samples_per_class", h.samples_per_class},
                 {"dim", h.dim},
                 {"superclass_spread", h.superclass_spread},
                 {"class_spread", h.class_spread},
                 {"sample_noise", h.sample_noise}}},
               {"sequence",
                {{"num_trajectories", s.num_trajectories},
                 {"length", s.length},
                 {"latent_dim", s.latent_dim},
                 {"dim", s.dim},
                 {"drift", s.drift},
                 {"smoothness", s.smoothness},
                 {"observation_noise", s.observation_noise},
                 {"window", s.window},
                 {"min_gap", s.min_gap}}}};
  const TrainConfig& t = cfg.train;
  j["train"] = {{"variant", to_string(t.loss.variant)},
                {"taus", t.loss.taus},
                {"allow_unordered_taus", t.loss.allow_unordered_taus},
                {"triplet_margins", t.loss.triplet_margins},
                {"base_lr", t.base_lr},
                {"sgd_momentum", t.sgd_momentum},
                {"weight_decay", t.weight_decay},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"bank_capacity", t.bank_capacity},
                {"encoder_momentum", t.encoder_momentum},
                {"seed", t.seed},
                {"augment_strength", t.augment_strength},
                {"in_batch_keys", t.in_batch_keys},
                {"rank_source", t.rank_source == RankSource::kExact ? "exact" : "noisy"},
                {"theta", cfg.theta ? json(*cfg.theta) : json(nullptr)},
                {"theta_offset", cfg.theta_offset},
                {"noisy_sigma", t.noisy_sigma},
                {"sequence_mode", to_string(t.sequence_mode)},
                {"clips_per_trajectory", t.clips_per_trajectory},
                {"mlp",
                 {{"encoder_widths", t.mlp.encoder_widths},
                  {"head_hidden", t.mlp.head_hidden},
                  {"projection_dim", t.mlp.projection_dim}}}};
  j["eval"] = {{"train_fraction", cfg.eval.train_fraction},
               {"ood_superclass", cfg.eval.ood_superclass ? json(*cfg.eval.ood_superclass) : json(nullptr)},
               {"hold_out_superclass", cfg.eval.hold_out_superclass},
               {"covariance", cfg.eval.covariance == CovarianceKind::kFull ? "full" : "diagonal"},
               {"probe",
                {{"epochs", cfg.eval.probe.epochs},
                 {"lr", cfg.eval.probe.lr},
                 {"decay_epochs", cfg.eval.probe.decay_epochs},
                 {"decay", cfg.eval.probe.decay},
                 {"weight_decay", cfg.eval.probe.weight_decay}}}};
  return j;
}

std::string run_id(const ExperimentConfig& cfg, const std::string& extra) {
  const std::uint64_t h = fnv1a(extra, fnv1a(config_to_json(cfg).dump()));
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

Dataset generate_dataset(const ExperimentConfig& cfg) {
  Dataset d;
  d.kind = cfg.data_kind;
  SeededRng rng = SeededRng(cfg.data_seed).split(Stream::kData);
  if (cfg.data_kind == DataKind::kHierarchy)
    d.hierarchy = gen_hierarchy(cfg.hierarchy, rng);
  else
    d.sequence = gen_sequences(cfg.sequence, rng);
  return d;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  if (data.kind == DataKind::kHierarchy)
    write_hierarchy_csv(out, data.hierarchy);
  else
    write_sequence_csv(out, data.sequence);
}

Dataset read_dataset_csv(std::istream& in, const ExperimentConfig& cfg) {
  Dataset d;
  d.kind = cfg.data_kind;
  if (cfg.data_kind == DataKind::kHierarchy) {
    d.hierarchy = read_hierarchy_csv(in);
    if (d.hierarchy.spec.dim != cfg.hierarchy.dim ||
        d.hierarchy.spec.num_classes() != cfg.hierarchy.num_classes())
      throw ConfigError("dataset does not match the configured hierarchy (dim or class count differs)");
    d.hierarchy.spec = cfg.hierarchy;
  } else {
    d.sequence = read_sequence_csv(in, cfg.sequence);
  }
  return d;
}

HierarchySplit split_hierarchy(const HierarchyDataset& data, const EvalConfig& eval) {
  const HierarchySpec& spec = data.spec;
  std::optional<std::size_t> held;
  if (eval.hold_out_superclass && spec.num_superclasses >= 2)
    held = eval.ood_superclass.value_or(spec.num_superclasses - 1);
  std::vector<std::size_t> seen(spec.num_classes(), 0);
  std::vector<std::size_t> total(spec.num_classes(), 0);
  for (const auto& s : data.samples) ++total.at(s.class_id);
  HierarchySplit out;
  for (const auto& s : data.samples) {
    if (held && s.superclass_id == *held) {
      out.ood.push_back(s);
      continue;
    }
    const auto n_train = static_cast<std::size_t>(std::floor(eval.train_fraction * static_cast<double>(total[s.class_id])));
    (seen[s.class_id]++ < n_train ? out.train : out.test).push_back(s);
  }
  if (out.train.empty() || out.test.empty()) throw ConfigError("split leaves an empty train or test set");
  return out;
}

SequenceSplit split_sequences(const SequenceDataset& data, const EvalConfig& eval) {
  const std::size_t n = data.trajectories.size();
  const auto n_train = static_cast<std::size_t>(std::floor(eval.train_fraction * static_cast<double>(n)));
  SequenceSplit out;
  for (std::size_t t = 0; t < n; ++t) (t < n_train ? out.train : out.test).push_back(t);
  if (out.train.empty() || out.test.size() < 2) throw ConfigError("split leaves too few trajectories");
  return out;
}

double resolved_theta(const ExperimentConfig& cfg, const HierarchyDataset& data) {
  if (cfg.theta) return *cfg.theta;
  const std::vector<Vec64> centers =
      data.class_centers.empty() ? class_means(data.samples, data.spec.num_classes()) : data.class_centers;
  return threshold_gap_midpoint(centers, data.spec.classes_per_superclass) + cfg.theta_offset;
}

TrainResult train_experiment(const ExperimentConfig& cfg, const Dataset& data) {
  if (data.kind == DataKind::kSequence) return train_sequences(cfg.train, data.sequence, split_sequences(data.sequence, cfg.eval).train);
  TrainConfig tc = cfg.train;
  if (tc.rank_source == RankSource::kNoisy) tc.noisy_threshold = resolved_theta(cfg, data.hierarchy);
  const HierarchySplit split = split_hierarchy(data.hierarchy, cfg.eval);
  const std::vector<Vec64> centers = data.hierarchy.class_centers.empty()
                                         ? class_means(data.hierarchy.samples, data.hierarchy.spec.num_classes())
                                         : data.hierarchy.class_centers;
  return train(tc, split.train, data.hierarchy.spec.num_classes(), centers);
}

json evaluate_experiment(const ExperimentConfig& cfg, const Dataset& data, const EncoderState& state) {
  if (state.spec != cfg.train.mlp) throw ConfigError("checkpoint architecture does not match the config");
  json report = data.kind == DataKind::kHierarchy ? evaluate_hierarchy(cfg, data.hierarchy, state)
                                                  : evaluate_sequences(cfg, data.sequence, state);
  report["variant"] = to_string(cfg.train.loss.variant);
  report["seed"] = cfg.train.seed;
  report["data_kind"] = cfg.data_kind == DataKind::kHierarchy ? "hierarchy" : "sequence";
  if (cfg.train.rank_source == RankSource::kNoisy && data.kind == DataKind::kHierarchy)
    report["theta"] = resolved_theta(cfg, data.hierarchy);
  return report;
}

std::string leaderboard_header() {
  return "run_id,variant,seed,accuracy,r1_fine,r1_super,map,auroc,alignment,uniformity";
}

std::string leaderboard_row(const json& report) {
  const json& m = report.at("metrics");
  auto get = [&](const char* key, const char* sub = nullptr) -> std::string {
    if (!m.contains(key)) return "";
    const json& v = m.at(key);
    return csv_number(sub ? (v.contains(sub) ? v.at(sub) : json()) : v);
  };
  std::ostringstream row;
  const bool seq = report.value("data_kind", "hierarchy") == "sequence";
  row << report.value("run_id", "") << ',' << report.at("variant").get<std::string>() << ','
      << report.at("seed").get<std::uint64_t>() << ',' << get("probe_accuracy") << ','
      << (seq ? get("retrieval_trajectory", "recall_at_1") : get("retrieval_class", "recall_at_1")) << ','
      << get("retrieval_superclass", "recall_at_1") << ','
      << (seq ? get("retrieval_trajectory", "mean_ap") : get("retrieval_class", "mean_ap")) << ',' << get("ood_auroc")
      << ',' << (seq ? get("alignment_adjacent") : get("alignment_fine")) << ',' << get("uniformity");
  return row.str();
}

}  // namespace rince
