#include "rince/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace rince {
namespace {

/// Keys available to every query of one step: bank entries, then in-batch keys.
struct KeyPool {
  std::size_t dim = 0;
  std::vector<double> keys;
  PoolLabels labels;

  std::size_t size() const { return labels.label.size(); }
  std::span<const double> key(std::size_t i) const { return {keys.data() + i * dim, dim}; }
  void add(std::span<const double> k, std::size_t label, std::size_t group) {
    keys.insert(keys.end(), k.begin(), k.end());
    labels.label.push_back(label);
    labels.group.push_back(group);
  }
};

KeyPool pool_from_bank(const MemoryBank& bank) {
  KeyPool pool;
  pool.dim = bank.dim();
  pool.keys.reserve(bank.size() * bank.dim());
  for (std::size_t i = 0; i < bank.size(); ++i) pool.add(bank.key(i), bank.label(i), bank.group(i));
  return pool;
}

struct SimAccumulator {
  std::vector<double> sum;
  std::vector<std::size_t> count;
  explicit SimAccumulator(std::size_t n) : sum(n, 0.0), count(n, 0) {}
  void add(std::size_t slot, double v) {
    sum[slot] += v;
    ++count[slot];
  }
  std::vector<double> means() const {
    std::vector<double> m(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) m[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : NAN;
    return m;
  }
};

/// Drops empty ranks together with their temperature and margin.
LossSettings settings_for(const LossSettings& base, std::vector<std::vector<std::size_t>>& ranks) {
  LossSettings s = base;
  std::vector<std::vector<std::size_t>> kept;
  std::vector<double> taus;
  std::vector<double> margins;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i].empty()) continue;
    kept.push_back(std::move(ranks[i]));
    if (i < base.taus.size()) taus.push_back(base.taus[i]);
    if (i < base.triplet_margins.size()) margins.push_back(base.triplet_margins[i]);
  }
  ranks = std::move(kept);
  if (!taus.empty()) s.taus = std::move(taus);
  if (!margins.empty()) s.triplet_margins = std::move(margins);
  return s;
}

/// Cosine similarity of the normalized query q with every pool key.
std::vector<double> pool_scores(std::span<const double> q, const KeyPool& pool) {
  std::vector<double> s(pool.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::clamp(dot(q, pool.key(k)), -1.0, 1.0);
  return s;
}

/// Gathers the ranked scores of one query, evaluates the loss and adds
/// (scale · ∂L/∂projection) into grad_proj.
LossResult score_query(std::span<const double> projection, std::span<const double> q, std::span<const double> scores,
                       const KeyPool& pool, RankAssignment sets, const LossSettings& base, double scale,
                       std::span<double> grad_proj) {
  const LossSettings settings = settings_for(base, sets.positives_by_rank);
  SimilarityBatch batch;
  std::vector<std::size_t> order;
  for (const auto& rank : sets.positives_by_rank) {
    std::vector<double> s;
    s.reserve(rank.size());
    for (std::size_t k : rank) {
      s.push_back(scores[k]);
      order.push_back(k);
    }
    batch.positives_by_rank.push_back(std::move(s));
  }
  batch.negatives.reserve(sets.negatives.size());
  for (std::size_t k : sets.negatives) {
    batch.negatives.push_back(scores[k]);
    order.push_back(k);
  }
  LossResult r = evaluate_loss(batch, settings);
  const std::vector<double> g = r.flat_grad();
  // ∂s_k/∂z = (key_k − s_k·q̂)/‖z‖ for unit keys.
  const double inv_norm = 1.0 / norm(projection);
  Vec64 acc(q.size(), 0.0);
  double along_q = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (g[k] == 0.0) continue;
    const auto key = pool.key(order[k]);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[k] * key[i];
    along_q += g[k] * scores[order[k]];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) grad_proj[i] += scale * inv_norm * (acc[i] - along_q * q[i]);
  return r;
}

void check_finite(const Gradients& grads, std::size_t epoch, std::size_t step) {
  const std::vector<double> flat = grads.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i)
    if (!std::isfinite(flat[i])) {
      std::ostringstream msg;
      msg << "non-finite gradient at epoch " << epoch << ", step " << step << ", parameter " << i;
      throw NumericError(msg.str());
    }
}

struct EpochStats {
  double loss_sum = 0.0;
  std::size_t queries = 0;
  std::vector<double> term_sum;
  std::vector<std::size_t> term_count;

  void add(const LossResult& r, std::size_t ranks_before_drop, const std::vector<bool>& present) {
    loss_sum += r.value;
    ++queries;
    term_sum.resize(ranks_before_drop, 0.0);
    term_count.resize(ranks_before_drop, 0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < ranks_before_drop && k < r.rank_terms.size(); ++i) {
      if (!present[i]) continue;
      term_sum[i] += r.rank_terms[k++];
      ++term_count[i];
    }
  }
};

std::vector<bool> presence(const RankAssignment& sets) {
  std::vector<bool> p;
  for (const auto& r : sets.positives_by_rank) p.push_back(!r.empty());
  return p;
}

/// Shared optimizer bookkeeping for one training run.
struct Optimizer {
  SgdState sgd;
  std::size_t step = 0;
  std::size_t total_steps = 0;
};

void finish_step(const TrainConfig& cfg, EncoderState& state, const Gradients& grads, Optimizer& opt,
                 std::size_t epoch) {
  check_finite(grads, epoch, opt.step);
  const double lr = cosine_lr(opt.step, opt.total_steps, cfg.base_lr);
  sgd_step(state.online, grads, opt.sgd, lr, cfg.sgd_momentum, cfg.weight_decay);
  momentum_update(state, cfg.encoder_momentum);
  ++opt.step;
}

std::size_t loss_term_count(const LossSettings& loss) {
  if (is_rince(loss.variant)) return loss.taus.size();
  if (loss.variant == LossVariant::kTripletRanked) return loss.triplet_margins.size();
  return 1;
}

EpochRecord close_epoch(std::size_t epoch, const EpochStats& stats, const SimAccumulator& sims, double lr) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.loss = stats.queries ? stats.loss_sum / static_cast<double>(stats.queries) : 0.0;
  for (std::size_t i = 0; i < stats.term_sum.size(); ++i)
    rec.rank_terms.push_back(stats.term_count[i] ? stats.term_sum[i] / static_cast<double>(stats.term_count[i]) : 0.0);
  rec.mean_sim = sims.means();
  rec.lr = lr;
  if (!std::isfinite(rec.loss)) throw NumericError("training diverged: epoch " + std::to_string(epoch) + " loss is not finite");
  return rec;
}

}  // namespace

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), keys_(capacity * dim), labels_(capacity), groups_(capacity) {
  if (capacity == 0) throw ConfigError("memory bank capacity must be positive");
}

void MemoryBank::enqueue(std::span<const double> key, std::size_t label, std::size_t group) {
  if (key.size() != dim_) throw ConfigError("memory bank: key dimension mismatch");
  std::copy(key.begin(), key.end(), keys_.begin() + static_cast<std::ptrdiff_t>(cursor_ * dim_));
  labels_[cursor_] = label;
  groups_[cursor_] = group;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::span<const double> MemoryBank::key(std::size_t i) const {
  if (i >= size_) throw ConfigError("memory bank: index out of range");
  return {keys_.data() + slot(i) * dim_, dim_};
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ConfigError("sgd_momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(encoder_momentum > 0.0 && encoder_momentum < 1.0)) throw ConfigError("encoder_momentum must lie in (0, 1)");
  if (bank_capacity == 0) throw ConfigError("bank_capacity must be positive");
  if (!(augment_strength >= 0.0)) throw ConfigError("augment_strength must be >= 0");
  if (loss.taus.empty()) throw ConfigError("taus must not be empty");
  TemperatureSchedule check(loss.taus, loss.allow_unordered_taus);
  if (loss.variant == LossVariant::kTripletRanked && loss.triplet_margins.empty())
    throw ConfigError("triplet_margins must not be empty");
  if (rank_source == RankSource::kNoisy && !(noisy_threshold > -1.0 && noisy_threshold < 1.0))
    throw ConfigError("theta must lie in (-1, 1)");
  if (!(noisy_sigma >= 0.0)) throw ConfigError("noisy_sigma must be >= 0");
  if (clips_per_trajectory == 0) throw ConfigError("clips_per_trajectory must be positive");
  mlp.validate();
}

SequenceMode default_sequence_mode(LossVariant v) {
  if (is_rince(v) || v == LossVariant::kTripletRanked) return SequenceMode::kRanked;
  if (v == LossVariant::kInfoNce) return SequenceMode::kFrameOnly;
  return SequenceMode::kHardPositive;
}

void TrainLog::write_csv(std::ostream& out) const {
  std::size_t terms = loss_terms;
  std::size_t sims = sim_columns;
  for (const auto& e : epochs) {
    terms = std::max(terms, e.rank_terms.size());
    sims = std::max(sims, e.mean_sim.size());
  }
  out << "epoch,loss";
  for (std::size_t i = 0; i < terms; ++i) out << ",l" << i + 1;
  for (std::size_t i = 0; i + 1 < sims; ++i) out << ",mean_sim_rank" << i + 1;
  if (sims > 0) out << ",mean_sim_neg";
  out << ",lr\n" << std::setprecision(17);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss;
    for (std::size_t i = 0; i < terms; ++i) out << ',' << (i < e.rank_terms.size() ? e.rank_terms[i] : 0.0);
    for (std::size_t i = 0; i < sims; ++i) out << ',' << (i < e.mean_sim.size() ? e.mean_sim[i] : NAN);
    out << ',' << e.lr << '\n';
  }
}

RankAssignment build_ranked_batch(std::size_t query_class, std::size_t query_superclass, std::size_t self_key,
                                  const PoolLabels& pool, LossVariant variant,
                                  const std::vector<std::vector<std::size_t>>* rank2_classes) {
  const bool instance_only = variant == LossVariant::kInfoNce;
  const bool two_ranks = is_rince(variant) || variant == LossVariant::kTripletRanked;
  RankAssignment out;
  out.positives_by_rank.resize(two_ranks ? 2 : 1);
  out.positives_by_rank[0].push_back(self_key);
  for (std::size_t k = 0; k < pool.label.size(); ++k) {
    if (k == self_key) continue;
    const std::size_t c = pool.label[k];
    if (!instance_only && c == query_class) {
      out.positives_by_rank[0].push_back(k);
      continue;
    }
    if (two_ranks) {
      const bool related = rank2_classes
                               ? std::binary_search((*rank2_classes)[query_class].begin(),
                                                    (*rank2_classes)[query_class].end(), c)
                               : pool.group[k] == query_superclass;
      if (related && c != query_class) {
        out.positives_by_rank[1].push_back(k);
        continue;
      }
    }
    out.negatives.push_back(k);
  }
  return out;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (step > total_steps) throw ConfigError("cosine_lr: step beyond total");
  if (total_steps == 0) return base_lr;
  if (step == total_steps) return 0.0;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

void sgd_step(Network& params, const Gradients& grads, SgdState& opt, double lr, double momentum, double weight_decay) {
  if (grads.parameter_count() != params.parameter_count()) throw ConfigError("sgd_step: gradient shape mismatch");
  std::vector<double> theta = params.flatten();
  const std::vector<double> g = grads.flatten();
  if (opt.velocity.empty()) opt.velocity.assign(theta.size(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(g[i])) throw NumericError("sgd_step: non-finite gradient at parameter " + std::to_string(i));
    opt.velocity[i] = momentum * opt.velocity[i] + g[i] + weight_decay * theta[i];
    theta[i] -= lr * opt.velocity[i];
  }
  params.assign(theta);
}

TrainResult train(const TrainConfig& cfg, const std::vector<LabeledSample>& samples, std::size_t num_classes,
                  const std::vector<Vec64>& class_centers, const BatchObserver& observer) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("train: no samples");
  if (samples.front().x.size() != cfg.mlp.input_dim())
    throw ConfigError("train: samples have dimension " + std::to_string(samples.front().x.size()) +
                      " but encoder input is " + std::to_string(cfg.mlp.input_dim()));
  const SeededRng root(cfg.seed);
  SeededRng init_rng = root.split(Stream::kInit);
  SeededRng aug_rng = root.split(Stream::kAugment);
  SeededRng shuffle_rng = root.split(Stream::kShuffle);
  SeededRng noise_rng = root.split(Stream::kRankNoise);

  TrainResult result;
  result.state = init_encoder(cfg.mlp, cfg.encoder_momentum, init_rng);
  result.log.loss_terms = loss_term_count(cfg.loss);
  result.log.sim_columns = 3;
  EncoderState& state = result.state;

  std::vector<std::vector<std::size_t>> rank2_sets;
  if (cfg.rank_source == RankSource::kNoisy) {
    const std::vector<Vec64> centers = class_centers.empty() ? class_means(samples, num_classes) : class_centers;
    rank2_sets = assign_ranks_noisy(centers, cfg.noisy_threshold, cfg.noisy_sigma, &noise_rng);
  }
  const auto* rank2 = cfg.rank_source == RankSource::kNoisy ? &rank2_sets : nullptr;

  MemoryBank bank(cfg.bank_capacity, cfg.mlp.projection_dim);
  Optimizer opt;
  const std::size_t steps_per_epoch = (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
  opt.total_steps = steps_per_epoch * cfg.epochs;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochStats stats;
    SimAccumulator sims(result.log.sim_columns);
    const double epoch_lr = cosine_lr(opt.step, opt.total_steps, cfg.base_lr);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t b = end - start;
      std::vector<ForwardResult> queries;
      KeyPool pool = pool_from_bank(bank);
      const std::size_t bank_size = pool.size();
      std::vector<Vec64> batch_keys;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledSample& s = samples[order[i]];
        queries.push_back(forward(state, augment(s.x, cfg.augment_strength, aug_rng), false));
        Vec64 key = normalized(forward(state, augment(s.x, cfg.augment_strength, aug_rng), true).projection);
        pool.add(key, s.class_id, s.superclass_id);
        batch_keys.push_back(std::move(key));
      }
      Gradients grads = state.online.zeros_like();
      const double scale = 1.0 / static_cast<double>(b);
      for (std::size_t qi = 0; qi < b; ++qi) {
        const LabeledSample& s = samples[order[start + qi]];
        const std::size_t self_key = bank_size + qi;
        RankAssignment sets = build_ranked_batch(s.class_id, s.superclass_id, self_key, pool.labels, cfg.loss.variant, rank2);
        if (!cfg.in_batch_keys) {
          auto drop = [&](std::vector<std::size_t>& v) {
            std::erase_if(v, [&](std::size_t k) { return k >= bank_size && k != self_key; });
          };
          for (auto& r : sets.positives_by_rank) drop(r);
          drop(sets.negatives);
        }
        if (observer) observer(opt.step, order[start + qi], sets);
        // Ground-truth similarity statistics, excluding the query's own view.
        const Vec64 qn = normalized(queries[qi].projection);
        const std::vector<double> scores = pool_scores(qn, pool);
        for (std::size_t k = 0; k < pool.size(); ++k) {
          if (k == self_key) continue;
          const std::size_t slot = pool.labels.label[k] == s.class_id ? 0 : (pool.labels.group[k] == s.superclass_id ? 1 : 2);
          sims.add(slot, scores[k]);
        }
        const std::vector<bool> present = presence(sets);
        const std::size_t ranks = sets.positives_by_rank.size();
        Vec64 grad_proj(cfg.mlp.projection_dim, 0.0);
        const LossResult r = score_query(queries[qi].projection, qn, scores, pool, std::move(sets), cfg.loss, scale, grad_proj);
        stats.add(r, ranks, present);
        backward_tape(state, queries[qi].tape, grad_proj, grads);
      }
      finish_step(cfg, state, grads, opt, epoch);
      for (std::size_t qi = 0; qi < b; ++qi) {
        const LabeledSample& s = samples[order[start + qi]];
        bank.enqueue(batch_keys[qi], s.class_id, s.superclass_id);
      }
    }
    result.log.epochs.push_back(close_epoch(epoch, stats, sims, epoch_lr));
  }
  result.cursors = {{"init", init_rng}, {"augment", aug_rng}, {"shuffle", shuffle_rng}, {"rank_noise", noise_rng}};
  return result;
}

TrainResult train_sequences(const TrainConfig& cfg, const SequenceDataset& data,
                            const std::vector<std::size_t>& trajectories) {
  cfg.validate();
  if (trajectories.empty()) throw ConfigError("train_sequences: no trajectories");
  if (data.spec.dim != cfg.mlp.input_dim()) throw ConfigError("train_sequences: encoder input does not match data dim");
  const SequenceSpec& sp = data.spec;
  const SeededRng root(cfg.seed);
  SeededRng init_rng = root.split(Stream::kInit);
  SeededRng aug_rng = root.split(Stream::kAugment);
  SeededRng shuffle_rng = root.split(Stream::kShuffle);

  TrainResult result;
  result.state = init_encoder(cfg.mlp, cfg.encoder_momentum, init_rng);
  result.log.loss_terms = loss_term_count(cfg.loss);
  result.log.sim_columns = 4;
  EncoderState& state = result.state;
  MemoryBank bank(cfg.bank_capacity, cfg.mlp.projection_dim);
  Optimizer opt;
  const std::size_t queries_per_epoch = trajectories.size() * cfg.clips_per_trajectory;
  const std::size_t steps_per_epoch = (queries_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  opt.total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t last_start = sp.length - sp.window;

  struct Item {
    std::size_t traj;
    std::size_t start;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Item> items;
    for (std::size_t t : trajectories)
      for (std::size_t c = 0; c < cfg.clips_per_trajectory; ++c)
        items.push_back({t, static_cast<std::size_t>(shuffle_rng.below(last_start + 1))});
    shuffle_rng.shuffle(std::span<Item>(items));
    EpochStats stats;
    SimAccumulator sims(result.log.sim_columns);
    const double epoch_lr = cosine_lr(opt.step, opt.total_steps, cfg.base_lr);
    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(items.size(), start + cfg.batch_size);
      const std::size_t b = end - start;
      KeyPool pool = pool_from_bank(bank);
      const std::size_t bank_size = pool.size();
      std::vector<ForwardResult> queries;
      for (std::size_t i = start; i < end; ++i) {
        const Item& it = items[i];
        const std::size_t shot = it.start + sp.window <= last_start ? it.start + sp.window : it.start - sp.window;
        std::vector<std::size_t> far;
        for (std::size_t s = 0; s <= last_start; ++s)
          if ((s + sp.min_gap <= it.start) || (s >= it.start + sp.min_gap)) far.push_back(s);
        if (far.empty()) throw ConfigError("sequence too short for min_gap");
        const std::size_t video = far[static_cast<std::size_t>(shuffle_rng.below(far.size()))];
        const Vec64 anchor = clip(data, it.traj, it.start);
        queries.push_back(forward(state, augment(anchor, cfg.augment_strength, aug_rng), false));
        for (std::size_t pos : {it.start, shot, video}) {
          const Vec64 view = augment(clip(data, it.traj, pos), cfg.augment_strength, aug_rng);
          pool.add(normalized(forward(state, view, true).projection), it.traj, pos);
        }
      }
      Gradients grads = state.online.zeros_like();
      const double scale = 1.0 / static_cast<double>(b);
      for (std::size_t qi = 0; qi < b; ++qi) {
        const std::size_t traj = items[start + qi].traj;
        const std::size_t f = bank_size + 3 * qi;
        const std::size_t s = f + 1;
        const std::size_t v = f + 2;
        RankAssignment sets;
        switch (cfg.sequence_mode) {
          case SequenceMode::kRanked: sets.positives_by_rank = {{f}, {s}, {v}}; break;
          case SequenceMode::kFrameOnly: sets.positives_by_rank = {{f}}; break;
          case SequenceMode::kHardPositive: sets.positives_by_rank = {{f, s, v}}; break;
          case SequenceMode::kEasyPositive: sets.positives_by_rank = {{f, s}}; break;
          case SequenceMode::kHardNegative:
            sets.positives_by_rank = {{f, s}};
            sets.negatives.push_back(v);
            break;
        }
        for (std::size_t k = 0; k < pool.size(); ++k) {
          if (pool.labels.label[k] == traj) continue;
          if (!cfg.in_batch_keys && k >= bank_size) continue;
          sets.negatives.push_back(k);
        }
        const Vec64 qn = normalized(queries[qi].projection);
        const std::vector<double> scores = pool_scores(qn, pool);
        sims.add(0, scores[f]);
        sims.add(1, scores[s]);
        sims.add(2, scores[v]);
        for (std::size_t k = 0; k < pool.size(); ++k)
          if (pool.labels.label[k] != traj) sims.add(3, scores[k]);
        const std::vector<bool> present = presence(sets);
        const std::size_t ranks = sets.positives_by_rank.size();
        Vec64 grad_proj(cfg.mlp.projection_dim, 0.0);
        const LossResult r = score_query(queries[qi].projection, qn, scores, pool, std::move(sets), cfg.loss, scale, grad_proj);
        stats.add(r, ranks, present);
        backward_tape(state, queries[qi].tape, grad_proj, grads);
      }
      finish_step(cfg, state, grads, opt, epoch);
      for (std::size_t qi = 0; qi < b; ++qi) {
        const std::size_t f = bank_size + 3 * qi;
        bank.enqueue(pool.key(f), pool.labels.label[f], pool.labels.group[f]);
      }
    }
    result.log.epochs.push_back(close_epoch(epoch, stats, sims, epoch_lr));
  }
  result.cursors = {{"init", init_rng}, {"augment", aug_rng}, {"shuffle", shuffle_rng}};
  return result;
}

std::vector<Vec64> embed(const EncoderState& state, const std::vector<Vec64>& inputs, bool projection) {
  std::vector<Vec64> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    ForwardResult r = forward(state, x, false);
    out.push_back(projection ? std::move(r.projection) : std::move(r.feature));
  }
  return out;
}

}  // namespace rince
