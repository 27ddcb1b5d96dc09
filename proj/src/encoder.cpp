#include "rince/encoder.hpp"

#include <cmath>

namespace rince {
namespace {

constexpr int kCheckpointVersion = 1;

DenseLayer make_layer(std::size_t in, std::size_t out, SeededRng& rng) {
  DenseLayer l{Mat64(out, in), Vec64(out)};
  const double fan_in = static_cast<double>(in);
  const double w_bound = std::sqrt(6.0 / fan_in);
  const double b_bound = 1.0 / std::sqrt(fan_in);
  for (double& w : l.weight.values()) w = rng.uniform(-w_bound, w_bound);
  for (double& b : l.bias) b = rng.uniform(-b_bound, b_bound);
  return l;
}

bool layer_has_relu(const Network& net, std::size_t i) {
  // Every encoder layer and the head's hidden layer; the projection is linear.
  return i + 1 < net.layers.size();
}

}  // namespace

void MlpSpec::validate() const {
  if (encoder_widths.size() < 3) throw ConfigError("encoder_widths needs input, at least one hidden and an output width");
  for (std::size_t w : encoder_widths)
    if (w == 0) throw ConfigError("encoder_widths entries must be positive");
  if (head_hidden == 0) throw ConfigError("head_hidden must be positive");
  if (projection_dim == 0) throw ConfigError("projection_dim must be positive");
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.values().size() + l.bias.size();
  return n;
}

std::vector<double> Network::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Network::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ConfigError("parameter vector length does not match network");
  std::size_t k = 0;
  for (auto& l : layers) {
    for (double& w : l.weight.values()) w = flat[k++];
    for (double& b : l.bias) b = flat[k++];
  }
}

Network Network::zeros_like() const {
  Network z;
  z.encoder_layers = encoder_layers;
  for (const auto& l : layers) z.layers.push_back({Mat64(l.weight.rows(), l.weight.cols()), Vec64(l.bias.size(), 0.0)});
  return z;
}

EncoderState init_encoder(const MlpSpec& spec, double momentum_coeff, SeededRng& init_rng) {
  spec.validate();
  if (!(momentum_coeff >= 0.0 && momentum_coeff <= 1.0)) throw ConfigError("momentum coefficient must lie in [0, 1]");
  EncoderState s;
  s.spec = spec;
  s.momentum_coeff = momentum_coeff;
  for (std::size_t i = 0; i + 1 < spec.encoder_widths.size(); ++i)
    s.online.layers.push_back(make_layer(spec.encoder_widths[i], spec.encoder_widths[i + 1], init_rng));
  s.online.encoder_layers = s.online.layers.size();
  s.online.layers.push_back(make_layer(spec.feature_dim(), spec.head_hidden, init_rng));
  s.online.layers.push_back(make_layer(spec.head_hidden, spec.projection_dim, init_rng));
  s.momentum = s.online;
  return s;
}

ForwardResult forward(const EncoderState& state, std::span<const double> x, bool use_momentum) {
  const Network& net = use_momentum ? state.momentum : state.online;
  if (x.size() != state.spec.input_dim())
    throw ConfigError("forward: input has " + std::to_string(x.size()) + " entries, encoder expects " +
                      std::to_string(state.spec.input_dim()));
  ForwardResult r;
  r.tape.from_momentum = use_momentum;
  Vec64 a(x.begin(), x.end());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const DenseLayer& l = net.layers[li];
    Vec64 z = l.bias;
    for (std::size_t o = 0; o < l.weight.rows(); ++o) {
      const auto row = l.weight.row(o);
      double s = 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * a[i];
      z[o] += s;
    }
    r.tape.inputs.push_back(std::move(a));
    a = z;
    if (layer_has_relu(net, li))
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    r.tape.pre_activations.push_back(std::move(z));
    if (li + 1 == net.encoder_layers) r.feature = a;
  }
  r.projection = std::move(a);
  return r;
}

double critic(const EncoderState& state, std::span<const double> x, std::span<const double> y, bool y_from_momentum) {
  const ForwardResult fx = forward(state, x, false);
  const ForwardResult fy = forward(state, y, y_from_momentum);
  return cosine_similarity(fx.projection, fy.projection);
}

void add_cosine_grad(std::span<const double> a, std::span<const double> b, double grad_s, std::span<double> grad_a) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("degenerate embedding");
  const double s = dot(a, b) / (na * nb);
  // ∂s/∂a = b/(|a||b|) − s·a/|a|²
  const double cb = grad_s / (na * nb);
  const double ca = grad_s * s / (na * na);
  for (std::size_t i = 0; i < a.size(); ++i) grad_a[i] += cb * b[i] - ca * a[i];
}

void backward_tape(const EncoderState& state, ForwardTape& tape, std::span<const double> grad_projection,
                   Gradients& grads, std::span<const double> grad_feature) {
  if (tape.consumed) throw ConfigError("forward tape already consumed by a backward pass");
  if (tape.from_momentum) throw ConfigError("momentum encoder does not receive gradients");
  tape.consumed = true;
  const Network& net = state.online;
  if (grad_projection.size() != state.spec.projection_dim) throw ConfigError("backward: projection gradient size");
  Vec64 delta(grad_projection.begin(), grad_projection.end());
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& l = net.layers[li];
    DenseLayer& g = grads.layers[li];
    if (li + 1 == net.encoder_layers && !grad_feature.empty()) {
      if (grad_feature.size() != delta.size()) throw ConfigError("backward: feature gradient size");
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += grad_feature[i];
    }
    if (layer_has_relu(net, li)) {
      const Vec64& z = tape.pre_activations[li];
      for (std::size_t o = 0; o < delta.size(); ++o)
        if (!(z[o] > 0.0)) delta[o] = 0.0;
    }
    const Vec64& in = tape.inputs[li];
    Vec64 next(in.size(), 0.0);
    for (std::size_t o = 0; o < l.weight.rows(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      g.bias[o] += d;
      auto grow = g.weight.row(o);
      const auto wrow = l.weight.row(o);
      for (std::size_t i = 0; i < in.size(); ++i) {
        grow[i] += d * in[i];
        next[i] += d * wrow[i];
      }
    }
    delta = std::move(next);
  }
}

Gradients backward(const EncoderState& state, std::span<ForwardTape> tapes, std::span<const Vec64> projections,
                   std::span<const ScoredPair> pairs, std::span<const double> score_grads) {
  if (pairs.size() != score_grads.size()) throw ConfigError("backward: one score gradient per pair required");
  if (projections.size() != tapes.size()) throw ConfigError("backward: one projection per tape required");
  std::vector<Vec64> grad_proj(tapes.size(), Vec64(state.spec.projection_dim, 0.0));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const ScoredPair& p = pairs[k];
    if (p.query_tape >= tapes.size()) throw ConfigError("backward: pair refers to a missing tape");
    const Vec64& q = projections[p.query_tape];
    if (p.key_tape) {
      if (*p.key_tape >= tapes.size()) throw ConfigError("backward: pair refers to a missing tape");
      const Vec64& key = projections[*p.key_tape];
      add_cosine_grad(q, key, score_grads[k], grad_proj[p.query_tape]);
      add_cosine_grad(key, q, score_grads[k], grad_proj[*p.key_tape]);
    } else {
      add_cosine_grad(q, p.fixed_key, score_grads[k], grad_proj[p.query_tape]);
    }
  }
  Gradients grads = state.online.zeros_like();
  for (std::size_t t = 0; t < tapes.size(); ++t) {
    if (tapes[t].from_momentum) continue;
    backward_tape(state, tapes[t], grad_proj[t], grads);
  }
  return grads;
}

void momentum_update(EncoderState& state, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: m must lie in [0, 1]");
  for (std::size_t li = 0; li < state.online.layers.size(); ++li) {
    auto& tw = state.momentum.layers[li].weight.values();
    const auto& w = state.online.layers[li].weight.values();
    for (std::size_t i = 0; i < w.size(); ++i) tw[i] = m * tw[i] + (1.0 - m) * w[i];
    auto& tb = state.momentum.layers[li].bias;
    const auto& b = state.online.layers[li].bias;
    for (std::size_t i = 0; i < b.size(); ++i) tb[i] = m * tb[i] + (1.0 - m) * b[i];
  }
}

nlohmann::json encoder_to_json(const EncoderState& state, const RngCursors& cursors) {
  nlohmann::json j;
  j["format"] = "rince-lab-checkpoint";
  j["version"] = kCheckpointVersion;
  j["spec"] = {{"encoder_widths", state.spec.encoder_widths},
               {"head_hidden", state.spec.head_hidden},
               {"projection_dim", state.spec.projection_dim}};
  j["momentum_coeff"] = state.momentum_coeff;
  j["online"] = state.online.flatten();
  j["momentum"] = state.momentum.flatten();
  nlohmann::json rng = nlohmann::json::object();
  for (const auto& [name, r] : cursors) rng[name] = {{"seed", r.seed()}, {"key", r.key()}, {"counter", r.counter()}};
  j["rng"] = rng;
  return j;
}

EncoderState encoder_from_json(const nlohmann::json& j, RngCursors* cursors) {
  try {
    if (j.at("format") != "rince-lab-checkpoint") throw ConfigError("checkpoint: unknown format");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
    MlpSpec spec;
    spec.encoder_widths = j.at("spec").at("encoder_widths").get<std::vector<std::size_t>>();
    spec.head_hidden = j.at("spec").at("head_hidden").get<std::size_t>();
    spec.projection_dim = j.at("spec").at("projection_dim").get<std::size_t>();
    SeededRng dummy(0);
    EncoderState s = init_encoder(spec, j.at("momentum_coeff").get<double>(), dummy);
    s.online.assign(j.at("online").get<std::vector<double>>());
    s.momentum.assign(j.at("momentum").get<std::vector<double>>());
    if (cursors != nullptr) {
      cursors->clear();
      for (const auto& [name, c] : j.at("rng").items())
        cursors->emplace(name, SeededRng::from_cursor(c.at("seed").get<std::uint64_t>(), c.at("key").get<std::uint64_t>(),
                                                      c.at("counter").get<std::uint64_t>()));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace rince
