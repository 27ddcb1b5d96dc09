#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rince/numeric.hpp"
#include "rince/rng.hpp"

namespace rince {

/// Encoder f: widths {input, hidden..., feature}, ReLU after every layer.
/// Head g: feature -> head_hidden (ReLU) -> projection_dim (linear).
struct MlpSpec {
  std::vector<std::size_t> encoder_widths{16, 64, 32};
  std::size_t head_hidden = 32;
  std::size_t projection_dim = 8;

  std::size_t input_dim() const { return encoder_widths.front(); }
  std::size_t feature_dim() const { return encoder_widths.back(); }
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Mat64 weight;  ///< out × in
  Vec64 bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameters of f followed by g. Also used as the gradient container.
struct Network {
  std::vector<DenseLayer> layers;
  std::size_t encoder_layers = 0;  ///< layers[0, encoder_layers) form f

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  Network zeros_like() const;

  friend bool operator==(const Network&, const Network&) = default;
};

using Gradients = Network;

struct EncoderState {
  MlpSpec spec;
  Network online;
  Network momentum;  ///< key encoder; never receives gradients
  double momentum_coeff = 0.99;

  friend bool operator==(const EncoderState&, const EncoderState&) = default;
};

/// Kaiming-uniform weights (bound √(6/fan_in)) and U(±1/√fan_in) biases from
/// the given stream; the momentum copy starts identical to the online weights.
EncoderState init_encoder(const MlpSpec& spec, double momentum_coeff, SeededRng& init_rng);

/// Per-layer inputs and pre-activations of one forward pass.
struct ForwardTape {
  std::vector<Vec64> inputs;
  std::vector<Vec64> pre_activations;
  bool from_momentum = false;
  bool consumed = false;
};

struct ForwardResult {
  Vec64 feature;     ///< f(x), pre-head; used for evaluation
  Vec64 projection;  ///< g(f(x))
  ForwardTape tape;
};

ForwardResult forward(const EncoderState& state, std::span<const double> x, bool use_momentum = false);

/// cos(g(f(x)), g(f(y))); y optionally through the momentum encoder.
double critic(const EncoderState& state, std::span<const double> x, std::span<const double> y,
              bool y_from_momentum = false);

/// ∂cos(a, b)/∂a scaled by grad_s, added into grad_a.
void add_cosine_grad(std::span<const double> a, std::span<const double> b, double grad_s, std::span<double> grad_a);

/// Back-propagates dL/d(projection) (and optionally dL/d(feature)) through one
/// tape, accumulating parameter gradients. Marks the tape consumed.
void backward_tape(const EncoderState& state, ForwardTape& tape, std::span<const double> grad_projection,
                   Gradients& grads, std::span<const double> grad_feature = {});

/// One scored pair h(query, key). The key is either another tape (gradient
/// flows through both sides) or a fixed vector (stop-gradient key).
struct ScoredPair {
  std::size_t query_tape = 0;
  std::optional<std::size_t> key_tape;
  Vec64 fixed_key;
};

/// Exact ∂L/∂θ of the online network given ∂L/∂h for every scored pair.
/// `projections[i]` must be the projection recorded alongside tapes[i].
Gradients backward(const EncoderState& state, std::span<ForwardTape> tapes, std::span<const Vec64> projections,
                   std::span<const ScoredPair> pairs, std::span<const double> score_grads);

/// θ̃ ← m·θ̃ + (1 − m)·θ.
void momentum_update(EncoderState& state, double m);

/// Named RNG cursors persisted alongside the weights.
using RngCursors = std::map<std::string, SeededRng>;

nlohmann::json encoder_to_json(const EncoderState& state, const RngCursors& cursors = {});
EncoderState encoder_from_json(const nlohmann::json& j, RngCursors* cursors = nullptr);

}  // namespace rince
