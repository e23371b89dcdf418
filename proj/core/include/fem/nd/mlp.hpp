#pragma once

#include <span>
#include <vector>

#include "fem/nd/rng.hpp"
#include "fem/nd/tape.hpp"

namespace fem::nd {

/// One dense layer: y = x W + b  with W [in x out], b [1 x out].
struct LinearLayer {
  Mat w;
  Mat b;

  LinearLayer() = default;
  LinearLayer(int in, int out) : w(in, out), b(1, out) {}

  static LinearLayer glorot(int in, int out, Rng& rng) {
    LinearLayer l(in, out);
    const double scale = std::sqrt(2.0 / (in + out));
    for (double& x : l.w.v) x = scale * rng.normal();
    return l;
  }
};

/// Tape handles for one layer's parameters.
struct LayerVars {
  Tensor w;
  Tensor b;
};

inline LayerVars layer_on(Tape& tape, const LinearLayer& layer, bool trainable) {
  if (trainable) return {tape.leaf(layer.w), tape.leaf(layer.b)};
  return {tape.constant(layer.w), tape.constant(layer.b)};
}

/// Dense stack with GELU between layers and a linear head. Input is a batch
/// [B x in]; the head width decides the output, usually [B x 1].
inline Tensor forward_mlp(std::span<const LayerVars> layers, Tensor x) {
  if (layers.empty()) throw NdError("forward_mlp: no layers");
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    Tensor z = add(matmul(h, layers[i].w), repeat_rows(layers[i].b, h.rows()));
    h = i + 1 < layers.size() ? gelu(z) : z;
  }
  return h;
}

}  // namespace fem::nd
