// SPDX-License-Identifier: Apache-2.0
//
// Small fully-connected network on the autodiff tape. Hidden layers apply
// affine -> (layer norm) -> activation -> (dropout); the head is affine.

#pragma once

#include <string>
#include <vector>

#include "ivdfm/autodiff.hpp"
#include "ivdfm/common.hpp"
#include "ivdfm/tensor.hpp"

namespace ivdfm {

enum class Activation { Relu, Tanh };

struct Mlp {
  struct Layer {
    Param weight;  // {in, out}
    Param bias;    // {1, out}
    Param norm_gain;  // {1, out}, used only when layer_norm
    Param norm_bias;
  };

  std::vector<Layer> hidden;
  Param head_weight;  // {last_hidden, out}
  Param head_bias;    // {1, out}
  Activation activation = Activation::Relu;
  bool layer_norm = false;

  // Xavier-uniform init, biases zero, norm gain one.
  void init(const std::string& name, std::size_t in_dim, const std::vector<std::size_t>& widths,
            std::size_t out_dim, Rng& rng, Activation act = Activation::Relu,
            bool with_layer_norm = false);

  // x: {batch, in}. dropout_masks, when given, holds one mask per hidden layer
  // ({batch, width}, entries 0 or 1/keep) drawn outside the graph.
  Value forward(Tape& tape, Value x, const std::vector<Tensor>* dropout_masks = nullptr) const;

  std::size_t in_dim() const { return hidden.empty() ? head_weight.value.rows() : hidden[0].weight.value.rows(); }
  std::size_t out_dim() const { return head_weight.value.cols(); }
  std::vector<std::size_t> hidden_widths() const;

  void collect_params(std::vector<Param*>& out);
};

// Dropout masks for one Mlp: one {batch, width} tensor per hidden layer.
std::vector<Tensor> draw_dropout_masks(const Mlp& net, std::size_t batch, double rate, Rng& rng);

}  // namespace ivdfm
