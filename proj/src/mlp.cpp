// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/mlp.hpp"

#include <cmath>

namespace ivdfm {

namespace {
Tensor xavier_uniform(std::size_t in, std::size_t out, Rng& rng) {
  Tensor w({in, out});
  double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& x : w.values()) x = rng.uniform(-limit, limit);
  return w;
}
}  // namespace

void Mlp::init(const std::string& name, std::size_t in_dim, const std::vector<std::size_t>& widths,
               std::size_t out_dim, Rng& rng, Activation act, bool with_layer_norm) {
  activation = act;
  layer_norm = with_layer_norm;
  hidden.clear();
  std::size_t prev = in_dim;
  for (std::size_t li = 0; li < widths.size(); ++li) {
    Layer layer;
    std::string base = cat(name, ".h", li);
    layer.weight = Param{base + ".w", xavier_uniform(prev, widths[li], rng)};
    layer.bias = Param{base + ".b", Tensor::zeros({1, widths[li]})};
    layer.norm_gain = Param{base + ".ln_g", Tensor::full({1, widths[li]}, 1.0)};
    layer.norm_bias = Param{base + ".ln_b", Tensor::zeros({1, widths[li]})};
    hidden.push_back(std::move(layer));
    prev = widths[li];
  }
  head_weight = Param{name + ".head.w", xavier_uniform(prev, out_dim, rng)};
  head_bias = Param{name + ".head.b", Tensor::zeros({1, out_dim})};
}

Value Mlp::forward(Tape& tape, Value x, const std::vector<Tensor>* dropout_masks) const {
  Value h = x;
  for (std::size_t li = 0; li < hidden.size(); ++li) {
    const Layer& layer = hidden[li];
    // Params are mutable for the optimizer; the tape binds them by reference.
    h = tape.add_rowvec(tape.matmul(h, tape.leaf(const_cast<Param&>(layer.weight))),
                        tape.leaf(const_cast<Param&>(layer.bias)));
    if (layer_norm) {
      h = tape.layer_norm_rows(h);
      h = tape.add_rowvec(tape.mul_rowvec(h, tape.leaf(const_cast<Param&>(layer.norm_gain))),
                          tape.leaf(const_cast<Param&>(layer.norm_bias)));
    }
    h = activation == Activation::Relu ? tape.relu(h) : tape.tanh_(h);
    if (dropout_masks != nullptr && li < dropout_masks->size() && !(*dropout_masks)[li].empty()) {
      h = tape.dropout_mask(h, (*dropout_masks)[li]);
    }
  }
  return tape.add_rowvec(tape.matmul(h, tape.leaf(const_cast<Param&>(head_weight))),
                         tape.leaf(const_cast<Param&>(head_bias)));
}

std::vector<std::size_t> Mlp::hidden_widths() const {
  std::vector<std::size_t> w;
  for (const Layer& l : hidden) w.push_back(l.weight.value.cols());
  return w;
}

void Mlp::collect_params(std::vector<Param*>& out) {
  for (Layer& l : hidden) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
    if (layer_norm) {
      out.push_back(&l.norm_gain);
      out.push_back(&l.norm_bias);
    }
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
}

std::vector<Tensor> draw_dropout_masks(const Mlp& net, std::size_t batch, double rate, Rng& rng) {
  std::vector<Tensor> masks;
  double keep = 1.0 - rate;
  for (std::size_t w : net.hidden_widths()) {
    Tensor m({batch, w});
    for (double& x : m.values()) x = rng.uniform() < keep ? 1.0 / keep : 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

}  // namespace ivdfm
