#pragma once

#include <string>

#include "flow/core/rng.hpp"
#include "flow/nn/graph.hpp"

namespace flow::nn {

enum class Activation { ReLU, Sigmoid, Identity };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Fully connected stack; the hidden activation sits between layers only, so
// the final layer output is always linear.
struct Mlp {
  std::vector<Tensor> weights;  // [in,out] each
  std::vector<Tensor> biases;   // [out] each
  Activation activation = Activation::ReLU;
  std::vector<int> widths;

  // Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
  static Mlp init(const std::vector<int>& widths, Activation act, Rng& rng);

  size_t n_layers() const { return weights.size(); }
};

// Leaf ids for one registration of the parameters into a graph.
struct MlpNodes {
  std::vector<Graph::NodeId> w;
  std::vector<Graph::NodeId> b;
};

MlpNodes register_mlp(Graph& g, const Mlp& mlp, bool requires_grad = true);
Graph::NodeId mlp_forward(Graph& g, const Mlp& mlp, const MlpNodes& nodes, Graph::NodeId x);

// Convenience for inference-style evaluation.
Tensor mlp_eval(const Mlp& mlp, const Tensor& x);

}  // namespace flow::nn
