#include "flow/nn/mlp.hpp"

#include <cmath>

namespace flow::nn {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "' (want relu|sigmoid|identity)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Mlp Mlp::init(const std::vector<int>& widths, Activation act, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  Mlp m;
  m.widths = widths;
  m.activation = act;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l], fan_out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& x : w.v) x = rng.uniform(-bound, bound);
    Tensor b = Tensor::zeros({fan_out});
    for (double& x : b.v) x = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

MlpNodes register_mlp(Graph& g, const Mlp& mlp, bool requires_grad) {
  MlpNodes n;
  for (size_t l = 0; l < mlp.n_layers(); ++l) {
    n.w.push_back(g.leaf(mlp.weights[l], requires_grad));
    n.b.push_back(g.leaf(mlp.biases[l], requires_grad));
  }
  return n;
}

Graph::NodeId mlp_forward(Graph& g, const Mlp& mlp, const MlpNodes& nodes, Graph::NodeId x) {
  Graph::NodeId h = x;
  for (size_t l = 0; l < mlp.n_layers(); ++l) {
    h = g.add_rowvec(g.matmul(h, nodes.w[l]), nodes.b[l]);
    if (l + 1 < mlp.n_layers()) {
      switch (mlp.activation) {
        case Activation::ReLU: h = g.relu(h); break;
        case Activation::Sigmoid: h = g.sigmoid(h); break;
        case Activation::Identity: break;
      }
    }
  }
  return h;
}

Tensor mlp_eval(const Mlp& mlp, const Tensor& x) {
  Graph g;
  Graph::NodeId in = g.leaf(x, false);
  MlpNodes nodes = register_mlp(g, mlp, false);
  return g.value(mlp_forward(g, mlp, nodes, in));
}

}  // namespace flow::nn
