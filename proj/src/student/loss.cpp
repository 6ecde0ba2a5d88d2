#include "flow/student/loss.hpp"

#include <cmath>

namespace flow {

WeightScheme weight_scheme_from_string(const std::string& s) {
  if (s == "uniform") return WeightScheme::Uniform;
  if (s == "semantic") return WeightScheme::Semantic;
  if (s == "speed") return WeightScheme::SpeedInterp;
  throw std::invalid_argument("unknown weight scheme '" + s + "' (want uniform|semantic|speed)");
}

std::string to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::Uniform: return "uniform";
    case WeightScheme::Semantic: return "semantic";
    case WeightScheme::SpeedInterp: return "speed";
  }
  return "?";
}

double speed_interp_weight(double speed_mps) {
  if (speed_mps < 0.4) return 0.1;
  if (speed_mps > 1.0) return 1.0;
  // Interpolation clamped to [0.1, 1.0]; keeps the formula and its stated
  // endpoints consistent at both edges.
  const double w = 1.8 * speed_mps - 0.8;
  return w < 0.1 ? 0.1 : (w > 1.0 ? 1.0 : w);
}

double point_weight(WeightScheme scheme, std::optional<PointClass> cls,
                    const Point3& label_vector, double dt) {
  switch (scheme) {
    case WeightScheme::Uniform:
      return 1.0;
    case WeightScheme::Semantic:
      if (!cls) throw std::invalid_argument("point_weight: Semantic scheme needs class labels");
      return *cls == PointClass::Foreground ? 1.0 : 0.1;
    case WeightScheme::SpeedInterp:
      if (dt <= 0.0) throw std::invalid_argument("point_weight: SpeedInterp needs dt > 0");
      return speed_interp_weight(label_vector.norm() / dt);
  }
  throw std::logic_error("point_weight: bad scheme");
}

std::vector<double> point_weights(WeightScheme scheme, const std::vector<PointClass>* classes,
                                  const FlowField& label, double dt) {
  if (scheme == WeightScheme::Semantic && classes == nullptr)
    throw std::invalid_argument("point_weights: Semantic scheme needs class labels");
  if (classes && classes->size() != label.size())
    throw std::invalid_argument("point_weights: classes length mismatch");
  std::vector<double> w(label.size());
  for (size_t i = 0; i < label.size(); ++i) {
    std::optional<PointClass> cls;
    if (classes) cls = (*classes)[i];
    w[i] = point_weight(scheme, cls, label.vectors[i], dt);
  }
  return w;
}

double student_loss(const FlowField& pred, const FlowField& label,
                    const std::vector<double>& weights) {
  if (pred.size() != label.size() || pred.size() != weights.size())
    throw std::invalid_argument("student_loss: length mismatch");
  if (pred.size() == 0) throw std::invalid_argument("student_loss: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i)
    acc += weights[i] * (pred.vectors[i] - label.vectors[i]).norm();
  return acc / static_cast<double>(pred.size());
}

nn::Graph::NodeId student_loss_node(nn::Graph& g, nn::Graph::NodeId pred, const FlowField& label,
                                    const std::vector<double>& weights) {
  const nn::Tensor& tp = g.value(pred);
  if (tp.shape.size() != 2 || tp.cols() != 3)
    throw std::invalid_argument("student_loss_node: pred must be [N,3]");
  const int n = tp.rows();
  if (static_cast<size_t>(n) != label.size() || static_cast<size_t>(n) != weights.size())
    throw std::invalid_argument("student_loss_node: length mismatch");

  nn::Tensor label_t = nn::Tensor::zeros({n, 3});
  for (int i = 0; i < n; ++i) {
    label_t.v[static_cast<size_t>(i) * 3 + 0] = label.vectors[static_cast<size_t>(i)].x;
    label_t.v[static_cast<size_t>(i) * 3 + 1] = label.vectors[static_cast<size_t>(i)].y;
    label_t.v[static_cast<size_t>(i) * 3 + 2] = label.vectors[static_cast<size_t>(i)].z;
  }
  nn::Tensor w_t({n, 1}, std::vector<double>(weights));
  nn::Tensor ones = nn::Tensor::zeros({3, 1});
  ones.v = {1.0, 1.0, 1.0};

  auto resid = g.sub(pred, g.leaf(std::move(label_t), false));
  auto sq_norms = g.matmul(g.square(resid), g.leaf(std::move(ones), false));  // [N,1]
  auto norms = g.sqrt_op(sq_norms);
  return g.reduce_mean(g.mul(norms, g.leaf(std::move(w_t), false)));
}

}  // namespace flow
