#pragma once

#include <optional>

#include "flow/core/types.hpp"
#include "flow/nn/graph.hpp"

namespace flow {

enum class WeightScheme { Uniform, Semantic, SpeedInterp };

WeightScheme weight_scheme_from_string(const std::string& s);
std::string to_string(WeightScheme s);

// Speed-interpolated weight for a speed in m/s: 0.1 below 0.4, 1.0 above
// 1.0, otherwise 1.8*s - 0.8 clamped to [0.1, 1.0].
double speed_interp_weight(double speed_mps);

// Per-point loss weight. Semantic needs the class label; SpeedInterp needs
// the label flow vector and dt.
double point_weight(WeightScheme scheme, std::optional<PointClass> cls,
                    const Point3& label_vector, double dt);

std::vector<double> point_weights(WeightScheme scheme, const std::vector<PointClass>* classes,
                                  const FlowField& label, double dt);

// Mean weighted unsquared L2 residual norm.
double student_loss(const FlowField& pred, const FlowField& label,
                    const std::vector<double>& weights);

// Graph form over a [N,3] prediction node.
nn::Graph::NodeId student_loss_node(nn::Graph& g, nn::Graph::NodeId pred, const FlowField& label,
                                    const std::vector<double>& weights);

}  // namespace flow
