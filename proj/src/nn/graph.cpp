#include "flow/nn/graph.hpp"

#include <cmath>

#include "flow/nn/kernels.hpp"

namespace flow::nn {

namespace {
void axpy(std::vector<double>& dst, const std::vector<double>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
}  // namespace

Graph::NodeId Graph::emit(Tensor value, bool requires_grad,
                          std::function<void(Graph&, const Tensor& gout)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

bool Graph::any_requires(const std::vector<NodeId>& ids) const {
  for (NodeId id : ids)
    if (requires_grad(id)) return true;
  return false;
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_.at(static_cast<size_t>(id));
  if (n.grad.v.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Graph::grad(NodeId id) { return grad_buffer(id); }

void Graph::backward(NodeId loss) {
  const Node& ln = nodes_.at(static_cast<size_t>(loss));
  if (!ln.value.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got " + ln.value.shape_str());
  grad_buffer(loss).v[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.backprop || n.grad.v.empty()) continue;
    n.backprop(*this, n.grad);
  }
}

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
  return emit(std::move(value), requires_grad, {});
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  axpy(out.v, tb.v);
  return emit(std::move(out), any_requires({a, b}), [a, b](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a)) axpy(g.grad_buffer(a).v, gout.v);
    if (g.requires_grad(b)) axpy(g.grad_buffer(b).v, gout.v);
  });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= tb.v[i];
  return emit(std::move(out), any_requires({a, b}), [a, b](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a)) axpy(g.grad_buffer(a).v, gout.v);
    if (g.requires_grad(b)) {
      auto& gb = g.grad_buffer(b).v;
      for (size_t i = 0; i < gb.size(); ++i) gb[i] -= gout.v[i];
    }
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= tb.v[i];
  return emit(std::move(out), any_requires({a, b}), [a, b](Graph& g, const Tensor& gout) {
    const auto& va = g.value(a).v;
    const auto& vb = g.value(b).v;
    if (g.requires_grad(a)) {
      auto& ga = g.grad_buffer(a).v;
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += gout.v[i] * vb[i];
    }
    if (g.requires_grad(b)) {
      auto& gb = g.grad_buffer(b).v;
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += gout.v[i] * va[i];
    }
  });
}

Graph::NodeId Graph::scale(NodeId a, double s) {
  Tensor out = value(a);
  for (double& x : out.v) x *= s;
  return emit(std::move(out), requires_grad(a), [a, s](Graph& g, const Tensor& gout) {
    auto& ga = g.grad_buffer(a).v;
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += s * gout.v[i];
  });
}

Graph::NodeId Graph::add_rowvec(NodeId a, NodeId row) {
  const Tensor& ta = value(a);
  const Tensor& tr = value(row);
  if (ta.shape.size() != 2 || tr.shape.size() != 1 || tr.dim(0) != ta.cols())
    throw std::invalid_argument("add_rowvec: want [N,C] + [C], got " + ta.shape_str() + " + " +
                                tr.shape_str());
  Tensor out = ta;
  const int n = ta.rows(), c = ta.cols();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.v[static_cast<size_t>(i) * c + j] += tr.v[j];
  return emit(std::move(out), any_requires({a, row}), [a, row, n, c](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a)) axpy(g.grad_buffer(a).v, gout.v);
    if (g.requires_grad(row)) {
      auto& gr = g.grad_buffer(row).v;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) gr[j] += gout.v[static_cast<size_t>(i) * c + j];
    }
  });
}

Graph::NodeId Graph::add_chanvec(NodeId a, NodeId chan) {
  const Tensor& ta = value(a);
  const Tensor& tc = value(chan);
  if (ta.shape.size() != 3 || tc.shape.size() != 1 || tc.dim(0) != ta.dim(0))
    throw std::invalid_argument("add_chanvec: want [C,H,W] + [C], got " + ta.shape_str() + " + " +
                                tc.shape_str());
  Tensor out = ta;
  const int c = ta.dim(0);
  const size_t plane = static_cast<size_t>(ta.dim(1)) * ta.dim(2);
  for (int ci = 0; ci < c; ++ci)
    for (size_t i = 0; i < plane; ++i) out.v[ci * plane + i] += tc.v[ci];
  return emit(std::move(out), any_requires({a, chan}),
              [a, chan, c, plane](Graph& g, const Tensor& gout) {
                if (g.requires_grad(a)) axpy(g.grad_buffer(a).v, gout.v);
                if (g.requires_grad(chan)) {
                  auto& gc = g.grad_buffer(chan).v;
                  for (int ci = 0; ci < c; ++ci) {
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i) acc += gout.v[ci * plane + i];
                    gc[ci] += acc;
                  }
                }
              });
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + ta.shape_str() + " x " +
                                tb.shape_str());
  const int m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(out.v.data(), ta.v.data(), tb.v.data(), m, k, n);
  return emit(std::move(out), any_requires({a, b}), [a, b, m, k, n](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a))
      kernels::matmul_grad_a(g.grad_buffer(a).v.data(), gout.v.data(), g.value(b).v.data(), m, k, n);
    if (g.requires_grad(b))
      kernels::matmul_grad_b(g.grad_buffer(b).v.data(), g.value(a).v.data(), gout.v.data(), m, k, n);
  });
}

Graph::NodeId Graph::relu(NodeId a) {
  Tensor out = value(a);
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return emit(std::move(out), requires_grad(a), [a](Graph& g, const Tensor& gout) {
    const auto& va = g.value(a).v;
    auto& ga = g.grad_buffer(a).v;
    for (size_t i = 0; i < ga.size(); ++i)
      if (va[i] > 0.0) ga[i] += gout.v[i];
  });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
  Tensor out = value(a);
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  NodeId id = emit(std::move(out), requires_grad(a), {});
  if (requires_grad(a)) {
    nodes_.back().backprop = [a, id](Graph& g, const Tensor& gout) {
      const auto& s = g.value(id).v;
      auto& ga = g.grad_buffer(a).v;
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += gout.v[i] * s[i] * (1.0 - s[i]);
    };
  }
  return id;
}

Graph::NodeId Graph::square(NodeId a) {
  Tensor out = value(a);
  for (double& x : out.v) x = x * x;
  return emit(std::move(out), requires_grad(a), [a](Graph& g, const Tensor& gout) {
    const auto& va = g.value(a).v;
    auto& ga = g.grad_buffer(a).v;
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * va[i] * gout.v[i];
  });
}

Graph::NodeId Graph::sqrt_op(NodeId a) {
  Tensor out = value(a);
  for (double& x : out.v) {
    if (x < 0.0) throw std::domain_error("sqrt: negative input");
    x = std::sqrt(x);
  }
  NodeId id = emit(std::move(out), requires_grad(a), {});
  if (requires_grad(a)) {
    // d/dx sqrt(x) at x = 0 is unbounded; use subgradient 0 there.
    nodes_.back().backprop = [a, id](Graph& g, const Tensor& gout) {
      const auto& s = g.value(id).v;
      auto& ga = g.grad_buffer(a).v;
      for (size_t i = 0; i < ga.size(); ++i)
        if (s[i] > 0.0) ga[i] += gout.v[i] * 0.5 / s[i];
    };
  }
  return id;
}

Graph::NodeId Graph::clamp_min(NodeId a, double lo) {
  Tensor out = value(a);
  for (double& x : out.v) x = x < lo ? lo : x;
  return emit(std::move(out), requires_grad(a), [a, lo](Graph& g, const Tensor& gout) {
    const auto& va = g.value(a).v;
    auto& ga = g.grad_buffer(a).v;
    for (size_t i = 0; i < ga.size(); ++i)
      if (va[i] > lo) ga[i] += gout.v[i];
  });
}

Graph::NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = value(parts[0]);
  const int ndim = static_cast<int>(first.shape.size());
  if (axis < 0 || axis >= ndim) throw std::invalid_argument("concat: bad axis");
  if (!(ndim == 2 || (ndim == 3 && axis == 0)))
    throw std::invalid_argument("concat: supported forms are 2-D any axis, 3-D axis 0");

  std::vector<int> out_shape = first.shape;
  int total = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (static_cast<int>(t.shape.size()) != ndim)
      throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < ndim; ++d)
      if (d != axis && t.shape[d] != first.shape[d])
        throw std::invalid_argument("concat: shape mismatch " + t.shape_str() + " vs " +
                                    first.shape_str());
    total += t.shape[axis];
  }
  out_shape[axis] = total;

  Tensor out = Tensor::zeros(out_shape);
  // Treat as [outer, axis_dim, inner] blocks.
  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(first.shape[d]);
  for (int d = axis + 1; d < ndim; ++d) inner *= static_cast<size_t>(first.shape[d]);

  size_t offset = 0;  // in axis units
  std::vector<std::pair<NodeId, size_t>> spans;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    const size_t ax = static_cast<size_t>(t.shape[axis]);
    for (size_t o = 0; o < outer; ++o) {
      const double* src = t.v.data() + o * ax * inner;
      double* dst = out.v.data() + (o * static_cast<size_t>(total) + offset) * inner;
      std::copy(src, src + ax * inner, dst);
    }
    spans.emplace_back(p, offset);
    offset += ax;
  }

  return emit(std::move(out), any_requires(parts),
              [spans, outer, inner, total](Graph& g, const Tensor& gout) {
                for (const auto& [p, off] : spans) {
                  if (!g.requires_grad(p)) continue;
                  Tensor& gp = g.grad_buffer(p);
                  const size_t ax = gp.numel() / (outer * inner);
                  for (size_t o = 0; o < outer; ++o) {
                    const double* src = gout.v.data() + (o * static_cast<size_t>(total) + off) * inner;
                    double* dst = gp.v.data() + o * ax * inner;
                    for (size_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
                  }
                }
              });
}

Graph::NodeId Graph::gather_rows(NodeId a, std::vector<int> rows) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2) throw std::invalid_argument("gather_rows: want [N,C]");
  const int n = ta.rows(), c = ta.cols();
  for (int r : rows)
    if (r < 0 || r >= n) throw std::out_of_range("gather_rows: row index out of range");
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), c});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(ta.v.data() + static_cast<size_t>(rows[i]) * c, c, out.v.data() + i * c);
  return emit(std::move(out), requires_grad(a),
              [a, rows = std::move(rows), c](Graph& g, const Tensor& gout) {
                auto& ga = g.grad_buffer(a).v;
                for (size_t i = 0; i < rows.size(); ++i) {
                  const double* src = gout.v.data() + i * c;
                  double* dst = ga.data() + static_cast<size_t>(rows[i]) * c;
                  for (int j = 0; j < c; ++j) dst[j] += src[j];
                }
              });
}

Graph::NodeId Graph::reduce_sum(NodeId a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double x : ta.v) acc += x;
  return emit(Tensor::scalar(acc), requires_grad(a), [a](Graph& g, const Tensor& gout) {
    auto& ga = g.grad_buffer(a).v;
    const double gv = gout.v[0];
    for (double& x : ga) x += gv;
  });
}

Graph::NodeId Graph::reduce_mean(NodeId a) {
  const Tensor& ta = value(a);
  if (ta.numel() == 0) throw std::invalid_argument("reduce_mean: empty tensor");
  double acc = 0.0;
  for (double x : ta.v) acc += x;
  const double inv = 1.0 / static_cast<double>(ta.numel());
  return emit(Tensor::scalar(acc * inv), requires_grad(a), [a, inv](Graph& g, const Tensor& gout) {
    auto& ga = g.grad_buffer(a).v;
    const double gv = gout.v[0] * inv;
    for (double& x : ga) x += gv;
  });
}

Graph::NodeId Graph::conv2d(NodeId x, NodeId w, int stride, int pad) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  if (tx.shape.size() != 3 || tw.shape.size() != 4)
    throw std::invalid_argument("conv2d: want x [C,H,W], w [Co,Ci,K,K]");
  if (tw.dim(1) != tx.dim(0))
    throw std::invalid_argument("conv2d: channel mismatch " + tx.shape_str() + " vs " +
                                tw.shape_str());
  if (tw.dim(2) != tw.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  const int cin = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
  const int cout = tw.dim(0), k = tw.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output would be empty");

  Tensor out = Tensor::zeros({cout, ho, wo});
  kernels::conv2d(out.v.data(), tx.v.data(), tw.v.data(), cin, h, wd, cout, k, stride, pad);
  return emit(std::move(out), any_requires({x, w}),
              [x, w, cin, h, wd, cout, k, stride, pad](Graph& g, const Tensor& gout) {
                if (g.requires_grad(x))
                  kernels::conv2d_grad_x(g.grad_buffer(x).v.data(), gout.v.data(),
                                         g.value(w).v.data(), cin, h, wd, cout, k, stride, pad);
                if (g.requires_grad(w))
                  kernels::conv2d_grad_w(g.grad_buffer(w).v.data(), g.value(x).v.data(),
                                         gout.v.data(), cin, h, wd, cout, k, stride, pad);
              });
}

Graph::NodeId Graph::tconv2(NodeId x, NodeId w) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  if (tx.shape.size() != 3 || tw.shape.size() != 4 || tw.dim(2) != 2 || tw.dim(3) != 2)
    throw std::invalid_argument("tconv2: want x [C,H,W], w [Ci,Co,2,2]");
  if (tw.dim(0) != tx.dim(0))
    throw std::invalid_argument("tconv2: channel mismatch " + tx.shape_str() + " vs " +
                                tw.shape_str());
  const int cin = tx.dim(0), h = tx.dim(1), wd = tx.dim(2), cout = tw.dim(1);
  Tensor out = Tensor::zeros({cout, 2 * h, 2 * wd});
  kernels::tconv2(out.v.data(), tx.v.data(), tw.v.data(), cin, h, wd, cout);
  return emit(std::move(out), any_requires({x, w}),
              [x, w, cin, h, wd, cout](Graph& g, const Tensor& gout) {
                if (g.requires_grad(x))
                  kernels::tconv2_grad_x(g.grad_buffer(x).v.data(), gout.v.data(),
                                         g.value(w).v.data(), cin, h, wd, cout);
                if (g.requires_grad(w))
                  kernels::tconv2_grad_w(g.grad_buffer(w).v.data(), g.value(x).v.data(),
                                         gout.v.data(), cin, h, wd, cout);
              });
}

Graph::NodeId Graph::rows_to_chw(NodeId a, int h, int w) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2 || ta.rows() != h * w)
    throw std::invalid_argument("rows_to_chw: want [H*W,C] with matching H,W");
  const int c = ta.cols();
  Tensor out = Tensor::zeros({c, h, w});
  for (int r = 0; r < h * w; ++r)
    for (int ci = 0; ci < c; ++ci)
      out.v[static_cast<size_t>(ci) * h * w + r] = ta.v[static_cast<size_t>(r) * c + ci];
  return emit(std::move(out), requires_grad(a), [a, h, w, c](Graph& g, const Tensor& gout) {
    auto& ga = g.grad_buffer(a).v;
    for (int r = 0; r < h * w; ++r)
      for (int ci = 0; ci < c; ++ci)
        ga[static_cast<size_t>(r) * c + ci] += gout.v[static_cast<size_t>(ci) * h * w + r];
  });
}

Graph::NodeId Graph::chw_to_rows(NodeId a) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 3) throw std::invalid_argument("chw_to_rows: want [C,H,W]");
  const int c = ta.dim(0), h = ta.dim(1), w = ta.dim(2);
  Tensor out = Tensor::zeros({h * w, c});
  for (int ci = 0; ci < c; ++ci)
    for (int r = 0; r < h * w; ++r)
      out.v[static_cast<size_t>(r) * c + ci] = ta.v[static_cast<size_t>(ci) * h * w + r];
  return emit(std::move(out), requires_grad(a), [a, c, h, w](Graph& g, const Tensor& gout) {
    auto& ga = g.grad_buffer(a).v;
    for (int ci = 0; ci < c; ++ci)
      for (int r = 0; r < h * w; ++r)
        ga[static_cast<size_t>(ci) * h * w + r] += gout.v[static_cast<size_t>(r) * c + ci];
  });
}

Graph::NodeId Graph::scatter_max(NodeId rows, std::vector<int> cell_of_row, int n_cells) {
  const Tensor& ta = value(rows);
  if (ta.shape.size() != 2) throw std::invalid_argument("scatter_max: want [N,C]");
  const int n = ta.rows(), c = ta.cols();
  if (static_cast<int>(cell_of_row.size()) != n)
    throw std::invalid_argument("scatter_max: cell list length mismatch");
  for (int cell : cell_of_row)
    if (cell < 0 || cell >= n_cells) throw std::out_of_range("scatter_max: cell out of range");

  Tensor out = Tensor::zeros({n_cells, c});
  // argmax per (cell, channel); first maximal row wins so gradients are
  // deterministic under ties.
  std::vector<int32_t> argmax(static_cast<size_t>(n_cells) * c, -1);
  for (int i = 0; i < n; ++i) {
    const int cell = cell_of_row[static_cast<size_t>(i)];
    const double* src = ta.v.data() + static_cast<size_t>(i) * c;
    double* dst = out.v.data() + static_cast<size_t>(cell) * c;
    int32_t* am = argmax.data() + static_cast<size_t>(cell) * c;
    for (int j = 0; j < c; ++j) {
      if (am[j] < 0 || src[j] > dst[j]) {
        dst[j] = src[j];
        am[j] = i;
      }
    }
  }
  return emit(std::move(out), requires_grad(rows),
              [rows, argmax = std::move(argmax), c](Graph& g, const Tensor& gout) {
                auto& gr = g.grad_buffer(rows).v;
                for (size_t idx = 0; idx < argmax.size(); ++idx) {
                  const int32_t i = argmax[idx];
                  if (i < 0) continue;
                  gr[static_cast<size_t>(i) * c + idx % c] += gout.v[idx];
                }
              });
}

Graph::NodeId Graph::custom(Tensor value, std::vector<NodeId> inputs,
                            std::function<void(Graph&, const Tensor& gout)> backward) {
  return emit(std::move(value), any_requires(inputs), std::move(backward));
}

}  // namespace flow::nn
