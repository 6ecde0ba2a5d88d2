#include "flow/student/model.hpp"

#include <cmath>
#include <fstream>

#include "flow/core/io.hpp"

namespace flow {

namespace {

StudentModel::Conv init_conv(int cout, int cin, int k, Rng& rng) {
  StudentModel::Conv c;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  c.w = nn::Tensor::zeros({cout, cin, k, k});
  for (double& x : c.w.v) x = rng.uniform(-bound, bound);
  c.b = nn::Tensor::zeros({cout});
  for (double& x : c.b.v) x = rng.uniform(-bound, bound);
  return c;
}

nn::Tensor init_tconv(int cin, int cout, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 4));
  nn::Tensor w = nn::Tensor::zeros({cin, cout, 2, 2});
  for (double& x : w.v) x = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

StudentModel StudentModel::init(const PillarConfig& cfg, uint64_t seed) {
  cfg.validate();
  StudentModel m;
  m.config = cfg;
  Rng rng(seed);
  Rng rng_embed = rng.fork(21);
  Rng rng_unet = rng.fork(22);
  Rng rng_decode = rng.fork(23);

  const int e = cfg.embed_dim;
  m.embed = nn::Mlp::init({4, e}, nn::Activation::ReLU, rng_embed);

  const int levels = cfg.unet_levels;
  for (int l = 0; l < levels; ++l) {
    const int c_prev = l == 0 ? e : m.level_channels(l - 1);
    const int c = m.level_channels(l);
    m.enc_in.push_back(init_conv(c, c_prev, 3, rng_unet));
    m.enc_refine.push_back(init_conv(c, c, 3, rng_unet));
  }
  const int c_bottom = m.level_channels(levels - 1);
  m.mid = init_conv(c_bottom, 2 * c_bottom, 3, rng_unet);
  for (int l = levels - 2; l >= 0; --l) {
    DecoderLevel d;
    d.up_w = init_tconv(m.level_channels(l + 1), m.level_channels(l), rng_unet);
    d.fuse = init_conv(m.level_channels(l), 3 * m.level_channels(l), 3, rng_unet);
    m.dec.push_back(std::move(d));
  }

  m.decode = nn::Mlp::init({3 + e, 4 * e, 3}, nn::Activation::ReLU, rng_decode);
  return m;
}

nn::NamedTensors StudentModel::named_params() const {
  nn::NamedTensors out;
  auto put = [&](const std::string& name, const nn::Tensor& t) { out.emplace_back(name, t); };
  for (size_t l = 0; l < embed.n_layers(); ++l) {
    put("embed.l" + std::to_string(l) + ".w", embed.weights[l]);
    put("embed.l" + std::to_string(l) + ".b", embed.biases[l]);
  }
  for (size_t l = 0; l < enc_in.size(); ++l) {
    put("unet.enc" + std::to_string(l) + ".in.w", enc_in[l].w);
    put("unet.enc" + std::to_string(l) + ".in.b", enc_in[l].b);
    put("unet.enc" + std::to_string(l) + ".refine.w", enc_refine[l].w);
    put("unet.enc" + std::to_string(l) + ".refine.b", enc_refine[l].b);
  }
  put("unet.mid.w", mid.w);
  put("unet.mid.b", mid.b);
  for (size_t l = 0; l < dec.size(); ++l) {
    put("unet.dec" + std::to_string(l) + ".up.w", dec[l].up_w);
    put("unet.dec" + std::to_string(l) + ".fuse.w", dec[l].fuse.w);
    put("unet.dec" + std::to_string(l) + ".fuse.b", dec[l].fuse.b);
  }
  for (size_t l = 0; l < decode.n_layers(); ++l) {
    put("decode.l" + std::to_string(l) + ".w", decode.weights[l]);
    put("decode.l" + std::to_string(l) + ".b", decode.biases[l]);
  }
  return out;
}

void StudentModel::load_named_params(const nn::NamedTensors& params) {
  nn::NamedTensors current = named_params();
  if (params.size() != current.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  std::vector<nn::Tensor*> slots;
  for (size_t l = 0; l < embed.n_layers(); ++l) {
    slots.push_back(&embed.weights[l]);
    slots.push_back(&embed.biases[l]);
  }
  for (size_t l = 0; l < enc_in.size(); ++l) {
    slots.push_back(&enc_in[l].w);
    slots.push_back(&enc_in[l].b);
    slots.push_back(&enc_refine[l].w);
    slots.push_back(&enc_refine[l].b);
  }
  slots.push_back(&mid.w);
  slots.push_back(&mid.b);
  for (size_t l = 0; l < dec.size(); ++l) {
    slots.push_back(&dec[l].up_w);
    slots.push_back(&dec[l].fuse.w);
    slots.push_back(&dec[l].fuse.b);
  }
  for (size_t l = 0; l < decode.n_layers(); ++l) {
    slots.push_back(&decode.weights[l]);
    slots.push_back(&decode.biases[l]);
  }
  for (size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, tensor] = params[i];
    if (name != current[i].first)
      throw std::runtime_error("checkpoint parameter '" + name + "' does not match expected '" +
                               current[i].first + "'");
    if (tensor.shape != slots[i]->shape)
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "'");
    *slots[i] = tensor;
  }
}

void StudentModel::save(const std::filesystem::path& ckpt_path) const {
  nn::save_checkpoint(ckpt_path, named_params());
  nlohmann::json j = {{"version", 1},
                      {"pillar",
                       {{"pillar_size", config.pillar_size},
                        {"area_half_extent", config.area_half_extent},
                        {"embed_dim", config.embed_dim},
                        {"unet_levels", config.unet_levels}}}};
  std::ofstream out(ckpt_path.string() + ".json");
  if (!out) throw std::runtime_error("cannot write checkpoint sidecar for " + ckpt_path.string());
  out << j.dump(2) << "\n";
}

StudentModel StudentModel::load(const std::filesystem::path& ckpt_path) {
  const std::filesystem::path sidecar = ckpt_path.string() + ".json";
  std::ifstream in(sidecar);
  if (!in) throw std::runtime_error("missing checkpoint sidecar: " + sidecar.string());
  nlohmann::json j = nlohmann::json::parse(in);
  require_version(j, 1, "checkpoint sidecar");
  require_keys_subset(j, {"version", "pillar"}, "checkpoint sidecar");
  const auto& p = j.at("pillar");
  require_keys_subset(p, {"pillar_size", "area_half_extent", "embed_dim", "unet_levels"},
                      "checkpoint sidecar pillar");
  PillarConfig cfg;
  cfg.pillar_size = p.at("pillar_size").get<double>();
  cfg.area_half_extent = p.at("area_half_extent").get<double>();
  cfg.embed_dim = p.at("embed_dim").get<int>();
  cfg.unet_levels = p.at("unet_levels").get<int>();
  StudentModel m = StudentModel::init(cfg, 0);
  m.load_named_params(nn::load_checkpoint(ckpt_path));
  return m;
}

StudentNodes register_student(nn::Graph& g, const StudentModel& m, bool requires_grad) {
  StudentNodes n;
  n.embed = register_mlp(g, m.embed, requires_grad);
  for (const auto& c : m.enc_in)
    n.enc_in.emplace_back(g.leaf(c.w, requires_grad), g.leaf(c.b, requires_grad));
  for (const auto& c : m.enc_refine)
    n.enc_refine.emplace_back(g.leaf(c.w, requires_grad), g.leaf(c.b, requires_grad));
  n.mid = {g.leaf(m.mid.w, requires_grad), g.leaf(m.mid.b, requires_grad)};
  for (const auto& d : m.dec)
    n.dec.push_back({g.leaf(d.up_w, requires_grad),
                     {g.leaf(d.fuse.w, requires_grad), g.leaf(d.fuse.b, requires_grad)}});
  n.decode = register_mlp(g, m.decode, requires_grad);
  return n;
}

namespace {

// Embed + pool one frame into its [HW, e] pseudoimage rows, then [e,H,W].
struct FramePseudoimage {
  nn::Graph::NodeId chw;
  std::vector<int> cells;
};

FramePseudoimage build_pseudoimage(nn::Graph& g, const StudentModel& m, const StudentNodes& nodes,
                                   const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("student_forward: empty cloud");
  Pillarization pil = assign_pillars(cloud, m.config);
  const int grid = pil.grid;
  auto feats = g.leaf(std::move(pil.features), false);
  auto embedded = g.relu(mlp_forward(g, m.embed, nodes.embed, feats));
  auto pooled = g.scatter_max(embedded, pil.cell_of_point, grid * grid);
  return {g.rows_to_chw(pooled, grid, grid), std::move(pil.cell_of_point)};
}

// Shared-weight encoder on one frame; returns per-level skip features.
std::vector<nn::Graph::NodeId> encode_frame(nn::Graph& g, const StudentModel& m,
                                            const StudentNodes& nodes, nn::Graph::NodeId img) {
  std::vector<nn::Graph::NodeId> skips;
  nn::Graph::NodeId h = img;
  for (int l = 0; l < m.config.unet_levels; ++l) {
    const int stride = l == 0 ? 1 : 2;
    h = g.relu(g.add_chanvec(g.conv2d(h, nodes.enc_in[l].first, stride, 1), nodes.enc_in[l].second));
    h = g.relu(g.add_chanvec(g.conv2d(h, nodes.enc_refine[l].first, 1, 1), nodes.enc_refine[l].second));
    skips.push_back(h);
  }
  return skips;
}

}  // namespace

nn::Graph::NodeId student_forward_node(nn::Graph& g, const StudentModel& m,
                                       const StudentNodes& nodes, const PointCloud& cloud_t,
                                       const PointCloud& cloud_t1) {
  auto frame_t = build_pseudoimage(g, m, nodes, cloud_t);
  auto frame_t1 = build_pseudoimage(g, m, nodes, cloud_t1);

  const auto skips_t = encode_frame(g, m, nodes, frame_t.chw);
  const auto skips_t1 = encode_frame(g, m, nodes, frame_t1.chw);

  // Decoder fuses the two frames: joint bottleneck, then per level upsample
  // and fuse with both frames' skip connections.
  const int levels = m.config.unet_levels;
  auto h = g.relu(g.add_chanvec(
      g.conv2d(g.concat({skips_t[levels - 1], skips_t1[levels - 1]}, 0), nodes.mid.first, 1, 1),
      nodes.mid.second));
  for (size_t d = 0; d < m.dec.size(); ++d) {
    const int level = levels - 2 - static_cast<int>(d);
    auto up = g.tconv2(h, nodes.dec[d].first);
    auto fused = g.concat({up, skips_t[level], skips_t1[level]}, 0);
    h = g.relu(g.add_chanvec(g.conv2d(fused, nodes.dec[d].second.first, 1, 1),
                             nodes.dec[d].second.second));
  }

  // Per-point decode: coordinates plus the pillar feature under the point.
  auto rows = g.chw_to_rows(h);
  auto cell_feats = g.gather_rows(rows, frame_t.cells);
  nn::Tensor coords = nn::Tensor::zeros({static_cast<int>(cloud_t.size()), 3});
  for (size_t i = 0; i < cloud_t.size(); ++i) {
    coords.v[i * 3 + 0] = cloud_t.points[i].x;
    coords.v[i * 3 + 1] = cloud_t.points[i].y;
    coords.v[i * 3 + 2] = cloud_t.points[i].z;
  }
  auto decode_in = g.concat({g.leaf(std::move(coords), false), cell_feats}, 1);
  return mlp_forward(g, m.decode, nodes.decode, decode_in);
}

FlowField student_forward(const StudentModel& m, const PointCloud& cloud_t,
                          const PointCloud& cloud_t1) {
  nn::Graph g;
  StudentNodes nodes = register_student(g, m, false);
  auto out = student_forward_node(g, m, nodes, cloud_t, cloud_t1);
  const nn::Tensor& t = g.value(out);
  FlowField f = FlowField::zeros(cloud_t.size());
  for (size_t i = 0; i < f.size(); ++i)
    f.vectors[i] = {t.v[i * 3 + 0], t.v[i * 3 + 1], t.v[i * 3 + 2]};
  return f;
}

Pseudoimage pillarize(const PointCloud& cloud, const StudentModel& m) {
  nn::Graph g;
  StudentNodes nodes = register_student(g, m, false);
  Pillarization pil = assign_pillars(cloud, m.config);
  const int grid = pil.grid;
  auto feats = g.leaf(pil.features, false);
  auto embedded = g.relu(mlp_forward(g, m.embed, nodes.embed, feats));
  auto pooled = g.scatter_max(embedded, pil.cell_of_point, grid * grid);
  Pseudoimage out;
  out.features = g.value(pooled);
  out.cell_of_point = std::move(pil.cell_of_point);
  out.grid = grid;
  return out;
}

void collect_student_grads(nn::Graph& g, StudentModel& m, const StudentNodes& nodes,
                           std::vector<nn::Tensor*>& params,
                           std::vector<const nn::Tensor*>& grads) {
  auto put = [&](nn::Tensor& p, nn::Graph::NodeId id) {
    params.push_back(&p);
    grads.push_back(&g.grad(id));
  };
  for (size_t l = 0; l < m.embed.n_layers(); ++l) {
    put(m.embed.weights[l], nodes.embed.w[l]);
    put(m.embed.biases[l], nodes.embed.b[l]);
  }
  for (size_t l = 0; l < m.enc_in.size(); ++l) {
    put(m.enc_in[l].w, nodes.enc_in[l].first);
    put(m.enc_in[l].b, nodes.enc_in[l].second);
    put(m.enc_refine[l].w, nodes.enc_refine[l].first);
    put(m.enc_refine[l].b, nodes.enc_refine[l].second);
  }
  put(m.mid.w, nodes.mid.first);
  put(m.mid.b, nodes.mid.second);
  for (size_t l = 0; l < m.dec.size(); ++l) {
    put(m.dec[l].up_w, nodes.dec[l].first);
    put(m.dec[l].fuse.w, nodes.dec[l].second.first);
    put(m.dec[l].fuse.b, nodes.dec[l].second.second);
  }
  for (size_t l = 0; l < m.decode.n_layers(); ++l) {
    put(m.decode.weights[l], nodes.decode.w[l]);
    put(m.decode.biases[l], nodes.decode.b[l]);
  }
}

}  // namespace flow
