#include "flow/core/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "flow/core/rng.hpp"
#include "flow/core/scene.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace flow {

namespace {

class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename T>
  void pod(T v) { bytes(&v, sizeof(T)); }
  void f32(double v) { pod(static_cast<float>(v)); }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed");
  }

 private:
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path_);
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error("truncated file: " + path_);
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

void write_triples(BinWriter& w, const std::vector<Point3>& pts) {
  for (const auto& p : pts) {
    w.f32(p.x);
    w.f32(p.y);
    w.f32(p.z);
  }
}

void read_triples(BinReader& r, std::vector<Point3>& pts, size_t n) {
  pts.resize(n);
  for (auto& p : pts) {
    p.x = r.pod<float>();
    p.y = r.pod<float>();
    p.z = r.pod<float>();
  }
}

constexpr char kSceneMagic[4] = {'Z', 'F', 'S', 'S'};

}  // namespace

void write_scene_sample(const std::filesystem::path& path, const SceneSample& sample) {
  sample.validate();
  BinWriter w(path);
  w.bytes(kSceneMagic, 4);
  w.pod<uint32_t>(1);
  w.pod<uint32_t>(static_cast<uint32_t>(sample.cloud_t.size()));
  w.pod<uint32_t>(static_cast<uint32_t>(sample.cloud_t1.size()));
  w.pod<uint64_t>(static_cast<uint64_t>(sample.cloud_t.frame_id));
  w.pod<uint64_t>(static_cast<uint64_t>(sample.cloud_t1.frame_id));
  w.pod<double>(sample.dt_seconds);
  write_triples(w, sample.cloud_t.points);
  write_triples(w, sample.cloud_t1.points);
  write_triples(w, sample.gt_flow.vectors);
  for (PointClass c : sample.classes) w.pod<uint8_t>(static_cast<uint8_t>(c));
  w.close();
}

SceneSample read_scene_sample(const std::filesystem::path& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kSceneMagic, 4) != 0)
    throw std::runtime_error("not a ZFSS file: " + path.string());
  const uint32_t version = r.pod<uint32_t>();
  if (version != 1) throw std::runtime_error("unsupported ZFSS version in " + path.string());
  const uint32_t n_t = r.pod<uint32_t>();
  const uint32_t n_t1 = r.pod<uint32_t>();
  SceneSample s;
  s.cloud_t.frame_id = static_cast<int64_t>(r.pod<uint64_t>());
  s.cloud_t1.frame_id = static_cast<int64_t>(r.pod<uint64_t>());
  s.dt_seconds = r.pod<double>();
  read_triples(r, s.cloud_t.points, n_t);
  read_triples(r, s.cloud_t1.points, n_t1);
  read_triples(r, s.gt_flow.vectors, n_t);
  s.classes.resize(n_t);
  for (auto& c : s.classes) c = static_cast<PointClass>(r.pod<uint8_t>());
  s.validate();
  return s;
}

nlohmann::json scene_config_to_json(const SceneConfig& cfg) {
  return {
      {"area_half_extent", cfg.area_half_extent},
      {"n_background_points", cfg.n_background_points},
      {"n_objects", cfg.n_objects},
      {"object_size_range", cfg.object_size_range},
      {"object_speed_range", cfg.object_speed_range},
      {"lidar_noise_sigma", cfg.lidar_noise_sigma},
      {"occlusion_enabled", cfg.occlusion_enabled},
      {"seed", cfg.seed},
  };
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  require_keys_subset(j,
                      {"area_half_extent", "n_background_points", "n_objects", "object_size_range",
                       "object_speed_range", "lidar_noise_sigma", "occlusion_enabled", "seed"},
                      "scene");
  SceneConfig cfg;
  if (j.contains("area_half_extent")) cfg.area_half_extent = j.at("area_half_extent").get<double>();
  if (j.contains("n_background_points")) cfg.n_background_points = j.at("n_background_points").get<int>();
  if (j.contains("n_objects")) cfg.n_objects = j.at("n_objects").get<int>();
  if (j.contains("object_size_range")) cfg.object_size_range = j.at("object_size_range").get<std::array<double, 2>>();
  if (j.contains("object_speed_range")) cfg.object_speed_range = j.at("object_speed_range").get<std::array<double, 2>>();
  if (j.contains("lidar_noise_sigma")) cfg.lidar_noise_sigma = j.at("lidar_noise_sigma").get<double>();
  if (j.contains("occlusion_enabled")) cfg.occlusion_enabled = j.at("occlusion_enabled").get<bool>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

nlohmann::json scene_meta_to_json(const SceneMeta& meta) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : meta.objects) {
    objs.push_back({
        {"center", {o.center.x, o.center.y, o.center.z}},
        {"half_size", {o.half_size.x, o.half_size.y, o.half_size.z}},
        {"yaw", o.yaw},
        {"rotation", o.motion.rotation},
        {"translation", {o.motion.translation.x, o.motion.translation.y, o.motion.translation.z}},
        {"speed_mps", o.speed_mps},
        {"first_point", o.first_point},
        {"point_count", o.point_count},
    });
  }
  return {{"seed", meta.seed}, {"objects", objs}};
}

namespace {
Point3 point_from_json(const nlohmann::json& a) {
  return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
}
}  // namespace

SceneMeta scene_meta_from_json(const nlohmann::json& j) {
  SceneMeta m;
  m.seed = j.at("seed").get<uint64_t>();
  for (const auto& o : j.at("objects")) {
    ObjectMeta om;
    om.center = point_from_json(o.at("center"));
    om.half_size = point_from_json(o.at("half_size"));
    om.yaw = o.at("yaw").get<double>();
    om.motion.rotation = o.at("rotation").get<std::array<std::array<double, 3>, 3>>();
    om.motion.translation = point_from_json(o.at("translation"));
    om.speed_mps = o.at("speed_mps").get<double>();
    om.first_point = o.at("first_point").get<size_t>();
    om.point_count = o.at("point_count").get<size_t>();
    m.objects.push_back(om);
  }
  return m;
}

void write_scene_sidecar(const std::filesystem::path& path, const SceneConfig& cfg,
                         const SceneMeta& meta) {
  nlohmann::json j = {{"version", 1},
                      {"scene_config", scene_config_to_json(cfg)},
                      {"meta", scene_meta_to_json(meta)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::filesystem::path sample_path(const std::filesystem::path& dir, const std::string& split,
                                  size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.zfss", index);
  return dir / split / name;
}

std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& split,
                                   size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.json", index);
  return dir / split / name;
}

size_t count_samples(const std::filesystem::path& dir, const std::string& split) {
  size_t n = 0;
  while (std::filesystem::exists(sample_path(dir, split, n))) ++n;
  return n;
}

void generate_dataset(const std::filesystem::path& dir, const std::string& split,
                      const SceneConfig& base, size_t n, Diversity diversity,
                      uint64_t split_seed) {
  base.validate();
  std::filesystem::create_directories(dir / split);
  for (size_t i = 0; i < n; ++i) {
    SceneConfig cfg = base;
    cfg.seed = mix_seed(split_seed, i);
    cfg.layout_seed = diversity == Diversity::Contiguous ? mix_seed(base.seed, 0x10c4) : 0;
    SceneSample s = generate_scene(cfg);
    s.cloud_t.frame_id = static_cast<int64_t>(2 * i);
    s.cloud_t1.frame_id = static_cast<int64_t>(2 * i + 1);
    write_scene_sample(sample_path(dir, split, i), s);
    write_scene_sidecar(sidecar_path(dir, split, i), cfg, s.meta);
  }
}

void require_keys_subset(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                         const std::string& context) {
  if (!obj.is_object()) throw std::runtime_error("config section '" + context + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::runtime_error("unknown key '" + item.key() + "' in config section '" + context + "'");
  }
}

void require_version(const nlohmann::json& obj, int expected, const std::string& context) {
  if (!obj.contains("version"))
    throw std::runtime_error(context + ": missing required 'version' field");
  if (obj.at("version").get<int>() != expected)
    throw std::runtime_error(context + ": unsupported version (expected " +
                             std::to_string(expected) + ")");
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

}  // namespace flow
