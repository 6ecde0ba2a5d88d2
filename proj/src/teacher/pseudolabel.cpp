#include "flow/teacher/pseudolabel.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "flow/core/io.hpp"
#include "flow/nn/kernels.hpp"

namespace flow {

TeacherKind teacher_kind_from_string(const std::string& s) {
  if (s == "nsfp") return TeacherKind::Nsfp;
  if (s == "nn") return TeacherKind::Nn;
  if (s == "gt") return TeacherKind::Gt;
  throw std::invalid_argument("unknown teacher '" + s + "' (want nsfp|nn|gt)");
}

std::string to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::Nsfp: return "nsfp";
    case TeacherKind::Nn: return "nn";
    case TeacherKind::Gt: return "gt";
  }
  return "?";
}

namespace {
constexpr char kMagic[4] = {'Z', 'F', 'F', 'L'};
}

void write_pseudolabel(const std::filesystem::path& path, const PseudoLabel& label) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open label for writing: " + path.string());
  out.write(kMagic, 4);
  const uint32_t version = 1, count = static_cast<uint32_t>(label.flow.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& v : label.flow.vectors) {
    const float f[3] = {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
    out.write(reinterpret_cast<const char*>(f), sizeof(f));
  }
  out.write(reinterpret_cast<const char*>(&label.final_loss), 8);
  out.write(reinterpret_cast<const char*>(&label.iters_run), 4);
  out.write(reinterpret_cast<const char*>(&label.wall_time_ms), 8);
  out.close();
  if (!out) throw std::runtime_error("label write failed: " + path.string());
}

PseudoLabel read_pseudolabel(const std::filesystem::path& path, const std::string& teacher_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open label for reading: " + path.string());
  auto read = [&](void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw std::runtime_error("truncated label file: " + path.string());
  };
  char magic[4];
  read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a ZFFL file: " + path.string());
  uint32_t version, count;
  read(&version, 4);
  if (version != 1) throw std::runtime_error("unsupported ZFFL version in " + path.string());
  read(&count, 4);
  PseudoLabel label;
  label.teacher_name = teacher_name;
  label.flow.vectors.resize(count);
  for (auto& v : label.flow.vectors) {
    float f[3];
    read(f, sizeof(f));
    v = {f[0], f[1], f[2]};
  }
  read(&label.final_loss, 8);
  read(&label.iters_run, 4);
  read(&label.wall_time_ms, 8);
  return label;
}

std::filesystem::path label_path(const std::filesystem::path& labels_dir, size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.zffl", index);
  return labels_dir / name;
}

PseudoLabel run_teacher(TeacherKind kind, const SceneSample& sample, const TeacherConfig& cfg) {
  switch (kind) {
    case TeacherKind::Nsfp:
      return nsfp_optimize(sample.cloud_t, sample.cloud_t1, cfg);
    case TeacherKind::Nn: {
      PseudoLabel label;
      label.teacher_name = "nn";
      label.flow = nn_flow_teacher(sample.cloud_t, sample.cloud_t1, cfg.chamfer);
      return label;
    }
    case TeacherKind::Gt: {
      PseudoLabel label;
      label.teacher_name = "gt";
      label.flow = sample.gt_flow;
      return label;
    }
  }
  throw std::logic_error("run_teacher: bad kind");
}

std::vector<size_t> read_label_failures(const std::filesystem::path& labels_dir) {
  const auto path = labels_dir / "manifest.json";
  std::vector<size_t> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  nlohmann::json j = nlohmann::json::parse(in);
  for (const auto& f : j.at("failures")) out.push_back(f.at("index").get<size_t>());
  std::sort(out.begin(), out.end());
  return out;
}

PseudolabelOutcome pseudolabel_dataset(const std::filesystem::path& dataset_dir,
                                       const std::string& split,
                                       const std::filesystem::path& labels_dir,
                                       const PseudolabelRun& run,
                                       const std::function<void(size_t, size_t)>& progress) {
  const size_t n = count_samples(dataset_dir, split);
  if (n == 0)
    throw std::runtime_error("pseudolabel_dataset: no samples under " +
                             (dataset_dir / split).string());
  if (run.jobs < 1) throw std::invalid_argument("pseudolabel_dataset: jobs must be >= 1");
  std::filesystem::create_directories(labels_dir);

  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  std::mutex failures_mu;
  std::vector<std::pair<size_t, std::string>> failures;

  auto worker = [&](bool inner_parallel) {
    nn::kernels::set_parallel_enabled(inner_parallel);
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        const SceneSample sample = read_scene_sample(sample_path(dataset_dir, split, i));
        TeacherConfig cfg = run.nsfp;
        cfg.seed = run.global_seed ^ static_cast<uint64_t>(i);
        PseudoLabel label = run_teacher(run.kind, sample, cfg);
        label.wall_time_ms = 0;
        write_pseudolabel(label_path(labels_dir, i), label);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mu);
        failures.emplace_back(i, e.what());
      }
      const size_t d = done.fetch_add(1) + 1;
      if (progress) progress(d, n);
    }
  };

  if (run.jobs == 1) {
    worker(nn::kernels::parallel_enabled());
  } else {
    // Worker threads own the parallelism; per-pair optimization stays serial.
    std::vector<std::thread> pool;
    const int jobs = std::min<int>(run.jobs, static_cast<int>(n));
    pool.reserve(static_cast<size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker, false);
    for (auto& t : pool) t.join();
  }

  std::sort(failures.begin(), failures.end());

  nlohmann::json manifest = {
      {"version", 1},
      {"teacher", to_string(run.kind)},
      {"global_seed", run.global_seed},
      {"count", n},
      {"failures", nlohmann::json::array()},
  };
  for (const auto& [idx, err] : failures)
    manifest["failures"].push_back({{"index", idx}, {"error", err}});
  std::ofstream mf(labels_dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write labels manifest in " + labels_dir.string());
  mf << manifest.dump(2) << "\n";

  PseudolabelOutcome outcome;
  outcome.failures = std::move(failures);
  outcome.n_ok = n - outcome.failures.size();
  return outcome;
}

}  // namespace flow
