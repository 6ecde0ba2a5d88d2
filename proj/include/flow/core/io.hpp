#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flow/core/types.hpp"

namespace flow {

// SceneSample binary format `ZFSS` v1 (little-endian):
//   magic 'ZFSS', u32 version, u32 n_t, u32 n_t1, u64 frame_id_t,
//   u64 frame_id_t1, f64 dt, then cloud_t / cloud_t1 / gt_flow as f32
//   triples and classes as u8. A JSON sidecar carries config and meta.
void write_scene_sample(const std::filesystem::path& path, const SceneSample& sample);
SceneSample read_scene_sample(const std::filesystem::path& path);

nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json scene_meta_to_json(const SceneMeta& meta);
SceneMeta scene_meta_from_json(const nlohmann::json& j);

void write_scene_sidecar(const std::filesystem::path& path, const SceneConfig& cfg,
                         const SceneMeta& meta);

enum class Diversity { Contiguous, Diverse };

// Dataset directory layout: <dir>/<split>/<index:06>.zfss (+ .json sidecar).
std::filesystem::path sample_path(const std::filesystem::path& dir, const std::string& split,
                                  size_t index);
std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& split,
                                   size_t index);

// Number of consecutive samples starting at index 0.
size_t count_samples(const std::filesystem::path& dir, const std::string& split);

// Writes n samples under <dir>/<split>/. Diverse mode draws a fresh layout
// per pair; Contiguous reuses the layout of base.seed and perturbs poses.
// Per-sample seed is mix(split_seed, index), so output is independent of any
// generation order.
void generate_dataset(const std::filesystem::path& dir, const std::string& split,
                      const SceneConfig& base, size_t n, Diversity diversity, uint64_t split_seed);

// Strict JSON helpers shared by every config reader: unknown keys are hard
// errors so experiment configs cannot silently drift.
void require_keys_subset(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                         const std::string& context);
void require_version(const nlohmann::json& obj, int expected, const std::string& context);

// FNV-1a over bytes; used for cache/stage hashing and checksums.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a_file(const std::filesystem::path& path);

}  // namespace flow
