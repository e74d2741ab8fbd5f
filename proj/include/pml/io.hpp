#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pml/eval.hpp"
#include "pml/geometry.hpp"
#include "pml/losses.hpp"
#include "pml/pillar_grid.hpp"
#include "pml/simulator.hpp"

namespace pml::io {

/// Readers refuse payloads whose declared size exceeds this many bytes.
inline constexpr std::uint64_t kDefaultSizeCap = 1ull << 30;

// Binary formats, all little-endian:
//   PCB1  "PCB1" u32 count, count * 3 f32 (x, y, z)
//   FLB1  "FLB1" u32 width, u32 height, H*W * 2 f32 (row-major), H*W u8 validity
//   PMF1  "PMF1" u32 H, u32 W, f32 cell_size, f32 x_min, f32 y_min, f32 horizon,
//         H*W * 2 f32 (row-major), H*W u8 nonempty flags
// Writers throw ConfigError on values that are not finite as f32. Readers
// throw ParseError on a bad magic tag, a size mismatch or a non-finite value.

std::string encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::string_view bytes, std::uint64_t cap = kDefaultSizeCap);

std::string encode_flow(const FlowImage& flow);
FlowImage decode_flow(std::string_view bytes, std::uint64_t cap = kDefaultSizeCap);

/// The stored grid has x_max = x_min + W * cell_size and likewise for y.
std::string encode_field(const PillarMotionField& field);
PillarMotionField decode_field(std::string_view bytes, std::uint64_t cap = kDefaultSizeCap);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

PointCloud read_cloud(const std::filesystem::path& path, std::uint64_t cap = kDefaultSizeCap);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
FlowImage read_flow(const std::filesystem::path& path, std::uint64_t cap = kDefaultSizeCap);
void write_flow(const std::filesystem::path& path, const FlowImage& flow);
PillarMotionField read_field(const std::filesystem::path& path, std::uint64_t cap = kDefaultSizeCap);
void write_field(const std::filesystem::path& path, const PillarMotionField& field);

/// Label file: exactly `cells` bytes of LabelBits.
std::vector<std::uint8_t> read_labels(const std::filesystem::path& path, std::size_t cells);
void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// Camera rig plus the ego pose change of one sweep pair.
struct Calibration {
    std::vector<CameraModel> cameras;
    RigidTransform ego;
};

/// JSON: {"cameras": [{"intrinsics": [9], "extrinsic_rotation": [9],
/// "extrinsic_translation": [3], "width": W, "height": H}, ...],
/// "ego_rotation": [9], "ego_translation": [3]}; matrices row-major.
/// Missing or malformed keys raise ConfigError naming the key.
Calibration parse_calib(std::string_view json_text);
std::string calib_to_json(const Calibration& calib);
Calibration read_calib(const std::filesystem::path& path);

/// Strict scene-spec JSON (unknown keys are rejected; absent keys keep defaults).
SceneSpec parse_scene_spec(std::string_view json_text);
std::string scene_spec_to_json(const SceneSpec& spec);

GridSpec parse_grid(std::string_view json_text);

/// Writes a scene bundle directory: cloud_t.bin, cloud_t1.bin, calib.json,
/// flow_cam<i>.bin, ego_flow_cam<i>.bin, truth.pmf, truth_labels.bin, spec.json.
void write_bundle(const std::filesystem::path& dir, const GeneratedScene& scene);

/// Loads the sweeps, calibration and camera flows of a bundle without its
/// ground truth. With `with_cameras` false no flow file is read.
SceneInputs read_inputs(const std::filesystem::path& dir, bool with_cameras = true);

/// Loads a bundle. With `with_cameras` false the calibration and flow files
/// are not touched (only the ego transform is read when calib.json exists).
EvalScene read_bundle(const std::filesystem::path& dir, bool with_cameras = true);

}  // namespace pml::io
