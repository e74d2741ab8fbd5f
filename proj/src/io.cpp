#include "pml/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "pml/errors.hpp"

namespace pml::io {
namespace {

using detail::Json;

constexpr std::size_t kMagicSize = 4;

class ByteWriter {
public:
    void magic(std::string_view tag) { out_.append(tag.data(), kMagicSize); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }

    void f32(double value, const char* what) {
        const auto f = static_cast<float>(value);
        if (!std::isfinite(f)) throw ConfigError(std::string("cannot write non-finite ") + what);
        u32(std::bit_cast<std::uint32_t>(f));
    }

    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string format) : bytes_(bytes), format_(std::move(format)) {}

    void magic(std::string_view tag) {
        need(kMagicSize);
        if (bytes_.substr(0, kMagicSize) != tag) {
            throw ParseError(format_ + ": bad magic tag, expected '" + std::string(tag) + "'", 0);
        }
        pos_ += kMagicSize;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f32(const char* what) {
        const std::size_t at = pos_;
        const float f = std::bit_cast<float>(u32());
        if (!std::isfinite(f)) throw ParseError(format_ + ": non-finite " + what, at);
        return static_cast<double>(f);
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    /// Validates that exactly `payload` bytes remain before anything is allocated.
    void expect_remaining(std::uint64_t payload, std::uint64_t cap) const {
        if (payload > cap) {
            throw ParseError(format_ + ": declared payload of " + std::to_string(payload) +
                                 " bytes exceeds the cap of " + std::to_string(cap),
                             pos_);
        }
        const std::uint64_t expected = pos_ + payload;
        if (bytes_.size() != expected) {
            throw ParseError(format_ + ": expected " + std::to_string(expected) + " bytes, got " +
                                 std::to_string(bytes_.size()),
                             std::min<std::uint64_t>(bytes_.size(), expected));
        }
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw ParseError(format_ + ": truncated header, expected at least " + std::to_string(pos_ + n) +
                                 " bytes, got " + std::to_string(bytes_.size()),
                             bytes_.size());
        }
    }

    std::string_view bytes_;
    std::string format_;
    std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFull) throw ConfigError(std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_cloud(const PointCloud& cloud) {
    ByteWriter w;
    w.magic("PCB1");
    w.u32(checked_u32(cloud.size(), "point count"));
    for (const auto& p : cloud.points) {
        w.f32(p.x(), "point coordinate");
        w.f32(p.y(), "point coordinate");
        w.f32(p.z(), "point coordinate");
    }
    return w.take();
}

PointCloud decode_cloud(std::string_view bytes, std::uint64_t cap) {
    ByteReader r(bytes, "point cloud");
    r.magic("PCB1");
    const std::uint64_t count = r.u32();
    r.expect_remaining(count * 12, cap);
    PointCloud cloud;
    cloud.points.resize(count);
    for (auto& p : cloud.points) {
        const double x = r.f32("point coordinate");
        const double y = r.f32("point coordinate");
        const double z = r.f32("point coordinate");
        p = Point3(x, y, z);
    }
    return cloud;
}

std::string encode_flow(const FlowImage& flow) {
    const std::size_t n = static_cast<std::size_t>(flow.width) * flow.height;
    if (flow.width < 0 || flow.height < 0 || flow.flow.size() != n || flow.valid.size() != n) {
        throw ConfigError("flow image buffers do not match its size");
    }
    ByteWriter w;
    w.magic("FLB1");
    w.u32(checked_u32(flow.width, "flow width"));
    w.u32(checked_u32(flow.height, "flow height"));
    for (const auto& f : flow.flow) {
        w.f32(f.x(), "flow value");
        w.f32(f.y(), "flow value");
    }
    for (const auto v : flow.valid) w.u8(v ? 1 : 0);
    return w.take();
}

FlowImage decode_flow(std::string_view bytes, std::uint64_t cap) {
    ByteReader r(bytes, "flow image");
    r.magic("FLB1");
    const std::uint64_t width = r.u32();
    const std::uint64_t height = r.u32();
    if (width > 0x7FFFFFFF || height > 0x7FFFFFFF) throw ParseError("flow image: dimensions too large", 4);
    const std::uint64_t n = width * height;
    r.expect_remaining(n * 9, cap);
    FlowImage flow(static_cast<int>(width), static_cast<int>(height));
    for (auto& f : flow.flow) {
        const double x = r.f32("flow value");
        const double y = r.f32("flow value");
        f = Vec2(x, y);
    }
    for (auto& v : flow.valid) v = r.u8();
    return flow;
}

std::string encode_field(const PillarMotionField& field) {
    const auto& g = field.grid;
    g.validate();
    if (field.motion.size() != g.cell_count() || field.nonempty.size() != g.cell_count()) {
        throw ConfigError("motion field buffers do not match its grid");
    }
    ByteWriter w;
    w.magic("PMF1");
    w.u32(checked_u32(g.height(), "field height"));
    w.u32(checked_u32(g.width(), "field width"));
    w.f32(g.cell_size, "cell size");
    w.f32(g.x_min, "x_min");
    w.f32(g.y_min, "y_min");
    w.f32(field.horizon, "horizon");
    for (const auto& m : field.motion) {
        w.f32(m.x(), "motion value");
        w.f32(m.y(), "motion value");
    }
    for (const auto v : field.nonempty) w.u8(v ? 1 : 0);
    return w.take();
}

PillarMotionField decode_field(std::string_view bytes, std::uint64_t cap) {
    ByteReader r(bytes, "motion field");
    r.magic("PMF1");
    const std::uint64_t height = r.u32();
    const std::uint64_t width = r.u32();
    const double cell = r.f32("cell size");
    const double x_min = r.f32("x_min");
    const double y_min = r.f32("y_min");
    const double horizon = r.f32("horizon");
    if (width == 0 || height == 0 || width > 0x7FFFFFFF || height > 0x7FFFFFFF) {
        throw ParseError("motion field: invalid dimensions", 4);
    }
    if (!(cell > 0.0)) throw ParseError("motion field: cell size must be positive", 12);
    const std::uint64_t n = width * height;
    r.expect_remaining(n * 9, cap);

    GridSpec grid{x_min, x_min + static_cast<double>(width) * cell, y_min, y_min + static_cast<double>(height) * cell,
                  cell};
    PillarMotionField field(grid, horizon);
    if (field.size() != n) throw ParseError("motion field: grid extents are inconsistent", 12);
    for (auto& m : field.motion) {
        const double x = r.f32("motion value");
        const double y = r.f32("motion value");
        m = Vec2(x, y);
    }
    for (auto& v : field.nonempty) v = r.u8();
    return field;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

PointCloud read_cloud(const std::filesystem::path& path, std::uint64_t cap) { return decode_cloud(read_file(path), cap); }
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) { write_file(path, encode_cloud(cloud)); }
FlowImage read_flow(const std::filesystem::path& path, std::uint64_t cap) { return decode_flow(read_file(path), cap); }
void write_flow(const std::filesystem::path& path, const FlowImage& flow) { write_file(path, encode_flow(flow)); }
PillarMotionField read_field(const std::filesystem::path& path, std::uint64_t cap) {
    return decode_field(read_file(path), cap);
}
void write_field(const std::filesystem::path& path, const PillarMotionField& field) {
    write_file(path, encode_field(field));
}

std::vector<std::uint8_t> read_labels(const std::filesystem::path& path, std::size_t cells) {
    const auto bytes = read_file(path);
    if (bytes.size() != cells) {
        throw ParseError("labels: expected " + std::to_string(cells) + " bytes, got " + std::to_string(bytes.size()),
                         std::min(bytes.size(), cells));
    }
    return {bytes.begin(), bytes.end()};
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
    write_file(path, std::string_view(reinterpret_cast<const char*>(labels.data()), labels.size()));
}

Calibration parse_calib(std::string_view json_text) {
    using namespace detail;
    const Json j = parse_json(json_text, "calibration");
    reject_unknown(j, {"cameras", "ego_rotation", "ego_translation"}, "");
    Calibration calib;
    if (!j.contains("cameras")) throw ConfigError("missing key 'cameras'");
    if (!j.at("cameras").is_array()) throw ConfigError("key 'cameras' must be an array");
    for (std::size_t i = 0; i < j.at("cameras").size(); ++i) {
        const auto& c = j.at("cameras")[i];
        const std::string where = "cameras[" + std::to_string(i) + "]";
        reject_unknown(c, {"intrinsics", "extrinsic_rotation", "extrinsic_translation", "width", "height"}, where);
        CameraModel cam;
        cam.intrinsics = get_mat3(c, "intrinsics", where);
        cam.extrinsic = RigidTransform(get_mat3(c, "extrinsic_rotation", where), get_vec3(c, "extrinsic_translation", where));
        cam.width = get_as<int>(c, "width", where);
        cam.height = get_as<int>(c, "height", where);
        cam.validate();
        calib.cameras.push_back(cam);
    }
    calib.ego = RigidTransform(get_mat3(j, "ego_rotation", ""), get_vec3(j, "ego_translation", ""));
    return calib;
}

std::string calib_to_json(const Calibration& calib) {
    using namespace detail;
    nlohmann::ordered_json j;
    j["cameras"] = nlohmann::ordered_json::array();
    for (const auto& cam : calib.cameras) {
        nlohmann::ordered_json c;
        c["intrinsics"] = mat3_json(cam.intrinsics);
        c["extrinsic_rotation"] = mat3_json(cam.extrinsic.rotation());
        c["extrinsic_translation"] = vec_json(cam.extrinsic.translation());
        c["width"] = cam.width;
        c["height"] = cam.height;
        j["cameras"].push_back(c);
    }
    j["ego_rotation"] = mat3_json(calib.ego.rotation());
    j["ego_translation"] = vec_json(calib.ego.translation());
    return j.dump(2) + "\n";
}

Calibration read_calib(const std::filesystem::path& path) { return parse_calib(read_file(path)); }

SceneSpec parse_scene_spec(std::string_view json_text) {
    using namespace detail;
    const Json j = parse_json(json_text, "scene spec");
    reject_unknown(j, {"seed", "ego_yaw", "ego_translation", "objects", "ground_extent", "lidar", "cameras", "interval",
                       "grid"},
                   "");
    SceneSpec spec;
    read_optional(j, "seed", spec.seed, "");
    read_optional(j, "ego_yaw", spec.ego_yaw, "");
    if (j.contains("ego_translation")) spec.ego_translation = get_vec3(j, "ego_translation", "");
    read_optional(j, "ground_extent", spec.ground_extent, "");
    read_optional(j, "interval", spec.interval, "");
    if (j.contains("grid")) spec.grid = grid_from_json(j.at("grid"), "grid");

    if (j.contains("objects")) {
        if (!j.at("objects").is_array()) throw ConfigError("key 'objects' must be an array");
        for (std::size_t i = 0; i < j.at("objects").size(); ++i) {
            const auto& o = j.at("objects")[i];
            const std::string where = "objects[" + std::to_string(i) + "]";
            reject_unknown(o, {"center", "size", "velocity", "tag"}, where);
            BoxObject obj;
            obj.center = get_vec2(o, "center", where);
            if (o.contains("size")) obj.size = get_vec3(o, "size", where);
            if (o.contains("velocity")) obj.velocity = get_vec2(o, "velocity", where);
            read_optional(o, "tag", obj.tag, where);
            spec.objects.push_back(obj);
        }
    }
    if (j.contains("lidar")) {
        const auto& l = j.at("lidar");
        reject_unknown(l, {"rings", "elevation_min_deg", "elevation_max_deg", "azimuth_step_deg", "range_noise",
                           "max_range", "mount_height"},
                       "lidar");
        read_optional(l, "rings", spec.lidar.rings, "lidar");
        read_optional(l, "elevation_min_deg", spec.lidar.elevation_min_deg, "lidar");
        read_optional(l, "elevation_max_deg", spec.lidar.elevation_max_deg, "lidar");
        read_optional(l, "azimuth_step_deg", spec.lidar.azimuth_step_deg, "lidar");
        read_optional(l, "range_noise", spec.lidar.range_noise, "lidar");
        read_optional(l, "max_range", spec.lidar.max_range, "lidar");
        read_optional(l, "mount_height", spec.lidar.mount_height, "lidar");
    }
    if (j.contains("cameras")) {
        if (!j.at("cameras").is_array()) throw ConfigError("key 'cameras' must be an array");
        spec.cameras.clear();
        for (std::size_t i = 0; i < j.at("cameras").size(); ++i) {
            const auto& c = j.at("cameras")[i];
            const std::string where = "cameras[" + std::to_string(i) + "]";
            reject_unknown(c, {"position", "yaw_deg", "pitch_deg", "focal", "width", "height"}, where);
            CameraMount m;
            if (c.contains("position")) m.position = get_vec3(c, "position", where);
            read_optional(c, "yaw_deg", m.yaw_deg, where);
            read_optional(c, "pitch_deg", m.pitch_deg, where);
            read_optional(c, "focal", m.focal, where);
            read_optional(c, "width", m.width, where);
            read_optional(c, "height", m.height, where);
            spec.cameras.push_back(m);
        }
    }
    spec.validate();
    return spec;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
    using namespace detail;
    nlohmann::ordered_json j;
    j["seed"] = spec.seed;
    j["ego_yaw"] = spec.ego_yaw;
    j["ego_translation"] = vec_json(spec.ego_translation);
    j["objects"] = nlohmann::ordered_json::array();
    for (const auto& o : spec.objects) {
        j["objects"].push_back({{"center", vec_json(o.center)},
                                {"size", vec_json(o.size)},
                                {"velocity", vec_json(o.velocity)},
                                {"tag", o.tag}});
    }
    j["ground_extent"] = spec.ground_extent;
    const auto& l = spec.lidar;
    j["lidar"] = {{"rings", l.rings},
                  {"elevation_min_deg", l.elevation_min_deg},
                  {"elevation_max_deg", l.elevation_max_deg},
                  {"azimuth_step_deg", l.azimuth_step_deg},
                  {"range_noise", l.range_noise},
                  {"max_range", l.max_range},
                  {"mount_height", l.mount_height}};
    j["cameras"] = nlohmann::ordered_json::array();
    for (const auto& c : spec.cameras) {
        j["cameras"].push_back({{"position", vec_json(c.position)},
                                {"yaw_deg", c.yaw_deg},
                                {"pitch_deg", c.pitch_deg},
                                {"focal", c.focal},
                                {"width", c.width},
                                {"height", c.height}});
    }
    j["interval"] = spec.interval;
    j["grid"] = grid_to_json(spec.grid);
    return j.dump(2) + "\n";
}

GridSpec parse_grid(std::string_view json_text) {
    return detail::grid_from_json(detail::parse_json(json_text, "grid"), "");
}

void write_bundle(const std::filesystem::path& dir, const GeneratedScene& scene) {
    std::filesystem::create_directories(dir);
    write_cloud(dir / "cloud_t.bin", scene.inputs.cloud_t);
    write_cloud(dir / "cloud_t1.bin", scene.inputs.cloud_t1);
    Calibration calib;
    calib.ego = scene.inputs.ego;
    for (std::size_t i = 0; i < scene.inputs.cameras.size(); ++i) {
        calib.cameras.push_back(scene.inputs.cameras[i].camera);
        write_flow(dir / ("flow_cam" + std::to_string(i) + ".bin"), scene.inputs.cameras[i].flow);
        write_flow(dir / ("ego_flow_cam" + std::to_string(i) + ".bin"), scene.ego_flows.at(i));
    }
    write_file(dir / "calib.json", calib_to_json(calib));
    write_field(dir / "truth.pmf", scene.truth.field);
    write_labels(dir / "truth_labels.bin", scene.truth.labels);
    write_file(dir / "spec.json", scene_spec_to_json(scene.spec));
}

SceneInputs read_inputs(const std::filesystem::path& dir, bool with_cameras) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("bundle directory '" + dir.string() + "' not found");
    SceneInputs inputs;
    inputs.cloud_t = read_cloud(dir / "cloud_t.bin");
    inputs.cloud_t1 = read_cloud(dir / "cloud_t1.bin");
    const auto calib_path = dir / "calib.json";
    if (!with_cameras) {
        if (std::filesystem::exists(calib_path)) inputs.ego = read_calib(calib_path).ego;
        return inputs;
    }
    const Calibration calib = read_calib(calib_path);
    inputs.ego = calib.ego;
    for (std::size_t i = 0; i < calib.cameras.size(); ++i) {
        CameraFrame frame;
        frame.camera = calib.cameras[i];
        const std::string name = "flow_cam" + std::to_string(i) + ".bin";
        frame.flow = read_flow(dir / name);
        if (frame.flow.width != frame.camera.width || frame.flow.height != frame.camera.height) {
            throw ConfigError(name + " size does not match its camera");
        }
        inputs.cameras.push_back(std::move(frame));
    }
    return inputs;
}

EvalScene read_bundle(const std::filesystem::path& dir, bool with_cameras) {
    EvalScene scene;
    scene.inputs = read_inputs(dir, with_cameras);
    const auto field = read_field(dir / "truth.pmf");
    scene.truth = truth_from_labels(field, read_labels(dir / "truth_labels.bin", field.size()));
    return scene;
}

}  // namespace pml::io
