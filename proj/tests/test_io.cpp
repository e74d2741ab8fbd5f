#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <string>

#include "pml/errors.hpp"
#include "pml/io.hpp"
#include "support.hpp"

using namespace pml;

namespace {

float f32(test::Rng& rng, double lo, double hi) { return static_cast<float>(test::uniform(rng, lo, hi)); }

PointCloud random_cloud(test::Rng& rng) {
    PointCloud c;
    const int n = static_cast<int>(rng() % 50);
    for (int i = 0; i < n; ++i) c.points.emplace_back(f32(rng, -50, 50), f32(rng, -50, 50), f32(rng, -3, 3));
    return c;
}

FlowImage random_flow(test::Rng& rng) {
    FlowImage f(1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 7));
    for (std::size_t i = 0; i < f.flow.size(); ++i) {
        f.flow[i] = Vec2(f32(rng, -40, 40), f32(rng, -40, 40));
        f.valid[i] = rng() % 2;
    }
    return f;
}

PillarMotionField random_pmf(test::Rng& rng) {
    const double cell = 0.25 * static_cast<double>(1 + rng() % 4);
    GridSpec g{-cell * 3, cell * 5, -cell * 2, cell * 4, cell};
    PillarMotionField f(g, 0.5);
    for (std::size_t c = 0; c < f.size(); ++c) {
        f.nonempty[c] = rng() % 2;
        f.motion[c] = Vec2(f32(rng, -3, 3), f32(rng, -3, 3));
    }
    return f;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("pml_test_io_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

template <class F>
std::string parse_message(F&& f) {
    try {
        f();
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

void put_f32(std::string& bytes, std::size_t offset, float v) { std::memcpy(bytes.data() + offset, &v, 4); }

}  // namespace

TEST_CASE("binary round trips are exact") {
    test::Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        const auto c = random_cloud(rng);
        const auto enc = io::encode_cloud(c);
        CHECK(enc.size() == 8 + 12 * c.size());
        REQUIRE(io::decode_cloud(enc).points == c.points);
        CHECK(io::encode_cloud(io::decode_cloud(enc)) == enc);

        const auto f = random_flow(rng);
        const auto fenc = io::encode_flow(f);
        const auto fdec = io::decode_flow(fenc);
        REQUIRE(fdec.flow == f.flow);
        REQUIRE(fdec.valid == f.valid);
        CHECK(io::encode_flow(fdec) == fenc);

        const auto m = random_pmf(rng);
        const auto menc = io::encode_field(m);
        const auto mdec = io::decode_field(menc);
        REQUIRE(mdec.motion == m.motion);
        REQUIRE(mdec.nonempty == m.nonempty);
        CHECK(mdec.grid == m.grid);
        CHECK(mdec.horizon == m.horizon);
        CHECK(io::encode_field(mdec) == menc);
    }
}

TEST_CASE("malformed input") {
    PointCloud c;
    c.points = {{1, 2, 3}, {4, 5, 6}};
    auto bytes = io::encode_cloud(c);

    const auto truncated = bytes.substr(0, bytes.size() - 4);
    const auto msg = parse_message([&] { io::decode_cloud(truncated); });
    CHECK(msg.find("expected 32 bytes") != std::string::npos);
    CHECK(msg.find("got 28") != std::string::npos);
    CHECK_THROWS_AS(io::decode_cloud(bytes + "x"), ParseError);
    CHECK_THROWS_AS(io::decode_cloud(bytes.substr(0, 5)), ParseError);

    auto bad = bytes;
    bad[0] = 'X';
    try {
        io::decode_cloud(bad);
        FAIL("no error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 0);
    }
    CHECK_THROWS_AS(io::decode_flow(bytes), ParseError);

    auto nan = bytes;
    put_f32(nan, 8 + 4 * 4, std::numeric_limits<float>::quiet_NaN());
    try {
        io::decode_cloud(nan);
        FAIL("no error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 24);
    }

    CHECK_THROWS_AS(io::decode_cloud(bytes, 16), ParseError);
    // A huge declared count is refused before allocation.
    auto huge = bytes;
    const std::uint32_t big = 0xFFFFFFF0u;
    std::memcpy(huge.data() + 4, &big, 4);
    CHECK_THROWS_AS(io::decode_cloud(huge), ParseError);

    c.points[1].x() = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(io::encode_cloud(c), ConfigError);
    c.points[1].x() = 1e300;  // overflows f32
    CHECK_THROWS_AS(io::encode_cloud(c), ConfigError);
}

TEST_CASE("labels file") {
    const auto dir = scratch("labels");
    const std::vector<std::uint8_t> labels{1, 0, 12, 255};
    io::write_labels(dir / "l.bin", labels);
    CHECK(io::read_labels(dir / "l.bin", 4) == labels);
    CHECK_THROWS_AS(io::read_labels(dir / "l.bin", 5), ParseError);
    CHECK_THROWS_AS(io::read_cloud(dir / "missing.bin"), ConfigError);
}

TEST_CASE("calibration json") {
    io::Calibration calib;
    calib.cameras.push_back(test::forward_camera(300, 64, 48, Vec3(0.1, 0.2, 0.3)));
    calib.ego = RigidTransform::from_yaw(0.1, Vec3(1, 2, 0));
    const auto parsed = io::parse_calib(io::calib_to_json(calib));
    REQUIRE(parsed.cameras.size() == 1);
    CHECK((parsed.cameras[0].intrinsics - calib.cameras[0].intrinsics).norm() == 0.0);
    CHECK(parsed.cameras[0].width == 64);
    CHECK((parsed.ego.translation() - calib.ego.translation()).norm() == 0.0);

    try {
        io::parse_calib(R"({"cameras": [{"extrinsic_rotation": [1,0,0,0,1,0,0,0,1], "extrinsic_translation": [0,0,0],
                            "width": 4, "height": 4}]})");
        FAIL("no error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("intrinsics") != std::string::npos);
    }
    CHECK_THROWS_AS(io::parse_calib("{not json"), ParseError);
    CHECK_THROWS_AS(io::parse_calib(R"({"cameras": [], "extra": 1})"), ConfigError);
}

TEST_CASE("scene spec json") {
    auto spec = random_scene_spec(5, centered_grid(32, 0.5), 0.05);
    const auto text = io::scene_spec_to_json(spec);
    const auto back = io::parse_scene_spec(text);
    CHECK(io::scene_spec_to_json(back) == text);
    CHECK(back.objects.size() == spec.objects.size());
    CHECK(back.grid == spec.grid);
    CHECK(back.interval == spec.interval);
    CHECK_THROWS_AS(io::parse_scene_spec(R"({"intervall": 0.1})"), ConfigError);
    CHECK_THROWS_AS(io::parse_scene_spec(R"({"interval": "fast"})"), ConfigError);
    CHECK_THROWS_AS(io::parse_scene_spec(R"({"objects": [{"center": [0, 0], "wheels": 4}]})"), ConfigError);
    CHECK(io::parse_scene_spec("{}").objects.empty());
}

TEST_CASE("bundle round trip") {
    auto spec = random_scene_spec(8, centered_grid(32, 0.5), 0.05);
    spec.lidar.azimuth_step_deg = 1.0;
    const auto scene = generate(spec);
    const auto dir = scratch("bundle");
    io::write_bundle(dir, scene);
    const auto loaded = io::read_bundle(dir);
    REQUIRE(loaded.inputs.cloud_t.size() == scene.inputs.cloud_t.size());
    REQUIRE(loaded.inputs.cameras.size() == scene.inputs.cameras.size());
    for (std::size_t i = 0; i < scene.inputs.cloud_t.size(); ++i) {
        CHECK((loaded.inputs.cloud_t.points[i] - scene.inputs.cloud_t.points[i]).norm() < 1e-4);
    }
    CHECK(loaded.truth.labels == scene.truth.labels);
    CHECK(loaded.truth.field.grid == scene.truth.field.grid);
    CHECK((loaded.inputs.ego.rotation() - scene.inputs.ego.rotation()).norm() < 1e-12);
    CHECK((loaded.inputs.ego.translation() - scene.inputs.ego.translation()).norm() < 1e-12);

    const auto bare = io::read_bundle(dir, false);
    CHECK(bare.inputs.cameras.empty());
    std::filesystem::remove(dir / "flow_cam0.bin");
    CHECK_NOTHROW(io::read_bundle(dir, false));
    CHECK_THROWS_AS(io::read_bundle(dir), ConfigError);
}
