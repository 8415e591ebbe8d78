#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "camfit/io.hpp"
#include "doctest.h"
#include "model_fixtures.hpp"
#include "random_geometry.hpp"

using namespace camfit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "camfit_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_bytes(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << s;
}

std::string g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

const char* kIdentityLine = "0 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1 0";

// Record whose values survive %.9g unchanged, so text -> record -> text is exact.
std::string synthetic_file(Rng& rng, int lines) {
    std::string text = "https://www.youtube.com/watch?v=synthetic\n";
    for (int i = 0; i < lines; ++i) {
        const Mat3 R = camfit::testing::random_rotation(rng);
        std::string line = std::to_string(33366666LL * i);
        std::uniform_real_distribution<double> u(0.3, 0.7);
        for (int k = 0; k < 4; ++k) line += " " + g9(std::stod(g9(u(rng))));
        line += " 0 0";
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) line += " " + g9(R(r, c));
            line += " " + g9(std::stod(g9(u(rng) - 0.5)));
        }
        text += line + "\n";
    }
    return text;
}

}  // namespace

TEST_CASE("re10k identity line") {
    const std::string text = std::string("https://example.com/v\n") + kIdentityLine + "\n";
    const Re10kFile f = parse_re10k(text);
    CHECK(f.url == "https://example.com/v");
    REQUIRE(f.records.size() == 1);
    const CameraPose p = record_to_pose(f.records[0], 16, 32);
    CHECK(p.R == Mat3::Identity());
    CHECK(p.t.norm() == 0.0);
    CHECK(p.K(0, 0) == 16.0);
    CHECK(p.K(1, 1) == 8.0);
    CHECK(p.K(0, 2) == 16.0);
    CHECK(p.K(1, 2) == 8.0);
}

TEST_CASE("re10k serialization") {
    SUBCASE("empty record list is the URL line only") {
        CHECK(serialize_re10k(Re10kFile{"u", {}}) == "u\n");
        CHECK(parse_re10k("u\n").records.empty());
    }
    SUBCASE("one record matches a hand-built string") {
        Re10kRecord r;
        r.timestamp = 1234567;
        r.fx = 0.123456789012;
        r.fy = 1.0 / 3.0;
        r.cx = 0.5;
        r.cy = 0.25;
        r.P = {1, 0, 0, 2.5, 0, 1, 0, -1e-7, 0, 0, 1, 100};
        const std::string expect =
            "u\n1234567 0.123456789 0.333333333 0.5 0.25 0 0 1 0 0 2.5 0 1 0 -1e-07 0 0 1 100\n";
        CHECK(serialize_re10k(Re10kFile{"u", {r}}) == expect);
    }
    SUBCASE("synthetic files round trip byte-exactly") {
        Rng rng(1);
        for (int trial = 0; trial < 20; ++trial) {
            const std::string text = synthetic_file(rng, 1 + trial);
            CHECK(serialize_re10k(parse_re10k(text)) == text);
        }
    }
}

TEST_CASE("re10k malformed lines name their line") {
    const std::string url = "https://example.com/v\n";
    const std::string good = std::string(kIdentityLine) + "\n";
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_re10k(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of(url + good + "0 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1\n") == 3);
    CHECK(line_of(url + good + good + "0 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1 0 7\n") == 4);
    CHECK(line_of(url + "0 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 x 0\n") == 2);
    CHECK(line_of(url + good + "0.5 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1 0\n") == 3);
    CHECK(line_of(url + good + "0 0.5 0.5 0.5 0.5 0 0 1.01 0 0 0 0 1 0 0 0 0 1 0\n") == 3);
    CHECK(line_of(url + good + "0 0.5 0.5 0.5 0.5 0 0 -1 0 0 0 0 1 0 0 0 0 1 0\n") == 3);  // reflection
    CHECK(line_of(url + good + "\n") == 3);
    CHECK(line_of("") == 1);
    CHECK(line_of(url + good + "0 0.5 0.5 0.5 0.5 0 0 1.00001 0 0 0 0 1 0 0 0 0 1 0\n") == 0);
    CHECK_THROWS_AS(read_re10k(scratch("missing.txt").string()), IoError);
}

TEST_CASE("re10k convention conversion round trips") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const CameraPose pose = camfit::testing::random_pose(rng, 16, 24);
        const Re10kRecord rec = pose_to_record(pose, 16, 24);
        // oracle: the file holds the world-to-camera matrix [R^T | -R^T t]
        const Mat3 Rw = pose.R.transpose();
        const Vec3 tw = -Rw * pose.t;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) CHECK(std::abs(rec.P[r * 4 + c] - Rw(r, c)) < 1e-15);
            CHECK(std::abs(rec.P[r * 4 + 3] - tw[r]) < 1e-12);
        }
        const CameraPose back = record_to_pose(rec, 16, 24);
        CHECK((back.R - pose.R).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.t - pose.t).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.K - pose.K).cwiseAbs().maxCoeff() < 1e-12);
        const Re10kRecord again = pose_to_record(back, 16, 24);
        for (int i = 0; i < 12; ++i) CHECK(std::abs(again.P[i] - rec.P[i]) < 1e-12);
    }
}

TEST_CASE("re10k rotations within source tolerance become exact poses") {
    Re10kRecord rec;
    rec.P[0] = 1.00005;
    const CameraPose p = record_to_pose(rec, 8, 8);
    CHECK_NOTHROW(validate_pose(p));
}

TEST_CASE("checkpoint round trip") {
    Rng rng(3);
    for (Variant v : {Variant::Base, Variant::Full, Variant::NoPlucker, Variant::PluckerContext}) {
        ModelConfig cfg = camfit::testing::small_config(v);
        ModelParams m = build_variant(cfg, rng);
        camfit::testing::perturb_zero_tensors(m, rng);
        Checkpoint ck{m, 17, rng_state(rng), std::nullopt};
        const auto path = scratch("ck.bin").string();
        save_checkpoint(path, ck);
        const Checkpoint back = load_checkpoint(path, cfg);
        CHECK(back.step == 17);
        CHECK(back.rng == rng_state(rng));
        const ModelInput in = camfit::testing::random_input(m, rng);
        const Tensor a = model_forward(m, in);
        const Tensor b = model_forward(back.params, in);
        for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
    }
}

TEST_CASE("checkpoint optimizer state and errors") {
    Rng rng(4);
    const ModelConfig cfg = camfit::testing::small_config(Variant::Full);
    ModelParams m = build_variant(cfg, rng);
    Checkpoint ck{m, 5, "", OptimizerState{9, {{1.0, 2.0}, {3.0}}, {{4.0, 5.0}, {6.0}}, {true, false}}, OptimizerKind::AdamW,
                  {"a", "b"}};
    const auto path = scratch("ck_opt.bin").string();
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    REQUIRE(back.optimizer.has_value());
    CHECK(back.optimizer->step == 9);
    CHECK(back.optimizer->m == ck.optimizer->m);
    CHECK(back.optimizer->v == ck.optimizer->v);
    CHECK(back.optimizer->adapt == ck.optimizer->adapt);
    CHECK(back.optimizer_names == ck.optimizer_names);
    CHECK(back.optimizer_kind == OptimizerKind::AdamW);

    SUBCASE("cross-variant load rejected") {
        CHECK_THROWS_AS(load_checkpoint(path, camfit::testing::small_config(Variant::NoPlucker)), ConfigMismatch);
        ModelConfig wider = cfg;
        wider.dim = 64;
        CHECK_THROWS_AS(load_checkpoint(path, wider), ConfigMismatch);
    }
    SUBCASE("any flipped byte is caught") {
        const std::string bytes = read_bytes(path);
        for (std::size_t pos : {std::size_t{9}, bytes.size() / 2, bytes.size() - 20, bytes.size() - 1}) {
            std::string bad = bytes;
            bad[pos] ^= 0x10;
            write_bytes(scratch("tampered.bin"), bad);
            CHECK_THROWS_AS(load_checkpoint(scratch("tampered.bin").string()), ChecksumError);
        }
        write_bytes(scratch("short.bin"), bytes.substr(0, bytes.size() / 3));
        CHECK_THROWS_AS(load_checkpoint(scratch("short.bin").string()), IoError);
    }
    SUBCASE("checksum-valid file with an incomplete header") {
        std::ostringstream os;
        os << "CAMFITCK";
        write_u32(os, 1);
        const std::string head = R"({"step": 0})";
        write_u64(os, head.size());
        os << head;
        std::string body = os.str();
        std::uint32_t crc = 0xffffffffu;  // bitwise CRC-32, reflected 0xedb88320
        for (unsigned char c : body) {
            crc ^= c;
            for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
        }
        std::ostringstream tail;
        write_u32(tail, ~crc);
        write_bytes(scratch("headless.bin"), body + tail.str());
        CHECK_THROWS_WITH_AS(load_checkpoint(scratch("headless.bin").string()), doctest::Contains("malformed"),
                             IoError);
    }
}

TEST_CASE("little-endian primitives") {
    std::ostringstream os(std::ios::binary);
    write_u32(os, 0x01020304u);
    write_f64s(os, std::vector<double>{1.0});
    const std::string s = os.str();
    CHECK(static_cast<unsigned char>(s[0]) == 0x04);
    CHECK(static_cast<unsigned char>(s[3]) == 0x01);
    // 1.0 = 0x3FF0000000000000
    CHECK(static_cast<unsigned char>(s[10]) == 0xF0);
    CHECK(static_cast<unsigned char>(s[11]) == 0x3F);
    const Rng a(99);
    Rng b = rng_from_state(rng_state(a));
    Rng c = a;
    CHECK(b() == c());
}

TEST_CASE("dataset container") {
    SynthConfig cfg;
    const auto split = build_dataset(5, 0, cfg, 7);
    DatasetHeader h;
    h.seed = 7;
    h.split = "train";
    const auto path = scratch("ds.bin").string();
    write_dataset(path, split.train, h);

    SUBCASE("round trip equality") {
        DatasetReader r(path);
        CHECK(r.header().count == 5);
        CHECK(r.header().split == "train");
        Sample s;
        std::size_t i = 0;
        while (r.next(s)) {
            const Sample& o = split.train[i++];
            CHECK(s.scene_id == o.scene_id);
            CHECK(s.descriptor == o.descriptor);
            CHECK(s.kind == o.kind);
            CHECK(s.mask == o.mask);
            CHECK(s.trajectory.normalized);
            for (std::size_t f = 0; f < 8; ++f) {
                CHECK(s.trajectory.poses[f].R == o.trajectory.poses[f].R);
                CHECK(s.trajectory.poses[f].t == o.trajectory.poses[f].t);
                CHECK(s.trajectory.poses[f].K == o.trajectory.poses[f].K);
            }
            for (std::size_t k = 0; k < s.video.numel(); ++k) REQUIRE(s.video[k] == o.video[k]);
        }
        CHECK(i == 5);
    }
    SUBCASE("same seed gives identical bytes") {
        const auto other = scratch("ds2.bin").string();
        write_dataset(other, build_dataset(5, 0, cfg, 7).train, h);
        CHECK(read_bytes(path) == read_bytes(other));
    }
    SUBCASE("truncation is detected") {
        const std::string bytes = read_bytes(path);
        write_bytes(scratch("trunc.bin"), bytes.substr(0, bytes.size() - 100));
        CHECK_THROWS_AS(read_dataset(scratch("trunc.bin").string()), IoError);
    }
    SUBCASE("header-only file has zero samples") {
        const auto empty = scratch("empty.bin").string();
        write_dataset(empty, {}, h);
        CHECK(read_dataset(empty).empty());
    }
    SUBCASE("version mismatch") {
        std::string bytes = read_bytes(path);
        bytes[8] = 9;
        write_bytes(scratch("v9.bin"), bytes);
        CHECK_THROWS_AS(DatasetReader(scratch("v9.bin").string()), IoError);
    }
    SUBCASE("shape mismatch on write") {
        DatasetHeader wrong = h;
        wrong.frames = 4;
        CHECK_THROWS_AS(write_dataset(scratch("bad.bin").string(), split.train, wrong), ShapeError);
    }
}

TEST_CASE("png and frame strip") {
    Rng rng(5);
    const Tensor a = Tensor::uniform({3, 2, 2, 3}, rng, -1.0, 1.0);
    const Tensor b = Tensor::uniform({3, 2, 2, 3}, rng, -1.0, 1.0);
    const Tensor strip = frame_strip({a, b});
    CHECK(strip.shape() == Shape{4, 6, 3});
    // row 1 of video b, frame 2, column 1
    CHECK(strip[((2 + 1) * 6 + 2 * 2 + 1) * 3 + 2] == 0.5 * (b[((2 * 2 + 1) * 2 + 1) * 3 + 2] + 1.0));
    const auto path = scratch("s.png").string();
    write_png(path, strip);
    const std::string bytes = read_bytes(path);
    CHECK(bytes.substr(1, 3) == "PNG");
    CHECK(bytes.substr(12, 4) == "IHDR");
    CHECK(bytes.substr(bytes.size() - 8, 4) == "IEND");
}
