#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camfit/camera.hpp"
#include "camfit/model.hpp"
#include "camfit/optim.hpp"
#include "camfit/scene.hpp"

namespace camfit {

// One line of a RealEstate10K camera file.
struct Re10kRecord {
    std::int64_t timestamp = 0;  // microseconds
    double fx = 0.5, fy = 0.5, cx = 0.5, cy = 0.5;  // fractions of width / height
    std::array<double, 2> reserved{0.0, 0.0};
    std::array<double, 12> P{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};  // world-to-camera [R | t], row-major
};

struct Re10kFile {
    std::string url;
    std::vector<Re10kRecord> records;
};

inline constexpr double kRe10kRotationTolerance = 1e-4;

// Throws ParseError carrying the offending line (the URL is line 1).
Re10kFile parse_re10k(std::string_view text);
Re10kFile read_re10k(const std::string& path);
std::string serialize_re10k(const Re10kFile& file);

// Camera-to-world pose with pixel intrinsics for an H x W target. The file's
// rotation is projected onto SO(3) first; it is only orthonormal to ~1e-9 after
// 9-digit formatting.
CameraPose record_to_pose(const Re10kRecord& rec, std::size_t height, std::size_t width);
Re10kRecord pose_to_record(const CameraPose& pose, std::size_t height, std::size_t width,
                           std::int64_t timestamp = 0);
// Un-normalized trajectory, one pose per record.
CameraTrajectory re10k_trajectory(const Re10kFile& file, std::size_t height, std::size_t width);

// Little-endian helpers shared by the binary formats.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64s(std::ostream& os, std::span<const double> v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
void read_f64s(std::istream& is, std::span<double> out);

std::string rng_state(const Rng& rng);
Rng rng_from_state(const std::string& state);

struct Checkpoint {
    ModelParams params;
    std::size_t step = 0;
    std::string rng;  // serialized Rng, empty if none
    std::optional<OptimizerState> optimizer;
    OptimizerKind optimizer_kind = OptimizerKind::Lamb;
    std::vector<std::string> optimizer_names;  // parameter order of the optimizer buffers
};

// magic, version, JSON header, f64 payload, CRC32 over everything before it.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// Also throws ConfigMismatch when the stored config or variant differs from `expected`.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

struct DatasetHeader {
    std::uint32_t version = 1;
    std::size_t frames = 8, height = 16, width = 16, channels = 3;
    std::uint64_t count = 0;
    std::uint64_t seed = 0;
    std::string split;
};

// Header followed by one zlib-compressed, CRC-checked record per sample.
class DatasetWriter {
public:
    DatasetWriter(const std::string& path, DatasetHeader header);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void write(const Sample& sample);
    // Patches the sample count into the header.
    void close();

private:
    std::ofstream os_;
    DatasetHeader header_;
    std::uint64_t written_ = 0;
    std::streampos count_pos_;
    bool closed_ = false;
};

class DatasetReader {
public:
    explicit DatasetReader(const std::string& path);
    const DatasetHeader& header() const { return header_; }
    // False once all `count` samples have been read; throws IoError on truncation.
    bool next(Sample& out);

private:
    std::ifstream is_;
    DatasetHeader header_;
    std::uint64_t read_ = 0;
};

void write_dataset(const std::string& path, const std::vector<Sample>& samples, DatasetHeader header);
std::vector<Sample> read_dataset(const std::string& path);

// 8-bit RGB PNG from an H x W x 3 tensor in [0, 1].
void write_png(const std::string& path, const Tensor& image);
// Frames of each F x H x W x 3 video in [-1, 1] laid side by side, one video per row.
Tensor frame_strip(const std::vector<Tensor>& videos);

}  // namespace camfit
