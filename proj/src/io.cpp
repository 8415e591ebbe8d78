#include "camfit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include <zlib.h>

#include "json.hpp"

namespace camfit {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
        throw ParseError(line, "non-numeric token '" + std::string(tok) + "'");
    return v;
}

std::int64_t parse_int(std::string_view tok, std::size_t line) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(line, "timestamp '" + std::string(tok) + "' is not an integer");
    return v;
}

Mat3 rotation_of(const std::array<double, 12>& P) {
    Mat3 R;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) R(r, c) = P[r * 4 + c];
    return R;
}

Vec3 translation_of(const std::array<double, 12>& P) { return Vec3(P[3], P[7], P[11]); }

Mat3 nearest_rotation(const Mat3& M) {
    Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0) {
        Mat3 U = svd.matrixU();
        U.col(2) *= -1.0;
        R = U * svd.matrixV().transpose();
    }
    return R;
}

std::string format_g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

Re10kFile parse_re10k(std::string_view text) {
    Re10kFile file;
    std::size_t pos = 0, line_no = 0;
    bool have_url = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!have_url) {
            if (split_fields(line).size() != 1) throw ParseError(line_no, "first line must be the source URL");
            file.url = std::string(split_fields(line)[0]);
            have_url = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 19)
            throw ParseError(line_no, "expected 19 fields, found " + std::to_string(fields.size()));
        Re10kRecord rec;
        rec.timestamp = parse_int(fields[0], line_no);
        rec.fx = parse_double(fields[1], line_no);
        rec.fy = parse_double(fields[2], line_no);
        rec.cx = parse_double(fields[3], line_no);
        rec.cy = parse_double(fields[4], line_no);
        rec.reserved[0] = parse_double(fields[5], line_no);
        rec.reserved[1] = parse_double(fields[6], line_no);
        for (int i = 0; i < 12; ++i) rec.P[i] = parse_double(fields[7 + i], line_no);
        try {
            validate_rotation(rotation_of(rec.P), kRe10kRotationTolerance);
        } catch (const ValidationError& e) {
            throw ParseError(line_no, e.what());
        }
        if (rec.fx <= 0.0 || rec.fy <= 0.0) throw ParseError(line_no, "focal lengths must be positive");
        file.records.push_back(rec);
    }
    if (!have_url) throw ParseError(1, "missing source URL line");
    return file;
}

Re10kFile read_re10k(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_re10k(ss.str());
}

std::string serialize_re10k(const Re10kFile& file) {
    std::string out = file.url + "\n";
    for (const auto& r : file.records) {
        out += std::to_string(r.timestamp);
        for (double v : {r.fx, r.fy, r.cx, r.cy, r.reserved[0], r.reserved[1]}) out += " " + format_g9(v);
        for (double v : r.P) out += " " + format_g9(v);
        out += "\n";
    }
    return out;
}

CameraPose record_to_pose(const Re10kRecord& rec, std::size_t height, std::size_t width) {
    const Mat3 Rw2c = nearest_rotation(rotation_of(rec.P));
    CameraPose pose;
    pose.R = Rw2c.transpose();
    pose.t = -(Rw2c.transpose() * translation_of(rec.P));
    const double w = static_cast<double>(width), h = static_cast<double>(height);
    pose.K = make_intrinsics(rec.fx * w, rec.fy * h, rec.cx * w, rec.cy * h);
    return pose;
}

Re10kRecord pose_to_record(const CameraPose& pose, std::size_t height, std::size_t width, std::int64_t timestamp) {
    Re10kRecord rec;
    rec.timestamp = timestamp;
    const double w = static_cast<double>(width), h = static_cast<double>(height);
    rec.fx = pose.K(0, 0) / w;
    rec.fy = pose.K(1, 1) / h;
    rec.cx = pose.K(0, 2) / w;
    rec.cy = pose.K(1, 2) / h;
    const Mat3 R = pose.R.transpose();
    const Vec3 t = -(R * pose.t);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rec.P[r * 4 + c] = R(r, c);
        rec.P[r * 4 + 3] = t[r];
    }
    return rec;
}

CameraTrajectory re10k_trajectory(const Re10kFile& file, std::size_t height, std::size_t width) {
    CameraTrajectory traj;
    for (const auto& rec : file.records) traj.poses.push_back(record_to_pose(rec, height, width));
    return traj;
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64s(std::ostream& os, std::span<const double> v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    } else {
        for (double d : v) write_u64(os, std::bit_cast<std::uint64_t>(d));
    }
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void read_f64s(std::istream& is, std::span<double> out) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * 8)))
            throw IoError("unexpected end of file");
    } else {
        for (double& d : out) d = std::bit_cast<double>(read_u64(is));
    }
}

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_state(const std::string& state) {
    Rng rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw IoError("malformed RNG state");
    return rng;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'A', 'M', 'F', 'I', 'T', 'C', 'K'};
constexpr char kDatasetMagic[8] = {'C', 'A', 'M', 'F', 'I', 'T', 'D', 'S'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;

json config_json(const ModelConfig& c) {
    return json{{"blocks", c.blocks},
                {"latents", c.latents},
                {"dim", c.dim},
                {"heads", c.heads},
                {"patch_h", c.patch_h},
                {"patch_w", c.patch_w},
                {"frames", c.frames},
                {"height", c.height},
                {"width", c.width},
                {"channels", c.channels},
                {"self_attn_per_block", c.self_attn_per_block},
                {"ff_mult", c.ff_mult},
                {"conv_kernel", c.conv_kernel},
                {"vocab", c.vocab},
                {"sigma_features", c.sigma_features},
                {"variant", std::string(variant_name(c.variant))},
                {"ray_mode", c.ray_mode == RayMode::Geometric ? "geometric" : "forward_k"}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.blocks = j.at("blocks");
    c.latents = j.at("latents");
    c.dim = j.at("dim");
    c.heads = j.at("heads");
    c.patch_h = j.at("patch_h");
    c.patch_w = j.at("patch_w");
    c.frames = j.at("frames");
    c.height = j.at("height");
    c.width = j.at("width");
    c.channels = j.at("channels");
    c.self_attn_per_block = j.at("self_attn_per_block");
    c.ff_mult = j.at("ff_mult");
    c.conv_kernel = j.at("conv_kernel");
    c.vocab = j.at("vocab");
    c.sigma_features = j.at("sigma_features");
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.ray_mode = j.at("ray_mode").get<std::string>() == "geometric" ? RayMode::Geometric : RayMode::ForwardK;
    return c;
}

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ModelParams params = ckpt.params.clone();
    json tensors = json::array();
    std::ostringstream payload(std::ios::binary);
    std::uint64_t offset = 0;
    for (auto& [name, t] : params.named_parameters()) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        write_f64s(payload, t.data());
        offset += t.numel();
    }
    json header{{"config", config_json(params.config)},
                {"step", ckpt.step},
                {"rng", ckpt.rng},
                {"tensors", tensors}};
    if (ckpt.optimizer) {
        const auto& st = *ckpt.optimizer;
        if (st.m.size() != ckpt.optimizer_names.size() || st.v.size() != st.m.size())
            throw ContractError("checkpoint: optimizer buffers and names disagree");
        json bufs = json::array();
        for (std::size_t i = 0; i < st.m.size(); ++i) {
            if (st.adapt.size() != st.m.size()) throw ContractError("checkpoint: optimizer adapt flags missing");
            bufs.push_back({{"name", ckpt.optimizer_names[i]},
                            {"size", st.m[i].size()},
                            {"offset", offset},
                            {"adapt", static_cast<bool>(st.adapt[i])}});
            write_f64s(payload, st.m[i]);
            write_f64s(payload, st.v[i]);
            offset += 2 * st.m[i].size();
        }
        header["optimizer"] = {{"kind", ckpt.optimizer_kind == OptimizerKind::Lamb ? "lamb" : "adamw"},
                               {"step", st.step},
                               {"buffers", bufs}};
    }
    const std::string head = header.dump();

    std::ostringstream all(std::ios::binary);
    all.write(kCheckpointMagic, 8);
    write_u32(all, kCheckpointVersion);
    write_u64(all, head.size());
    all << head;
    all << payload.str();
    std::string bytes = all.str();
    std::ostringstream crc(std::ios::binary);
    write_u32(crc, crc_of(bytes));
    bytes += crc.str();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into " + path);
}

static Checkpoint parse_checkpoint(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw IoError(path + ": not a checkpoint");
    {
        std::istringstream tail(bytes.substr(bytes.size() - 4));
        if (read_u32(tail) != crc_of(bytes.substr(0, bytes.size() - 4)))
            throw ChecksumError(path + ": checksum mismatch");
    }
    std::istringstream is(bytes.substr(8, bytes.size() - 12), std::ios::binary);
    const std::uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t head_len = read_u64(is);
    std::string head(head_len, '\0');
    if (!is.read(head.data(), static_cast<std::streamsize>(head_len))) throw IoError(path + ": truncated header");
    const json header = json::parse(head);
    const std::size_t payload_start = static_cast<std::size_t>(is.tellg());
    const std::size_t payload_doubles = (bytes.size() - 12 - payload_start) / 8;
    std::vector<double> payload(payload_doubles);
    read_f64s(is, payload);

    Checkpoint ckpt;
    const ModelConfig cfg = config_from_json(header.at("config"));
    Rng scratch(0);
    ckpt.params = build_variant(cfg, scratch);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : ckpt.params.named_parameters()) by_name.emplace(name, t);
    if (header.at("tensors").size() != by_name.size())
        throw ConfigMismatch(path + ": tensor count differs from the stored architecture");
    for (const auto& e : header.at("tensors")) {
        const std::string name = e.at("name");
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigMismatch(path + ": unexpected tensor " + name);
        Tensor& t = it->second;
        if (e.at("shape").get<Shape>() != t.shape())
            throw ConfigMismatch(path + ": shape mismatch for " + name);
        const std::size_t off = e.at("offset");
        if (off + t.numel() > payload.size()) throw IoError(path + ": payload too short");
        auto dst = t.mutable_data();
        std::copy(payload.begin() + static_cast<std::ptrdiff_t>(off),
                  payload.begin() + static_cast<std::ptrdiff_t>(off + t.numel()), dst.begin());
    }
    ckpt.step = header.at("step");
    ckpt.rng = header.at("rng");
    if (header.contains("optimizer")) {
        const json& o = header["optimizer"];
        ckpt.optimizer_kind = o.at("kind") == "lamb" ? OptimizerKind::Lamb : OptimizerKind::AdamW;
        OptimizerState st;
        st.step = o.at("step");
        for (const auto& b : o.at("buffers")) {
            const std::size_t off = b.at("offset"), n = b.at("size");
            if (off + 2 * n > payload.size()) throw IoError(path + ": payload too short");
            const auto first = payload.begin() + static_cast<std::ptrdiff_t>(off);
            st.m.emplace_back(first, first + static_cast<std::ptrdiff_t>(n));
            st.v.emplace_back(first + static_cast<std::ptrdiff_t>(n), first + static_cast<std::ptrdiff_t>(2 * n));
            st.adapt.push_back(b.at("adapt").get<bool>());
            ckpt.optimizer_names.push_back(b.at("name"));
        }
        ckpt.optimizer = std::move(st);
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
    try {
        return parse_checkpoint(path);
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint header (" + e.what() + ")");
    }
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    const ModelConfig& got = ckpt.params.config;
    if (got.variant != expected.variant)
        throw ConfigMismatch(path + ": checkpoint holds variant " + std::string(variant_name(got.variant)) +
                             ", expected " + std::string(variant_name(expected.variant)));
    if (!got.same_shape(expected)) throw ConfigMismatch(path + ": model config differs from the requested one");
    return ckpt;
}

// ---------------------------------------------------------------- datasets

namespace {

std::string encode_sample(const Sample& s, const DatasetHeader& h) {
    if (s.video.shape() != Shape{h.frames, h.height, h.width, h.channels})
        throw ShapeError("dataset: sample video " + shape_str(s.video.shape()) + " does not match the header");
    if (s.trajectory.frames() != h.frames || s.mask.size() != h.frames)
        throw ShapeError("dataset: trajectory or mask length does not match the header");
    std::ostringstream os(std::ios::binary);
    write_u64(os, s.scene_id);
    write_u32(os, s.descriptor);
    write_u32(os, static_cast<std::uint32_t>(s.kind));
    os.put(s.trajectory.normalized ? 1 : 0);
    for (bool m : s.mask) os.put(m ? 1 : 0);
    for (const auto& p : s.trajectory.poses) write_f64s(os, flatten_camera(p));
    write_f64s(os, s.video.data());
    return os.str();
}

Sample decode_sample(const std::string& bytes, const DatasetHeader& h) {
    std::istringstream is(bytes, std::ios::binary);
    Sample s;
    s.scene_id = read_u64(is);
    s.descriptor = read_u32(is);
    s.kind = static_cast<TrajectoryKind>(read_u32(is));
    char flag = 0;
    is.get(flag);
    s.trajectory.normalized = flag != 0;
    s.mask.resize(h.frames);
    for (std::size_t f = 0; f < h.frames; ++f) {
        char m = 0;
        if (!is.get(m)) throw IoError("dataset: record too short");
        s.mask[f] = m != 0;
    }
    for (std::size_t f = 0; f < h.frames; ++f) {
        std::array<double, kRawCameraValues> v{};
        read_f64s(is, v);
        CameraPose p;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                p.R(r, c) = v[r * 3 + c];
                p.K(r, c) = v[12 + r * 3 + c];
            }
        p.t = Vec3(v[9], v[10], v[11]);
        s.trajectory.poses.push_back(p);
    }
    std::vector<double> video(h.frames * h.height * h.width * h.channels);
    read_f64s(is, video);
    s.video = Tensor({h.frames, h.height, h.width, h.channels}, std::move(video));
    return s;
}

}  // namespace

DatasetWriter::DatasetWriter(const std::string& path, DatasetHeader header)
    : os_(path, std::ios::binary | std::ios::trunc), header_(std::move(header)) {
    if (!os_) throw IoError("cannot write " + path);
    header_.version = kDatasetVersion;
    const std::string head = json{{"frames", header_.frames},
                                  {"height", header_.height},
                                  {"width", header_.width},
                                  {"channels", header_.channels},
                                  {"seed", header_.seed},
                                  {"split", header_.split}}
                                 .dump();
    os_.write(kDatasetMagic, 8);
    write_u32(os_, header_.version);
    write_u64(os_, head.size());
    os_ << head;
    count_pos_ = os_.tellp();
    write_u64(os_, 0);
}

DatasetWriter::~DatasetWriter() {
    try {
        close();
    } catch (...) {
    }
}

void DatasetWriter::write(const Sample& sample) {
    if (closed_) throw ContractError("dataset: write after close");
    const std::string raw = encode_sample(sample, header_);
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::string comp(comp_len, '\0');
    if (compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_len, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("dataset: compression failed");
    comp.resize(comp_len);
    write_u64(os_, raw.size());
    write_u64(os_, comp.size());
    write_u32(os_, crc_of(comp));
    os_.write(comp.data(), static_cast<std::streamsize>(comp.size()));
    if (!os_) throw IoError("dataset: write failed");
    ++written_;
}

void DatasetWriter::close() {
    if (closed_) return;
    closed_ = true;
    os_.seekp(count_pos_);
    write_u64(os_, written_);
    os_.close();
    if (os_.fail()) throw IoError("dataset: failed to finalize");
}

DatasetReader::DatasetReader(const std::string& path) : is_(path, std::ios::binary) {
    if (!is_) throw IoError("cannot open " + path);
    char magic[8];
    if (!is_.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0) throw IoError(path + ": not a dataset");
    header_.version = read_u32(is_);
    if (header_.version != kDatasetVersion)
        throw IoError(path + ": dataset version " + std::to_string(header_.version) + " is not supported");
    const std::uint64_t len = read_u64(is_);
    std::string head(len, '\0');
    if (!is_.read(head.data(), static_cast<std::streamsize>(len))) throw IoError(path + ": truncated header");
    try {
        const json j = json::parse(head);
        header_.frames = j.at("frames");
        header_.height = j.at("height");
        header_.width = j.at("width");
        header_.channels = j.at("channels");
        header_.seed = j.at("seed");
        header_.split = j.at("split");
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed dataset header (" + e.what() + ")");
    }
    header_.count = read_u64(is_);
}

bool DatasetReader::next(Sample& out) {
    if (read_ == header_.count) return false;
    try {
        const std::uint64_t raw_len = read_u64(is_);
        const std::uint64_t comp_len = read_u64(is_);
        const std::uint32_t crc = read_u32(is_);
        std::string comp(comp_len, '\0');
        if (!is_.read(comp.data(), static_cast<std::streamsize>(comp_len))) throw IoError("short record");
        if (crc_of(comp) != crc) throw ChecksumError("dataset: record " + std::to_string(read_) + " corrupt");
        std::string raw(raw_len, '\0');
        uLongf got = static_cast<uLongf>(raw_len);
        if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &got, reinterpret_cast<const Bytef*>(comp.data()),
                       static_cast<uLong>(comp.size())) != Z_OK ||
            got != raw_len)
            throw IoError("dataset: record " + std::to_string(read_) + " failed to decompress");
        out = decode_sample(raw, header_);
    } catch (const ChecksumError&) {
        throw;
    } catch (const IoError& e) {
        throw IoError("dataset truncated at sample " + std::to_string(read_) + " of " +
                      std::to_string(header_.count) + " (" + e.what() + ")");
    }
    ++read_;
    return true;
}

void write_dataset(const std::string& path, const std::vector<Sample>& samples, DatasetHeader header) {
    DatasetWriter w(path, std::move(header));
    for (const auto& s : samples) w.write(s);
    w.close();
}

std::vector<Sample> read_dataset(const std::string& path) {
    DatasetReader r(path);
    std::vector<Sample> out;
    Sample s;
    while (r.next(s)) out.push_back(std::move(s));
    return out;
}

// ---------------------------------------------------------------- images

namespace {

void png_chunk(std::ostream& os, const char type[4], const std::string& data) {
    std::string be(4, '\0');
    const auto n = static_cast<std::uint32_t>(data.size());
    for (int i = 0; i < 4; ++i) be[i] = static_cast<char>(n >> (24 - 8 * i));
    os << be;
    std::string body(type, 4);
    body += data;
    os << body;
    const std::uint32_t crc = crc_of(body);
    for (int i = 0; i < 4; ++i) be[i] = static_cast<char>(crc >> (24 - 8 * i));
    os << be;
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("write_png expects H x W x 3");
    const std::size_t h = image.dim(0), w = image.dim(1);
    std::string raw;
    raw.reserve(h * (w * 3 + 1));
    for (std::size_t r = 0; r < h; ++r) {
        raw.push_back(0);
        for (std::size_t i = 0; i < w * 3; ++i) {
            const double v = std::clamp(image[r * w * 3 + i], 0.0, 1.0);
            raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::string comp(comp_len, '\0');
    compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_len, reinterpret_cast<const Bytef*>(raw.data()),
              static_cast<uLong>(raw.size()), 9);
    comp.resize(comp_len);

    std::string ihdr(13, '\0');
    for (int i = 0; i < 4; ++i) {
        ihdr[i] = static_cast<char>(w >> (24 - 8 * i));
        ihdr[4 + i] = static_cast<char>(h >> (24 - 8 * i));
    }
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // truecolour
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path);
    os.write("\x89PNG\r\n\x1a\n", 8);
    png_chunk(os, "IHDR", ihdr);
    png_chunk(os, "IDAT", comp);
    png_chunk(os, "IEND", "");
    if (!os) throw IoError("write failed for " + path);
}

Tensor frame_strip(const std::vector<Tensor>& videos) {
    if (videos.empty()) throw ShapeError("frame_strip: no videos");
    const Shape s = videos[0].shape();
    if (s.size() != 4 || s[3] != 3) throw ShapeError("frame_strip expects F x H x W x 3 videos");
    const std::size_t F = s[0], H = s[1], W = s[2], rows = videos.size();
    std::vector<double> out(rows * H * F * W * 3);
    for (std::size_t v = 0; v < rows; ++v) {
        if (videos[v].shape() != s) throw ShapeError("frame_strip: videos differ in shape");
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        out[((v * H + y) * F * W + f * W + x) * 3 + c] =
                            0.5 * (videos[v][((f * H + y) * W + x) * 3 + c] + 1.0);
    }
    return Tensor({rows * H, F * W, 3}, std::move(out));
}

}  // namespace camfit
