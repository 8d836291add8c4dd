#include "lamino/io.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace lamino {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}
void put_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf.append(b, 8);
}
void put_f64(std::string& buf, double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf.append(b, 8);
}
void put_f32(std::string& buf, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

class Reader {
public:
    Reader(const std::string& path, const char* magic) : path_(path) {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw std::runtime_error("io: cannot open " + path);
        std::string data((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
        data_ = std::move(data);
        if (data_.size() < 8 || data_.compare(0, 4, magic, 4) != 0) {
            std::string found = data_.size() >= 4 ? data_.substr(0, 4) : "";
            throw std::runtime_error("io: " + path + ": expected format " +
                                     std::string(magic) + ", found '" + found +
                                     "'");
        }
        pos_ = 4;
    }

    std::uint32_t u32() {
        check(4);
        std::uint32_t v;
        std::memcpy(&v, data_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        check(8);
        std::uint64_t v;
        std::memcpy(&v, data_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    double f64() {
        check(8);
        double v;
        std::memcpy(&v, data_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    void read_f32(double* out, std::size_t count) {
        check(4 * count);
        for (std::size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, data_.data() + pos_ + 4 * i, 4);
            out[i] = static_cast<double>(f);
        }
        pos_ += 4 * count;
    }
    void seek(std::size_t pos) { pos_ = pos; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void check(std::size_t n) const {
        if (pos_ + n > data_.size())
            throw std::runtime_error("io: " + path_ + ": truncated file");
    }
    std::string path_;
    std::string data_;
    std::size_t pos_ = 0;
};

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("io: cannot create " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f)
            throw std::runtime_error("io: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("io: cannot rename " + tmp + " to " + path);
}

std::uint64_t now_unix() {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
}

} // namespace

void write_volume(const std::string& path, const Volume& vol, ValueKind kind,
                  const FileMeta& meta) {
    std::string buf;
    buf.reserve(64 + vol.values.size() * 4);
    buf.append("LMV1", 4);
    put_u32(buf, 64);
    put_u32(buf, static_cast<std::uint32_t>(vol.dims.nx));
    put_u32(buf, static_cast<std::uint32_t>(vol.dims.ny));
    put_u32(buf, static_cast<std::uint32_t>(vol.dims.nz));
    put_f64(buf, vol.voxel_nm);
    put_u32(buf, static_cast<std::uint32_t>(kind));
    put_u64(buf, meta.config_hash);
    put_u64(buf, meta.seed);
    put_u32(buf, kToolVersion);
    put_u64(buf, now_unix());
    put_u32(buf, 0); // reserved
    for (double v : vol.values)
        put_f32(buf, static_cast<float>(v));
    atomic_write(path, buf);
}

Volume read_volume(const std::string& path, VolumeHeader* header) {
    Reader r(path, "LMV1");
    const std::uint32_t hdr_bytes = r.u32();
    if (hdr_bytes != 64)
        throw std::runtime_error(
            "io: " + path + ": header version mismatch: this tool (version " +
            std::to_string(kToolVersion) + ") expects 64-byte headers, file has " +
            std::to_string(hdr_bytes));
    VolumeHeader h;
    h.dims.nx = static_cast<int>(r.u32());
    h.dims.ny = static_cast<int>(r.u32());
    h.dims.nz = static_cast<int>(r.u32());
    h.voxel_nm = r.f64();
    h.kind = static_cast<ValueKind>(r.u32());
    h.config_hash = r.u64();
    h.seed = r.u64();
    h.tool_version = r.u32();
    h.timestamp = r.u64();
    r.u32(); // reserved
    if (h.tool_version != kToolVersion)
        throw std::runtime_error(
            "io: " + path + ": tool version mismatch: file version " +
            std::to_string(h.tool_version) + ", tool version " +
            std::to_string(kToolVersion));

    Volume vol(h.dims, h.voxel_nm, 0.0);
    r.read_f32(vol.values.data(), vol.values.size());
    if (header)
        *header = h;
    return vol;
}

void write_stack(const std::string& path, const ProjectionStack& stack,
                 const LaminoGeometry& geom, const FileMeta& meta) {
    if (stack.n_frames() != geom.n_angles())
        throw std::invalid_argument("io: stack/geometry angle count mismatch");
    std::string buf;
    const int n = stack.n_frames();
    buf.append("LMS1", 4);
    put_u32(buf, static_cast<std::uint32_t>(64 + 8 * n));
    put_u32(buf, static_cast<std::uint32_t>(n));
    put_u32(buf, static_cast<std::uint32_t>(geom.det_nu));
    put_u32(buf, static_cast<std::uint32_t>(geom.det_nv));
    put_f64(buf, geom.det_pixel_nm);
    put_f64(buf, geom.theta_deg);
    put_f64(buf, geom.ray_step_frac);
    put_u64(buf, meta.config_hash);
    put_u32(buf, kToolVersion);
    put_u64(buf, now_unix());
    for (double a : geom.angles_deg)
        put_f64(buf, a);
    for (const Projection& p : stack.frames)
        for (double v : p.pixels)
            put_f32(buf, static_cast<float>(v));
    atomic_write(path, buf);
}

ProjectionStack read_stack(const std::string& path, StackHeader* header,
                           LaminoGeometry* geom_out) {
    Reader r(path, "LMS1");
    const std::uint32_t hdr_bytes = r.u32();
    StackHeader h;
    h.n_angles = static_cast<int>(r.u32());
    h.det_nu = static_cast<int>(r.u32());
    h.det_nv = static_cast<int>(r.u32());
    h.pixel_nm = r.f64();
    h.theta_deg = r.f64();
    h.ray_step_frac = r.f64();
    h.config_hash = r.u64();
    h.tool_version = r.u32();
    h.timestamp = r.u64();
    if (h.tool_version != kToolVersion)
        throw std::runtime_error(
            "io: " + path + ": tool version mismatch: file version " +
            std::to_string(h.tool_version) + ", tool version " +
            std::to_string(kToolVersion));
    if (hdr_bytes != static_cast<std::uint32_t>(64 + 8 * h.n_angles))
        throw std::runtime_error("io: " + path + ": inconsistent header size");
    h.angles_deg.resize(static_cast<std::size_t>(h.n_angles));
    for (double& a : h.angles_deg)
        a = r.f64();

    ProjectionStack stack;
    stack.frames.reserve(static_cast<std::size_t>(h.n_angles));
    for (int i = 0; i < h.n_angles; ++i) {
        Projection p(h.angles_deg[static_cast<std::size_t>(i)], h.det_nu,
                     h.det_nv, h.pixel_nm);
        r.read_f32(p.pixels.data(), p.pixels.size());
        stack.frames.push_back(std::move(p));
    }
    if (header)
        *header = h;
    if (geom_out) {
        geom_out->theta_deg = h.theta_deg;
        geom_out->angles_deg = h.angles_deg;
        geom_out->det_nu = h.det_nu;
        geom_out->det_nv = h.det_nv;
        geom_out->det_pixel_nm = h.pixel_nm;
        geom_out->ray_step_frac = h.ray_step_frac;
    }
    return stack;
}

void write_text_file(const std::string& path, const std::string& content) {
    atomic_write(path, content);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& gray) {
    if (static_cast<std::size_t>(width) * height != gray.size())
        throw std::invalid_argument("pgm: size mismatch");
    std::string buf = "P5\n" + std::to_string(width) + " " +
                      std::to_string(height) + "\n255\n";
    buf.append(reinterpret_cast<const char*>(gray.data()), gray.size());
    atomic_write(path, buf);
}

} // namespace lamino
