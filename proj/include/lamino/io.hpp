#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lamino/geometry.hpp"
#include "lamino/projector.hpp"
#include "lamino/volume.hpp"

namespace lamino {

inline constexpr std::uint32_t kToolVersion = 1;

/// Volume container "LMV1". Fixed-width little-endian header, then the
/// payload as 32-bit IEEE-754 floats, x fastest.
///
///   offset size field
///   0      4    magic "LMV1"
///   4      4    u32 header_bytes (= 64)
///   8      4    u32 nx
///   12     4    u32 ny
///   16     4    u32 nz
///   20     8    f64 voxel_nm
///   28     4    u32 value_kind (0 contrast, 1 binary, 2 psd, 3 weights)
///   32     8    u64 config_hash
///   40     8    u64 seed
///   48     4    u32 tool_version
///   52     8    u64 timestamp (unix seconds; the only field allowed to
///                   differ between identical re-runs)
///   60     4    u32 reserved (0)
///   64     ...  payload nx*ny*nz f32
enum class ValueKind : std::uint32_t {
    contrast = 0,
    binary = 1,
    psd = 2,
    weights = 3,
};

struct FileMeta {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

struct VolumeHeader {
    Dims dims;
    double voxel_nm = 0.0;
    ValueKind kind = ValueKind::contrast;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::uint32_t tool_version = 0;
    std::uint64_t timestamp = 0;
};

inline constexpr std::size_t kVolumeTimestampOffset = 52;

void write_volume(const std::string& path, const Volume& vol, ValueKind kind,
                  const FileMeta& meta);
Volume read_volume(const std::string& path, VolumeHeader* header = nullptr);

/// Stack container "LMS1": fixed header, per-angle f64 angle table,
/// then per-angle frames of det_nu*det_nv f32, u fastest.
///
///   offset size field
///   0      4    magic "LMS1"
///   4      4    u32 header_bytes (= 64 + 8 * n_angles)
///   8      4    u32 n_angles
///   12     4    u32 det_nu
///   16     4    u32 det_nv
///   20     8    f64 pixel_nm
///   28     8    f64 theta_deg
///   36     8    f64 ray_step_frac
///   44     8    u64 config_hash
///   52     4    u32 tool_version
///   56     8    u64 timestamp
///   64     8*n  f64 angles_deg[n]
struct StackHeader {
    int n_angles = 0;
    int det_nu = 0;
    int det_nv = 0;
    double pixel_nm = 0.0;
    double theta_deg = 0.0;
    double ray_step_frac = 0.0;
    std::uint64_t config_hash = 0;
    std::uint32_t tool_version = 0;
    std::uint64_t timestamp = 0;
    std::vector<double> angles_deg;
};

inline constexpr std::size_t kStackTimestampOffset = 56;

void write_stack(const std::string& path, const ProjectionStack& stack,
                 const LaminoGeometry& geom, const FileMeta& meta);
ProjectionStack read_stack(const std::string& path,
                           StackHeader* header = nullptr,
                           LaminoGeometry* geom = nullptr);

/// Plain-text sidecar (key = value lines), written atomically.
void write_text_file(const std::string& path, const std::string& content);

/// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& gray);

} // namespace lamino
