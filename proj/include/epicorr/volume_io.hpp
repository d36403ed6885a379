// Minimal volume file format: a 512-byte ASCII header followed by raw
// float32 little-endian samples, axis 1 fastest.
//
//   EPIVOL 1
//   dim: 3
//   kind: cell            (or face1/face2/face3 for staggered data)
//   size: 96 96 64        (payload dimensions as stored)
//   spacing: 1 1 1        (cell spacing, one value per axis)
//   origin: 0 0 0
//   type: float32
//   byteorder: little
//   offset: 512
//
// Headers round-trip bit-exactly through read/write.

#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "epicorr/grid.hpp"
#include "epicorr/image.hpp"

namespace epicorr {

enum class GridKind { cell, face1, face2, face3 };

const char* to_string(GridKind k);

struct VolumeData {
    GridSpec grid; // the underlying cell grid
    GridKind kind = GridKind::cell;
    std::vector<double> v; // payload (float32 on disk)

    std::array<int, 3> payload_dims() const;
    std::int64_t payload_size() const;
};

VolumeData make_cell_volume(const ImageVolume& img);
VolumeData make_face1_volume(const StaggeredField& b);
ImageVolume to_image(const VolumeData& vd);     // requires kind == cell
StaggeredField to_staggered(const VolumeData& vd); // requires kind == face1

void write_volume(const std::filesystem::path& path, const VolumeData& vd);
VolumeData read_volume(const std::filesystem::path& path);

// Swap axis 1 with the declared phase-encoding axis (1-based; 1 is a no-op).
// Applying the same permutation twice restores the original volume.
ImageVolume permute_to_axis1(const ImageVolume& img, int pe_axis);

// Map a face1-staggered result computed in the permuted frame back to the
// original orientation; the result is staggered along pe_axis.
VolumeData unpermute_field(const StaggeredField& b, int pe_axis);

} // namespace epicorr
