#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "magiclens/binary_io.hpp"
#include "magiclens/field.hpp"

namespace magiclens {

enum class EditMode { Reveal, Erase };

struct EditCommand {
    EditMode mode = EditMode::Erase;
    Vec3 center{};
    double radius = 0.0;
    bool hard = false;  // erase also zeroes densities (not undoable by reveal)
    double t_ms = 0.0;

    void validate() const {
        if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("edit radius must be > 0");
    }
};

/// Ordered edits plus the content hash of the grid they were recorded against.
struct EditLog {
    std::optional<std::uint64_t> grid_hash;
    std::vector<EditCommand> commands;
};

/// Applies a sphere brush to voxels whose centers lie strictly inside it. Erase clears bits
/// (and densities when `hard`); reveal restores bit = density >= threshold.
/// Returns the number of voxels visited inside the sphere.
inline std::size_t apply_edit(RadianceFieldGrid& grid, OccupancyBitfield& bits, const EditCommand& cmd,
                              double threshold = kDefaultDensityThreshold) {
    cmd.validate();
    if (!(bits.dims() == grid.dims()))
        throw ValidationError("mask shape " + bits.dims().str() + " does not match grid shape " + grid.dims().str());
    const GridGeometry& g = grid.geometry();
    std::uint32_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        const double first = std::floor((cmd.center[a] - cmd.radius - g.origin[a]) / g.voxel_size - 0.5);
        const double last = std::ceil((cmd.center[a] + cmd.radius - g.origin[a]) / g.voxel_size - 0.5) + 1;
        lo[a] = std::uint32_t(std::clamp(first, 0.0, double(g.dims[a])));
        hi[a] = std::uint32_t(std::clamp(last, 0.0, double(g.dims[a])));
    }
    const double r2 = cmd.radius * cmd.radius;
    std::size_t touched = 0;
    for (std::uint32_t i = lo[0]; i < hi[0]; ++i)
        for (std::uint32_t j = lo[1]; j < hi[1]; ++j)
            for (std::uint32_t k = lo[2]; k < hi[2]; ++k) {
                const Vec3 d = g.center(i, j, k) - cmd.center;
                if (!(dot(d, d) < r2)) continue;
                const std::size_t idx = g.index(i, j, k);
                ++touched;
                if (cmd.mode == EditMode::Erase) {
                    bits.set(idx, false);
                    if (cmd.hard) grid.at(idx).sigma = 0.0f;
                } else {
                    bits.set(idx, double(grid.at(idx).sigma) >= threshold);
                }
            }
    return touched;
}

/// Undoes every soft erase; hard-erased voxels stay empty because their density is gone.
inline OccupancyBitfield reveal_all(const RadianceFieldGrid& grid, double threshold = kDefaultDensityThreshold) {
    return rebuild_bitfield(grid, threshold);
}

/// Replays `log` on `grid` starting from a fresh rebuild. Throws when the log was recorded
/// against a different grid.
inline OccupancyBitfield replay_edits(RadianceFieldGrid& grid, const EditLog& log,
                                      double threshold = kDefaultDensityThreshold) {
    if (log.grid_hash && *log.grid_hash != grid.content_hash())
        throw FormatError(FormatError::Kind::ShapeMismatch, "edit log was recorded against a different grid");
    OccupancyBitfield bits = rebuild_bitfield(grid, threshold);
    for (const EditCommand& cmd : log.commands) apply_edit(grid, bits, cmd, threshold);
    return bits;
}

inline void save_mask(const OccupancyBitfield& bits, const std::filesystem::path& path) { write_bitfield(path, bits); }

/// Loads a mask and ANDs it with the grid's fresh rebuild, so voxels without density can
/// never become render-eligible.
inline OccupancyBitfield load_mask(const std::filesystem::path& path, const RadianceFieldGrid& grid,
                                   double threshold = kDefaultDensityThreshold) {
    OccupancyBitfield bits = read_bitfield(path);
    if (!(bits.dims() == grid.dims()))
        throw FormatError(FormatError::Kind::ShapeMismatch,
                          "mask shape " + bits.dims().str() + " does not match grid shape " + grid.dims().str());
    bits &= rebuild_bitfield(grid, threshold);
    return bits;
}

}  // namespace magiclens
