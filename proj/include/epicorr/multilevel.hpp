// Coarse-to-fine solve: block-averaged image restriction, linear prolongation
// of the staggered field, and the ADMM restart strategies between levels.

#pragma once

#include <optional>
#include <vector>

#include "epicorr/admm.hpp"
#include "epicorr/gn_pcg.hpp"
#include "epicorr/grid.hpp"
#include "epicorr/image.hpp"
#include "epicorr/report.hpp"

namespace epicorr {

struct LevelOverride {
    std::optional<int> gn_max_outer;
    std::optional<int> admm_max_iter;
};

struct LevelSchedule {
    std::vector<GridSpec> grids;          // coarse -> fine
    std::vector<LevelOverride> overrides; // empty or one per level

    void validate() const;
    int levels() const { return int(grids.size()); }
};

// Halve every axis per level (ceil), keep at least `min_cells` cells per axis
// on the coarsest level, at most `max_levels` levels. Domain extents are
// preserved exactly across levels.
LevelSchedule default_schedule(const GridSpec& fine, int max_levels = 4, int min_cells = 16);

// Keep only the finest `levels` grids.
void truncate_to_finest(LevelSchedule& s, int levels);

// Area-weighted block averaging; preserves total mass under exact tiling.
ImageVolume restrict_image(const ImageVolume& img, const GridSpec& coarse);

// Linear interpolation of the coarse staggered samples at the fine face
// coordinates (clamped beyond the outermost samples on axes 2 and 3). If the
// result is infeasible it is rescaled so that max|D1 b| = 0.95.
StaggeredField prolong_field(const StaggeredField& b_coarse, const GridSpec& fine);

enum class SolverKind { gn, admm };

// Restart options for ADMM when moving to a finer level.
enum class AdmmRestart {
    prolong_all = 1, // prolong b, z, u
    b_for_both = 2,  // b0 = z0 = prolong(b), u0 = 0
    average = 3,     // b0 = z0 = (prolong(b) + prolong(z))/2, u0 = 0
};

struct MultilevelResult {
    StaggeredField b;
    SolveReport report;
};

MultilevelResult multilevel_solve(const VolumePair& pair, const LevelSchedule& schedule,
                                  SolverKind solver, const ObjectiveParams& params,
                                  const GNConfig& gn_config, const ADMMConfig& admm_config,
                                  AdmmRestart restart = AdmmRestart::average);

} // namespace epicorr
