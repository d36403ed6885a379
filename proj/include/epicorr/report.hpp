// Per-iteration convergence records and their CSV serialization.
// Numbers are printed with 17 significant digits so files are bit-stable.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace epicorr {

enum class StopReason { converged, max_iterations, line_search_failure, error };

const char* to_string(StopReason r);

struct GnIterRow {
    int level = 0;
    int iter = 0;
    double j_value = 0.0;
    double grad_norm = 0.0;
    double step = 0.0;
    int pcg_iters = 0;
    double pcg_relres = 0.0;      // unpreconditioned ||H d + g|| / ||g|| at exit
    double pcg_relres_prec = 0.0; // preconditioned norm counterpart
    double wall_s = 0.0;
};

struct AdmmIterRow {
    int level = 0;
    int iter = 0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double eps_pri = 0.0;
    double eps_dual = 0.0;
    double rho = 0.0;
    double lagrangian = 0.0;
    double kkt_violation = 0.0; // max KKT residual over column QPs (when checked)
    double b_update_s = 0.0;
    double wall_s = 0.0;
};

struct SolveReport {
    std::vector<GnIterRow> gn;
    std::vector<AdmmIterRow> admm;
    StopReason stop = StopReason::converged;
    std::string message;

    bool converged() const { return stop == StopReason::converged; }
    long total_pcg_iterations() const;
    void append(const SolveReport& other);
};

std::string format_g17(double x);
void write_gn_csv(std::ostream& os, const SolveReport& r);
void write_admm_csv(std::ostream& os, const SolveReport& r);

} // namespace epicorr
