#include "epicorr/report.hpp"

#include <cstdio>

namespace epicorr {

const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::converged: return "converged";
        case StopReason::max_iterations: return "max_iterations";
        case StopReason::line_search_failure: return "line_search_failure";
        case StopReason::error: return "error";
    }
    return "unknown";
}

long SolveReport::total_pcg_iterations() const {
    long n = 0;
    for (const auto& row : gn) n += row.pcg_iters;
    return n;
}

void SolveReport::append(const SolveReport& other) {
    gn.insert(gn.end(), other.gn.begin(), other.gn.end());
    admm.insert(admm.end(), other.admm.begin(), other.admm.end());
    stop = other.stop;
    if (!other.message.empty()) message = other.message;
}

std::string format_g17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_gn_csv(std::ostream& os, const SolveReport& r) {
    os << "level,iter,j_value,grad_norm,step,pcg_iters,pcg_relres,pcg_relres_prec,wall_s\n";
    for (const auto& w : r.gn)
        os << w.level << ',' << w.iter << ',' << format_g17(w.j_value) << ','
           << format_g17(w.grad_norm) << ',' << format_g17(w.step) << ',' << w.pcg_iters << ','
           << format_g17(w.pcg_relres) << ',' << format_g17(w.pcg_relres_prec) << ','
           << format_g17(w.wall_s) << '\n';
}

void write_admm_csv(std::ostream& os, const SolveReport& r) {
    os << "iter,level,primal_res,dual_res,eps_pri,eps_dual,rho,lagrangian,kkt_violation,"
          "b_update_s,wall_s\n";
    for (const auto& w : r.admm)
        os << w.iter << ',' << w.level << ',' << format_g17(w.primal_res) << ','
           << format_g17(w.dual_res) << ',' << format_g17(w.eps_pri) << ','
           << format_g17(w.eps_dual) << ',' << format_g17(w.rho) << ','
           << format_g17(w.lagrangian) << ',' << format_g17(w.kkt_violation) << ','
           << format_g17(w.b_update_s) << ',' << format_g17(w.wall_s) << '\n';
}

} // namespace epicorr
