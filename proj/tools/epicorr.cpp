// Command-line interface: simulate distorted pairs, correct them, benchmark
// solver configurations, and dump dense preconditioner spectra.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "epicorr/admm.hpp"
#include "epicorr/dense_diag.hpp"
#include "epicorr/gn_pcg.hpp"
#include "epicorr/image.hpp"
#include "epicorr/multilevel.hpp"
#include "epicorr/objective.hpp"
#include "epicorr/operators.hpp"
#include "epicorr/parallel.hpp"
#include "epicorr/report.hpp"
#include "epicorr/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace epicorr;

namespace {

GridSpec parse_size(const std::string& text, double spacing) {
    std::vector<int> dims;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, 'x')) dims.push_back(std::stoi(tok));
    if (dims.size() == 2) return GridSpec::make2d(dims[0], dims[1], spacing, spacing);
    if (dims.size() == 3)
        return GridSpec::make3d(dims[0], dims[1], dims[2], spacing, spacing, spacing);
    throw CLI::ValidationError("--size", "expected WxH or WxHxD");
}

ImageVolume load_or_make_truth(const std::string& truth_file, const std::string& phantom,
                               const std::string& size, double spacing, double amplitude) {
    if (!truth_file.empty()) return to_image(read_volume(truth_file));
    const GridSpec g = parse_size(size, spacing);
    if (phantom == "gauss") return phantom_gaussian(g, amplitude);
    if (phantom == "checker") return phantom_checker(g, amplitude);
    throw CLI::ValidationError("--phantom", "expected gauss or checker");
}

struct SolverOpts {
    std::string solver = "gn";
    std::string precond = "block";
    std::string schedule = "bounded";
    double alpha = 50.0, beta = 10.0, gamma = 1e-3;
    double eta = 0.1;
    double rho0 = 1e6, rho_min = 1e2;
    double eps_abs = 0.2, eps_rel = 0.2;
    int max_outer = 10, max_admm = 50;
    int levels = 0; // 0: full default hierarchy
    int threads = 0;
};

void add_solver_flags(CLI::App* cmd, SolverOpts& o) {
    cmd->add_option("--solver", o.solver, "Solver: gn or admm")
        ->envname("EPICORR_SOLVER")
        ->check(CLI::IsMember({"gn", "admm"}));
    cmd->add_option("--precond", o.precond, "GN preconditioner: none|jacobi|block|sgs")
        ->envname("EPICORR_PRECOND")
        ->check(CLI::IsMember({"none", "jacobi", "block", "sgs"}));
    cmd->add_option("--schedule", o.schedule, "ADMM rho schedule: fixed|adaptive|bounded")
        ->envname("EPICORR_SCHEDULE")
        ->check(CLI::IsMember({"fixed", "adaptive", "bounded"}));
    cmd->add_option("--alpha", o.alpha, "Smoothness weight")->envname("EPICORR_ALPHA");
    cmd->add_option("--beta", o.beta, "Jacobian penalty weight")->envname("EPICORR_BETA");
    cmd->add_option("--gamma", o.gamma, "Hessian shift")->envname("EPICORR_GAMMA");
    cmd->add_option("--eta", o.eta, "PCG forcing parameter")->envname("EPICORR_ETA");
    cmd->add_option("--rho0", o.rho0, "Initial ADMM rho")->envname("EPICORR_RHO0");
    cmd->add_option("--rho-min", o.rho_min, "Lower bound for rho")->envname("EPICORR_RHO_MIN");
    cmd->add_option("--eps-abs", o.eps_abs, "ADMM absolute tolerance");
    cmd->add_option("--eps-rel", o.eps_rel, "ADMM relative tolerance");
    cmd->add_option("--max-outer", o.max_outer, "GN iterations per level");
    cmd->add_option("--max-admm", o.max_admm, "ADMM iterations per level");
    cmd->add_option("--levels", o.levels, "Number of levels (0 = default hierarchy)")
        ->envname("EPICORR_LEVELS");
    cmd->add_option("--threads", o.threads, "Worker threads (0 = hardware)")
        ->envname("EPICORR_THREADS");
}

ObjectiveParams to_params(const SolverOpts& o) { return {o.alpha, o.beta, o.gamma}; }

GNConfig to_gn_config(const SolverOpts& o) {
    GNConfig c;
    c.eta = o.eta;
    c.max_outer = o.max_outer;
    c.precond = precond_from_string(o.precond);
    c.threads = o.threads;
    return c;
}

ADMMConfig to_admm_config(const SolverOpts& o) {
    ADMMConfig c;
    c.rho0 = o.rho0;
    c.rho_min = o.rho_min;
    c.schedule = rho_schedule_from_string(o.schedule);
    c.eps_abs = o.eps_abs;
    c.eps_rel = o.eps_rel;
    c.max_iter = o.max_admm;
    c.threads = o.threads;
    return c;
}

LevelSchedule make_schedule(const GridSpec& fine, int levels) {
    LevelSchedule s = default_schedule(fine);
    if (levels > 0) truncate_to_finest(s, levels);
    return s;
}

int run_simulate(const std::string& truth_file, const std::string& phantom,
                 const std::string& size, double spacing, double amplitude,
                 const std::string& field_file, double field_dinf, double noise_sigma,
                 std::uint64_t seed, const std::string& out_dir) {
    const ImageVolume truth = load_or_make_truth(truth_file, phantom, size, spacing, amplitude);
    StaggeredField b_true = field_file.empty() ? bump_field(truth.grid, field_dinf)
                                               : to_staggered(read_volume(field_file));
    SimulateOptions opts;
    opts.noise_sigma = noise_sigma;
    opts.seed = seed;
    const VolumePair pair = simulate_pair(truth, b_true, opts);

    fs::create_directories(out_dir);
    write_volume(fs::path(out_dir) / "truth.vol", make_cell_volume(truth));
    write_volume(fs::path(out_dir) / "iplus.vol", make_cell_volume(pair.plus));
    write_volume(fs::path(out_dir) / "iminus.vol", make_cell_volume(pair.minus));
    write_volume(fs::path(out_dir) / "field_true.vol", make_face1_volume(b_true));
    std::cout << "wrote " << out_dir << "/{truth,iplus,iminus,field_true}.vol\n";
    return 0;
}

json metrics_json(const VolumePair& before, const ImageVolume& cp, const ImageVolume& cm) {
    json m;
    m["ssd_before"] = ssd(before.plus, before.minus);
    m["ssd_after"] = ssd(cp, cm);
    const double sb = m["ssd_before"].get<double>();
    m["ssd_reduction"] = sb > 0.0 ? 1.0 - m["ssd_after"].get<double>() / sb : 0.0;
    try {
        m["ncc_before"] = ncc(before.plus, before.minus);
    } catch (const std::exception&) {
        m["ncc_before"] = nullptr;
    }
    try {
        m["ncc_after"] = ncc(cp, cm);
    } catch (const std::exception&) {
        m["ncc_after"] = nullptr;
    }
    return m;
}

int run_correct(const std::string& plus_file, const std::string& minus_file, const SolverOpts& o,
                int pe_axis, std::uint64_t seed, const std::string& out_dir) {
    const ImageVolume plus_raw = to_image(read_volume(plus_file));
    const ImageVolume minus_raw = to_image(read_volume(minus_file));
    if (!(plus_raw.grid == minus_raw.grid))
        throw std::runtime_error("correct: input volumes do not share grid metadata");

    const VolumePair pair(permute_to_axis1(plus_raw, pe_axis),
                          permute_to_axis1(minus_raw, pe_axis));
    const LevelSchedule schedule = make_schedule(pair.grid(), o.levels);
    const SolverKind kind = o.solver == "gn" ? SolverKind::gn : SolverKind::admm;

    MultilevelResult res = multilevel_solve(pair, schedule, kind, to_params(o), to_gn_config(o),
                                            to_admm_config(o));
    if (res.report.stop == StopReason::error ||
        res.report.stop == StopReason::line_search_failure)
        throw std::runtime_error("correct: solver failed: " + res.report.message);

    auto [cp, cm] = correct_pair(pair, res.b, resolve_threads(o.threads));
    ImageVolume mean(pair.grid());
    for (std::size_t i = 0; i < mean.v.size(); ++i) mean.v[i] = 0.5 * (cp.v[i] + cm.v[i]);

    fs::create_directories(out_dir);
    write_volume(fs::path(out_dir) / "field.vol", unpermute_field(res.b, pe_axis));
    write_volume(fs::path(out_dir) / "corrected_plus.vol",
                 make_cell_volume(permute_to_axis1(cp, pe_axis)));
    write_volume(fs::path(out_dir) / "corrected_minus.vol",
                 make_cell_volume(permute_to_axis1(cm, pe_axis)));
    write_volume(fs::path(out_dir) / "corrected_mean.vol",
                 make_cell_volume(permute_to_axis1(mean, pe_axis)));
    {
        std::ofstream cs(fs::path(out_dir) / "convergence.csv");
        if (kind == SolverKind::gn) write_gn_csv(cs, res.report);
        else write_admm_csv(cs, res.report);
    }
    {
        json m = metrics_json(pair, cp, cm);
        m["solver"] = o.solver;
        m["alpha"] = o.alpha;
        m["beta"] = o.beta;
        m["levels"] = schedule.levels();
        m["stop"] = to_string(res.report.stop);
        m["converged"] = res.report.converged();
        m["seed"] = seed;
        std::ofstream ms(fs::path(out_dir) / "metrics.json");
        ms << m.dump(2) << '\n';
    }
    std::cout << (res.report.converged() ? "converged" : "stopped at iteration limit") << "; see "
              << out_dir << "/metrics.json\n";
    return res.report.converged() ? 0 : 2;
}

int run_bench(const std::string& plus_file, const std::string& minus_file,
              const std::string& phantom, const std::string& size, double spacing,
              double amplitude, double field_dinf, const std::vector<std::string>& solvers,
              const std::vector<std::string>& preconds, const std::vector<std::string>& schedules,
              const std::vector<double>& alphas, const SolverOpts& base,
              const std::string& out_csv) {
    VolumePair pair = [&] {
        if (!plus_file.empty())
            return VolumePair(to_image(read_volume(plus_file)),
                              to_image(read_volume(minus_file)));
        const ImageVolume truth = load_or_make_truth("", phantom, size, spacing, amplitude);
        return simulate_pair(truth, bump_field(truth.grid, field_dinf));
    }();

    auto drop_blank = [](std::vector<std::string> v) {
        std::erase_if(v, [](const std::string& s) { return s.empty(); });
        return v;
    };
    const std::vector<std::string> solver_list = drop_blank(solvers);
    const std::vector<std::string> precond_list = drop_blank(preconds);
    const std::vector<std::string> schedule_list = drop_blank(schedules);
    for (const auto& s : solver_list)
        if (s != "gn" && s != "admm") throw std::runtime_error("bench: unknown solver " + s);

    struct Entry {
        std::string solver, precond, schedule;
        double alpha;
    };
    std::vector<Entry> entries;
    for (const auto& s : solver_list)
        for (double a : alphas) {
            if (s == "gn")
                for (const auto& p : precond_list) entries.push_back({s, p, "-", a});
            else
                for (const auto& sc : schedule_list) entries.push_back({s, "-", sc, a});
        }
    if (entries.empty()) throw std::runtime_error("bench: empty configuration matrix");

    std::ofstream os(out_csv);
    os << "solver,precond,schedule,alpha,levels,outer_iters,total_pcg,admm_iters,wall_s,"
          "ssd_before,ssd_after,converged\n";
    const LevelSchedule schedule = make_schedule(pair.grid(), base.levels);
    for (const auto& e : entries) {
        SolverOpts o = base;
        o.solver = e.solver;
        o.alpha = e.alpha;
        if (e.precond != "-") o.precond = e.precond;
        if (e.schedule != "-") o.schedule = e.schedule;
        const auto t0 = std::chrono::steady_clock::now();
        MultilevelResult res =
            multilevel_solve(pair, schedule, e.solver == "gn" ? SolverKind::gn : SolverKind::admm,
                             to_params(o), to_gn_config(o), to_admm_config(o));
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        auto [cp, cm] = correct_pair(pair, res.b, resolve_threads(o.threads));
        os << e.solver << ',' << e.precond << ',' << e.schedule << ',' << format_g17(e.alpha)
           << ',' << schedule.levels() << ',' << res.report.gn.size() << ','
           << res.report.total_pcg_iterations() << ',' << res.report.admm.size() << ','
           << format_g17(wall) << ',' << format_g17(ssd(pair.plus, pair.minus)) << ','
           << format_g17(ssd(cp, cm)) << ',' << (res.report.converged() ? 1 : 0) << '\n';
    }
    std::cout << "wrote " << out_csv << '\n';
    return 0;
}

int run_spectrum(const std::string& plus_file, const std::string& minus_file,
                 const std::string& phantom, const std::string& size, double spacing,
                 double amplitude, double field_dinf, const SolverOpts& o,
                 std::int64_t max_unknowns, const std::string& out_csv) {
    VolumePair pair = [&] {
        if (!plus_file.empty())
            return VolumePair(to_image(read_volume(plus_file)),
                              to_image(read_volume(minus_file)));
        const ImageVolume truth = load_or_make_truth("", phantom, size, spacing, amplitude);
        return simulate_pair(truth, bump_field(truth.grid, field_dinf));
    }();
    // coarsest level of the hierarchy, solved to its final iterate
    const LevelSchedule schedule = make_schedule(pair.grid(), o.levels);
    const GridSpec& gc = schedule.grids.front();
    VolumePair coarse = gc == pair.grid()
                            ? pair
                            : VolumePair(restrict_image(pair.plus, gc),
                                         restrict_image(pair.minus, gc));
    GnSolveResult sol = gauss_newton_solve(coarse, StaggeredField(gc), to_params(o),
                                           to_gn_config(o), 0);
    GnHessian h(coarse, sol.b, to_params(o), resolve_threads(o.threads));
    const SpectrumResult sp = preconditioned_spectra(h, max_unknowns);

    std::ofstream os(out_csv);
    os << "index,plain,block,jacobi,sgs\n";
    for (std::size_t i = 0; i < sp.plain.size(); ++i)
        os << i << ',' << format_g17(sp.plain[i]) << ',' << format_g17(sp.block[i]) << ','
           << format_g17(sp.jacobi[i]) << ',' << format_g17(sp.sgs[i]) << '\n';
    std::cout << "wrote " << out_csv << "\nclustered fraction in [0.5,2]: block="
              << clustered_fraction(sp.block) << " jacobi=" << clustered_fraction(sp.jacobi)
              << " sgs=" << clustered_fraction(sp.sgs) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reversed-gradient susceptibility artifact correction for EPI volume pairs"};
    app.require_subcommand(1);

    // simulate
    std::string truth_file, phantom = "gauss", size = "64x64", field_file, out_dir = ".";
    double spacing = 1.0, amplitude = 400.0, field_dinf = 0.5, noise_sigma = 0.0;
    std::uint64_t seed = 0;
    auto* sim = app.add_subcommand("simulate", "Create an oppositely distorted volume pair");
    sim->add_option("--truth", truth_file, "Undistorted input volume (.vol)");
    sim->add_option("--phantom", phantom, "Built-in phantom: gauss|checker")
        ->check(CLI::IsMember({"gauss", "checker"}));
    sim->add_option("--size", size, "Phantom grid, e.g. 64x64 or 32x32x32");
    sim->add_option("--spacing", spacing, "Phantom cell spacing");
    sim->add_option("--amplitude", amplitude, "Phantom intensity amplitude");
    sim->add_option("--field", field_file, "Ground-truth field volume (.vol, face1)");
    sim->add_option("--field-dinf", field_dinf, "Built-in bump field max |D1 b|");
    sim->add_option("--noise-sigma", noise_sigma, "Additive Gaussian noise level");
    sim->add_option("--seed", seed, "Noise seed")->envname("EPICORR_SEED");
    sim->add_option("--out-dir", out_dir, "Output directory")->envname("EPICORR_OUT_DIR");

    // correct
    SolverOpts copt;
    std::string plus_file, minus_file, cor_out = ".";
    int pe_axis = 1;
    std::uint64_t cseed = 0;
    auto* cor = app.add_subcommand("correct", "Estimate the field and correct a volume pair");
    cor->add_option("--plus", plus_file, "Volume acquired with +v phase encoding")->required();
    cor->add_option("--minus", minus_file, "Volume acquired with -v phase encoding")->required();
    cor->add_option("--pe-axis", pe_axis, "Phase-encoding axis of the inputs (1-3)")
        ->check(CLI::Range(1, 3))
        ->envname("EPICORR_PE_AXIS");
    cor->add_option("--seed", cseed, "Seed recorded in metrics")->envname("EPICORR_SEED");
    cor->add_option("--out-dir", cor_out, "Output directory")->envname("EPICORR_OUT_DIR");
    add_solver_flags(cor, copt);

    // bench
    SolverOpts bopt;
    std::string bplus, bminus, bphantom = "gauss", bsize = "64x64", bout = "bench.csv";
    double bspacing = 1.0, bamplitude = 400.0, bdinf = 0.5;
    std::vector<std::string> solvers{"gn"}, preconds{"block"}, schedules{"bounded"};
    std::vector<double> alphas{50.0};
    auto* ben = app.add_subcommand("bench", "Run a configuration matrix and emit a CSV");
    ben->add_option("--plus", bplus, "Input +v volume (otherwise a phantom pair is simulated)");
    ben->add_option("--minus", bminus, "Input -v volume");
    ben->add_option("--phantom", bphantom)->check(CLI::IsMember({"gauss", "checker"}));
    ben->add_option("--size", bsize, "Phantom grid");
    ben->add_option("--spacing", bspacing);
    ben->add_option("--amplitude", bamplitude);
    ben->add_option("--field-dinf", bdinf);
    ben->add_option("--solvers", solvers, "Comma list: gn,admm")
        ->delimiter(',')
        ->expected(0, -1)
        ->check(CLI::IsMember({"gn", "admm"}));
    ben->add_option("--preconds", preconds, "Comma list: none,jacobi,block,sgs")
        ->delimiter(',')
        ->expected(0, -1)
        ->check(CLI::IsMember({"none", "jacobi", "block", "sgs"}));
    ben->add_option("--schedules", schedules, "Comma list: fixed,adaptive,bounded")
        ->delimiter(',')
        ->expected(0, -1)
        ->check(CLI::IsMember({"fixed", "adaptive", "bounded"}));
    ben->add_option("--alphas", alphas, "Comma list of alpha values")
        ->delimiter(',')
        ->expected(0, -1);
    ben->add_option("--out", bout, "Output CSV path");
    add_solver_flags(ben, bopt);

    // spectrum
    SolverOpts sopt;
    std::string splus, sminus, sphantom = "gauss", ssize = "64x64", sout = "spectrum.csv";
    double sspacing = 1.0, samplitude = 400.0, sdinf = 0.5;
    std::int64_t max_unknowns = 2000;
    auto* spe = app.add_subcommand(
        "spectrum", "Dense preconditioned-Hessian spectra on the coarsest level");
    spe->add_option("--plus", splus);
    spe->add_option("--minus", sminus);
    spe->add_option("--phantom", sphantom)->check(CLI::IsMember({"gauss", "checker"}));
    spe->add_option("--size", ssize, "Phantom grid");
    spe->add_option("--spacing", sspacing);
    spe->add_option("--amplitude", samplitude);
    spe->add_option("--field-dinf", sdinf);
    spe->add_option("--max-unknowns", max_unknowns, "Dense-assembly size guard");
    spe->add_option("--out", sout, "Output CSV path");
    add_solver_flags(spe, sopt);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return run_simulate(truth_file, phantom, size, spacing, amplitude, field_file,
                                field_dinf, noise_sigma, seed, out_dir);
        if (cor->parsed()) return run_correct(plus_file, minus_file, copt, pe_axis, cseed, cor_out);
        if (ben->parsed())
            return run_bench(bplus, bminus, bphantom, bsize, bspacing, bamplitude, bdinf, solvers,
                             preconds, schedules, alphas, bopt, bout);
        if (spe->parsed())
            return run_spectrum(splus, sminus, sphantom, ssize, sspacing, samplitude, sdinf, sopt,
                                max_unknowns, sout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
