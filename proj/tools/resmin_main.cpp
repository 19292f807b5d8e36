#include <CLI11.hpp>

#include <string>
#include <vector>

#include "resmin/cli.hpp"

namespace {

// Shared flag wiring for the subcommands that integrate a problem.
void add_problem_flags(CLI::App* sub, resmin::RunConfig& cfg, std::string& y0_csv) {
    sub->add_option("--problem", cfg.problem, "problem spec: dahlquist:a=3 | sqrt | vdp | sho");
    sub->add_option("--t0", cfg.t0, "interval start");
    sub->add_option("--tf", cfg.tf, "interval end");
    sub->add_option("--y0", y0_csv, "initial state, comma separated");
    sub->add_option("--rtol", cfg.rtol, "relative tolerance");
    sub->add_option("--atol", cfg.atol, "absolute tolerance");
}

std::vector<double> parse_y0(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const auto comma = csv.find(',', pos);
        const std::string item =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw resmin::ParseError("--y0: bad number '" + item + "'");
            }
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Minimal-residual interpolation of ODE solver skeletons"};
    app.require_subcommand(1);

    resmin::RunConfig cfg;
    std::string y0_csv;

    auto* solve = app.add_subcommand("solve", "integrate a problem and write its skeleton");
    add_problem_flags(solve, cfg, y0_csv);
    solve->add_option("-o,--output", cfg.output, "skeleton output path");
    solve->add_option("--format", cfg.format, "skeleton format: json | csv");
    solve->add_option("--dense-csv", cfg.dense_csv, "also write dense samples here");
    solve->add_option("--refine", cfg.refine, "dense sampling refinement factor");

    auto* imp = app.add_subcommand("import", "validate a skeleton and re-emit canonical JSON");
    imp->add_option("--input", cfg.input_path, "skeleton file (json or csv)");
    imp->add_option("-o,--output", cfg.output, "canonical JSON output path");

    auto* minimize = app.add_subcommand("minimize", "per-stage minimal-residual interpolation");
    add_problem_flags(minimize, cfg, y0_csv);
    minimize->add_option("--skeleton", cfg.skeleton_path, "skeleton file to minimize over");
    minimize->add_flag("--solve-first", cfg.solve_first, "integrate first instead of reading a file");
    minimize->add_option("--norm", cfg.norm, "l2 | stage-linf");
    minimize->add_option("--subintervals", cfg.subintervals, "collocation subintervals per stage");
    minimize->add_option("--scheme", cfg.scheme, "midpoint | trapezoid");
    minimize->add_flag("--force-numeric", cfg.force_numeric, "skip the closed-form fast path");
    minimize->add_option("-o,--output", cfg.output, "output basename (.csv and .json)");

    auto* compare = app.add_subcommand("compare", "DP45 dense output vs minimal residuals");
    add_problem_flags(compare, cfg, y0_csv);
    compare->add_option("--subintervals", cfg.subintervals, "collocation subintervals per stage");
    compare->add_option("--scheme", cfg.scheme, "midpoint | trapezoid");
    compare->add_flag("--force-numeric", cfg.force_numeric, "skip the closed-form fast path");
    compare->add_option("-o,--output", cfg.output, "output basename (.csv and .json)");

    auto* wp = app.add_subcommand("work-precision", "residual order vs mean stepsize sweep");
    add_problem_flags(wp, cfg, y0_csv);
    wp->add_option("--nsamp", cfg.nsamp, "number of tolerance samples (>= 4)");
    wp->add_option("--refine", cfg.refine, "residual sampling refinement factor");
    wp->add_option("-o,--output", cfg.output, "output basename (.csv and .json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!y0_csv.empty()) cfg.y0 = parse_y0(y0_csv);
    } catch (const resmin::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    for (auto* sub : {solve, imp, minimize, compare, wp})
        if (sub->parsed()) cfg.subcommand = sub->get_name();
    return resmin::run(cfg);
}
