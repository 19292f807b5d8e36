#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "resmin/cli.hpp"

using namespace resmin;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliEnv {
    fs::path dir;
    std::ostringstream out, err;
    CliEnv() {
        static int counter = 0;
        dir = fs::temp_directory_path() /
              ("resmin_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~CliEnv() { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }

    RunConfig base(const std::string& sub) {
        RunConfig cfg;
        cfg.subcommand = sub;
        cfg.out = &out;
        cfg.err = &err;
        return cfg;
    }
    json summary() const { return json::parse(out.str().substr(0, out.str().find('\n'))); }
};

Vector vec1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("solve writes a skeleton and reports the terminal value", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("solve");
    cfg.problem = "dahlquist:a=3";
    cfg.t0 = 0.0;
    cfg.tf = 1.0;
    cfg.y0 = {1.0};
    cfg.rtol = 1e-8;
    cfg.atol = 1e-8;
    cfg.output = env.file("skel.json");
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    const double e3 = 20.085536923187668;
    CHECK(std::abs(s["y_final"][0].get<double>() - e3) / e3 <= 1e-6);
    const Skeleton skel = load_skeleton(cfg.output);
    CHECK(skel.n_stages() >= 5);
    CHECK(skel.values().back()[0] == s["y_final"][0].get<double>());
}

TEST_CASE("solve with tf == t0 emits the single-node file", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("solve");
    cfg.problem = "sho";
    cfg.t0 = 2.0;
    cfg.tf = 2.0;
    cfg.y0 = {3.5, 0.0};
    cfg.output = env.file("empty.json");
    REQUIRE(run(cfg) == 0);
    std::ifstream f(cfg.output);
    json j;
    f >> j;
    CHECK(j["n"] == 2);
    CHECK(j["t"].size() == 1);
    CHECK(j["z"][0][0] == 3.5);
}

TEST_CASE("solve rejects malformed problem specs with exit 2", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("solve");
    cfg.problem = "dahlquist:a=oops";
    cfg.y0 = {1.0};
    cfg.output = env.file("x.json");
    CHECK(run(cfg) == 2);
    CHECK(env.err.str().find("error:") != std::string::npos);
}

TEST_CASE("solve writes dense samples when asked", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("solve");
    cfg.problem = "dahlquist:a=1";
    cfg.y0 = {1.0};
    cfg.rtol = 1e-6;
    cfg.atol = 1e-6;
    cfg.output = env.file("skel.json");
    cfg.dense_csv = env.file("dense.csv");
    cfg.refine = 4;
    REQUIRE(run(cfg) == 0);
    std::ifstream f(cfg.dense_csv);
    std::string header;
    std::getline(f, header);
    CHECK(header == "t,y1,yd1");
    int rows = 0;
    for (std::string line; std::getline(f, line);) rows += !line.empty();
    const Skeleton skel = load_skeleton(cfg.output);
    CHECK(rows == 4 * skel.n_stages() + 1);
}

TEST_CASE("import validates and canonicalizes", "[cli]") {
    CliEnv env;
    const auto src = env.file("in.csv");
    std::ofstream(src) << "t,z1\n0,1\n1,3\n";
    RunConfig cfg = env.base("import");
    cfg.input_path = src;
    cfg.output = env.file("out.json");
    REQUIRE(run(cfg) == 0);
    const Skeleton skel = load_skeleton(cfg.output);
    CHECK(skel.dim() == 1);
    CHECK(skel.times() == std::vector<double>{0.0, 1.0});

    RunConfig bad = env.base("import");
    bad.input_path = env.file("missing.csv");
    bad.output = env.file("out2.json");
    CHECK(run(bad) == 2);
}

TEST_CASE("minimize uses the closed form for dahlquist and orders the norms", "[cli]") {
    CliEnv env;
    const Skeleton skel = [&] {
        const auto sol = integrate(dahlquist(3.0), 0.0, 1.0, vec1(1.0), 1e-8, 1e-8);
        return skeleton_of(sol);
    }();
    const auto skel_path = env.file("skel.json");
    save_skeleton(skel, skel_path);

    RunConfig l2 = env.base("minimize");
    l2.problem = "dahlquist:a=3";
    l2.skeleton_path = skel_path;
    l2.norm = "l2";
    l2.output = env.file("l2");
    REQUIRE(run(l2) == 0);
    const json jl2 = json::parse(std::ifstream(env.file("l2.json")));
    CHECK(jl2["closed_form"] == true);

    CliEnv env2;
    RunConfig li = env2.base("minimize");
    li.problem = "dahlquist:a=3";
    li.skeleton_path = skel_path;
    li.norm = "stage-linf";
    li.output = env2.file("li");
    REQUIRE(run(li) == 0);
    const json jli = json::parse(std::ifstream(env2.file("li.json")));

    REQUIRE(jl2["stages"].size() == jli["stages"].size());
    for (std::size_t i = 0; i < jl2["stages"].size(); ++i) {
        const double a = jli["stages"][i]["alpha"].get<double>();
        const double m = jl2["stages"][i]["max_abs_u"].get<double>();
        REQUIRE(a <= m + 1e-12);
    }
    // CSV was emitted with the stage index as the last column.
    std::ifstream csv(env.file("l2.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,x1,u1,stage_index");
}

TEST_CASE("minimize on an exact sqrt skeleton reports a tiny global max", "[cli]") {
    CliEnv env;
    std::vector<double> t;
    std::vector<Vector> z;
    for (int i = 0; i <= 10; ++i) {
        t.push_back(0.1 * i);
        const double r = 1.0 + 0.05 * i;
        z.push_back(vec1(r * r));
    }
    save_skeleton(Skeleton(1, t, z), env.file("exact.json"));
    RunConfig cfg = env.base("minimize");
    cfg.problem = "sqrt";
    cfg.skeleton_path = env.file("exact.json");
    cfg.norm = "l2";
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["closed_form"] == true);
    CHECK(s["global_max_residual"].get<double>() <= 1e-10);
}

TEST_CASE("minimize needs a skeleton source", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("minimize");
    cfg.problem = "sqrt";
    CHECK(run(cfg) == 2);
    CHECK(env.err.str().find("skeleton source") != std::string::npos);
}

TEST_CASE("minimize can solve first instead of reading a file", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("minimize");
    cfg.problem = "dahlquist:a=2";
    cfg.solve_first = true;
    cfg.t0 = 0.0;
    cfg.tf = 0.5;
    cfg.y0 = {1.0};
    cfg.rtol = 1e-6;
    cfg.atol = 1e-6;
    cfg.norm = "stage-linf";
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["closed_form"] == true);
    CHECK(s["n_stages"].get<int>() >= 1);
    CHECK(s["global_max_residual"].get<double>() > 0.0);
}

TEST_CASE("numeric minimize stays below the dense-output residual", "[cli]") {
    CliEnv env;
    const OdeSystem sys = van_der_pol();
    Vector y0(2);
    y0 << -1.0, -3.0;
    const auto dp = integrate(sys, 0.0, 0.3, y0, 1e-8, 1e-8);
    save_skeleton(skeleton_of(dp), env.file("vdp.json"));

    RunConfig cfg = env.base("minimize");
    cfg.problem = "vdp";
    cfg.skeleton_path = env.file("vdp.json");
    cfg.norm = "l2";
    cfg.subintervals = 200;
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["closed_form"] == false);

    // Residual of the dense output on the same refined mesh.
    const auto rep = report(sys, dense_curve(dp), skeleton_of(dp), 8);
    CHECK(s["global_max_residual"].get<double>() <= rep.global_max);
}

TEST_CASE("compare produces the three-way table with ordered minima", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("compare");
    cfg.problem = "dahlquist:a=3";
    cfg.t0 = 0.0;
    cfg.tf = 1.0;
    cfg.y0 = {1.0};
    cfg.rtol = 1e-8;
    cfg.atol = 1e-8;
    cfg.subintervals = 128;
    cfg.output = env.file("cmp");
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["min_l2_max"].get<double>() <= s["dp45_dense_max"].get<double>());
    CHECK(s["min_stage_linf_max"].get<double>() <= s["dp45_dense_max"].get<double>());

    std::ifstream csv(env.file("cmp.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "stage_index,t_start,t_end,dp45_dense_sup,min_l2_sup,min_stage_linf_alpha");
    int rows = 0;
    double worst_ratio = 0.0;
    for (std::string line; std::getline(csv, line);) {
        if (line.empty()) continue;
        ++rows;
        std::stringstream ss(line);
        std::string fld;
        std::vector<double> v;
        while (std::getline(ss, fld, ',')) v.push_back(std::stod(fld));
        REQUIRE(v.size() == 6);
        REQUIRE(v[4] <= v[3] + 1e-12);  // min L2 sup <= dense sup per stage
        REQUIRE(v[5] <= v[3] + 1e-12);  // alpha <= dense sup per stage
        worst_ratio = std::max(worst_ratio, v[5] / v[3]);
    }
    CHECK(rows >= 5);
    CHECK(worst_ratio < 1.0);

    // The sampled dense-output residual is emitted alongside the table.
    std::ifstream rcsv(env.file("cmp_residual.csv"));
    std::string rheader;
    std::getline(rcsv, rheader);
    CHECK(rheader == "t,r1,stage_index");
}

TEST_CASE("work-precision emits csv rows and a slope", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("work-precision");
    cfg.problem = "dahlquist:a=1";
    cfg.t0 = 0.0;
    cfg.tf = 1.0;
    cfg.y0 = {1.0};
    cfg.nsamp = 24;
    cfg.output = env.file("wp");
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["slope"].get<double>() == Catch::Approx(4.0).margin(0.6));
    CHECK(s["low_confidence"] == false);
    std::ifstream csv(env.file("wp.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "k,rtol,mean_h,max_residual");
    int rows = 0;
    for (std::string line; std::getline(csv, line);) rows += !line.empty();
    CHECK(rows == 24);
    // The summary is persisted alongside the CSV and is parseable JSON.
    const json js = json::parse(std::ifstream(env.file("wp.json")));
    CHECK(js["slope"] == s["slope"]);
}

TEST_CASE("work-precision at the minimum sample count flags low confidence", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("work-precision");
    cfg.problem = "dahlquist:a=1";
    cfg.y0 = {1.0};
    cfg.nsamp = 4;
    cfg.output = env.file("wp4");
    REQUIRE(run(cfg) == 0);
    const json s = env.summary();
    CHECK(s["low_confidence"] == true);
    std::ifstream csv(env.file("wp4.csv"));
    std::string line;
    int rows = -1;  // discount header
    while (std::getline(csv, line)) rows += !line.empty();
    CHECK(rows == 4);

    RunConfig bad = env.base("work-precision");
    bad.problem = "dahlquist:a=1";
    bad.y0 = {1.0};
    bad.nsamp = 3;
    CHECK(run(bad) == 2);
}

TEST_CASE("unknown subcommand exits 2", "[cli]") {
    CliEnv env;
    RunConfig cfg = env.base("frobnicate");
    CHECK(run(cfg) == 2);
}
