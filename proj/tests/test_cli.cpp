#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "bst/io.hpp"
#include "bst/physics.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "bst_test_cli";

struct Result {
    int code = -1;
    std::string out, err;
};

Result run(const std::string& args, const std::string& env = "") {
    fs::create_directories(kRoot);
    auto o = kRoot / "stdout.txt", e = kRoot / "stderr.txt";
    std::string cmd = env + " " + BST_CLI_PATH + " " + args + " > " + o.string() + " 2> " + e.string();
    int st = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = bst::read_text(o.string());
    r.err = bst::read_text(e.string());
    return r;
}

std::string dir(const std::string& name) {
    auto d = kRoot / name;
    fs::remove_all(d);
    return d.string();
}

std::vector<std::vector<double>> csv(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::stringstream ss(line);
        std::string c;
        std::vector<double> r;
        while (std::getline(ss, c, ',')) r.push_back(std::strtod(c.c_str(), nullptr));
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json manifest(const std::string& d) { return nlohmann::json::parse(bst::read_text(d + "/manifest.json")); }

}  // namespace

TEST_CASE("version and usage errors") {
    auto v = run("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("bst ") == 0);
    CHECK(run("").code == 2);
    CHECK(run("bogus").code == 2);
    CHECK(run("spectrum").code == 2);  // --material is required
}

TEST_CASE("design: layout offsets scale to 41 and 14 mm") {
    for (auto [beta, mm] : {std::pair{120.0, 41.0}, std::pair{40.0, 14.0}}) {
        auto d = dir("design" + std::to_string(int(beta)));
        auto r = run("-o " + d + " design --beta-deg " + std::to_string(beta) + " --emin-kev 0.62 --emax-kev 12.4");
        REQUIRE(r.code == 0);
        double mx = 0.0;
        for (const auto& row : csv(d + "/layout.csv")) mx = std::max(mx, row[2]);
        CHECK(std::abs(mx - mm) <= 1.0);
        auto region = csv(d + "/region.csv");
        CHECK(region.size() == 201 * 201);
        CHECK(bst::read_text(d + "/region.csv").find("820") != std::string::npos);
        auto m = manifest(d);
        CHECK(m["command"] == "design");
        CHECK(m["outputs"].contains("layout.csv"));
        CHECK(m["outputs"]["region.csv"].get<std::string>().size() == 64);
    }
    // alias
    CHECK(run("-o " + dir("alias") + " design-region --beta-deg 120").code == 0);
}

TEST_CASE("spectrum: NaCl (111) peak and linf normalization") {
    auto d = dir("spectrum");
    auto r = run("-o " + d + " spectrum --material NaCl --qmax 1");
    REQUIRE(r.code == 0);
    auto lib = bst::MaterialLibrary::load_default();
    double q111 = 1.0 / (2.0 * bst::d_spacing(lib.get("NaCl"), {1, 1, 1}));
    bool found = false;
    for (const auto& p : csv(d + "/peaks.csv")) found |= std::abs(p[0] - q111) < 1e-12;
    CHECK(found);
    double mx = 0.0;
    for (const auto& row : csv(d + "/spectrum.csv")) mx = std::max(mx, row[1]);
    CHECK(mx == doctest::Approx(1.0));

    auto bad = run("-o " + dir("spectrum_bad") + " spectrum --material Unobtainium");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("NaCl") != std::string::npos);
}

TEST_CASE("curves: origin, offset minimum and the ratio-2 saddle grid") {
    auto d = dir("curves");
    REQUIRE(run("-o " + d + " curves --x2 0 --eps 0 --energies 1 --samples 201").code == 0);
    auto rows = csv(d + "/curves.csv");
    CHECK(rows[100][1] == doctest::Approx(0.0));
    CHECK(std::abs(rows[100][2]) < 1e-12);

    REQUIRE(run("-o " + d + " curves --x2 0 --eps 0.01 --energies 1 --samples 201").code == 0);
    rows = csv(d + "/curves.csv");
    double mn = 1e9;
    for (const auto& row : rows) mn = std::min(mn, row[2]);
    auto sad = csv(d + "/saddles.csv");
    CHECK(mn == doctest::Approx(sad[0][1]).epsilon(1e-12));
    CHECK(sad[0][1] > 0.0);

    auto r = run("-o " + d + " curves --x2 0 --eps 0.01 --w 1 --emin 0.15 --ratio 2 --count 12");
    REQUIRE(r.code == 0);
    for (const auto& s : csv(d + "/saddles.csv")) CHECK(s[1] < 0.15);
    CHECK(r.out.find("saddles below") != std::string::npos);
}

TEST_CASE("reconstruct: metrics, manifest and byte-identical re-run") {
    auto a = dir("recon_a"), b = dir("recon_b");
    auto r1 = run("-o " + a + " reconstruct --phantom two_sphere --cavg 10 --seed 7 --max-iters 40");
    REQUIRE(r1.code == 0);
    auto r2 = run("-o " + b + " reconstruct --phantom two_sphere --cavg 10 --seed 7 --max-iters 40", "BST_THREADS=1");
    REQUIRE(r2.code == 0);
    auto head = bst::read_text(a + "/metrics.csv");
    CHECK(head.find("eps_ls") != std::string::npos);
    CHECK(head.find("f1") != std::string::npos);
    auto ma = manifest(a), mb = manifest(b);
    CHECK(ma["seed"] == 7);
    CHECK(ma["outputs"] == mb["outputs"]);
    CHECK(ma["outputs"].contains("recon.f64"));
    CHECK(ma["outputs"].contains("trace.csv"));

    // score the written reconstruction against the written truth
    auto s = dir("score");
    auto sr = run("-o " + s + " score --recon " + a + "/recon.f64 --truth " + a + "/truth.csv");
    REQUIRE(sr.code == 0);
    CHECK(csv(s + "/score.csv")[0][0] == doctest::Approx(csv(a + "/metrics.csv")[0][1]).epsilon(1e-15));
}

TEST_CASE("config errors exit 2, numeric failures exit 3") {
    auto r = run("reconstruct --config /nonexistent/exp.json");
    CHECK(r.code == 2);
    CHECK(r.err.find("/nonexistent/exp.json") != std::string::npos);

    auto cfg = (kRoot / "bad.json").string();
    bst::write_text(cfg, R"({"c_avg": "many"})");
    CHECK(run("reconstruct --config " + cfg).code == 2);

    // the scan line misses both spheres: the data are identically zero
    auto miss = (kRoot / "miss.json").string();
    bst::write_text(miss, R"({"geometry": {"scan_line_mm": 600}, "max_iters": 5})");
    auto m = run("-o " + dir("miss") + " reconstruct --config " + miss);
    CHECK(m.code == 3);
}

TEST_CASE("forward and invert through files") {
    auto rd = dir("fw_src");
    REQUIRE(run("-o " + rd + " reconstruct --max-iters 1").code == 0);
    auto geom = std::string(BST_SOURCE_DIR) + "/configs/geometry_restricted.json";
    auto f = dir("fw");
    REQUIRE(run("-o " + f + " forward --geometry " + geom + " --image " + rd + "/truth.csv --mode restricted").code == 0);
    auto sino = bst::read_sinogram_csv(f + "/sinogram.csv");
    CHECK(sino.ne() == 64);
    CHECK(sino.d1.empty());
    auto i = dir("inv");
    REQUIRE(run("-o " + i + " invert --geometry " + geom + " --sinogram " + f + "/sinogram.csv").code == 0);
    CHECK(fs::exists(i + "/image.pgm"));
    CHECK(fs::exists(i + "/report.json"));
    CHECK(manifest(i)["inputs"].size() == 2);
    CHECK(run("forward --geometry /nonexistent.json --image x.csv").code == 2);
}
