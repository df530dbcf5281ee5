// bst: command-line front end. Every command writes its outputs plus manifest.json
// into the output directory.
#include <CLI11.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "bst/design.hpp"
#include "bst/errors.hpp"
#include "bst/forward.hpp"
#include "bst/io.hpp"
#include "bst/physics.hpp"
#include "bst/recon.hpp"
#include "bst/volterra.hpp"

#ifndef BST_VERSION
#define BST_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace bst;
using nlohmann::json;

namespace {

constexpr const char* kFormatVersion = "1";

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, std::size_t(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx, md, &n);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char h[3];
    for (unsigned int i = 0; i < n; ++i) {
        std::snprintf(h, sizeof h, "%02x", md[i]);
        hex += h;
    }
    return hex;
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct Run {
    std::string out_dir = ".";
    bool out_dir_given = false;  // -o or BST_OUTPUT_DIR
    int threads = 0;
    std::vector<std::string> argv;
    std::string command;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    json parameters = json::object();
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    std::string started = utc_now();

    std::string path(const std::string& name) const {
        fs::path p(name);
        return p.is_absolute() ? name : (fs::path(out_dir) / p).string();
    }
    // Registers an output file by name and returns its full path.
    std::string out(const std::string& name) {
        fs::create_directories(out_dir);
        auto p = path(name);
        outputs.push_back(p);
        return p;
    }
    void input(const std::string& p) {
        if (!fs::exists(p)) throw ConfigError("input file not found: " + p);
        inputs.push_back(p);
    }

    void write_manifest() const {
        json m;
        m["command"] = command;
        m["argv"] = argv;
        m["config"] = config;
        m["seed"] = seed ? json(*seed) : json(nullptr);
        m["output_dir"] = out_dir;
        m["tool_version"] = BST_VERSION;
        m["format_version"] = kFormatVersion;
        m["threads"] = threads;
        m["materials"] = MaterialLibrary::default_path();
        m["parameters"] = parameters;
        m["started_utc"] = started;
        m["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json in = json::object(), out = json::object();
        for (const auto& p : inputs) in[p] = sha256_file(p);
        for (const auto& p : outputs) out[fs::path(p).filename().string()] = sha256_file(p);
        m["inputs"] = in;
        m["outputs"] = out;
        fs::create_directories(out_dir);
        write_text(path("manifest.json"), m.dump(2) + "\n");
    }
};

PhantomImage read_image_any(const std::string& p) {
    return fs::path(p).extension() == ".csv" ? read_image_csv(p) : read_image_binary(p);
}

void write_image_all(Run& r, const std::string& stem, const PhantomImage& f) {
    write_image_binary(r.out(stem + ".f64"), f);
    r.outputs.push_back(r.path(stem + ".f64.json"));
    write_image_csv(r.out(stem + ".csv"), f);
    write_pgm(r.out(stem + ".pgm"), f);
}

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            v.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": not a number: '" + tok + "'");
        }
    }
    if (v.empty()) throw ConfigError(std::string(what) + ": empty list");
    return v;
}

// ---- spectrum ----

struct SpectrumArgs {
    std::string material;
    double q_max = 1.0;
    std::size_t nq = 1001;
    double sigma2 = 1e-6;
    std::string normalize = "linf";
};

void cmd_spectrum(Run& r, const SpectrumArgs& a) {
    if (!(a.q_max > 0.0)) throw ConfigError("--qmax must be > 0");
    if (a.nq < 2) throw ConfigError("--nq must be >= 2");
    auto lib = MaterialLibrary::load_default();
    auto s = build_spectrum(lib.get(a.material), a.q_max, a.sigma2);
    std::vector<std::vector<double>> rows;
    double mx = 0.0;
    for (std::size_t i = 0; i < a.nq; ++i) {
        double q = a.q_max * double(i) / double(a.nq - 1);
        rows.push_back({q, s(q)});
        mx = std::max(mx, rows.back()[1]);
    }
    if (a.normalize == "linf" && mx > 0.0)
        for (auto& row : rows) row[1] /= mx;
    write_csv(r.out("spectrum.csv"), {"q_inv_A", "F"}, rows, "# material = " + a.material + "\n");
    std::vector<std::vector<double>> peaks;
    for (const auto& p : s.peaks) peaks.push_back({p.q, p.amplitude});
    write_csv(r.out("peaks.csv"), {"q_inv_A", "amplitude"}, peaks);
    std::printf("%s: %zu peaks below q = %g\n", a.material.c_str(), s.peaks.size(), a.q_max);
}

// ---- curves ----

struct CurvesArgs {
    double x2 = 0.0, eps = 0.0, beta_deg = 120.0;
    double w = 0.0;  // overrides beta_deg when > 0
    std::string energies = "0.25,0.5,0.75,1";
    double e_min = 0.0, ratio = 0.0;  // E grid [e_min, ratio] when ratio > 0
    std::size_t count = 10;
    std::size_t n = 201;
};

void cmd_curves(Run& r, const CurvesArgs& a) {
    if (a.n < 2) throw ConfigError("--samples must be >= 2");
    double w = a.w > 0.0 ? a.w : fan_half_width(a.beta_deg * std::numbers::pi / 180.0, a.x2);
    CurveFamily fam(a.x2, a.eps, w);
    std::vector<double> E;
    if (a.ratio > 0.0) {
        // energies over [E_m, E_M / q1(w)], as in the offset curve figure
        if (!(a.e_min > 0.0) || a.ratio <= a.e_min || a.count < 2)
            throw ConfigError("--ratio needs --emin in (0, ratio) and --count >= 2");
        for (std::size_t k = 0; k < a.count; ++k) E.push_back(a.e_min + (a.ratio - a.e_min) * double(k) / double(a.count - 1));
    } else {
        E = parse_list(a.energies, "--energies");
    }
    std::vector<std::vector<double>> rows, saddles;
    for (double e : E) {
        for (std::size_t k = 0; k < a.n; ++k) {
            double x1 = -w + 2.0 * w * double(k) / double(a.n - 1);
            rows.push_back({e, x1, e * fam.q1(x1)});
        }
        // q1 is even with its minimum at x1 = 0
        saddles.push_back({e, e * fam.q1(0.0), e * fam.q1(w)});
    }
    char c[160];
    std::snprintf(c, sizeof c, "# x2 = %s, eps = %s, w = %s\n", fmt17(a.x2).c_str(), fmt17(a.eps).c_str(),
                  fmt17(w).c_str());
    write_csv(r.out("curves.csv"), {"E_inv_A", "x1", "q"}, rows, c);
    write_csv(r.out("saddles.csv"), {"E_inv_A", "q_saddle", "q_edge"}, saddles, c);
    double top = 0.0;
    for (const auto& s : saddles) top = std::max(top, s[1]);
    std::printf("w = %.6g, q1(0) = %.6g, largest saddle value %.6g\n", w, fam.q1(0.0), top);
    if (a.ratio > 0.0) std::printf("saddles %s E_m = %g\n", top < a.e_min ? "below" : "not below", a.e_min);
}

// ---- forward ----

struct ForwardArgs {
    std::string geometry, image, mode = "full";
    int density = 4;
};

void cmd_forward(Run& r, const ForwardArgs& a) {
    r.input(a.geometry);
    r.input(a.image);
    auto g = load_geometry_json(a.geometry);
    auto f = read_image_any(a.image);
    ForwardOptions opt;
    opt.density = a.density;
    SinogramTensor t;
    if (a.mode == "full")
        t = forward_full(f, g, {}, opt);
    else if (a.mode == "restricted")
        t = forward_restricted(f, g, nullptr, opt);
    else if (a.mode == "offset")
        t = forward_offset(f, g, nullptr, opt);
    else
        throw ConfigError("--mode must be full, restricted or offset");
    write_sinogram_csv(r.out("sinogram.csv"), t);
    std::printf("%zu energies x %zu sources x %zu detectors\n", t.ne(), t.ns(), t.nd());
}

// ---- invert ----

struct InvertArgs {
    std::string geometry, sinogram, method = "forward-substitution";
    double q_min = 0.0, cond_cap = 1e3, root_tol = 0.1;
    bool offset = false;
};

void cmd_invert(Run& r, const InvertArgs& a) {
    r.input(a.geometry);
    r.input(a.sinogram);
    auto g = load_geometry_json(a.geometry);
    auto t = read_sinogram_csv(a.sinogram);
    InvertOptions opt;
    opt.q_min = a.q_min;
    opt.cond_cap = a.cond_cap;
    opt.root_tol = a.root_tol;
    opt.offset = a.offset;
    if (a.method == "neumann")
        opt.method = InvertOptions::Method::neumann;
    else if (a.method != "forward-substitution")
        throw ConfigError("--method must be forward-substitution or neumann");
    auto res = invert_bragg(t, g, nullptr, opt);
    write_image_all(r, "image", res.image);
    write_text(r.out("report.json"), res.report.to_json() + "\n");
    std::printf("%zu of %zu frequency channels excluded\n", res.report.excluded.size(), res.report.eta.size());
}

// ---- reconstruct / sweep ----

struct ReconArgs {
    std::string config;
    std::string phantom = "two_sphere";
    std::string scale = "desk";
    double c_avg = 10.0;
    std::uint64_t seed = 1;
    double lambda = 1.0, beta = 0.01;
    int max_iters = 500;
    bool reduced = false;
};

ExperimentConfig experiment(Run& r, const ReconArgs& a, const CLI::App& sub) {
    ExperimentConfig c;
    if (!a.config.empty()) {
        r.input(a.config);
        r.config = a.config;
        c = load_experiment(a.config);
        if (!r.out_dir_given) r.out_dir = c.output_dir;
    }
    // explicit flags override the file
    if (sub.count("--phantom")) c.phantom = parse_phantom_kind(a.phantom);
    if (sub.count("--scale")) {
        if (a.scale == "full")
            c.geometry = ReconGeometryConfig::full_scale();
        else if (a.scale == "desk")
            c.geometry = ReconGeometryConfig::desk();
        else
            throw ConfigError("--scale must be desk or full");
    }
    if (sub.count("--cavg")) c.c_avg = a.c_avg;
    if (sub.count("--seed")) c.seed = a.seed;
    if (sub.count("--max-iters")) c.max_iters = a.max_iters;
    if (!(c.c_avg > 0.0)) throw ConfigError("--cavg must be > 0");
    r.seed = c.seed;
    r.parameters["phantom"] = to_string(c.phantom);
    r.parameters["c_avg"] = c.c_avg;
    r.parameters["max_iters"] = c.max_iters;
    r.parameters["sources"] = c.geometry.n_sources;
    r.parameters["detectors"] = c.geometry.n_detectors;
    r.parameters["energies"] = c.geometry.n_energies;
    r.parameters["image"] = {c.geometry.nq, c.geometry.nx};
    return c;
}

void write_trace(const std::string& path, const TVResult& res) {
    std::vector<std::vector<double>> rows;
    for (const auto& e : res.trace) rows.push_back({double(e.iter), e.objective, e.step, double(e.backtracks)});
    write_csv(path, {"iter", "objective", "step", "backtracks"}, rows);
}

void cmd_reconstruct(Run& r, const ReconArgs& a, const CLI::App& sub) {
    auto c = experiment(r, a, sub);
    auto lib = MaterialLibrary::load_default();
    auto p = make_problem(c.geometry, c.phantom, c.c_avg, c.seed, lib);
    if (!p.warning.empty()) std::fprintf(stderr, "warning: %s\n", p.warning.c_str());
    TVObjectiveConfig cfg;
    cfg.lambda = a.lambda;
    cfg.beta_smooth = a.beta;
    cfg.max_iters = c.max_iters;
    r.parameters["lambda"] = a.lambda;
    r.parameters["beta_smooth"] = a.beta;
    auto res = reconstruct_tv(p.A, p.counts, cfg, p.truth);
    double f1 = gradient_f1(res.image, p.truth);
    double e = eps_ls(p.noise);
    auto bands = peak_band_errors(res.image, p.truth, phantom_spheres(c.phantom), lib, c.geometry.scan_line_mm);
    write_image_all(r, "recon", res.image);
    write_image_all(r, "truth", p.truth);
    write_trace(r.out("trace.csv"), res);
    write_csv(r.out("metrics.csv"),
              {"eps_ls", "f1", "band_error_low_q", "band_error_high_q", "lambda_effective", "iterations", "converged",
               "gradient_map_residual"},
              {{e, f1, bands.low, bands.high, res.lambda_effective, double(res.trace.size() - 1),
                double(res.converged), res.gradient_map_residual}});
    std::printf("eps_ls %.4f  F1 %.4f  iterations %zu\n", e, f1, res.trace.size() - 1);
}

void cmd_sweep(Run& r, const ReconArgs& a, const CLI::App& sub) {
    auto c = experiment(r, a, sub);
    if (a.reduced) {
        c.lambda_grid = {0.3, 1.0, 3.0};
        c.beta_grid = {0.001, 0.1};
    }
    r.parameters["lambda_grid"] = c.lambda_grid;
    r.parameters["beta_grid"] = c.beta_grid;
    auto lib = MaterialLibrary::load_default();
    auto p = make_problem(c.geometry, c.phantom, c.c_avg, c.seed, lib);
    TVObjectiveConfig base;
    base.max_iters = c.max_iters;
    auto s = hyperparameter_sweep(p.A, p.counts, p.truth, c.lambda_grid, c.beta_grid, base);
    std::vector<std::vector<double>> rows;
    for (const auto& cell : s.cells) rows.push_back({cell.lambda, cell.beta, cell.f1, double(cell.iterations)});
    write_csv(r.out("sweep.csv"), {"lambda", "beta", "f1", "iterations"}, rows);
    const auto& rep = s.cells[s.representative];
    write_csv(r.out("metrics.csv"), {"eps_ls", "mean_f1", "representative_lambda", "representative_beta", "representative_f1"},
              {{eps_ls(p.noise), s.mean_f1, rep.lambda, rep.beta, rep.f1}});
    write_image_all(r, "representative", s.representative_image);
    write_image_all(r, "truth", p.truth);
    std::printf("%zu cells, mean F1 %.4f, representative lambda %g beta %g\n", s.cells.size(), s.mean_f1, rep.lambda,
                rep.beta);
}

// ---- design ----

struct DesignArgs {
    double beta_deg = 120.0, emin_kev = 0.62, emax_kev = 12.4;
    std::size_t nx = 201, neps = 201;
    double eps_max = 0.2;
    std::string out = "region.csv", layout = "layout.csv";
    std::size_t n_arrays = 21;
};

void cmd_design(Run& r, const DesignArgs& a) {
    double Em = kev_to_inv_angstrom(a.emin_kev), EM = kev_to_inv_angstrom(a.emax_kev);
    r.parameters = {{"beta_deg", a.beta_deg}, {"emin_kev", a.emin_kev}, {"emax_kev", a.emax_kev},
                    {"nx", a.nx}, {"neps", a.neps}, {"eps_max", a.eps_max}, {"arrays", a.n_arrays}};
    auto reg = design_region(a.beta_deg * std::numbers::pi / 180.0, Em, EM, a.nx, a.neps, a.eps_max);
    std::string head = layout_header();
    std::vector<std::vector<double>> rows;
    double max_grid = 0.0;
    for (std::size_t i = 0; i < reg.x2.size(); ++i)
        for (std::size_t j = 0; j < reg.eps.size(); ++j) {
            bool ok = reg.at(i, j);
            rows.push_back({reg.x2[i], reg.eps[j], reg.eps[j] * kOffsetScaleMm, double(ok)});
            if (ok) max_grid = std::max(max_grid, reg.eps[j]);
        }
    write_csv(r.out(a.out), {"x2", "eps", "eps_mm", "feasible"}, rows, head);
    std::vector<std::vector<double>> drows;
    double max_delta = 0.0, at_x2 = 0.0;
    for (std::size_t i = 0; i < reg.x2.size(); ++i) {
        drows.push_back({reg.x2[i], kTunnelScaleMm * (1.0 - reg.x2[i]), reg.delta[i], reg.delta[i] * kOffsetScaleMm});
        if (std::isfinite(reg.delta[i]) && reg.delta[i] > max_delta) max_delta = reg.delta[i], at_x2 = reg.x2[i];
    }
    write_csv(r.out("delta.csv"), {"x2", "T_mm", "delta", "delta_mm"}, drows, head);
    double max_layout = std::nan("");
    try {
        auto fit = fit_linear_phi(reg);
        std::vector<std::vector<double>> lrows;
        max_layout = 0.0;
        for (const auto& l : export_layout(fit.phi, a.n_arrays)) {
            lrows.push_back({l.x2, l.T_mm, l.eps_mm, l.intercept_mm, l.plane_angle_deg});
            max_layout = std::max(max_layout, l.eps_mm);
        }
        char c[200];
        std::snprintf(c, sizeof c, "# phi(x2) = %s x2 + %s, shrink %s\n", fmt17(fit.phi.slope).c_str(),
                      fmt17(fit.phi.intercept).c_str(), fmt17(fit.shrink).c_str());
        write_csv(r.out(a.layout), {"x2", "T_mm", "eps_mm", "intercept_mm", "plane_angle_deg"}, lrows, head + c);
    } catch (const DesignInfeasible& e) {
        std::fprintf(stderr, "warning: no layout written: %s\n", e.what());
    }
    std::printf("layout max offset %.2f mm; region max %.2f mm at x2 = %.3f (grid %.2f mm)\n", max_layout,
                max_delta * kOffsetScaleMm, at_x2, max_grid * kOffsetScaleMm);
}

// ---- score ----

struct ScoreArgs {
    std::string recon, truth;
    double percentile = 0.9;
    int tolerance = 1;
};

void cmd_score(Run& r, const ScoreArgs& a) {
    r.input(a.recon);
    r.input(a.truth);
    auto rec = read_image_any(a.recon), tr = read_image_any(a.truth);
    double f1 = gradient_f1(rec, tr, {a.percentile, a.tolerance});
    write_csv(r.out("score.csv"), {"f1"}, {{f1}});
    std::printf("F1 %.6f\n", f1);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bragg scattering tomography: spectra, curves, transforms, design regions, reconstruction"};
    app.require_subcommand(1);
    Run run;
    run.argv.assign(argv, argv + argc);
    app.set_version_flag("--version", std::string("bst ") + BST_VERSION + " (interface " + kFormatVersion + ")");
    app.add_option("--threads", run.threads, "worker threads (0 = all cores)")->envname("BST_THREADS")->check(CLI::NonNegativeNumber);
    auto* o_out = app.add_option("-o,--out-dir", run.out_dir, "output directory (default ., or the config's output_dir)")
                      ->envname("BST_OUTPUT_DIR");

    SpectrumArgs sp;
    auto* s_sp = app.add_subcommand("spectrum", "material spectrum F(q) as CSV");
    s_sp->add_option("--material", sp.material, "material label")->required();
    s_sp->add_option("--qmax", sp.q_max, "largest q (1/A)");
    s_sp->add_option("--nq", sp.nq, "number of q samples");
    s_sp->add_option("--sigma2", sp.sigma2, "peak variance");
    s_sp->add_option("--normalize", sp.normalize, "linf or none")->check(CLI::IsMember({"linf", "none"}));

    CurvesArgs cu;
    auto* s_cu = app.add_subcommand("curves", "integration curves q = E q1(x1)");
    s_cu->add_option("--x2", cu.x2, "scan line");
    s_cu->add_option("--eps", cu.eps, "detector offset");
    s_cu->add_option("--beta-deg", cu.beta_deg, "fan opening angle");
    s_cu->add_option("--w", cu.w, "fan half-width (overrides --beta-deg)");
    s_cu->add_option("--energies", cu.energies, "comma-separated energies (1/A)");
    s_cu->add_option("--emin", cu.e_min, "lowest energy of a ratio grid");
    s_cu->add_option("--ratio", cu.ratio, "E_M / q1(w): energies span [emin, ratio]");
    s_cu->add_option("--count", cu.count, "energies in a ratio grid");
    s_cu->add_option("--samples", cu.n, "samples per curve");

    ForwardArgs fw;
    auto* s_fw = app.add_subcommand("forward", "forward transform of an image");
    s_fw->add_option("--geometry", fw.geometry, "geometry JSON")->required();
    s_fw->add_option("--image", fw.image, "image (.csv or .f64 with sidecar)")->required();
    s_fw->add_option("--mode", fw.mode, "full, restricted or offset");
    s_fw->add_option("--density", fw.density, "curve samples per image column")->check(CLI::PositiveNumber);

    InvertArgs iv;
    auto* s_iv = app.add_subcommand("invert", "analytic inversion of restricted or offset data");
    s_iv->add_option("--geometry", iv.geometry, "geometry JSON")->required();
    s_iv->add_option("--sinogram", iv.sinogram, "sinogram CSV")->required();
    s_iv->add_option("--q-min", iv.q_min, "lowest recoverable q (1/A)");
    s_iv->add_option("--cond-cap", iv.cond_cap, "channel conditioning cap");
    s_iv->add_option("--root-tol", iv.root_tol, "boundary-root exclusion tolerance");
    s_iv->add_option("--method", iv.method, "forward-substitution or neumann");
    s_iv->add_flag("--offset", iv.offset, "data came from the offset transform");

    ReconArgs rc;
    auto add_recon_opts = [](CLI::App* s, ReconArgs& a) {
        s->add_option("--config", a.config, "experiment JSON");
        s->add_option("--phantom", a.phantom, "two_sphere or four_sphere");
        s->add_option("--scale", a.scale, "desk or full geometry");
        s->add_option("--cavg", a.c_avg, "mean count per datum");
        s->add_option("--seed", a.seed, "noise seed");
        s->add_option("--max-iters", a.max_iters, "solver iterations")->check(CLI::PositiveNumber);
    };
    auto* s_rc = app.add_subcommand("reconstruct", "noisy simulation and TV reconstruction");
    add_recon_opts(s_rc, rc);
    s_rc->add_option("--lambda", rc.lambda, "TV weight");
    s_rc->add_option("--beta", rc.beta, "TV smoothing");
    ReconArgs sw;
    auto* s_sw = app.add_subcommand("sweep", "lambda/beta sweep with mean F1");
    add_recon_opts(s_sw, sw);
    s_sw->add_flag("--reduced", sw.reduced, "6-cell grid instead of the 57-cell default");

    DesignArgs dg;
    auto* s_dg = app.add_subcommand("design", "feasible detector-offset region and layout");
    s_dg->alias("design-region");
    s_dg->add_option("--beta-deg", dg.beta_deg, "fan opening angle");
    s_dg->add_option("--emin-kev", dg.emin_kev, "lowest energy (keV)");
    s_dg->add_option("--emax-kev", dg.emax_kev, "highest energy (keV)");
    s_dg->add_option("--nx", dg.nx, "x2 grid points");
    s_dg->add_option("--neps", dg.neps, "eps grid points");
    s_dg->add_option("--eps-max", dg.eps_max, "largest eps on the grid (normalized)");
    s_dg->add_option("--out", dg.out, "region CSV");
    s_dg->add_option("--layout", dg.layout, "layout CSV");
    s_dg->add_option("--arrays", dg.n_arrays, "detector arrays in the layout");

    ScoreArgs sc;
    auto* s_sc = app.add_subcommand("score", "gradient F1 of a reconstruction against a truth image");
    s_sc->add_option("--recon", sc.recon, "reconstruction image")->required();
    s_sc->add_option("--truth", sc.truth, "truth image")->required();
    s_sc->add_option("--percentile", sc.percentile, "edge threshold percentile");
    s_sc->add_option("--tolerance", sc.tolerance, "matching tolerance in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run.threads > 0) omp_set_num_threads(run.threads);
        run.threads = omp_get_max_threads();
        run.out_dir_given = o_out->count() > 0;
        auto* sub = app.get_subcommands().front();
        run.command = sub->get_name();
        if (sub == s_sp) cmd_spectrum(run, sp);
        else if (sub == s_cu) cmd_curves(run, cu);
        else if (sub == s_fw) cmd_forward(run, fw);
        else if (sub == s_iv) cmd_invert(run, iv);
        else if (sub == s_rc) cmd_reconstruct(run, rc, *s_rc);
        else if (sub == s_sw) cmd_sweep(run, sw, *s_sw);
        else if (sub == s_dg) cmd_design(run, dg);
        else if (sub == s_sc) cmd_score(run, sc);
        run.write_manifest();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
