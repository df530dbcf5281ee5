#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "bst/forward.hpp"
#include "bst/geometry.hpp"
#include "bst/physics.hpp"

namespace bst {

// Sparse rows over the q-major vectorized image, with a transposed copy for A^T.
struct SystemMatrix {
    std::size_t rows = 0, cols = 0;
    std::size_t nq = 0, nx = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col;
    std::vector<double> val;
    std::vector<std::size_t> t_ptr;
    std::vector<std::uint32_t> t_row;
    std::vector<double> t_val;
    std::string geometry_id;  // "full" (E, s1, d1) rows or "offset" (E, s1) rows with d1 = s1
    int density = 4;

    std::size_t nnz() const { return val.size(); }
    std::size_t bytes() const;
    std::vector<double> apply(const std::vector<double>& y) const;
    std::vector<double> apply_transpose(const std::vector<double>& r) const;
    // A^T 1
    std::vector<double> column_sums() const;
    void scale(double s);
};

struct AssemblyOptions {
    int density = 4;              // curve samples per image column, as in forward_full
    std::vector<double> I0;       // per-energy source spectrum, empty = uniform
    bool offset_rows = false;     // one detector per source at d1 = s1
    std::size_t max_bytes = std::size_t(4) << 30;
};

// Throws SizeLimit (with the estimate in the message) before allocating past max_bytes.
SystemMatrix assemble_matrix(const ScanGeometry& g, const std::vector<double>& q_axis,
                             const std::vector<double>& x1_axis, double x2, const AssemblyOptions& opt = {});

// Reconstruction geometry in scanner millimetres, converted to normalized units at
// kTunnelScaleMm per unit on every axis.
struct ReconGeometryConfig {
    double beta_deg = 120.0;
    std::size_t n_sources = 11;  // over [-300, 300] mm
    std::size_t n_detectors = 60;
    double detector_pitch_mm = 10.0;
    std::size_t n_energies = 29;  // 1..29 keV
    double half_width_mm = 300.0;
    double eps_slope = 75.0 / 820.0;  // eps_mm = eps_slope * T_mm
    double scan_line_mm = 410.0;      // tunnel position T of the scan line
    std::size_t nq = 64, nx = 64;
    double q_max = 1.0;

    static ReconGeometryConfig desk();
    // 31 sources at 20 mm, 600 detectors at 1 mm.
    static ReconGeometryConfig full_scale();
};

ScanGeometry recon_geometry(const ReconGeometryConfig& c);
double scan_line_x2(const ReconGeometryConfig& c);
std::vector<double> recon_q_axis(const ReconGeometryConfig& c);
std::vector<double> recon_x1_axis(const ReconGeometryConfig& c);

enum class PhantomKind { two_sphere, four_sphere };
PhantomKind parse_phantom_kind(const std::string& s);
std::string to_string(PhantomKind k);

struct Sphere {
    std::string material;
    double x1_mm = 0.0;
    double T_mm = 410.0;  // tunnel position of the centre
    double r_mm = 15.0;
};
std::vector<Sphere> phantom_spheres(PhantomKind k);

// Paints each sphere's chord on the scan line with the material's cell-averaged spectrum.
// Column integrals equal chord length (normalized units) times the spectrum; the image is
// then scaled to unit maximum. warning is set when the line misses every sphere.
PhantomImage build_phantom(PhantomKind kind, double scan_line_mm, const std::vector<double>& q_axis,
                           const std::vector<double>& x1_axis, const MaterialLibrary& lib,
                           std::string* warning = nullptr);
PhantomImage build_phantom(const std::vector<Sphere>& spheres, double scan_line_mm,
                           const std::vector<double>& q_axis, const std::vector<double>& x1_axis,
                           const MaterialLibrary& lib, std::string* warning = nullptr);

struct NoisySinogram {
    std::vector<std::int64_t> counts;
    std::vector<double> mean;  // mu = scale * A y
    double c_avg = 0.0;
    std::uint64_t seed = 0;
    double scale = 0.0;  // c_avg p / sum(A y)
};

// Datum k draws from CounterRng(seed, k). Throws DegenerateData when sum(A y) = 0.
NoisySinogram simulate_poisson(const SystemMatrix& A, const std::vector<double>& y, double c_avg, std::uint64_t seed);

// ||b - mu|| / ||mu||
double eps_ls(const NoisySinogram& s);

struct TVObjectiveConfig {
    double lambda = 1.0;
    double beta_smooth = 0.01;
    int max_iters = 500;
    double armijo = 1e-4;
    double backtrack = 0.5;
    double rel_tol = 1e-9;  // stop when the relative objective decrease falls below this
    double log_floor = 1e-12;
    // lambda_eff = lambda_scale * lambda * n(b), n = 1 (none), sum(b)/(nq nx) (counts) or its root (sqrt_counts)
    enum class LambdaScaling { none, counts, sqrt_counts } scaling = LambdaScaling::sqrt_counts;
    double lambda_scale = 0.3;

    void validate() const;
};

// Smoothed TV with forward differences and zero difference past the last row/column.
double tv_beta(const std::vector<double>& y, std::size_t nq, std::size_t nx, double beta);
std::vector<double> tv_beta_gradient(const std::vector<double>& y, std::size_t nq, std::size_t nx, double beta);

struct TraceEntry {
    int iter = 0;
    double objective = 0.0;
    double step = 0.0;  // accepted line-search fraction
    int backtracks = 0;
};

struct TVResult {
    PhantomImage image;
    std::vector<TraceEntry> trace;
    double gradient_map_residual = 0.0;  // ||y - P(y - D g)|| / max(||y||, 1e-300)
    double lambda_effective = 0.0;
    bool converged = false;
    bool monotone = true;
    bool nonnegative = true;
};

// argmin over y >= 0 of sum_k [(A y)_k - b_k log max((A y)_k, floor)] + lambda TV_beta(y), by
// scaled gradient projection: EM metric D = y / A^T 1 (clipped), alternating Barzilai-Borwein
// steps and Armijo backtracking along the projected direction.
TVResult reconstruct_tv(const SystemMatrix& A, const std::vector<double>& counts, const TVObjectiveConfig& cfg,
                        const PhantomImage& axes_like);
// Objective value with the data term shifted by the constant sum_k (b_k log b_k - b_k); the trace uses it too.
double tv_objective(const SystemMatrix& A, const std::vector<double>& counts, const std::vector<double>& y,
                    double lambda_eff, const TVObjectiveConfig& cfg);

struct EdgeConfig {
    double percentile = 0.9;
    int tolerance_px = 1;
};

// Harmonic mean of precision and recall of thresholded gradient magnitudes. Throws
// UndefinedScore when the truth has no edges.
double gradient_f1(const PhantomImage& recon, const PhantomImage& truth, const EdgeConfig& cfg = {});

// Mean relative L2 error in peak bands (q within one cell of a peak, over the sphere's columns),
// split at q_split.
struct BandErrors {
    double low = 0.0, high = 0.0;
    int n_low = 0, n_high = 0;
};
BandErrors peak_band_errors(const PhantomImage& recon, const PhantomImage& truth, const std::vector<Sphere>& spheres,
                            const MaterialLibrary& lib, double scan_line_mm, double q_split = 0.5);

struct SweepCell {
    double lambda = 0.0, beta = 0.0, f1 = 0.0;
    int iterations = 0;
    bool monotone = true, nonnegative = true;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    double mean_f1 = 0.0;
    std::size_t representative = 0;  // cell whose F1 is closest to the mean
    PhantomImage representative_image;
};

std::vector<double> default_lambda_grid();
std::vector<double> default_beta_grid();

SweepResult hyperparameter_sweep(const SystemMatrix& A, const std::vector<double>& counts,
                                 const PhantomImage& truth, const std::vector<double>& lambdas,
                                 const std::vector<double>& betas, const TVObjectiveConfig& base = {},
                                 const EdgeConfig& edges = {});

struct ExperimentConfig {
    PhantomKind phantom = PhantomKind::two_sphere;
    ReconGeometryConfig geometry = ReconGeometryConfig::desk();
    double c_avg = 10.0;
    std::uint64_t seed = 1;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::vector<double> beta_grid = default_beta_grid();
    int max_iters = 500;
    std::string output_dir = ".";
};

// Everything one noisy reconstruction needs. A is pre-scaled by noise.scale so the solver
// works in the truth's units.
struct ReconProblem {
    ReconGeometryConfig geometry;
    PhantomKind phantom = PhantomKind::two_sphere;
    SystemMatrix A;
    PhantomImage truth;
    NoisySinogram noise;
    std::vector<double> counts;
    std::string warning;
};

ReconProblem make_problem(const ReconGeometryConfig& g, PhantomKind kind, double c_avg, std::uint64_t seed,
                          const MaterialLibrary& lib);

// JSON keys: phantom, geometry {beta_deg, sources, detectors, detector_pitch_mm, energies,
// scan_line_mm, nq, nx, scale: "desk" | "full"}, c_avg, seed, lambda_grid, beta_grid,
// max_iters, output_dir. Throws ConfigError.
ExperimentConfig load_experiment(const std::string& path);
ExperimentConfig parse_experiment(const std::string& json_text);

}  // namespace bst
