#include "bst/physics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bst/errors.hpp"
#include "json.hpp"

#ifndef BST_DEFAULT_MATERIALS
#define BST_DEFAULT_MATERIALS "data/materials.json"
#endif

namespace bst {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMergeTol = 1e-9;
// Gaussians are exactly zero in double precision beyond ~27.3 sigma.
constexpr double kWindowSigmas = 28.0;
// Classical electron radius squared in A^2.
constexpr double kR0Squared = 2.8179403262e-5 * 2.8179403262e-5;

}  // namespace

void CrystalCell::validate() const {
    if (!(a0 > 0.0) || !std::isfinite(a0)) throw InvalidArgument("crystal cell '" + label + "': a0 must be positive");
    if (system == LatticeSystem::hexagonal && (!(c0 > 0.0) || !std::isfinite(c0)))
        throw InvalidArgument("crystal cell '" + label + "': hexagonal cell needs c0 > 0");
    if (atoms.empty()) throw InvalidArgument("crystal cell '" + label + "': no atoms");
    for (const auto& a : atoms) {
        for (double x : a.frac)
            if (!(x >= 0.0 && x <= 1.0))
                throw InvalidArgument("crystal cell '" + label + "': fractional coordinate outside [0,1]");
        if (a.Z <= 0) throw InvalidArgument("crystal cell '" + label + "': atomic number must be positive");
    }
}

void FormFactor::set_table(int Z, std::vector<std::pair<double, double>> points) {
    if (points.empty()) throw InvalidArgument("form factor table for Z=" + std::to_string(Z) + " is empty");
    std::sort(points.begin(), points.end());
    tables_[Z] = std::move(points);
}

double FormFactor::operator()(int Z, double q) const {
    auto it = tables_.find(Z);
    if (it == tables_.end()) return static_cast<double>(Z);
    const auto& t = it->second;
    if (q <= t.front().first) return t.front().second;
    if (q >= t.back().first) return t.back().second;
    auto hi = std::lower_bound(t.begin(), t.end(), std::make_pair(q, -1e300));
    auto lo = hi - 1;
    double u = (q - lo->first) / (hi->first - lo->first);
    return lo->second + u * (hi->second - lo->second);
}

FormFactor FormFactor::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open form factor table: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("form factor table " + path + ": " + e.what());
    }
    FormFactor ff;
    if (!j.contains("tables") || !j["tables"].is_object())
        throw ConfigError("form factor table " + path + ": missing object field 'tables'");
    for (auto& [key, pts] : j["tables"].items()) {
        std::vector<std::pair<double, double>> v;
        for (auto& p : pts) v.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        ff.set_table(std::stoi(key), std::move(v));
    }
    return ff;
}

double d_spacing(const CrystalCell& cell, const Miller& H) {
    if (H[0] == 0 && H[1] == 0 && H[2] == 0) throw InvalidArgument("d_spacing: Miller triple (0,0,0)");
    if (H[0] < 0 || H[1] < 0 || H[2] < 0) throw InvalidArgument("d_spacing: Miller indices must be non-negative");
    double h = H[0], k = H[1], l = H[2];
    if (cell.system == LatticeSystem::cubic) return cell.a0 / std::sqrt(h * h + k * k + l * l);
    double inv2 = 4.0 / 3.0 * (h * h + h * k + k * k) / (cell.a0 * cell.a0) + l * l / (cell.c0 * cell.c0);
    return 1.0 / std::sqrt(inv2);
}

std::optional<double> bragg_angle(double E, double d) {
    if (!(E > 0.0) || !(d > 0.0)) throw InvalidArgument("bragg_angle: E and d must be positive");
    double s = 1.0 / (2.0 * d * E);
    if (s > 1.0) return std::nullopt;
    return std::asin(s);
}

std::complex<double> structure_factor_signed(const CrystalCell& cell, const std::array<int, 3>& H, double q,
                                             const FormFactor& ff) {
    if (H[0] == 0 && H[1] == 0 && H[2] == 0) throw InvalidArgument("structure_factor: Miller triple (0,0,0)");
    std::complex<double> F{0.0, 0.0};
    for (const auto& a : cell.atoms) {
        double phase = -2.0 * kPi * (a.frac[0] * H[0] + a.frac[1] * H[1] + a.frac[2] * H[2]);
        F += ff(a.Z, q) * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return F;
}

std::complex<double> structure_factor(const CrystalCell& cell, const Miller& H, double q, const FormFactor& ff) {
    if (H[0] < 0 || H[1] < 0 || H[2] < 0) throw InvalidArgument("structure_factor: Miller indices must be non-negative");
    return structure_factor_signed(cell, H, q, ff);
}

double MaterialSpectrum::operator()(double q) const {
    if (peaks.empty()) return 0.0;
    double sigma = std::sqrt(sigma2);
    double lo = q - kWindowSigmas * sigma, hi = q + kWindowSigmas * sigma;
    auto first = std::lower_bound(peaks.begin(), peaks.end(), lo, [](const Peak& p, double v) { return p.q < v; });
    double sum = 0.0;
    for (auto it = first; it != peaks.end() && it->q <= hi; ++it) {
        double d = q - it->q;
        sum += it->amplitude * std::exp(-d * d / sigma2);
    }
    return sum;
}

double MaterialSpectrum::cell_average(double a, double b) const {
    if (!(b > a)) throw InvalidArgument("cell_average: empty interval");
    double sigma = std::sqrt(sigma2);
    double lo = a - kWindowSigmas * sigma, hi = b + kWindowSigmas * sigma;
    auto first = std::lower_bound(peaks.begin(), peaks.end(), lo, [](const Peak& p, double v) { return p.q < v; });
    double sum = 0.0;
    for (auto it = first; it != peaks.end() && it->q <= hi; ++it)
        sum += it->amplitude * 0.5 * sigma * std::sqrt(kPi) *
               (std::erf((b - it->q) / sigma) - std::erf((a - it->q) / sigma));
    return sum / (b - a);
}

double eval_spectrum(const MaterialSpectrum& s, double q) {
    if (q < 0.0) throw InvalidArgument("eval_spectrum: q must be non-negative");
    return s(q);
}

namespace {

// Maximum of the Gaussian mixture: golden-section search around every peak.
double mixture_max(const MaterialSpectrum& s) {
    double sigma = std::sqrt(s.sigma2);
    double best = 0.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (const auto& p : s.peaks) {
        double a = p.q - 2.0 * sigma, b = p.q + 2.0 * sigma;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = s(c), fd = s(d);
        for (int it = 0; it < 100 && (b - a) > 1e-15 * std::max(1.0, p.q); ++it) {
            if (fc > fd) {
                b = d; d = c; fd = fc;
                c = b - gr * (b - a); fc = s(c);
            } else {
                a = c; c = d; fc = fd;
                d = a + gr * (b - a); fd = s(d);
            }
        }
        best = std::max({best, s(p.q), s(0.5 * (a + b))});
    }
    return best;
}

}  // namespace

MaterialSpectrum build_spectrum(const CrystalCell& cell, double q_max, double sigma2, const FormFactor& ff) {
    cell.validate();
    if (!(q_max > 0.0)) throw InvalidArgument("build_spectrum: q_max must be positive");
    if (!(sigma2 > 0.0)) throw InvalidArgument("build_spectrum: sigma2 must be positive");
    double amax = cell.system == LatticeSystem::hexagonal ? std::max(cell.a0, cell.c0) : cell.a0;
    int hmax = static_cast<int>(std::ceil(2.0 * amax * q_max)) + 1;

    std::vector<Peak> raw;
    for (int h = 0; h <= hmax; ++h)
        for (int k = 0; k <= hmax; ++k)
            for (int l = 0; l <= hmax; ++l) {
                if (h == 0 && k == 0 && l == 0) continue;
                Miller H{h, k, l};
                double d = d_spacing(cell, H);
                double q = 1.0 / (2.0 * d);
                if (q > q_max) continue;
                double F2 = std::norm(structure_factor(cell, H, q, ff));
                // Systematic absences cancel to round-off, not to zero.
                if (F2 < 1e-18) continue;
                raw.push_back({q, d * F2 / q});
            }
    if (raw.empty()) throw EmptySpectrum("build_spectrum: no reflections with q <= q_max for '" + cell.label + "'");
    std::sort(raw.begin(), raw.end(), [](const Peak& a, const Peak& b) { return a.q < b.q; });

    MaterialSpectrum s;
    s.sigma2 = sigma2;
    s.q_max = q_max;
    s.label = cell.label;
    for (const auto& p : raw) {
        if (!s.peaks.empty() && p.q - s.peaks.back().q <= kMergeTol)
            s.peaks.back().amplitude += p.amplitude;
        else
            s.peaks.push_back(p);
    }
    double m = mixture_max(s);
    for (auto& p : s.peaks) p.amplitude /= m;
    s.normalization = m;
    double vol = cell.system == LatticeSystem::cubic ? cell.a0 * cell.a0 * cell.a0
                                                     : std::sqrt(3.0) / 2.0 * cell.a0 * cell.a0 * cell.c0;
    s.dropped_prefactor = kR0Squared / (16.0 * vol * kPi);
    return s;
}

double polarization(double theta) {
    double c = std::cos(2.0 * theta);
    return 0.5 * (1.0 + c * c);
}

std::pair<double, double> total_cross_section_check(const MaterialSpectrum& s, double E) {
    if (!(E > 0.0)) throw InvalidArgument("total_cross_section_check: E must be positive");
    if (s.peaks.empty()) return {0.0, 0.0};
    auto P = [E](double q) {
        double c = 1.0 - 2.0 * q * q / (E * E);
        return 0.5 * (1.0 + c * c);
    };
    double sigma = std::sqrt(s.sigma2);
    std::vector<double> cuts{0.0, E};
    for (const auto& p : s.peaks)
        for (double k : {-12.0, 0.0, 12.0}) {
            double c = p.q + k * sigma;
            if (c > 0.0 && c < E) cuts.push_back(c);
        }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto integrand = [&](double q) { return P(q) * s(q) * q; };
    double lhs = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        lhs += GK::integrate(integrand, cuts[i], cuts[i + 1], 12, 1e-13);
    lhs *= 8.0 * kPi / (E * E);

    double rhs = 0.0;
    for (const auto& p : s.peaks)
        if (p.q < E) rhs += p.amplitude * sigma * std::sqrt(kPi) * P(p.q) * p.q;
    rhs *= 8.0 * kPi / (E * E);
    return {lhs, rhs};
}

CrystalCell parse_cell_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("material definition: ") + e.what());
    }
    CrystalCell c;
    auto need = [&](const char* f) {
        if (!j.contains(f)) throw ConfigError(std::string("material definition: missing field '") + f + "'");
        return j[f];
    };
    c.label = need("label").get<std::string>();
    std::string sys = need("lattice_system").get<std::string>();
    if (sys == "cubic")
        c.system = LatticeSystem::cubic;
    else if (sys == "hexagonal")
        c.system = LatticeSystem::hexagonal;
    else
        throw ConfigError("material '" + c.label + "': field 'lattice_system' must be cubic or hexagonal");
    c.a0 = need("a0").get<double>();
    if (j.contains("c0")) c.c0 = j["c0"].get<double>();
    for (auto& a : need("atoms")) {
        Atom at;
        auto f = a.at("frac");
        for (int i = 0; i < 3; ++i) at.frac[i] = f.at(i).get<double>();
        at.Z = a.at("Z").get<int>();
        c.atoms.push_back(at);
    }
    if (j.contains("provenance")) c.provenance = j["provenance"].get<std::string>();
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

MaterialLibrary MaterialLibrary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open material library: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const std::exception& e) {
        throw ConfigError("material library " + path + ": " + e.what());
    }
    MaterialLibrary lib;
    if (j.contains("provenance")) lib.provenance_ = j["provenance"].get<std::string>();
    if (!j.contains("materials")) throw ConfigError("material library " + path + ": missing field 'materials'");
    for (auto& m : j["materials"]) lib.cells_.push_back(parse_cell_json(m.dump()));
    return lib;
}

std::string MaterialLibrary::default_path() {
    if (const char* p = std::getenv("BST_MATERIALS")) return p;
    return BST_DEFAULT_MATERIALS;
}

MaterialLibrary MaterialLibrary::load_default() { return load(default_path()); }

const CrystalCell& MaterialLibrary::get(const std::string& label) const {
    for (const auto& c : cells_)
        if (c.label == label) return c;
    std::string avail;
    for (const auto& c : cells_) avail += (avail.empty() ? "" : ", ") + c.label;
    throw ConfigError("unknown material '" + label + "' (available: " + avail + ")");
}

std::vector<std::string> MaterialLibrary::labels() const {
    std::vector<std::string> v;
    for (const auto& c : cells_) v.push_back(c.label);
    return v;
}

bool MaterialLibrary::contains(const std::string& label) const {
    return std::any_of(cells_.begin(), cells_.end(), [&](const CrystalCell& c) { return c.label == label; });
}

}  // namespace bst
