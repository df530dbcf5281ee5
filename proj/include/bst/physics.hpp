#pragma once
#include <array>
#include <complex>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bst {

// Energies are carried in inverse Angstrom; 1 A^-1 corresponds to 12.4 keV.
inline constexpr double kKevPerInvAngstrom = 12.4;
inline double kev_to_inv_angstrom(double kev) { return kev / kKevPerInvAngstrom; }
inline double inv_angstrom_to_kev(double e) { return e * kKevPerInvAngstrom; }

enum class LatticeSystem { cubic, hexagonal };

struct Atom {
    std::array<double, 3> frac{};
    int Z = 0;
};

struct CrystalCell {
    LatticeSystem system = LatticeSystem::cubic;
    double a0 = 0.0;  // A
    double c0 = 0.0;  // A, hexagonal only
    std::vector<Atom> atoms;
    std::string label;
    std::string provenance;

    void validate() const;
};

using Miller = std::array<int, 3>;

// Atomic form factors. Without a table entry F_i(q) = Z_i.
class FormFactor {
public:
    FormFactor() = default;
    // Piecewise-linear table per atomic number, points sorted by q.
    void set_table(int Z, std::vector<std::pair<double, double>> points);
    double operator()(int Z, double q) const;
    bool constant() const { return tables_.empty(); }

    static FormFactor from_json_file(const std::string& path);

private:
    std::map<int, std::vector<std::pair<double, double>>> tables_;
};

struct Peak {
    double q = 0.0;
    double amplitude = 0.0;
};

struct MaterialSpectrum {
    std::vector<Peak> peaks;  // ascending in q
    double sigma2 = 1e-6;
    double q_max = 1.0;
    std::string label;
    // Factor the raw d_H|F_H|^2/q amplitudes were divided by, and the
    // r0^2/(16 a0^3 pi) prefactor that normalization drops.
    double normalization = 1.0;
    double dropped_prefactor = 0.0;

    double operator()(double q) const;
    // Mean of the surrogate over [a, b]; used to paint coarse q-bins.
    double cell_average(double a, double b) const;
};

double d_spacing(const CrystalCell& cell, const Miller& H);

// Bragg angle for 1/E = 2 d sin(theta); empty when 1/(2dE) > 1.
std::optional<double> bragg_angle(double E, double d);

std::complex<double> structure_factor(const CrystalCell& cell, const Miller& H, double q,
                                      const FormFactor& ff = {});

// Accepts negative indices too, which the conjugate-symmetry property needs.
std::complex<double> structure_factor_signed(const CrystalCell& cell, const std::array<int, 3>& H,
                                             double q, const FormFactor& ff = {});

MaterialSpectrum build_spectrum(const CrystalCell& cell, double q_max, double sigma2 = 1e-6,
                                const FormFactor& ff = {});

double eval_spectrum(const MaterialSpectrum& s, double q);

// Polarization factor (1 + cos^2 2theta)/2.
double polarization(double theta);

// (lhs, rhs) of the total cross-section identity under the surrogate's
// normalization: lhs by quadrature of (8 pi/E^2) int_0^E P F q dq, rhs from the
// peak sum with Gaussian masses A_j sigma sqrt(pi).
std::pair<double, double> total_cross_section_check(const MaterialSpectrum& s, double E);

// Material library loaded from data/materials.json (or BST_MATERIALS).
class MaterialLibrary {
public:
    static MaterialLibrary load(const std::string& path);
    static MaterialLibrary load_default();
    static std::string default_path();

    const CrystalCell& get(const std::string& label) const;
    std::vector<std::string> labels() const;
    bool contains(const std::string& label) const;
    const std::string& provenance() const { return provenance_; }

private:
    std::vector<CrystalCell> cells_;
    std::string provenance_;
};

CrystalCell parse_cell_json(const std::string& json_text);

}  // namespace bst
