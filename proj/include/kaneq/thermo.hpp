#ifndef KANEQ_THERMO_HPP
#define KANEQ_THERMO_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::thermo {

inline constexpr double kGasConstant = 8.314462618; // J/(mol K)
inline constexpr double kCelsiusToKelvin = 273.15;

// ---------------------------------------------------------------------------
// Solid solution: (Ba,Sr,Ra)SO4 end members
// ---------------------------------------------------------------------------

enum class EndMember : int { BaSO4 = 0, SrSO4 = 1, RaSO4 = 2 };
inline constexpr int kNumEndMembers = 3;
const char* end_member_name(EndMember m);
EndMember end_member_from_name(const std::string& name);

enum class MixingVariant { MechanicalMixture, BinaryRegular, TernaryRegular };

// Symmetric pairwise interaction parameters, J/mol, zero diagonal.
struct MargulesMatrix {
    std::array<std::array<double, 3>, 3> w{};

    double get(EndMember a, EndMember b) const {
        return w[static_cast<int>(a)][static_cast<int>(b)];
    }
    void set(EndMember a, EndMember b, double value) {
        w[static_cast<int>(a)][static_cast<int>(b)] = value;
        w[static_cast<int>(b)][static_cast<int>(a)] = value;
    }

    // Regular-solution parameters for the sulfate system:
    // w(Ra,Ba) = 2470, w(Sr,Ra) = 1750, w(Sr,Ba) = 750 J/mol.
    static MargulesMatrix sulfate_defaults();
};

struct SolidSolutionModel {
    MixingVariant variant = MixingVariant::TernaryRegular;
    MargulesMatrix margules = MargulesMatrix::sulfate_defaults();

    // End members participating in the solid phase.
    std::vector<EndMember> members() const;
};

// Mixing-model energies per mole of solid (inputs: mole fractions on the
// simplex, standard energies J/mol, temperature K). The excess sum counts
// each unordered pair once; with symmetric w this equals the i != j double
// sum at half weight, which is the convention verified by the activity
// coefficient tests.
double g_mechanical(const std::vector<double>& x, const std::vector<double>& g_standard);
double g_ideal_mix(const std::vector<double>& x, double t_kelvin);
double g_excess(const std::vector<double>& x, const std::vector<std::vector<double>>& w);
double g_total(const std::vector<double>& x, const std::vector<double>& g_standard,
               const std::vector<std::vector<double>>& w, double t_kelvin, MixingVariant variant);

// Thomson-Waldbaum activity coefficients of a regular solution:
// RT ln gamma_1 = w12 X2^2 + w13 X3^2 + (w12 + w13 - w23) X2 X3 and
// permutations; the binary case is the X3 = 0 face.
std::vector<double> solid_activity_coeffs(const std::vector<double>& x,
                                          const std::vector<std::vector<double>>& w,
                                          double t_kelvin);

// ---------------------------------------------------------------------------
// Aqueous phase: fixed 9-ion species set
// ---------------------------------------------------------------------------

enum class Ion : int { Ba = 0, Sr = 1, Ra = 2, Na = 3, Cl = 4, Br = 5, SO4 = 6, H = 7, OH = 8 };
inline constexpr int kNumIons = 9;
const char* ion_name(Ion i);
int ion_charge(Ion i);

// Extended Debye-Hueckel: log10 gamma = -A z^2 sqrt(I) / (1 + B a0 sqrt(I)).
// A(T), B(T) and log10 Kw(T) are linearly interpolated from the tables
// below (0-100 C).
//
// The equilibrium oracle requires an activity model that derives from an
// excess Gibbs potential, which the extended Debye-Hueckel form admits only
// when all ions share one size parameter; the default model therefore uses
// a common a0 = 4.0 Angstrom. Per-ion sizes can still be supplied to
// aqueous_activity_coeffs for standalone evaluation.
//
// Ionic strength convention: I is taken over the strong electrolyte ions
// (Ba, Sr, Ra, Na, Cl, Br, SO4). H+ and OH- stay below 1e-6 mol/kg in this
// system and are speciated from Kw downstream of I.
struct AqueousModel {
    double common_ion_size = 4.0; // Angstrom
    std::array<double, kNumIons> ion_size{}; // defaults to common_ion_size

    AqueousModel();

    double debye_a(double t_celsius) const;
    double debye_b(double t_celsius) const;
    double log10_kw(double t_celsius) const;
};

// Standalone op over a full molality vector (I over all entries given).
std::vector<double> aqueous_activity_coeffs(const std::vector<double>& molalities,
                                            double t_celsius, const AqueousModel& model = {});

// Speciation of the 7 strong-ion molalities: activity coefficients at the
// strong-ion ionic strength, then H+/OH- from the charge imbalance and
// Kw(T). Closed form; shared by the G evaluation, the equilibrium solver
// and the test oracles.
struct Speciation {
    std::array<double, kNumIons> molality{};
    std::array<double, kNumIons> gamma{};
    double ionic_strength = 0.0;
    double ph = 7.0;
};
Speciation speciate(const std::array<double, 7>& strong_molalities, double t_celsius,
                    const AqueousModel& model = {});

// ---------------------------------------------------------------------------
// Standard-state data
// ---------------------------------------------------------------------------

// Per end member: log10 Ksp of M(2+)SO4 dissolution over temperature,
// linearly interpolated. Loadable from CSV with columns
//   end_member,T_celsius,log_ksp
// or
//   end_member,T_celsius,G_standard_J_per_mol
// where G_standard is the solid standard Gibbs energy under the convention
// that the aqueous ions' standard potentials are zero, i.e.
// G_standard = RT ln Ksp (dissolution Delta G = -RT ln Ksp).
//
// The built-in table anchors at published 25 C solubility products
// (barite -9.97, celestite -6.63, RaSO4 -10.26) extended over 0-100 C by
// van 't Hoff; the temperature dependence is illustrative, not a database.
class ThermoData {
public:
    static ThermoData builtin_defaults();
    static ThermoData load_csv(const std::string& path);

    double log_ksp(EndMember m, double t_celsius) const;
    const std::string& source() const { return source_; }

    void set_points(EndMember m, std::vector<std::pair<double, double>> t_logksp);

private:
    std::array<std::vector<std::pair<double, double>>, 3> points_;
    std::string source_ = "builtin";
};

// ---------------------------------------------------------------------------
// Equilibrium
// ---------------------------------------------------------------------------

// Feed amounts dissolved in 1 kg of water; pressure fixed at 1 bar.
struct Recipe {
    double baso4_umol = 0.0;
    double nacl_mmol = 0.0;
    double rabr2_umol = 0.0;
    double srso4_mmol = 0.0;
    double t_celsius = 25.0;
};

struct EquilibriumState {
    std::array<double, 3> solid_moles{};    // per end member, mol
    std::array<double, 3> mole_fraction{};  // zero when no solid
    std::array<double, 3> gamma_solid{};    // 1 for absent members
    bool solid_present = false;
    std::array<double, kNumIons> molality{};
    std::array<double, kNumIons> gamma_aq{};
    double ionic_strength = 0.0;
    double ph = 7.0;
    double total_gibbs = 0.0; // J, see total_gibbs() for the convention
    int iterations = 0;
    double mass_balance_residual = 0.0;   // max relative element residual
    double charge_balance_residual = 0.0; // mol/kg
};

struct EquilibrateOptions {
    int max_outer = 500;
    double g_rel_tol = 1e-10;     // |dG| < tol * |G| between iterates
    double grad_tol = 1e-6;       // J/mol, projected gradient at the solution
};

// Total Gibbs energy (J) of the system at the given solid end-member moles,
// with the aqueous side determined by mass balance. Convention: aqueous
// standard potentials zero, solid standard energy RT ln Ksp, ideal solute
// term m (ln m - 1), Debye-Hueckel excess from its closed-form potential.
// This is the objective minimized by equilibrate and scanned by the
// brute-force oracles.
double total_gibbs(const Recipe& recipe, const SolidSolutionModel& model, const ThermoData& data,
                   const std::array<double, 3>& solid_moles);

// Gradient of total_gibbs w.r.t. the solid moles (J/mol), analytic.
std::array<double, 3> total_gibbs_gradient(const Recipe& recipe, const SolidSolutionModel& model,
                                           const ThermoData& data,
                                           const std::array<double, 3>& solid_moles);

// Gibbs minimization over the precipitated end-member moles: projected
// Newton on the feasible box with an Armijo line search, phase presence
// decided by saturation tests and KKT signs. Recipes that never saturate
// return a fully aqueous state (valid, not an error).
EquilibriumState equilibrate(const Recipe& recipe, const SolidSolutionModel& model,
                             const ThermoData& data, const EquilibrateOptions& opts = {});

// Order-preserving batch; rows are independent. jobs > 1 splits the index
// range across threads with per-index deterministic results. Wall-clock
// seconds are written to *seconds when given.
std::vector<EquilibriumState> batch_equilibrate(const std::vector<Recipe>& recipes,
                                                const SolidSolutionModel& model,
                                                const ThermoData& data, int jobs = 1,
                                                double* seconds = nullptr,
                                                const EquilibrateOptions& opts = {});

// Elemental totals of a recipe, mol: Ba, Sr, Ra, Na, Cl, Br, S.
std::array<double, 7> element_totals(const Recipe& recipe);

} // namespace kaneq::thermo

#endif
