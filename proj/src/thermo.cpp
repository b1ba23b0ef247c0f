#include "kaneq/thermo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace kaneq::thermo {

namespace {

constexpr double kLn10 = 2.302585092994046;

// mol floor below which a feed component is treated as absent
constexpr double kAmountFloor = 1e-15;

double xlnx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void check_simplex(const std::vector<double>& x) {
    double sum = 0.0;
    for (double xi : x) {
        if (xi < -1e-12) throw domain_error("mole fraction below zero: " + std::to_string(xi));
        if (xi > 1.0 + 1e-9) throw domain_error("mole fraction above one: " + std::to_string(xi));
        sum += xi;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw domain_error("mole fractions sum to " + std::to_string(sum) + ", expected 1");
}

void check_margules(const std::vector<std::vector<double>>& w, std::size_t n) {
    if (w.size() != n) throw dimension_error("margules matrix size does not match composition");
    for (std::size_t i = 0; i < n; ++i) {
        if (w[i].size() != n) throw dimension_error("margules matrix is not square");
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(w[i][j] - w[j][i]) > 1e-9)
                throw domain_error("margules matrix is not symmetric");
    }
}

// Piecewise-linear interpolation over (x, y) pairs sorted by x; clamped at
// the table ends.
double interp_table(const std::vector<std::pair<double, double>>& pts, double x) {
    if (pts.empty()) throw contract_error("empty interpolation table");
    if (x <= pts.front().first) return pts.front().second;
    if (x >= pts.back().first) return pts.back().second;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (x <= pts[i].first) {
            const auto& [x0, y0] = pts[i - 1];
            const auto& [x1, y1] = pts[i];
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    return pts.back().second;
}

} // namespace

const char* end_member_name(EndMember m) {
    switch (m) {
    case EndMember::BaSO4: return "BaSO4";
    case EndMember::SrSO4: return "SrSO4";
    case EndMember::RaSO4: return "RaSO4";
    }
    return "?";
}

EndMember end_member_from_name(const std::string& name) {
    if (name == "BaSO4") return EndMember::BaSO4;
    if (name == "SrSO4") return EndMember::SrSO4;
    if (name == "RaSO4") return EndMember::RaSO4;
    throw io_error("unknown end member: " + name);
}

MargulesMatrix MargulesMatrix::sulfate_defaults() {
    MargulesMatrix m;
    m.set(EndMember::RaSO4, EndMember::BaSO4, 2470.0);
    m.set(EndMember::SrSO4, EndMember::RaSO4, 1750.0);
    m.set(EndMember::SrSO4, EndMember::BaSO4, 750.0);
    return m;
}

std::vector<EndMember> SolidSolutionModel::members() const {
    switch (variant) {
    case MixingVariant::BinaryRegular:
        return {EndMember::BaSO4, EndMember::RaSO4};
    case MixingVariant::MechanicalMixture:
    case MixingVariant::TernaryRegular:
        return {EndMember::BaSO4, EndMember::SrSO4, EndMember::RaSO4};
    }
    return {};
}

double g_mechanical(const std::vector<double>& x, const std::vector<double>& g_standard) {
    if (x.size() != g_standard.size())
        throw dimension_error("g_mechanical: composition and G* size differ");
    check_simplex(x);
    double g = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) g += x[i] * g_standard[i];
    return g;
}

double g_ideal_mix(const std::vector<double>& x, double t_kelvin) {
    if (!(t_kelvin > 0.0)) throw domain_error("temperature must be positive kelvin");
    check_simplex(x);
    double s = 0.0;
    for (double xi : x) s += xlnx(xi);
    return kGasConstant * t_kelvin * s;
}

double g_excess(const std::vector<double>& x, const std::vector<std::vector<double>>& w) {
    check_simplex(x);
    check_margules(w, x.size());
    double g = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) g += x[i] * x[j] * w[i][j];
    return g;
}

double g_total(const std::vector<double>& x, const std::vector<double>& g_standard,
               const std::vector<std::vector<double>>& w, double t_kelvin, MixingVariant variant) {
    double g = g_mechanical(x, g_standard);
    if (variant != MixingVariant::MechanicalMixture)
        g += g_ideal_mix(x, t_kelvin) + g_excess(x, w);
    return g;
}

std::vector<double> solid_activity_coeffs(const std::vector<double>& x,
                                          const std::vector<std::vector<double>>& w,
                                          double t_kelvin) {
    check_simplex(x);
    check_margules(w, x.size());
    if (!(t_kelvin > 0.0)) throw domain_error("temperature must be positive kelvin");
    const std::size_t n = x.size();
    const double rt = kGasConstant * t_kelvin;
    std::vector<double> gamma(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double rtln = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            rtln += w[i][j] * x[j] * x[j];
            for (std::size_t k = j + 1; k < n; ++k) {
                if (k == i) continue;
                rtln += (w[i][j] + w[i][k] - w[j][k]) * x[j] * x[k];
            }
        }
        gamma[i] = std::exp(rtln / rt);
    }
    return gamma;
}

const char* ion_name(Ion i) {
    static const char* names[kNumIons] = {"Ba+2", "Sr+2", "Ra+2", "Na+", "Cl-",
                                          "Br-",  "SO4-2", "H+",  "OH-"};
    return names[static_cast<int>(i)];
}

int ion_charge(Ion i) {
    static const int z[kNumIons] = {2, 2, 2, 1, -1, -1, -2, 1, -1};
    return z[static_cast<int>(i)];
}

namespace {

// Debye-Hueckel parameters over 0-100 C at 1 bar (A in sqrt(kg/mol),
// B in 1/(Angstrom sqrt(kg/mol))), and log10 Kw of water.
const std::vector<std::pair<double, double>> kDebyeATable = {
    {0.0, 0.4913}, {25.0, 0.5092}, {50.0, 0.5336}, {75.0, 0.5639}, {100.0, 0.5998}};
const std::vector<std::pair<double, double>> kDebyeBTable = {
    {0.0, 0.3247}, {25.0, 0.3283}, {50.0, 0.3325}, {75.0, 0.3371}, {100.0, 0.3422}};
const std::vector<std::pair<double, double>> kLogKwTable = {
    {0.0, -14.94}, {25.0, -13.995}, {50.0, -13.26}, {75.0, -12.70}, {100.0, -12.26}};

} // namespace

AqueousModel::AqueousModel() { ion_size.fill(common_ion_size); }

double AqueousModel::debye_a(double t_celsius) const { return interp_table(kDebyeATable, t_celsius); }
double AqueousModel::debye_b(double t_celsius) const { return interp_table(kDebyeBTable, t_celsius); }
double AqueousModel::log10_kw(double t_celsius) const { return interp_table(kLogKwTable, t_celsius); }

std::vector<double> aqueous_activity_coeffs(const std::vector<double>& molalities,
                                            double t_celsius, const AqueousModel& model) {
    if (molalities.size() != kNumIons)
        throw dimension_error("aqueous_activity_coeffs expects " + std::to_string(kNumIons) +
                              " molalities, got " + std::to_string(molalities.size()));
    double ionic = 0.0;
    for (int i = 0; i < kNumIons; ++i) {
        if (molalities[static_cast<std::size_t>(i)] < 0.0)
            throw domain_error("negative molality for " + std::string(ion_name(static_cast<Ion>(i))));
        const double z = ion_charge(static_cast<Ion>(i));
        ionic += 0.5 * molalities[static_cast<std::size_t>(i)] * z * z;
    }
    const double a = model.debye_a(t_celsius);
    const double b = model.debye_b(t_celsius);
    const double sqrt_i = std::sqrt(ionic);
    std::vector<double> gamma(kNumIons, 1.0);
    for (int i = 0; i < kNumIons; ++i) {
        const double z = ion_charge(static_cast<Ion>(i));
        const double log_g =
            -a * z * z * sqrt_i / (1.0 + b * model.ion_size[static_cast<std::size_t>(i)] * sqrt_i);
        gamma[static_cast<std::size_t>(i)] = std::pow(10.0, log_g);
    }
    return gamma;
}

Speciation speciate(const std::array<double, 7>& strong_molalities, double t_celsius,
                    const AqueousModel& model) {
    Speciation out;
    double ionic = 0.0;
    double charge = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double m = strong_molalities[static_cast<std::size_t>(i)];
        if (m < 0.0)
            throw domain_error("negative molality for " + std::string(ion_name(static_cast<Ion>(i))));
        const double z = ion_charge(static_cast<Ion>(i));
        out.molality[static_cast<std::size_t>(i)] = m;
        ionic += 0.5 * m * z * z;
        charge += z * m;
    }
    out.ionic_strength = ionic;

    const double a = model.debye_a(t_celsius);
    const double b = model.debye_b(t_celsius);
    const double sqrt_i = std::sqrt(ionic);
    for (int i = 0; i < kNumIons; ++i) {
        const double z = ion_charge(static_cast<Ion>(i));
        const double log_g = -a * z * z * sqrt_i /
                             (1.0 + b * model.common_ion_size * sqrt_i);
        out.gamma[static_cast<std::size_t>(i)] = std::pow(10.0, log_g);
    }

    // H+/OH- close the charge balance against Kw(T).
    const double gh = out.gamma[static_cast<int>(Ion::H)];
    const double goh = out.gamma[static_cast<int>(Ion::OH)];
    const double kw_m = std::pow(10.0, model.log10_kw(t_celsius)) / (gh * goh);
    const double mh = 0.5 * (-charge + std::sqrt(charge * charge + 4.0 * kw_m));
    out.molality[static_cast<int>(Ion::H)] = mh;
    out.molality[static_cast<int>(Ion::OH)] = mh + charge;
    out.ph = -std::log10(gh * mh);
    return out;
}

ThermoData ThermoData::builtin_defaults() {
    // 25 C anchors extended by van 't Hoff (illustrative T dependence).
    ThermoData d;
    d.points_[static_cast<int>(EndMember::BaSO4)] = {
        {0.0, -10.391706}, {20.0, -10.048587}, {25.0, -9.970000},
        {37.0, -9.791729}, {50.0, -9.613543},  {60.0, -9.485940},
        {75.0, -9.308279}, {90.0, -9.145295},  {100.0, -9.043919}};
    d.points_[static_cast<int>(EndMember::SrSO4)] = {
        {0.0, -6.565862}, {20.0, -6.618048}, {25.0, -6.630000},
        {37.0, -6.657113}, {50.0, -6.684214}, {60.0, -6.703621},
        {75.0, -6.730642}, {90.0, -6.755430}, {100.0, -6.770849}};
    d.points_[static_cast<int>(EndMember::RaSO4)] = {
        {0.0, -9.650691},  {20.0, -10.146452}, {25.0, -10.260000},
        {37.0, -10.517578}, {50.0, -10.775033}, {60.0, -10.959402},
        {75.0, -11.216098}, {90.0, -11.451588}, {100.0, -11.598064}};
    return d;
}

void ThermoData::set_points(EndMember m, std::vector<std::pair<double, double>> t_logksp) {
    std::sort(t_logksp.begin(), t_logksp.end());
    points_[static_cast<int>(m)] = std::move(t_logksp);
}

double ThermoData::log_ksp(EndMember m, double t_celsius) const {
    const auto& pts = points_[static_cast<int>(m)];
    if (pts.empty())
        throw contract_error(std::string("no standard-state data for ") + end_member_name(m));
    return interp_table(pts, t_celsius);
}

ThermoData ThermoData::load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open thermo data file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty thermo data file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    bool value_is_g = false;
    if (line == "end_member,T_celsius,log_ksp")
        value_is_g = false;
    else if (line == "end_member,T_celsius,G_standard_J_per_mol")
        value_is_g = true;
    else
        throw io_error(path + ": unexpected header '" + line +
                       "' (want end_member,T_celsius,log_ksp or "
                       "end_member,T_celsius,G_standard_J_per_mol)");

    std::array<std::vector<std::pair<double, double>>, 3> pts;
    int row = 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        std::stringstream ss(line);
        std::string name, t_str, v_str;
        if (!std::getline(ss, name, ',') || !std::getline(ss, t_str, ',') ||
            !std::getline(ss, v_str))
            throw io_error(path + ": row " + std::to_string(row) + ": expected 3 columns");
        const EndMember m = end_member_from_name(name);
        double t = 0.0, v = 0.0;
        try {
            t = std::stod(t_str);
            v = std::stod(v_str);
        } catch (const std::exception&) {
            throw io_error(path + ": row " + std::to_string(row) + ": non-numeric cell");
        }
        double log_ksp_value = v;
        if (value_is_g) // G_standard = RT ln Ksp under the zero-ion convention
            log_ksp_value = v / (kGasConstant * (t + kCelsiusToKelvin) * kLn10);
        pts[static_cast<int>(m)].emplace_back(t, log_ksp_value);
    }
    ThermoData d;
    for (int m = 0; m < 3; ++m) {
        if (pts[static_cast<std::size_t>(m)].empty())
            throw io_error(path + ": no rows for end member " +
                           end_member_name(static_cast<EndMember>(m)));
        d.set_points(static_cast<EndMember>(m), std::move(pts[static_cast<std::size_t>(m)]));
    }
    d.source_ = path;
    return d;
}

std::array<double, 7> element_totals(const Recipe& r) {
    const double ba = r.baso4_umol * 1e-6;
    const double sr = r.srso4_mmol * 1e-3;
    const double ra = r.rabr2_umol * 1e-6;
    const double na = r.nacl_mmol * 1e-3;
    // Ba, Sr, Ra, Na, Cl, Br, S
    return {ba, sr, ra, na, na, 2.0 * ra, ba + sr};
}

// ---------------------------------------------------------------------------
// Gibbs evaluation and minimization
// ---------------------------------------------------------------------------

namespace {

struct GibbsProblem {
    std::array<double, 3> member_total{}; // mol of each end member's cation source
    double sulfate_total = 0.0;
    double m_na = 0.0, m_cl = 0.0, m_br = 0.0;
    double t_celsius = 25.0;
    double rt = 0.0;
    std::array<double, 3> ln_ksp{};
    std::array<std::array<double, 3>, 3> w{}; // J/mol
    bool mechanical = false;
    std::vector<int> candidates; // member indices that can precipitate
    AqueousModel aqueous;

    // Debye-Hueckel excess potential parameters at T
    double a_ln = 0.0; // A * ln 10
    double c = 0.0;    // B * a0
    double ln_kw = 0.0;
};

GibbsProblem make_problem(const Recipe& r, const SolidSolutionModel& model,
                          const ThermoData& data) {
    if (r.baso4_umol < 0 || r.nacl_mmol < 0 || r.rabr2_umol < 0 || r.srso4_mmol < 0)
        throw contract_error("recipe amounts must be non-negative");
    if (r.t_celsius < 0.0 || r.t_celsius > 100.0)
        throw domain_error("temperature outside tabulated range 0-100 C: " +
                           std::to_string(r.t_celsius));

    GibbsProblem p;
    const auto totals = element_totals(r);
    p.member_total = {totals[0], totals[1], totals[2]};
    p.sulfate_total = totals[6];
    p.m_na = totals[3];
    p.m_cl = totals[4];
    p.m_br = totals[5];
    p.t_celsius = r.t_celsius;
    p.rt = kGasConstant * (r.t_celsius + kCelsiusToKelvin);
    p.mechanical = model.variant == MixingVariant::MechanicalMixture;
    for (int i = 0; i < 3; ++i) {
        p.ln_ksp[static_cast<std::size_t>(i)] =
            kLn10 * data.log_ksp(static_cast<EndMember>(i), r.t_celsius);
        for (int j = 0; j < 3; ++j) p.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            model.margules.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    if (p.sulfate_total > kAmountFloor)
        for (EndMember m : model.members())
            if (p.member_total[static_cast<std::size_t>(static_cast<int>(m))] > kAmountFloor)
                p.candidates.push_back(static_cast<int>(m));

    p.a_ln = p.aqueous.debye_a(r.t_celsius) * kLn10;
    p.c = p.aqueous.debye_b(r.t_celsius) * p.aqueous.common_ion_size;
    p.ln_kw = p.aqueous.log10_kw(r.t_celsius) * kLn10;
    return p;
}

std::array<double, 7> strong_molalities(const GibbsProblem& p, const std::array<double, 3>& s) {
    const double precip = s[0] + s[1] + s[2];
    return {p.member_total[0] - s[0], p.member_total[1] - s[1], p.member_total[2] - s[2],
            p.m_na,                   p.m_cl,                   p.m_br,
            p.sulfate_total - precip};
}

double strong_ionic_strength(const std::array<double, 7>& m) {
    double ionic = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double z = ion_charge(static_cast<Ion>(i));
        ionic += 0.5 * m[static_cast<std::size_t>(i)] * z * z;
    }
    return ionic;
}

// Closed-form excess potential of the common-size extended Debye-Hueckel
// model, divided by RT: d(f)/d(m_k) = ln gamma_k exactly.
double dh_excess_potential(const GibbsProblem& p, double ionic) {
    if (ionic <= 0.0) return 0.0;
    const double u = std::sqrt(ionic);
    const double c = p.c;
    return -4.0 * p.a_ln *
           (u * u / (2.0 * c) - u / (c * c) + std::log1p(c * u) / (c * c * c));
}

double ln_gamma_z(const GibbsProblem& p, double ionic, int z) {
    const double u = std::sqrt(ionic);
    return -p.a_ln * z * z * u / (1.0 + p.c * u);
}

// G/RT of the whole system at solid end-member moles s.
double gibbs_over_rt(const GibbsProblem& p, const std::array<double, 3>& s) {
    const auto m = strong_molalities(p, s);
    double g = 0.0;
    for (int i = 0; i < 7; ++i)
        if (m[static_cast<std::size_t>(i)] > 0.0)
            g += m[static_cast<std::size_t>(i)] * (std::log(m[static_cast<std::size_t>(i)]) - 1.0);
    g += dh_excess_potential(p, strong_ionic_strength(m));

    const double n = s[0] + s[1] + s[2];
    for (int i = 0; i < 3; ++i) g += s[static_cast<std::size_t>(i)] * p.ln_ksp[static_cast<std::size_t>(i)];
    if (!p.mechanical && n > 0.0) {
        for (int i = 0; i < 3; ++i)
            if (s[static_cast<std::size_t>(i)] > 0.0)
                g += s[static_cast<std::size_t>(i)] * std::log(s[static_cast<std::size_t>(i)] / n);
        double ex = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j)
                ex += s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(j)] *
                      p.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        g += ex / (n * p.rt);
    }
    return g;
}

// dG/ds_i / RT; requires m_i > 0, m_SO4 > 0 and (regular) s_i > 0.
std::array<double, 3> gibbs_gradient_over_rt(const GibbsProblem& p,
                                             const std::array<double, 3>& s) {
    const auto m = strong_molalities(p, s);
    const double ionic = strong_ionic_strength(m);
    const double ln_g2 = ln_gamma_z(p, ionic, 2);
    const double ln_so4 = std::log(m[6]) + ln_g2;
    const double n = s[0] + s[1] + s[2];

    std::array<double, 3> grad{};
    for (int idx : p.candidates) {
        const std::size_t i = static_cast<std::size_t>(idx);
        double g = p.ln_ksp[i] - (std::log(m[i]) + ln_g2) - ln_so4;
        if (!p.mechanical && n > 0.0 && s[i] > 0.0) {
            g += std::log(s[i] / n);
            // Thomson-Waldbaum ln gamma_i of the regular solid
            double rtln = 0.0;
            for (int j = 0; j < 3; ++j) {
                if (j == idx) continue;
                const double xj = s[static_cast<std::size_t>(j)] / n;
                rtln += p.w[i][static_cast<std::size_t>(j)] * xj * xj;
                for (int k = j + 1; k < 3; ++k) {
                    if (k == idx) continue;
                    const double xk = s[static_cast<std::size_t>(k)] / n;
                    rtln += (p.w[i][static_cast<std::size_t>(j)] + p.w[i][static_cast<std::size_t>(k)] -
                             p.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]) *
                            xj * xk;
                }
            }
            g += rtln / p.rt;
        }
        grad[i] = g;
    }
    return grad;
}

struct SaturationScan {
    bool supersaturated = false;
    std::array<double, 3> composition{}; // argmin composition (regular only)
};

// ln IAP/Ksp per candidate at the all-aqueous state.
std::array<double, 3> ln_omega(const GibbsProblem& p) {
    const auto m = strong_molalities(p, {0.0, 0.0, 0.0});
    const double ionic = strong_ionic_strength(m);
    const double ln_g2 = ln_gamma_z(p, ionic, 2);
    std::array<double, 3> omega{-1e30, -1e30, -1e30};
    if (!(m[6] > 0.0)) return omega;
    const double ln_so4 = std::log(m[6]) + ln_g2;
    for (int idx : p.candidates) {
        const std::size_t i = static_cast<std::size_t>(idx);
        if (m[i] > 0.0)
            omega[i] = std::log(m[i]) + ln_g2 + ln_so4 - p.ln_ksp[i];
    }
    return omega;
}

// For the regular solution: the solid nucleates iff
//   min_X sum_i X_i (ln X_i - ln Omega_i) + X^T W X / RT < 0.
// Scanned over the candidate simplex.
SaturationScan saturation_scan(const GibbsProblem& p, const std::array<double, 3>& lnw) {
    SaturationScan out;
    const auto& cand = p.candidates;
    if (cand.empty()) return out;

    if (p.mechanical) {
        for (int idx : cand)
            if (lnw[static_cast<std::size_t>(idx)] > 0.0) out.supersaturated = true;
        return out;
    }

    auto phi = [&](const std::array<double, 3>& x) {
        double v = 0.0;
        for (int idx : cand) {
            const std::size_t i = static_cast<std::size_t>(idx);
            v += xlnx(x[i]) - x[i] * lnw[i];
        }
        for (std::size_t a = 0; a < cand.size(); ++a)
            for (std::size_t b = a + 1; b < cand.size(); ++b) {
                const std::size_t i = static_cast<std::size_t>(cand[a]);
                const std::size_t j = static_cast<std::size_t>(cand[b]);
                v += x[i] * x[j] * p.w[i][j] / p.rt;
            }
        return v;
    };

    double best = 0.0;
    std::array<double, 3> best_x{};
    bool found = false;
    const int divisions = 48;
    if (cand.size() == 1) {
        std::array<double, 3> x{};
        x[static_cast<std::size_t>(cand[0])] = 1.0;
        const double v = phi(x);
        if (v < best) {
            best = v;
            best_x = x;
            found = true;
        }
    } else if (cand.size() == 2) {
        for (int i = 0; i <= divisions; ++i) {
            std::array<double, 3> x{};
            const double t = static_cast<double>(i) / divisions;
            x[static_cast<std::size_t>(cand[0])] = 1.0 - t;
            x[static_cast<std::size_t>(cand[1])] = t;
            const double v = phi(x);
            if (v < best) {
                best = v;
                best_x = x;
                found = true;
            }
        }
    } else {
        for (int i = 0; i <= divisions; ++i)
            for (int j = 0; j <= divisions - i; ++j) {
                std::array<double, 3> x{};
                x[static_cast<std::size_t>(cand[0])] = static_cast<double>(i) / divisions;
                x[static_cast<std::size_t>(cand[1])] = static_cast<double>(j) / divisions;
                x[static_cast<std::size_t>(cand[2])] =
                    static_cast<double>(divisions - i - j) / divisions;
                const double v = phi(x);
                if (v < best) {
                    best = v;
                    best_x = x;
                    found = true;
                }
            }
    }
    if (found) {
        out.supersaturated = true;
        // nudge strictly inside the candidate face
        double norm = 0.0;
        for (int idx : cand) {
            auto& xi = best_x[static_cast<std::size_t>(idx)];
            xi = xi + 1e-4;
            norm += xi;
        }
        for (int idx : cand) best_x[static_cast<std::size_t>(idx)] /= norm;
        out.composition = best_x;
    }
    return out;
}

struct MinimizeResult {
    std::array<double, 3> s{};
    int iterations = 0;
    bool converged = false;
    double grad_inf = 0.0;
};

// Projected damped Newton on the solid moles. The aqueous depletion walls
// (m -> 0) act as log barriers, so only the s >= 0 faces need projection.
// Those faces are reachable in the mechanical variant only; the regular
// variants keep every component strictly positive (the ln X_i slope is
// unbounded there), so their steps are limited to a 10x decrease per
// iteration instead of projecting onto zero.
MinimizeResult minimize_gibbs(const GibbsProblem& p, std::array<double, 3> s,
                              const EquilibrateOptions& opts) {
    MinimizeResult res;
    const auto& cand = p.candidates;

    auto feasible_clip = [&](std::array<double, 3>& t, const std::array<double, 3>& from) {
        const double margin = 1.0 - 1e-13;
        for (int idx : cand) {
            const std::size_t i = static_cast<std::size_t>(idx);
            t[i] = p.mechanical ? std::max(t[i], 0.0) : std::max(t[i], 0.1 * from[i]);
            t[i] = std::min(t[i], p.member_total[i] * margin);
        }
        double precip = t[0] + t[1] + t[2];
        if (precip > p.sulfate_total * margin && precip > 0.0) {
            const double scale = p.sulfate_total * margin / precip;
            for (int idx : cand) t[static_cast<std::size_t>(idx)] *= scale;
        }
    };

    feasible_clip(s, s);
    double g_cur = gibbs_over_rt(p, s);

    for (res.iterations = 1; res.iterations <= opts.max_outer; ++res.iterations) {
        const auto grad = gibbs_gradient_over_rt(p, s); // dimensionless (per RT)

        // KKT: variables pinned at zero with non-negative gradient are fixed.
        std::vector<int> free;
        double grad_inf = 0.0;
        for (int idx : cand) {
            const std::size_t i = static_cast<std::size_t>(idx);
            if (p.mechanical && s[i] <= 0.0 && grad[i] >= 0.0) continue;
            free.push_back(idx);
            grad_inf = std::max(grad_inf, std::abs(grad[i]));
        }
        res.grad_inf = grad_inf * p.rt;
        if (free.empty() || res.grad_inf <= opts.grad_tol) {
            res.converged = true;
            break;
        }

        // Finite-difference Hessian of the analytic gradient on free vars.
        const int nf = static_cast<int>(free.size());
        Eigen::MatrixXd h(nf, nf);
        bool h_ok = true;
        for (int a = 0; a < nf && h_ok; ++a) {
            const std::size_t ia = static_cast<std::size_t>(free[static_cast<std::size_t>(a)]);
            double wall = p.member_total[ia] * (1.0 - 1e-13) - s[ia];
            double slack = p.sulfate_total * (1.0 - 1e-13) - (s[0] + s[1] + s[2]);
            const double step_up = std::min({1e-7 * std::max(s[ia], 1e-9), 0.45 * wall, 0.45 * slack});
            const double step_dn = std::min(1e-7 * std::max(s[ia], 1e-9), 0.45 * s[ia]);
            const double denom = step_up + step_dn;
            if (!(denom > 0.0)) {
                h_ok = false;
                break;
            }
            std::array<double, 3> sp = s, sm = s;
            sp[ia] += step_up;
            sm[ia] -= step_dn;
            const auto gp = gibbs_gradient_over_rt(p, sp);
            const auto gm = gibbs_gradient_over_rt(p, sm);
            for (int b = 0; b < nf; ++b) {
                const std::size_t ib = static_cast<std::size_t>(free[static_cast<std::size_t>(b)]);
                h(a, b) = (gp[ib] - gm[ib]) / denom;
            }
        }

        Eigen::VectorXd gf(nf);
        for (int a = 0; a < nf; ++a)
            gf(a) = grad[static_cast<std::size_t>(free[static_cast<std::size_t>(a)])];

        Eigen::VectorXd step_dir;
        bool newton_ok = false;
        if (h_ok) {
            h = 0.5 * (h + h.transpose()).eval();
            Eigen::LLT<Eigen::MatrixXd> llt(h);
            if (llt.info() == Eigen::Success) {
                step_dir = -llt.solve(gf);
                newton_ok = step_dir.allFinite();
            }
        }
        if (!newton_ok) {
            // fall back to scaled steepest descent
            double scale = 0.0;
            for (int idx : cand)
                scale = std::max(scale, p.member_total[static_cast<std::size_t>(idx)]);
            step_dir = -gf * (0.01 * std::max(scale, 1e-12) / std::max(gf.norm(), 1e-300));
        }

        // Backtracking with projection; the barrier terms blow G up before
        // any aqueous molality can reach zero. Near the minimum the G
        // decrease falls below double resolution, so a step that shrinks
        // the free gradient norm is also accepted (Newton on grad = 0).
        auto free_grad_inf = [&](const std::array<double, 3>& at) {
            const auto g = gibbs_gradient_over_rt(p, at);
            double inf = 0.0;
            for (int idx : free) {
                const std::size_t i = static_cast<std::size_t>(idx);
                if (p.mechanical && at[i] <= 0.0 && g[i] >= 0.0) continue;
                inf = std::max(inf, std::abs(g[i]));
            }
            return inf;
        };
        const double gn_cur = grad_inf;
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 80; ++ls) {
            std::array<double, 3> trial = s;
            for (int a = 0; a < nf; ++a)
                trial[static_cast<std::size_t>(free[static_cast<std::size_t>(a)])] += alpha * step_dir(a);
            feasible_clip(trial, s);
            const double g_trial = gibbs_over_rt(p, trial);
            if (!std::isfinite(g_trial)) {
                alpha *= 0.5;
                continue;
            }
            const bool g_down = g_trial < g_cur;
            const bool grad_down = newton_ok && free_grad_inf(trial) < 0.9 * gn_cur;
            if (g_down || grad_down) {
                s = trial;
                g_cur = g_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            // no strict progress left: numerically stationary
            res.converged = res.grad_inf <= std::max(opts.grad_tol * 1e6, 1e-4);
            break;
        }
    }
    res.s = s;
    return res;
}

} // namespace

double total_gibbs(const Recipe& recipe, const SolidSolutionModel& model, const ThermoData& data,
                   const std::array<double, 3>& solid_moles) {
    const GibbsProblem p = make_problem(recipe, model, data);
    return gibbs_over_rt(p, solid_moles) * p.rt;
}

std::array<double, 3> total_gibbs_gradient(const Recipe& recipe, const SolidSolutionModel& model,
                                           const ThermoData& data,
                                           const std::array<double, 3>& solid_moles) {
    const GibbsProblem p = make_problem(recipe, model, data);
    auto g = gibbs_gradient_over_rt(p, solid_moles);
    for (auto& v : g) v *= p.rt;
    return g;
}

EquilibriumState equilibrate(const Recipe& recipe, const SolidSolutionModel& model,
                             const ThermoData& data, const EquilibrateOptions& opts) {
    const GibbsProblem p = make_problem(recipe, model, data);

    std::array<double, 3> s{0.0, 0.0, 0.0};
    int iterations = 0;
    if (!p.candidates.empty()) {
        const auto lnw = ln_omega(p);
        const SaturationScan scan = saturation_scan(p, lnw);
        if (scan.supersaturated) {
            if (p.mechanical) {
                const int k = static_cast<int>(p.candidates.size());
                for (int idx : p.candidates) {
                    const std::size_t i = static_cast<std::size_t>(idx);
                    if (lnw[i] > 0.0)
                        s[i] = 0.1 * std::min(p.member_total[i], p.sulfate_total / k);
                }
            } else {
                double n_max = p.sulfate_total;
                for (int idx : p.candidates) {
                    const std::size_t i = static_cast<std::size_t>(idx);
                    if (scan.composition[i] > 0.0)
                        n_max = std::min(n_max, p.member_total[i] / scan.composition[i]);
                }
                const double n0 = 0.1 * n_max;
                for (int idx : p.candidates) {
                    const std::size_t i = static_cast<std::size_t>(idx);
                    s[i] = n0 * scan.composition[i];
                }
            }
            MinimizeResult min = minimize_gibbs(p, s, opts);
            iterations = min.iterations;
            if (!min.converged)
                throw convergence_error(
                    "equilibrate: no convergence after " + std::to_string(min.iterations) +
                    " iterations, projected gradient " + std::to_string(min.grad_inf) + " J/mol");
            s = min.s;
        }
    }

    // Assemble the reported state.
    EquilibriumState st;
    st.iterations = iterations;
    const auto m = strong_molalities(p, s);
    const Speciation spc = speciate(m, p.t_celsius, p.aqueous);
    st.molality = spc.molality;
    st.gamma_aq = spc.gamma;
    st.ionic_strength = spc.ionic_strength;
    st.ph = spc.ph;
    st.solid_moles = s;
    const double n = s[0] + s[1] + s[2];
    st.solid_present = n > 0.0;
    st.gamma_solid = {1.0, 1.0, 1.0};
    if (st.solid_present) {
        std::vector<double> x(3), wrow(3);
        std::vector<std::vector<double>> w(3, std::vector<double>(3, 0.0));
        for (int i = 0; i < 3; ++i) {
            x[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)] / n;
            st.mole_fraction[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)] / n;
            for (int j = 0; j < 3; ++j)
                w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    p.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        if (!p.mechanical) {
            const auto gs = solid_activity_coeffs(x, w, p.t_celsius + kCelsiusToKelvin);
            for (int i = 0; i < 3; ++i)
                st.gamma_solid[static_cast<std::size_t>(i)] = gs[static_cast<std::size_t>(i)];
        }
    }
    st.total_gibbs = gibbs_over_rt(p, s) * p.rt;

    // Residuals (structural, but reported for the record).
    const auto totals = element_totals(recipe);
    double mass_res = 0.0;
    const std::array<double, 4> solved = {
        st.molality[0] + s[0], st.molality[1] + s[1], st.molality[2] + s[2],
        st.molality[6] + n};
    const std::array<double, 4> expect = {totals[0], totals[1], totals[2], totals[6]};
    for (int i = 0; i < 4; ++i)
        if (expect[static_cast<std::size_t>(i)] > 0.0)
            mass_res = std::max(mass_res,
                                std::abs(solved[static_cast<std::size_t>(i)] - expect[static_cast<std::size_t>(i)]) /
                                    expect[static_cast<std::size_t>(i)]);
    st.mass_balance_residual = mass_res;
    double charge = 0.0;
    for (int i = 0; i < kNumIons; ++i)
        charge += ion_charge(static_cast<Ion>(i)) * st.molality[static_cast<std::size_t>(i)];
    st.charge_balance_residual = std::abs(charge);
    return st;
}

std::vector<EquilibriumState> batch_equilibrate(const std::vector<Recipe>& recipes,
                                                const SolidSolutionModel& model,
                                                const ThermoData& data, int jobs, double* seconds,
                                                const EquilibrateOptions& opts) {
    std::vector<EquilibriumState> out(recipes.size());
    const auto t0 = std::chrono::steady_clock::now();
    if (jobs <= 1) {
        for (std::size_t i = 0; i < recipes.size(); ++i)
            out[i] = equilibrate(recipes[i], model, data, opts);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        std::vector<std::string> errors(static_cast<std::size_t>(jobs));
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = next.fetch_add(1); i < recipes.size(); i = next.fetch_add(1)) {
                    try {
                        out[i] = equilibrate(recipes[i], model, data, opts);
                    } catch (const std::exception& e) {
                        errors[static_cast<std::size_t>(w)] =
                            "recipe " + std::to_string(i) + ": " + e.what();
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (!e.empty()) throw convergence_error("batch_equilibrate: " + e);
    }
    if (seconds)
        *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace kaneq::thermo
