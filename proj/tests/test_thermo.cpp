#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kaneq/thermo.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

using namespace kaneq;
using namespace kaneq::thermo;

namespace {

std::vector<std::vector<double>> w_matrix(double w12, double w13 = 0.0, double w23 = 0.0) {
    return {{0.0, w12, w13}, {w12, 0.0, w23}, {w13, w23, 0.0}};
}

SolidSolutionModel model_of(MixingVariant v) {
    SolidSolutionModel m;
    m.variant = v;
    return m;
}

// Independent 1-D bisection for the pure-phase solubility of member `em`
// when it is the only feed: solves a_M * a_SO4 = Ksp with the shared
// speciation helper.
double bisect_solubility(EndMember em, double feed_mol, double nacl_mol, double t_c,
                         const ThermoData& data) {
    const double ln_ksp = std::log(10.0) * data.log_ksp(em, t_c);
    auto residual = [&](double s) {
        std::array<double, 7> m{};
        m[static_cast<std::size_t>(static_cast<int>(em))] = feed_mol - s;
        m[3] = nacl_mol;
        m[4] = nacl_mol;
        m[6] = feed_mol - s;
        const Speciation spc = speciate(m, t_c);
        const double g2 = spc.gamma[0];
        return std::log(g2 * (feed_mol - s)) + std::log(g2 * (feed_mol - s)) - ln_ksp;
    };
    double lo = 0.0, hi = feed_mol * (1.0 - 1e-12);
    if (residual(lo) <= 0.0) return 0.0; // undersaturated
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct GridBest {
    double g = std::numeric_limits<double>::infinity();
    double n = 0.0;
    double x_ra = 0.0;
};

// Brute-force scan of total G over (extent, composition) for a binary
// (Ba,Ra)SO4 instance: one 200x200 pass over the full box, then three
// zoomed 200x200 passes around the incumbent cell. A single-level grid
// cannot localize G to the 1e-8|G| comparison tolerance, the curvature
// near the optimum is too large; the refinement keeps the search
// exhaustive at every level.
GridBest grid_search_binary(const Recipe& r, const SolidSolutionModel& model,
                            const ThermoData& data) {
    const auto totals = element_totals(r);
    const double b_ba = totals[0], b_ra = totals[2], b_s = totals[6];
    const double margin = 1.0 - 1e-9;

    GridBest best;
    auto consider = [&](double n, double x) {
        const double s_ba = n * (1.0 - x);
        const double s_ra = n * x;
        if (s_ba > b_ba * margin || s_ra > b_ra * margin || n > b_s * margin) return;
        const double g = total_gibbs(r, model, data, {s_ba, 0.0, s_ra});
        if (g < best.g) {
            best.g = g;
            best.n = n;
            best.x_ra = x;
        }
    };

    double n_lo = 0.0, n_hi = std::min(b_s, b_ba + b_ra);
    double x_lo = 0.0, x_hi = 1.0;
    const int divisions = 200;
    for (int level = 0; level < 4; ++level) {
        const double dn = (n_hi - n_lo) / divisions;
        const double dx = (x_hi - x_lo) / divisions;
        for (int i = 0; i <= divisions; ++i)
            for (int j = 0; j <= divisions; ++j)
                consider(n_lo + i * dn, std::clamp(x_lo + j * dx, 0.0, 1.0));
        n_lo = std::max(0.0, best.n - 2.0 * dn);
        n_hi = best.n + 2.0 * dn;
        x_lo = std::clamp(best.x_ra - 2.0 * dx, 0.0, 1.0);
        x_hi = std::clamp(best.x_ra + 2.0 * dx, 0.0, 1.0);
    }
    return best;
}

} // namespace

TEST_CASE("mechanical mixing energy") {
    CHECK(g_mechanical({1.0, 0.0}, {-1362000.0, -1364000.0}) == -1362000.0);
    CHECK(g_mechanical({0.5, 0.5}, {-1362000.0, -1364000.0}) == doctest::Approx(-1363000.0));
    const double third = 1.0 / 3.0;
    CHECK(g_mechanical({third, third, third}, {-3.0, -6.0, -9.0}) == doctest::Approx(-6.0));
    CHECK_THROWS_AS(g_mechanical({0.7, 0.7}, {1.0, 1.0}), domain_error);
}

TEST_CASE("ideal mixing energy") {
    CHECK(g_ideal_mix({1.0, 0.0}, 298.15) == 0.0);
    CHECK(g_ideal_mix({0.5, 0.5}, 298.15) ==
          doctest::Approx(kGasConstant * 298.15 * std::log(0.5)).epsilon(1e-12));
    CHECK(g_ideal_mix({0.5, 0.5}, 298.15) == doctest::Approx(-1718.3).epsilon(1e-4));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        double a = dist(rng), b = dist(rng), c = dist(rng);
        const double s = a + b + c;
        CHECK(g_ideal_mix({a / s, b / s, c / s}, 310.0) <= 0.0);
    }
    CHECK_THROWS_AS(g_ideal_mix({-0.1, 1.1}, 298.15), domain_error);
}

TEST_CASE("excess energy with Margules parameters") {
    auto w = w_matrix(2470.0);
    CHECK(g_excess({1.0, 0.0, 0.0}, w) == 0.0);
    CHECK(g_excess({0.5, 0.5, 0.0}, w) == doctest::Approx(617.5).epsilon(1e-12));
    CHECK(g_excess({0.3, 0.7, 0.0}, w) == g_excess({0.7, 0.3, 0.0}, w));
    auto bad = w;
    bad[0][1] = 1.0;
    CHECK_THROWS_AS(g_excess({0.5, 0.5, 0.0}, bad), domain_error);
}

TEST_CASE("total mixing energy per variant") {
    const std::vector<double> g0 = {-100.0, -200.0};
    auto w = std::vector<std::vector<double>>{{0.0, 2470.0}, {2470.0, 0.0}};
    CHECK(g_total({0.25, 0.75}, g0, w, 298.15, MixingVariant::MechanicalMixture) ==
          g_mechanical({0.25, 0.75}, g0));
    const double expect = g_mechanical({0.5, 0.5}, g0) + g_ideal_mix({0.5, 0.5}, 298.15) + 617.5;
    CHECK(g_total({0.5, 0.5}, g0, w, 298.15, MixingVariant::BinaryRegular) ==
          doctest::Approx(expect).epsilon(1e-12));
    auto w0 = std::vector<std::vector<double>>{{0.0, 0.0}, {0.0, 0.0}};
    CHECK(g_total({0.5, 0.5}, g0, w0, 298.15, MixingVariant::BinaryRegular) ==
          doctest::Approx(g_mechanical({0.5, 0.5}, g0) + g_ideal_mix({0.5, 0.5}, 298.15)));
}

TEST_CASE("binary face of the ternary model matches the binary model") {
    auto w3 = w_matrix(2470.0, 750.0, 1750.0);
    auto w2 = std::vector<std::vector<double>>{{0.0, 2470.0}, {2470.0, 0.0}};
    const std::vector<double> g0_3 = {-10.0, -20.0, 0.0};
    const std::vector<double> g0_2 = {-10.0, -20.0};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.01, 0.99);
    for (int k = 0; k < 100; ++k) {
        const double x = dist(rng);
        const double g3 =
            g_total({1.0 - x, x, 0.0}, g0_3, w3, 298.15, MixingVariant::TernaryRegular);
        const double g2 = g_total({1.0 - x, x}, g0_2, w2, 298.15, MixingVariant::BinaryRegular);
        CHECK(std::abs(g3 - g2) <= 1e-12 * std::max(1.0, std::abs(g2)));
    }
}

TEST_CASE("Thomson-Waldbaum activity coefficients") {
    auto w = w_matrix(2470.0);
    const auto pure = solid_activity_coeffs({1.0, 0.0, 0.0}, w, 298.15);
    CHECK(pure[0] == doctest::Approx(1.0).epsilon(1e-15));

    // trace Ra in pure barite: gamma_Ra -> exp(w/(RT)) ~ 2.708
    const auto trace = solid_activity_coeffs({1.0, 0.0, 0.0}, w, 298.15);
    CHECK(trace[1] == doctest::Approx(std::exp(2470.0 / (kGasConstant * 298.15))).epsilon(1e-12));
    CHECK(trace[1] == doctest::Approx(2.708).epsilon(1e-3));
}

TEST_CASE("binary activity coefficients follow w X^2") {
    auto w = std::vector<std::vector<double>>{{0.0, 2470.0}, {2470.0, 0.0}};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(0.01, 0.99);
    for (int k = 0; k < 50; ++k) {
        const double x2 = dist(rng);
        const auto g = solid_activity_coeffs({1.0 - x2, x2}, w, 298.15);
        const double rt = kGasConstant * 298.15;
        CHECK(std::log(g[0]) == doctest::Approx(2470.0 * x2 * x2 / rt).epsilon(1e-12));
        CHECK(std::log(g[1]) == doctest::Approx(2470.0 * (1 - x2) * (1 - x2) / rt).epsilon(1e-12));
    }
}

TEST_CASE("analytic solid ln gamma matches numerical excess differentiation") {
    auto w = w_matrix(2470.0, 750.0, 1750.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    const double rt = kGasConstant * 298.15;
    for (int k = 0; k < 1000; ++k) {
        std::array<double, 3> n{dist(rng), dist(rng), dist(rng)};
        const double total = n[0] + n[1] + n[2];
        std::vector<double> x = {n[0] / total, n[1] / total, n[2] / total};
        const auto gamma = solid_activity_coeffs(x, w, 298.15);

        auto f_excess = [&](const std::array<double, 3>& moles) {
            const double t = moles[0] + moles[1] + moles[2];
            std::vector<double> xx = {moles[0] / t, moles[1] / t, moles[2] / t};
            return t * g_excess(xx, w);
        };
        for (int i = 0; i < 3; ++i) {
            const double h = 1e-6 * total;
            auto np = n, nm = n;
            np[static_cast<std::size_t>(i)] += h;
            nm[static_cast<std::size_t>(i)] -= h;
            const double numeric = (f_excess(np) - f_excess(nm)) / (2.0 * h);
            CHECK(std::abs(numeric / rt - std::log(gamma[static_cast<std::size_t>(i)])) <= 1e-8);
        }
    }
}

TEST_CASE("Gibbs-Duhem along random composition paths") {
    // sum_i X_i dln(gamma_i) = 0 for any simplex direction; the directional
    // derivatives come from hand-differentiating the Thomson-Waldbaum form.
    auto w = w_matrix(2470.0, 750.0, 1750.0);
    const double rt = kGasConstant * 298.15;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(0.1, 1.0);
    for (int k = 0; k < 100; ++k) {
        std::array<double, 3> n{dist(rng), dist(rng), dist(rng)};
        const double total = n[0] + n[1] + n[2];
        const double x[3] = {n[0] / total, n[1] / total, n[2] / total};
        double dir[3];
        dir[0] = dist(rng) - 0.5;
        dir[1] = dist(rng) - 0.5;
        dir[2] = -(dir[0] + dir[1]);

        // dln(gamma_i)/dX_j for i != j, from RT ln g_i = sum w_ij X_j^2 +
        // sum (w_ij + w_ik - w_jk) X_j X_k
        double acc = 0.0;
        for (int i = 0; i < 3; ++i) {
            double dlng = 0.0;
            for (int j = 0; j < 3; ++j) {
                if (j == i) continue;
                double partial = 2.0 * w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * x[j];
                for (int kk = 0; kk < 3; ++kk) {
                    if (kk == i || kk == j) continue;
                    partial += (w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                                w[static_cast<std::size_t>(i)][static_cast<std::size_t>(kk)] -
                                w[static_cast<std::size_t>(j)][static_cast<std::size_t>(kk)]) *
                               x[kk];
                }
                dlng += partial / rt * dir[j];
            }
            acc += x[i] * dlng;
        }
        CHECK(std::abs(acc) <= 1e-10);
    }
}

TEST_CASE("aqueous activity coefficients") {
    std::vector<double> zero(static_cast<std::size_t>(kNumIons), 0.0);
    const auto unit = aqueous_activity_coeffs(zero, 25.0);
    for (double g : unit) CHECK(g == 1.0);

    // I = 0.01 from a 1:1 electrolyte, a0 = 4 A everywhere
    std::vector<double> m(static_cast<std::size_t>(kNumIons), 0.0);
    m[static_cast<int>(Ion::Na)] = 0.01;
    m[static_cast<int>(Ion::Cl)] = 0.01;
    const auto g = aqueous_activity_coeffs(m, 25.0);
    // frozen from the tabulated A = 0.5092, B = 0.3283:
    // log gamma = -0.5092*0.1/(1 + 0.3283*4*0.1) = -0.0450111
    CHECK(std::log10(g[static_cast<int>(Ion::Na)]) == doctest::Approx(-0.0450111).epsilon(1e-5));

    // z^2 ordering at equal I and a0
    CHECK(g[static_cast<int>(Ion::Ba)] < g[static_cast<int>(Ion::Na)]);
}

TEST_CASE("speciation closes the charge balance and pins pH near 7") {
    std::array<double, 7> m{};
    m[3] = 0.1; // Na
    m[4] = 0.1; // Cl
    const Speciation s = speciate(m, 25.0);
    CHECK(s.ph == doctest::Approx(7.0).epsilon(0.02));
    double charge = 0.0;
    for (int i = 0; i < kNumIons; ++i)
        charge += ion_charge(static_cast<Ion>(i)) * s.molality[static_cast<std::size_t>(i)];
    CHECK(std::abs(charge) <= 1e-18);
    CHECK(s.ionic_strength == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("thermo data interpolation and csv round trip") {
    const ThermoData d = ThermoData::builtin_defaults();
    CHECK(d.log_ksp(EndMember::BaSO4, 25.0) == doctest::Approx(-9.97).epsilon(1e-12));
    const double mid = d.log_ksp(EndMember::BaSO4, 22.5);
    CHECK(mid == doctest::Approx(0.5 * (-10.048587 - 9.97)).epsilon(1e-9));

    {
        std::ofstream f("test_thermo_data.csv");
        f << "end_member,T_celsius,log_ksp\n";
        f << "BaSO4,25,-9.97\nBaSO4,50,-9.6\nSrSO4,25,-6.63\nRaSO4,25,-10.26\n";
    }
    const ThermoData loaded = ThermoData::load_csv("test_thermo_data.csv");
    CHECK(loaded.log_ksp(EndMember::BaSO4, 37.5) == doctest::Approx(-9.785).epsilon(1e-12));

    {
        std::ofstream f("test_thermo_g.csv");
        f << "end_member,T_celsius,G_standard_J_per_mol\n";
        const double g = -9.97 * kGasConstant * 298.15 * std::log(10.0);
        f << "BaSO4,25," << std::setprecision(17) << g << "\nSrSO4,25,100\nRaSO4,25,100\n";
    }
    const ThermoData g_form = ThermoData::load_csv("test_thermo_g.csv");
    CHECK(g_form.log_ksp(EndMember::BaSO4, 25.0) == doctest::Approx(-9.97).epsilon(1e-9));

    CHECK_THROWS_AS(ThermoData::load_csv("missing.csv"), io_error);
}

TEST_CASE("nothing precipitates without sulfate sources") {
    Recipe r;
    r.nacl_mmol = 100.0;
    r.rabr2_umol = 0.0;
    const auto st = equilibrate(r, model_of(MixingVariant::MechanicalMixture),
                                ThermoData::builtin_defaults());
    CHECK_FALSE(st.solid_present);
    CHECK(st.molality[static_cast<int>(Ion::Na)] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(st.molality[static_cast<int>(Ion::Cl)] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(st.mass_balance_residual <= 1e-10);
    CHECK(st.charge_balance_residual <= 1e-10);
}

TEST_CASE("mechanical mixture reproduces pure-phase bisection solubility") {
    const ThermoData data = ThermoData::builtin_defaults();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> feed(50.0, 500.0), salt(50.0, 500.0);
    for (int k = 0; k < 25; ++k) {
        Recipe r;
        r.baso4_umol = feed(rng);
        r.nacl_mmol = salt(rng);
        const auto st = equilibrate(r, model_of(MixingVariant::MechanicalMixture), data);
        const double s_oracle =
            bisect_solubility(EndMember::BaSO4, r.baso4_umol * 1e-6, r.nacl_mmol * 1e-3, 25.0, data);
        const double m_oracle = r.baso4_umol * 1e-6 - s_oracle;
        const double m_solver = st.molality[static_cast<int>(Ion::Ba)];
        CHECK(std::abs(m_solver - m_oracle) / m_oracle <= 1e-9);
    }
}

TEST_CASE("undersaturated feed stays fully aqueous") {
    Recipe r;
    r.baso4_umol = 5.0; // below barite solubility at this ionic strength
    r.nacl_mmol = 400.0;
    const auto st =
        equilibrate(r, model_of(MixingVariant::MechanicalMixture), ThermoData::builtin_defaults());
    CHECK_FALSE(st.solid_present);
    CHECK(st.molality[static_cast<int>(Ion::Ba)] == doctest::Approx(5e-6).epsilon(1e-12));
}

TEST_CASE("binary regular equilibrium matches the brute-force grid oracle") {
    const ThermoData data = ThermoData::builtin_defaults();
    const SolidSolutionModel model = model_of(MixingVariant::BinaryRegular);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> feed(50.0, 500.0), t_dist(20.0, 90.0);
    for (int k = 0; k < 10; ++k) {
        Recipe r;
        r.baso4_umol = feed(rng);
        r.rabr2_umol = feed(rng);
        r.nacl_mmol = 50.0;
        r.t_celsius = t_dist(rng);
        const auto st = equilibrate(r, model, data);
        const GridBest grid = grid_search_binary(r, model, data);
        const double g_solver = st.total_gibbs;
        CHECK(std::abs(g_solver - grid.g) <= 1e-8 * std::abs(g_solver));
        // the minimizer may not be beaten by any scanned point
        CHECK(g_solver <= grid.g + 1e-8 * std::abs(g_solver));
    }
}

TEST_CASE("solubility products hold at the converged state") {
    const ThermoData data = ThermoData::builtin_defaults();
    Recipe r;
    r.baso4_umol = 300.0;
    r.rabr2_umol = 250.0;
    r.nacl_mmol = 50.0;
    const auto st = equilibrate(r, model_of(MixingVariant::BinaryRegular), data);
    REQUIRE(st.solid_present);
    const double g2 = st.gamma_aq[static_cast<int>(Ion::Ba)];
    const double a_so4 = g2 * st.molality[static_cast<int>(Ion::SO4)];
    for (EndMember em : {EndMember::BaSO4, EndMember::RaSO4}) {
        const int i = static_cast<int>(em);
        const double a_m = g2 * st.molality[static_cast<std::size_t>(i == 0 ? 0 : 2)];
        const double iap = a_m * a_so4;
        const double rhs = std::pow(10.0, data.log_ksp(em, 25.0)) *
                           st.mole_fraction[static_cast<std::size_t>(i)] *
                           st.gamma_solid[static_cast<std::size_t>(i)];
        CHECK(iap == doctest::Approx(rhs).epsilon(1e-7));
    }
}

TEST_CASE("mass and charge balance on random recipes across variants") {
    const ThermoData data = ThermoData::builtin_defaults();
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 300; ++k) {
        Recipe r;
        r.baso4_umol = 50.0 + 450.0 * u(rng);
        r.nacl_mmol = 50.0 + 450.0 * u(rng);
        r.rabr2_umol = 50.0 + 450.0 * u(rng);
        MixingVariant v = MixingVariant::MechanicalMixture;
        if (k % 3 == 1) v = MixingVariant::BinaryRegular;
        if (k % 3 == 2) {
            v = MixingVariant::TernaryRegular;
            r.srso4_mmol = 5.0 + 45.0 * u(rng);
        }
        if (k % 5 == 0) r.t_celsius = 20.0 + 70.0 * u(rng);
        const auto st = equilibrate(r, model_of(v), data);
        CHECK(st.mass_balance_residual <= 1e-10);
        CHECK(st.charge_balance_residual <= 1e-10);
        for (int i = 0; i < kNumIons; ++i) CHECK(st.molality[static_cast<std::size_t>(i)] >= 0.0);
        if (st.solid_present) {
            double xsum = 0.0;
            for (double x : st.mole_fraction) xsum += x;
            CHECK(std::abs(xsum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("more radium in never lowers aqueous or total radium (mechanical)") {
    const ThermoData data = ThermoData::builtin_defaults();
    const SolidSolutionModel model = model_of(MixingVariant::MechanicalMixture);
    double prev_aq = -1.0, prev_total = -1.0;
    for (double ra = 50.0; ra <= 500.0; ra += 25.0) {
        Recipe r;
        r.baso4_umol = 300.0;
        r.nacl_mmol = 120.0;
        r.rabr2_umol = ra;
        const auto st = equilibrate(r, model, data);
        const double aq = st.molality[static_cast<int>(Ion::Ra)];
        const double total = aq + st.solid_moles[static_cast<int>(EndMember::RaSO4)];
        CHECK(aq >= prev_aq - 1e-15);
        CHECK(total >= prev_total - 1e-15);
        prev_aq = aq;
        prev_total = total;
    }
}

TEST_CASE("batch equilibrate preserves order and matches single calls") {
    const ThermoData data = ThermoData::builtin_defaults();
    const SolidSolutionModel model = model_of(MixingVariant::TernaryRegular);
    std::vector<Recipe> recipes;
    for (int i = 0; i < 6; ++i) {
        Recipe r;
        r.baso4_umol = 100.0 + 50.0 * i;
        r.nacl_mmol = 100.0;
        r.rabr2_umol = 400.0 - 40.0 * i;
        r.srso4_mmol = 10.0 + i;
        recipes.push_back(r);
    }
    double secs = 0.0;
    const auto batch = batch_equilibrate(recipes, model, data, 2, &secs);
    CHECK(secs > 0.0);
    REQUIRE(batch.size() == recipes.size());
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        const auto single = equilibrate(recipes[i], model, data);
        CHECK(batch[i].total_gibbs == single.total_gibbs);
        CHECK(batch[i].ph == single.ph);
    }
    // permuted batch -> permuted results
    std::vector<Recipe> rev(recipes.rbegin(), recipes.rend());
    const auto back = batch_equilibrate(rev, model, data);
    for (std::size_t i = 0; i < rev.size(); ++i)
        CHECK(back[i].total_gibbs == batch[recipes.size() - 1 - i].total_gibbs);
}

TEST_CASE("invalid recipes are rejected") {
    const ThermoData data = ThermoData::builtin_defaults();
    Recipe r;
    r.baso4_umol = -1.0;
    CHECK_THROWS_AS(equilibrate(r, model_of(MixingVariant::MechanicalMixture), data),
                    contract_error);
    Recipe hot;
    hot.t_celsius = 400.0;
    CHECK_THROWS_AS(equilibrate(hot, model_of(MixingVariant::MechanicalMixture), data),
                    domain_error);
}
