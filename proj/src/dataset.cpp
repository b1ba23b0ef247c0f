#include "kaneq/dataset.hpp"

#include "kaneq/csv.hpp"
#include "kaneq/sobol.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

namespace kaneq::data {

using json = nlohmann::json;

std::string case_name(CaseStudy c) {
    switch (c) {
    case CaseStudy::Cement: return "cement";
    case CaseStudy::MechMix: return "mech_mix";
    case CaseStudy::BinarySS: return "binary_ss";
    case CaseStudy::TernarySS: return "ternary_ss";
    }
    return "?";
}

CaseStudy case_from_name(const std::string& name) {
    if (name == "cement") return CaseStudy::Cement;
    if (name == "mech_mix") return CaseStudy::MechMix;
    if (name == "binary_ss") return CaseStudy::BinarySS;
    if (name == "ternary_ss") return CaseStudy::TernarySS;
    throw contract_error("unknown case study: " + name);
}

DatasetSpec DatasetSpec::for_case(CaseStudy c) {
    DatasetSpec s;
    s.case_study = c;
    switch (c) {
    case CaseStudy::Cement:
        s.input_names = {"CaO", "SiO2", "H2O"};
        s.output_names = {"pH",   "MassWater", "Ca_aq", "Si_aq",       "O_aq",
                          "H_aq", "Ca_s",      "Si_s",  "O_s",         "H_s",
                          "Portlandite", "AmorfSi", "mCSHQ", "Ca_ss",  "Si_ss",
                          "H2O_ss", "V_s", "Gel_water"};
        s.input_log.assign(3, true);
        s.output_log.assign(18, true);
        s.output_log[0] = false; // pH
        break;
    case CaseStudy::MechMix:
        s.input_names = {"BaSO4_umol", "NaCl_mmol", "RaBr2_umol"};
        s.input_ranges = {{50.0, 500.0}, {50.0, 500.0}, {50.0, 500.0}};
        s.output_names = {"pH",    "ionic_strength", "aq_Ba",       "aq_Ra",
                          "aq_SO4", "solid_BaSO4",   "solid_RaSO4", "x_RaSO4"};
        s.input_log.assign(3, false);
        s.output_log = {false, false, true, true, true, true, true, false};
        break;
    case CaseStudy::BinarySS:
        s.input_names = {"BaSO4_umol", "RaBr2_umol", "T_C"};
        s.input_ranges = {{50.0, 500.0}, {50.0, 500.0}, {20.0, 90.0}};
        s.output_names = {"pH",          "ionic_strength", "aq_Ba",   "aq_Ra",
                          "aq_SO4",      "solid_BaSO4",    "solid_RaSO4", "x_BaSO4",
                          "x_RaSO4",     "gamma_RaSO4"};
        s.input_log.assign(3, false);
        s.output_log = {false, false, true, true, true, true, true, false, false, false};
        break;
    case CaseStudy::TernarySS:
        s.input_names = {"BaSO4_umol", "NaCl_mmol", "RaBr2_umol", "SrSO4_mmol"};
        s.input_ranges = {{50.0, 500.0}, {50.0, 500.0}, {50.0, 500.0}, {5.0, 50.0}};
        s.output_names = {"pH",          "ionic_strength", "aq_Ba",       "aq_Sr",
                          "aq_Ra",       "aq_SO4",         "solid_BaSO4", "solid_SrSO4",
                          "solid_RaSO4", "x_BaSO4",        "x_SrSO4",     "x_RaSO4",
                          "gamma_BaSO4", "gamma_SrSO4",    "gamma_RaSO4"};
        s.input_log.assign(4, false);
        s.output_log = {false, false, true, true, true, true, true, true,
                        true,  false, false, false, false, false, false};
        break;
    }
    return s;
}

thermo::SolidSolutionModel DatasetSpec::solid_model() const {
    thermo::SolidSolutionModel m;
    switch (case_study) {
    case CaseStudy::MechMix: m.variant = thermo::MixingVariant::MechanicalMixture; break;
    case CaseStudy::BinarySS: m.variant = thermo::MixingVariant::BinaryRegular; break;
    case CaseStudy::TernarySS: m.variant = thermo::MixingVariant::TernaryRegular; break;
    case CaseStudy::Cement:
        throw contract_error("the cement case has no internal oracle");
    }
    return m;
}

thermo::Recipe DatasetSpec::recipe_from_inputs(const std::vector<double>& in) const {
    if (in.size() != input_names.size())
        throw dimension_error("recipe_from_inputs: got " + std::to_string(in.size()) +
                              " inputs, spec has " + std::to_string(input_names.size()));
    thermo::Recipe r;
    switch (case_study) {
    case CaseStudy::MechMix:
        r.baso4_umol = in[0];
        r.nacl_mmol = in[1];
        r.rabr2_umol = in[2];
        r.t_celsius = 25.0;
        break;
    case CaseStudy::BinarySS:
        r.baso4_umol = in[0];
        r.nacl_mmol = 50.0;
        r.rabr2_umol = in[1];
        r.t_celsius = in[2];
        break;
    case CaseStudy::TernarySS:
        r.baso4_umol = in[0];
        r.nacl_mmol = in[1];
        r.rabr2_umol = in[2];
        r.srso4_mmol = in[3];
        r.t_celsius = 25.0;
        break;
    case CaseStudy::Cement:
        throw contract_error("the cement case has no recipe mapping");
    }
    return r;
}

std::vector<double> DatasetSpec::outputs_from_state(const thermo::EquilibriumState& st) const {
    using thermo::EndMember;
    using thermo::Ion;
    auto m = [&](Ion i) { return st.molality[static_cast<std::size_t>(static_cast<int>(i))]; };
    auto s = [&](EndMember e) { return st.solid_moles[static_cast<std::size_t>(static_cast<int>(e))]; };
    auto x = [&](EndMember e) { return st.mole_fraction[static_cast<std::size_t>(static_cast<int>(e))]; };
    auto gs = [&](EndMember e) { return st.gamma_solid[static_cast<std::size_t>(static_cast<int>(e))]; };

    switch (case_study) {
    case CaseStudy::MechMix:
        return {st.ph,          st.ionic_strength, m(Ion::Ba),        m(Ion::Ra),
                m(Ion::SO4),    s(EndMember::BaSO4), s(EndMember::RaSO4),
                x(EndMember::RaSO4)};
    case CaseStudy::BinarySS:
        return {st.ph,         st.ionic_strength, m(Ion::Ba),          m(Ion::Ra),
                m(Ion::SO4),   s(EndMember::BaSO4), s(EndMember::RaSO4), x(EndMember::BaSO4),
                x(EndMember::RaSO4), gs(EndMember::RaSO4)};
    case CaseStudy::TernarySS:
        return {st.ph,
                st.ionic_strength,
                m(Ion::Ba),
                m(Ion::Sr),
                m(Ion::Ra),
                m(Ion::SO4),
                s(EndMember::BaSO4),
                s(EndMember::SrSO4),
                s(EndMember::RaSO4),
                x(EndMember::BaSO4),
                x(EndMember::SrSO4),
                x(EndMember::RaSO4),
                gs(EndMember::BaSO4),
                gs(EndMember::SrSO4),
                gs(EndMember::RaSO4)};
    case CaseStudy::Cement:
        throw contract_error("the cement case has no oracle outputs");
    }
    return {};
}

Dataset generate_rows(CaseStudy case_study, long rows, std::uint64_t seed,
                      const thermo::ThermoData& data, int jobs, long* excluded) {
    if (case_study == CaseStudy::Cement)
        throw contract_error("cement data is ingested from the published file, not generated");
    if (rows < 1) throw contract_error("generate_rows: need at least one row");

    DatasetSpec spec = DatasetSpec::for_case(case_study);
    const int in_dim = static_cast<int>(spec.input_names.size());
    const int out_dim = static_cast<int>(spec.output_names.size());
    const thermo::SolidSolutionModel model = spec.solid_model();

    // Draw the Sobol prefix up front: the sequence is independent of how
    // the labeling work is batched afterwards.
    SobolSampler sampler(in_dim, seed);
    std::vector<std::vector<double>> inputs(static_cast<std::size_t>(rows));
    for (long i = 0; i < rows; ++i)
        inputs[static_cast<std::size_t>(i)] = scale_to_ranges(sampler.next(), spec.input_ranges);

    std::vector<std::vector<double>> outputs(static_cast<std::size_t>(rows));
    std::vector<char> ok(static_cast<std::size_t>(rows), 0);

    auto work = [&](long i) {
        try {
            const thermo::Recipe r = spec.recipe_from_inputs(inputs[static_cast<std::size_t>(i)]);
            const thermo::EquilibriumState st = thermo::equilibrate(r, model, data);
            outputs[static_cast<std::size_t>(i)] = spec.outputs_from_state(st);
            ok[static_cast<std::size_t>(i)] = 1;
        } catch (const convergence_error&) {
            ok[static_cast<std::size_t>(i)] = 0;
        }
    };

    if (jobs <= 1) {
        for (long i = 0; i < rows; ++i) work(i);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (long i = next.fetch_add(1); i < rows; i = next.fetch_add(1)) work(i);
            });
        for (auto& t : pool) t.join();
    }

    long kept = 0;
    for (long i = 0; i < rows; ++i) kept += ok[static_cast<std::size_t>(i)];
    if (excluded) *excluded = rows - kept;
    if (kept == 0) throw convergence_error("generate_rows: every oracle call failed");

    Dataset ds;
    ds.spec = spec;
    ds.inputs = Matrix(static_cast<int>(kept), in_dim);
    ds.outputs = Matrix(static_cast<int>(kept), out_dim);
    int r = 0;
    for (long i = 0; i < rows; ++i) {
        if (!ok[static_cast<std::size_t>(i)]) continue;
        std::copy(inputs[static_cast<std::size_t>(i)].begin(), inputs[static_cast<std::size_t>(i)].end(),
                  ds.inputs.row(r));
        std::copy(outputs[static_cast<std::size_t>(i)].begin(),
                  outputs[static_cast<std::size_t>(i)].end(), ds.outputs.row(r));
        ++r;
    }
    return ds;
}

Dataset generate_dataset(CaseStudy case_study, int m_exponent, std::uint64_t seed,
                         const thermo::ThermoData& data, const std::string& out_dir, int jobs,
                         GenerationManifest* manifest_out) {
    if (m_exponent < 0 || m_exponent > 30)
        throw contract_error("dataset exponent m must be in [0,30]");
    const long rows = 1L << m_exponent;
    long excluded = 0;
    Dataset ds = generate_rows(case_study, rows, seed, data, jobs, &excluded);

    std::vector<std::string> header = ds.spec.input_names;
    header.insert(header.end(), ds.spec.output_names.begin(), ds.spec.output_names.end());
    Matrix all(ds.inputs.rows, ds.inputs.cols + ds.outputs.cols);
    for (int r = 0; r < all.rows; ++r) {
        std::copy(ds.inputs.row(r), ds.inputs.row(r) + ds.inputs.cols, all.row(r));
        std::copy(ds.outputs.row(r), ds.outputs.row(r) + ds.outputs.cols,
                  all.row(r) + ds.inputs.cols);
    }
    csv::write(out_dir + "/dataset.csv", header, all);

    GenerationManifest man;
    man.case_id = case_name(case_study);
    man.m_exponent = m_exponent;
    man.seed = seed;
    man.thermo_data_hash =
        data.source() == "builtin" ? "builtin" : file_fnv1a_hex(data.source());
    man.rows = ds.inputs.rows;
    man.excluded_rows = excluded;

    json j{{"case", man.case_id},
           {"m", man.m_exponent},
           {"seed", man.seed},
           {"thermo_data_hash", man.thermo_data_hash},
           {"rows", man.rows},
           {"excluded_rows", man.excluded_rows}};
    std::ofstream mf(out_dir + "/manifest.json", std::ios::binary);
    if (!mf) throw io_error("cannot write manifest in " + out_dir);
    mf << j.dump(1, '\t') << "\n";

    if (manifest_out) *manifest_out = man;
    return ds;
}

Dataset load_dataset_csv(const std::string& path, CaseStudy case_study) {
    DatasetSpec spec = DatasetSpec::for_case(case_study);
    csv::Table t = csv::read(path);
    std::vector<std::string> expect = spec.input_names;
    expect.insert(expect.end(), spec.output_names.begin(), spec.output_names.end());
    if (t.header != expect)
        throw io_error(path + ": header does not match the " + case_name(case_study) + " schema");
    if (t.values.rows == 0) throw io_error(path + ": dataset has no rows");

    Dataset ds;
    ds.spec = spec;
    const int in_dim = static_cast<int>(spec.input_names.size());
    const int out_dim = static_cast<int>(spec.output_names.size());
    ds.inputs = Matrix(t.values.rows, in_dim);
    ds.outputs = Matrix(t.values.rows, out_dim);
    for (int r = 0; r < t.values.rows; ++r) {
        std::copy(t.values.row(r), t.values.row(r) + in_dim, ds.inputs.row(r));
        std::copy(t.values.row(r) + in_dim, t.values.row(r) + in_dim + out_dim, ds.outputs.row(r));
    }
    return ds;
}

Dataset ingest_cement_csv(const std::string& path,
                          const std::map<std::string, std::string>& column_map) {
    DatasetSpec spec = DatasetSpec::for_case(CaseStudy::Cement);
    csv::Table t = csv::read(path);
    if (t.values.rows == 0) throw io_error(path + ": cement file has a header but no rows");

    // canonical name -> column index in the file
    std::vector<std::string> canonical(t.header.size());
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        auto it = column_map.find(t.header[i]);
        canonical[i] = it != column_map.end() ? it->second : t.header[i];
    }
    auto find_col = [&](const std::string& name) {
        for (std::size_t i = 0; i < canonical.size(); ++i)
            if (canonical[i] == name) return static_cast<int>(i);
        throw io_error(path + ": missing column '" + name + "' (after column-map renames)");
    };

    std::vector<int> in_idx, out_idx;
    for (const auto& n : spec.input_names) in_idx.push_back(find_col(n));
    for (const auto& n : spec.output_names) out_idx.push_back(find_col(n));

    Dataset ds;
    ds.spec = spec;
    ds.inputs = Matrix(t.values.rows, static_cast<int>(in_idx.size()));
    ds.outputs = Matrix(t.values.rows, static_cast<int>(out_idx.size()));
    for (int r = 0; r < t.values.rows; ++r) {
        for (std::size_t c = 0; c < in_idx.size(); ++c)
            ds.inputs.at(r, static_cast<int>(c)) = t.values.at(r, in_idx[c]);
        for (std::size_t c = 0; c < out_idx.size(); ++c)
            ds.outputs.at(r, static_cast<int>(c)) = t.values.at(r, out_idx[c]);
    }
    return ds;
}

SplitPlan SplitPlan::cement(std::uint64_t seed) {
    SplitPlan p;
    p.seed = seed;
    p.train = 40000;
    p.val = 5000;
    p.test = 5000;
    return p;
}

SplitPlan SplitPlan::radium(long dataset_rows, std::uint64_t seed) {
    SplitPlan p;
    p.seed = seed;
    p.train = dataset_rows / 2;
    p.test = 5000;
    p.val = dataset_rows - p.train - p.test;
    if (p.val < 1)
        throw contract_error("radium split needs more than " + std::to_string(p.train + p.test) +
                             " rows, dataset has " + std::to_string(dataset_rows));
    return p;
}

Split split(const Dataset& ds, const SplitPlan& plan) {
    const long n = ds.inputs.rows;
    if (plan.train < 0 || plan.val < 0 || plan.test < 0 || plan.train + plan.val + plan.test != n)
        throw contract_error("split sizes " + std::to_string(plan.train) + "/" +
                             std::to_string(plan.val) + "/" + std::to_string(plan.test) +
                             " do not partition " + std::to_string(n) + " rows");

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(plan.seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    auto take = [&](long begin, long count) {
        Dataset out;
        out.spec = ds.spec;
        out.inputs = Matrix(static_cast<int>(count), ds.inputs.cols);
        out.outputs = Matrix(static_cast<int>(count), ds.outputs.cols);
        for (long r = 0; r < count; ++r) {
            const int src = perm[static_cast<std::size_t>(begin + r)];
            std::copy(ds.inputs.row(src), ds.inputs.row(src) + ds.inputs.cols,
                      out.inputs.row(static_cast<int>(r)));
            std::copy(ds.outputs.row(src), ds.outputs.row(src) + ds.outputs.cols,
                      out.outputs.row(static_cast<int>(r)));
        }
        return out;
    };

    Split s;
    s.train = take(0, plan.train);
    s.val = take(plan.train, plan.val);
    s.test = take(plan.train + plan.val, plan.test);
    return s;
}

Preprocess fit_preprocessor(const Dataset& train, double eps) {
    if (train.inputs.rows == 0) throw contract_error("fit_preprocessor: empty training split");

    auto fit_cols = [&](const Matrix& m, const std::vector<bool>& log_flags) {
        std::vector<ColumnTransform> cols(static_cast<std::size_t>(m.cols));
        for (int c = 0; c < m.cols; ++c) {
            ColumnTransform& t = cols[static_cast<std::size_t>(c)];
            t.log_scale = log_flags[static_cast<std::size_t>(c)];
            t.eps = eps;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (int r = 0; r < m.rows; ++r) {
                double v = m.at(r, c);
                if (t.log_scale) {
                    if (v + eps <= 0.0)
                        throw domain_error("fit_preprocessor: negative value " + std::to_string(v) +
                                           " in log column " + std::to_string(c));
                    v = std::log(v + eps);
                }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            t.min = lo;
            t.max = hi;
        }
        return cols;
    };

    Preprocess p;
    p.input_cols = fit_cols(train.inputs, train.spec.input_log);
    p.output_cols = fit_cols(train.outputs, train.spec.output_log);
    p.input_names = train.spec.input_names;
    p.output_names = train.spec.output_names;
    return p;
}

} // namespace kaneq::data
