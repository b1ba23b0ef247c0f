#ifndef KANEQ_DATASET_HPP
#define KANEQ_DATASET_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kaneq/common.hpp"
#include "kaneq/thermo.hpp"
#include "kaneq/transform.hpp"

namespace kaneq::data {

enum class CaseStudy { Cement, MechMix, BinarySS, TernarySS };

std::string case_name(CaseStudy c);
CaseStudy case_from_name(const std::string& name);

// Input/output column schema of one case study. The radium cases carry the
// feed ranges used for Sobol sampling; the cement case describes the
// published benchmark file.
struct DatasetSpec {
    CaseStudy case_study = CaseStudy::MechMix;
    std::vector<std::string> input_names;
    std::vector<std::pair<double, double>> input_ranges; // empty for cement
    std::vector<std::string> output_names;
    // min-max only (no log) for these columns
    std::vector<bool> input_log;
    std::vector<bool> output_log;

    static DatasetSpec for_case(CaseStudy c);
    thermo::SolidSolutionModel solid_model() const;
    thermo::Recipe recipe_from_inputs(const std::vector<double>& inputs) const;
    std::vector<double> outputs_from_state(const thermo::EquilibriumState& st) const;
};

struct Dataset {
    DatasetSpec spec;
    Matrix inputs;
    Matrix outputs;
};

struct GenerationManifest {
    std::string case_id;
    int m_exponent = 0;
    std::uint64_t seed = 0;
    std::string thermo_data_hash;
    long rows = 0;
    long excluded_rows = 0;
};

// Sobol-samples 2^m recipes over the case ranges and labels them with the
// equilibrium oracle. Oracle failures are excluded and counted. Writes
// <out_dir>/dataset.csv and <out_dir>/manifest.json; both files are
// byte-identical across reruns with the same arguments.
Dataset generate_dataset(CaseStudy case_study, int m_exponent, std::uint64_t seed,
                         const thermo::ThermoData& data, const std::string& out_dir, int jobs = 1,
                         GenerationManifest* manifest_out = nullptr);

// In-memory generation used by tests and the benchmark path.
Dataset generate_rows(CaseStudy case_study, long rows, std::uint64_t seed,
                      const thermo::ThermoData& data, int jobs = 1, long* excluded = nullptr);

// Loads a dataset CSV written by generate_dataset (inputs then outputs in
// spec order).
Dataset load_dataset_csv(const std::string& path, CaseStudy case_study);

// Published cement benchmark: 3 input columns and the 18 outputs of the
// hydration study. column_map renames file headers onto the canonical
// names when the published file differs; identity by default.
Dataset ingest_cement_csv(const std::string& path,
                          const std::map<std::string, std::string>& column_map = {});

struct SplitPlan {
    std::uint64_t seed = 0;
    long train = 0;
    long val = 0;
    long test = 0;

    // cement protocol: 40000 / 5000 / 5000
    static SplitPlan cement(std::uint64_t seed);
    // radium protocol: half train, half val, 5000 of the val half moved to test
    static SplitPlan radium(long dataset_rows, std::uint64_t seed);
};

struct Split {
    Dataset train, val, test;
};

Split split(const Dataset& ds, const SplitPlan& plan);

// Fits per-column transforms on the training split only: log columns get
// log(x + eps) first, then min-max over the fitted range.
Preprocess fit_preprocessor(const Dataset& train, double eps = 1e-12);

} // namespace kaneq::data

#endif
