#ifndef KANEQ_TRANSFORM_HPP
#define KANEQ_TRANSFORM_HPP

#include <string>
#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::data {

// Per-column preprocessing: optional log transform, then min-max scaling.
// min/max are the statistics of the (possibly log-transformed) training
// column. Constant columns map to 0. eps keeps exact zeros finite under
// the log; inverse values with magnitude below eps collapse back to 0,
// which keeps round-trips within +-1e-12.
struct ColumnTransform {
    bool log_scale = false;
    double eps = 1e-12;
    double min = 0.0;
    double max = 1.0;
};

double transform_scalar(const ColumnTransform& t, double x);
double invert_scalar(const ColumnTransform& t, double y);

// Fitted preprocessing for one dataset schema (inputs and outputs).
struct Preprocess {
    std::vector<ColumnTransform> input_cols;
    std::vector<ColumnTransform> output_cols;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;

    // Row-major (rows x cols) buffers, transformed in place.
    void apply(const std::vector<ColumnTransform>& cols, std::vector<double>& m) const;
    void invert(const std::vector<ColumnTransform>& cols, std::vector<double>& m) const;

    void apply_inputs(std::vector<double>& m) const { apply(input_cols, m); }
    void apply_outputs(std::vector<double>& m) const { apply(output_cols, m); }
    void invert_outputs(std::vector<double>& m) const { invert(output_cols, m); }
};

} // namespace kaneq::data

#endif
