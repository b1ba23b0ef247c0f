#ifndef KANEQ_METRICS_HPP
#define KANEQ_METRICS_HPP

#include <string>
#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::metrics {

// Relative error of one prediction with the zero conventions:
//   (y - yhat)/y   when y is nonzero,
//   1              when y = 0 and yhat != 0,
//   0              when y = 0 and yhat = 0.
// Values with magnitude below 1e-300 count as zero (underflow guard).
// The first branch keys on the denominator y alone; conditioning it on
// yhat too would leave y != 0, yhat = 0 undefined.
double relative_element_error(double y, double yhat);

// Per-output-column metrics over row-major (n x q) matrices.
std::vector<double> rmse(const Matrix& y, const Matrix& yhat);
std::vector<double> rrmse(const Matrix& y, const Matrix& yhat);

struct ErrorDistribution {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    long exceed_count = 0; // #{ |e_i| > threshold }
    long n = 0;
};

// |e_i| distribution per output column; quantiles by linear interpolation.
std::vector<ErrorDistribution> relative_error_distribution(const Matrix& y, const Matrix& yhat,
                                                           double threshold);

struct OutputStats {
    std::string name;
    double rmse = 0.0;
    double rrmse = 0.0;
    ErrorDistribution dist;
};

struct ErrorReport {
    std::vector<OutputStats> outputs;
    long rows = 0;
    double threshold = 0.10;
    long total_exceed = 0;
    long total_elements = 0;
};

// Complete per-output report; statistics are expected to be computed on
// inverse-transformed (physical-unit) values.
ErrorReport evaluate(const Matrix& y, const Matrix& yhat, const std::vector<std::string>& names,
                     double threshold = 0.10);

// 100*(a-b)/a per output plus the mean across outputs.
std::vector<double> improvement_percent(const std::vector<double>& a, const std::vector<double>& b);
double mean_improvement_percent(const std::vector<double>& a, const std::vector<double>& b);

void write_report_csv(const ErrorReport& report, const std::string& path);
void write_report_json(const ErrorReport& report, const std::string& path);

} // namespace kaneq::metrics

#endif
