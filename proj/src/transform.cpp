#include "kaneq/transform.hpp"

#include <cmath>

namespace kaneq::data {

double transform_scalar(const ColumnTransform& t, double x) {
    double v = x;
    if (t.log_scale) {
        if (x + t.eps <= 0.0)
            throw domain_error("log transform of negative value " + std::to_string(x));
        v = std::log(x + t.eps);
    }
    const double span = t.max - t.min;
    if (span == 0.0) return 0.0;
    return (v - t.min) / span;
}

double invert_scalar(const ColumnTransform& t, double y) {
    const double span = t.max - t.min;
    double v = (span == 0.0) ? t.min : y * span + t.min;
    if (t.log_scale) {
        v = std::exp(v) - t.eps;
        if (std::abs(v) < t.eps) v = 0.0; // log-floor resolution
    }
    return v;
}

void Preprocess::apply(const std::vector<ColumnTransform>& cols, std::vector<double>& m) const {
    const std::size_t nc = cols.size();
    if (nc == 0 || m.size() % nc != 0)
        throw dimension_error("preprocess: buffer size " + std::to_string(m.size()) +
                              " not a multiple of " + std::to_string(nc) + " columns");
    const std::size_t rows = m.size() / nc;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < nc; ++c) m[r * nc + c] = transform_scalar(cols[c], m[r * nc + c]);
}

void Preprocess::invert(const std::vector<ColumnTransform>& cols, std::vector<double>& m) const {
    const std::size_t nc = cols.size();
    if (nc == 0 || m.size() % nc != 0)
        throw dimension_error("preprocess: buffer size " + std::to_string(m.size()) +
                              " not a multiple of " + std::to_string(nc) + " columns");
    const std::size_t rows = m.size() / nc;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < nc; ++c) m[r * nc + c] = invert_scalar(cols[c], m[r * nc + c]);
}

} // namespace kaneq::data
