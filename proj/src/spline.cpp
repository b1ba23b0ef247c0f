#include "kaneq/spline.hpp"

#include <algorithm>
#include <cmath>

namespace kaneq::spline {

SplineGrid::SplineGrid(int degree, int num_intervals, double lo, double hi)
    : degree_(degree), num_intervals_(num_intervals), lo_(lo), hi_(hi) {
    if (degree < 0 || degree > 60) throw contract_error("spline degree out of supported range [0,60]");
    if (num_intervals < 1) throw contract_error("spline grid needs >= 1 interval");
    if (!(lo < hi)) throw contract_error("spline domain requires lo < hi");
    step_ = (hi_ - lo_) / num_intervals_;
    knots_.resize(static_cast<std::size_t>(num_intervals_ + 2 * degree_ + 1));
    for (int i = 0; i < static_cast<int>(knots_.size()); ++i)
        knots_[static_cast<std::size_t>(i)] = lo_ + (i - degree_) * step_;
    inv_level_span_.resize(static_cast<std::size_t>(degree_) + 2, 0.0);
    for (int j = 1; j <= degree_ + 1; ++j)
        inv_level_span_[static_cast<std::size_t>(j)] = 1.0 / (j * step_);

    // Cardinal piece polynomials on integer knots, restricted to [0,1):
    // level k holds B_{j,k} for j = -k..0 as monomial coefficient vectors,
    // B_{j,k}(u) = ((u-j) B_{j,k-1}(u) + (j+k+1-u) B_{j+1,k-1}(u)) / k.
    {
        const int d = degree_;
        // level k, slot j+k holds B_{j,k}; starts with B_{0,0} = 1 on [0,1)
        std::vector<std::vector<double>> level = {{1.0}};
        for (int k = 1; k <= d; ++k) {
            std::vector<std::vector<double>> next(static_cast<std::size_t>(k) + 1);
            for (int j = -k; j <= 0; ++j) {
                std::vector<double> poly(static_cast<std::size_t>(k) + 1, 0.0);
                if (j >= -(k - 1)) {
                    const auto& pl = level[static_cast<std::size_t>(j + k - 1)];
                    for (std::size_t m = 0; m < pl.size(); ++m) {
                        poly[m + 1] += pl[m] / k;    // u * pl
                        poly[m] -= j * pl[m] / k;    // -j * pl
                    }
                }
                if (j + 1 <= 0) {
                    const auto& pr = level[static_cast<std::size_t>(j + k)];
                    for (std::size_t m = 0; m < pr.size(); ++m) {
                        poly[m + 1] -= pr[m] / k;            // -u * pr
                        poly[m] += (j + k + 1) * pr[m] / k;  // (j+k+1) * pr
                    }
                }
                next[static_cast<std::size_t>(j + k)] = std::move(poly);
            }
            level = std::move(next);
        }
        cardinal_piece_.assign(static_cast<std::size_t>(d + 1) * (d + 1), 0.0);
        for (int r = 0; r <= d; ++r) {
            const auto& poly = level[static_cast<std::size_t>(r)]; // j = r - d
            for (std::size_t m = 0; m < poly.size(); ++m)
                cardinal_piece_[static_cast<std::size_t>(r) * (d + 1) + m] = poly[m];
        }
    }
}

double SplineGrid::clamp_checked(double x) const {
    if (!std::isfinite(x)) throw domain_error("spline input is not finite");
    return std::clamp(x, lo_, hi_);
}

int SplineGrid::find_span(double x) const {
    x = clamp_checked(x);
    int k = degree_ + static_cast<int>(std::floor((x - lo_) / step_));
    return std::clamp(k, degree_, degree_ + num_intervals_ - 1);
}

void SplineGrid::basis_local(double x, int& first, double* basis) const {
    x = clamp_checked(x);
    const int d = degree_;
    const int k = find_span(x);
    first = k - d;

    basis[0] = 1.0;
    if (d == 0) return;

    // Cox-de Boor triangular scheme over the d+1 bases alive on span k.
    // Uniform knots: the level-j denominator right[r+1] + left[j-r] is
    // exactly j*step, so the divisions become one precomputed multiply.
    double left[64], right[64];
    for (int j = 1; j <= d; ++j) {
        left[j] = x - knots_[static_cast<std::size_t>(k + 1 - j)];
        right[j] = knots_[static_cast<std::size_t>(k + j)] - x;
        const double inv = inv_level_span_[static_cast<std::size_t>(j)];
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = basis[r] * inv;
            basis[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        basis[j] = saved;
    }
}

void SplineGrid::basis_and_derivative_local(double x, int& first, double* basis,
                                            double* deriv) const {
    // Outside the domain the clamped evaluation is constant, so the
    // derivative of the composite is zero there.
    const bool outside = std::isfinite(x) && (x < lo_ || x > hi_);
    x = clamp_checked(x);
    const int d = degree_;
    const int k = find_span(x);
    first = k - d;

    if (d == 0) {
        basis[0] = 1.0;
        deriv[0] = 0.0;
        return;
    }
    if (outside) {
        basis_local(x, first, basis);
        for (int i = 0; i <= d; ++i) deriv[i] = 0.0;
        return;
    }

    // Degree d-1 values on the same span: d entries for indices k-d+1 .. k.
    double lower[64];
    lower[0] = 1.0;
    double left[64], right[64];
    for (int j = 1; j <= d - 1; ++j) {
        left[j] = x - knots_[static_cast<std::size_t>(k + 1 - j)];
        right[j] = knots_[static_cast<std::size_t>(k + j)] - x;
        const double inv = inv_level_span_[static_cast<std::size_t>(j)];
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = lower[r] * inv;
            lower[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        lower[j] = saved;
    }

    // dB_{j,d} = d * ( B_{j,d-1}/(t_{j+d}-t_j) - B_{j+1,d-1}/(t_{j+d+1}-t_{j+1}) )
    // with every knot span equal to d*step.
    const double slope = d * inv_level_span_[static_cast<std::size_t>(d)];
    for (int i = 0; i <= d; ++i) {
        double val = 0.0;
        if (i >= 1) val += lower[i - 1];
        if (i <= d - 1) val -= lower[i];
        deriv[i] = slope * val;
    }

    // Finish the degree-d values from the degree d-1 row.
    for (int i = 0; i <= d; ++i) basis[i] = (i < d) ? lower[i] : 0.0;
    {
        const int j = d;
        left[j] = x - knots_[static_cast<std::size_t>(k + 1 - j)];
        right[j] = knots_[static_cast<std::size_t>(k + j)] - x;
        const double inv = inv_level_span_[static_cast<std::size_t>(j)];
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = basis[r] * inv;
            basis[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        basis[j] = saved;
    }
}

std::vector<double> SplineGrid::basis_eval(double x) const {
    std::vector<double> out(static_cast<std::size_t>(num_basis()), 0.0);
    double local[65];
    int first = 0;
    basis_local(x, first, local);
    for (int i = 0; i <= degree_; ++i) out[static_cast<std::size_t>(first + i)] = local[i];
    return out;
}

std::vector<double> SplineGrid::basis_derivative(double x) const {
    std::vector<double> out(static_cast<std::size_t>(num_basis()), 0.0);
    double b[65], dv[65];
    int first = 0;
    basis_and_derivative_local(x, first, b, dv);
    for (int i = 0; i <= degree_; ++i) out[static_cast<std::size_t>(first + i)] = dv[i];
    return out;
}

std::vector<double> SplineGrid::basis_eval_batch(const std::vector<double>& xs) const {
    const int nb = num_basis();
    std::vector<double> out(xs.size() * static_cast<std::size_t>(nb), 0.0);
    double local[65];
    for (std::size_t row = 0; row < xs.size(); ++row) {
        int first = 0;
        basis_local(xs[row], first, local);
        double* dst = out.data() + row * static_cast<std::size_t>(nb);
        for (int i = 0; i <= degree_; ++i) dst[first + i] = local[i];
    }
    return out;
}

} // namespace kaneq::spline
