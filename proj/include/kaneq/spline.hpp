#ifndef KANEQ_SPLINE_HPP
#define KANEQ_SPLINE_HPP

#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::spline {

// Uniform extended B-spline basis of degree d on [lo, hi] split into g intervals.
//
// The knot vector carries d extrapolated uniform knots on each side
// (g + 2d + 1 knots total), giving g + d basis functions that form a
// partition of unity everywhere inside [lo, hi].
//
// Terminology: "degree" here is the d of B_{j,d}; an "n-th order"
// activation in the KAN literature maps onto degree d = n.
//
// Inputs outside [lo, hi] are clamped to the boundary before evaluation.
// Min-max scaling bounds training data to [0, 1], but unseen inputs may
// exceed the fitted range slightly; the default domain [-0.1, 1.1] leaves
// margin around the scaled range.
class SplineGrid {
public:
    SplineGrid(int degree, int num_intervals, double lo = -0.1, double hi = 1.1);

    int degree() const { return degree_; }
    int num_intervals() const { return num_intervals_; }
    int num_basis() const { return num_intervals_ + degree_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const std::vector<double>& knots() const { return knots_; }

    // Index k of the knot interval [t_k, t_{k+1}) containing the clamped x,
    // with k in [d, d+g-1]. x == hi maps to the last interval.
    int find_span(double x) const;

    // The d+1 non-vanishing values B_{first+r,d}(x), r = 0..d, via the
    // Cox-de Boor triangular recursion. `basis` must hold degree()+1 slots.
    void basis_local(double x, int& first, double* basis) const;

    // Values and derivatives of the d+1 non-vanishing bases at x.
    void basis_and_derivative_local(double x, int& first, double* basis, double* deriv) const;

    // Full-length (g+d) vectors; zero outside the local support window.
    std::vector<double> basis_eval(double x) const;
    std::vector<double> basis_derivative(double x) const;

    // Row-major len(xs) x (g+d) matrix of basis values.
    std::vector<double> basis_eval_batch(const std::vector<double>& xs) const;

    // Monomial coefficients of the d+1 cardinal polynomials shared by every
    // span of the uniform grid: cardinal_piece()[r*(d+1)+k] is the t^k
    // coefficient of B_{first+r,d} in the local coordinate t = (x-t_span)/h.
    // Built exactly from the Cox-de Boor recursion on integer knots.
    const std::vector<double>& cardinal_piece() const { return cardinal_piece_; }

private:
    double clamp_checked(double x) const;

    int degree_;
    int num_intervals_;
    double lo_, hi_;
    double step_;
    std::vector<double> knots_;
    // uniform knots make every level-j Cox-de Boor denominator equal j*step
    std::vector<double> inv_level_span_;
    std::vector<double> cardinal_piece_;
};

} // namespace kaneq::spline

#endif
