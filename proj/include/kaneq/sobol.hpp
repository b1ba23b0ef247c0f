#ifndef KANEQ_SOBOL_HPP
#define KANEQ_SOBOL_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::data {

// Gray-code Sobol sequence over [0,1)^dim at 32-bit resolution, built from
// the Joe-Kuo D6 direction numbers (dimensions up to 21). Index 0 (the
// all-zero point) is skipped: the first emitted point is 0.5 in every
// dimension. A nonzero scramble seed applies a per-dimension digital XOR
// shift; the default sequence is unscrambled.
class SobolSampler {
public:
    static constexpr int kMaxDim = 21;

    explicit SobolSampler(int dim, std::uint64_t scramble_seed = 0);

    int dim() const { return dim_; }
    std::uint64_t index() const { return index_; }

    std::vector<double> next();

    // Jump directly to the state after emitting `index` points.
    void skip_to(std::uint64_t index);

private:
    int dim_;
    std::uint64_t index_ = 0; // points emitted so far
    std::vector<std::uint32_t> state_;
    std::vector<std::uint32_t> shift_;
    std::vector<std::array<std::uint32_t, 32>> dirs_;
};

// Affine map of a unit point onto per-dimension [lo, hi] ranges.
std::vector<double> scale_to_ranges(const std::vector<double>& unit,
                                    const std::vector<std::pair<double, double>>& ranges);

} // namespace kaneq::data

#endif
