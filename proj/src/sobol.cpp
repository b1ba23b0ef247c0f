#include "kaneq/sobol.hpp"

#include <array>
#include <bit>
#include <random>

namespace kaneq::data {

namespace {

// Joe-Kuo D6 primitive polynomials and initial direction numbers for
// dimensions 2..21 (dimension 1 is the van der Corput sequence).
struct JoeKuoRow {
    std::uint32_t s;
    std::uint32_t a;
    std::uint32_t m[7];
};

constexpr JoeKuoRow kJoeKuo[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
};

} // namespace

SobolSampler::SobolSampler(int dim, std::uint64_t scramble_seed) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim)
        throw contract_error("sobol dimension " + std::to_string(dim) +
                             " outside supported range [1," + std::to_string(kMaxDim) + "]");
    state_.assign(static_cast<std::size_t>(dim), 0);
    shift_.assign(static_cast<std::size_t>(dim), 0);
    dirs_.resize(static_cast<std::size_t>(dim));

    constexpr int bits = 32;
    for (int i = 0; i < bits; ++i) dirs_[0][static_cast<std::size_t>(i)] = 1u << (31 - i);
    for (int d = 1; d < dim; ++d) {
        const JoeKuoRow& row = kJoeKuo[static_cast<std::size_t>(d - 1)];
        auto& v = dirs_[static_cast<std::size_t>(d)];
        const int s = static_cast<int>(row.s);
        for (int i = 0; i < s; ++i) v[static_cast<std::size_t>(i)] = row.m[i] << (31 - i);
        for (int i = s; i < bits; ++i) {
            std::uint32_t vi = v[static_cast<std::size_t>(i - s)] ^ (v[static_cast<std::size_t>(i - s)] >> s);
            for (int k = 1; k < s; ++k)
                vi ^= (((row.a >> (s - 1 - k)) & 1u) * v[static_cast<std::size_t>(i - k)]);
            v[static_cast<std::size_t>(i)] = vi;
        }
    }

    if (scramble_seed != 0) {
        std::mt19937_64 rng(scramble_seed);
        for (auto& s : shift_) s = static_cast<std::uint32_t>(rng());
    }
}

std::vector<double> SobolSampler::next() {
    // Antonov-Saleev: flip the direction of the rightmost zero bit of the
    // current index.
    const int c = std::countr_one(index_);
    if (c >= 32) throw contract_error("sobol sequence exhausted (2^32 points)");
    for (int d = 0; d < dim_; ++d)
        state_[static_cast<std::size_t>(d)] ^= dirs_[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
    ++index_;

    std::vector<double> out(static_cast<std::size_t>(dim_));
    constexpr double norm = 1.0 / 4294967296.0; // 2^-32
    for (int d = 0; d < dim_; ++d)
        out[static_cast<std::size_t>(d)] =
            (state_[static_cast<std::size_t>(d)] ^ shift_[static_cast<std::size_t>(d)]) * norm;
    return out;
}

void SobolSampler::skip_to(std::uint64_t index) {
    if (index < index_) {
        std::fill(state_.begin(), state_.end(), 0);
        index_ = 0;
    }
    while (index_ < index) next();
}

std::vector<double> scale_to_ranges(const std::vector<double>& unit,
                                    const std::vector<std::pair<double, double>>& ranges) {
    if (unit.size() != ranges.size())
        throw dimension_error("scale_to_ranges: " + std::to_string(unit.size()) + " coords for " +
                              std::to_string(ranges.size()) + " ranges");
    std::vector<double> out(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i)
        out[i] = ranges[i].first + unit[i] * (ranges[i].second - ranges[i].first);
    return out;
}

} // namespace kaneq::data
