#pragma once

#include <cstdint>
#include <vector>

#include "svic/dataset.hpp"

namespace svic {

// Logistic generator: standard normal features, outcome drawn with
// P(Y=1) = sigmoid(intercept + x . coeffs). Used by tests and benchmarks.
Dataset make_logistic_dataset(size_t n, const std::vector<double>& coeffs,
                              std::uint64_t seed, double intercept = 0.0);

// Two well-separated Gaussian blobs in 2-D, labels 0/1.
Dataset make_blobs_dataset(size_t n, std::uint64_t seed, double center = 2.0,
                           double sigma = 0.5);

// Mixed-type table (4 continuous columns + 1 categorical with 3 levels)
// for CSV round-trip tests.
Dataset make_mixed_dataset(size_t n, std::uint64_t seed);

}  // namespace svic
