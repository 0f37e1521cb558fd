#pragma once

// Evaluation-only access to the hidden gold labels of the unlabeled pool.
// Diagnostics use this; the training path must not include this header.

#include <vector>

#include "cgmatch/datasets.hpp"

namespace cgmatch::evaluation {

// Indexed like Dataset::unlabeled().ids.
const std::vector<int>& unlabeled_gold(const datasets::Dataset& dataset);

}  // namespace cgmatch::evaluation
