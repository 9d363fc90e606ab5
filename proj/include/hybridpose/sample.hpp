#pragma once

#include <vector>

#include "hybridpose/angles.hpp"

namespace hybridpose {

/// One feature vector with its ground-truth pose.
struct Sample {
    std::vector<double> features;
    PoseAngles truth;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

} // namespace hybridpose
