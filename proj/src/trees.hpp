#pragma once

#include <memory>

#include "trafficdiff/classifiers.hpp"

namespace trafficdiff::detail {

std::unique_ptr<Classifier> make_random_forest(const ClassifierConfig& cfg);
std::unique_ptr<Classifier> make_gradient_boosted_trees(const ClassifierConfig& cfg);

}  // namespace trafficdiff::detail
