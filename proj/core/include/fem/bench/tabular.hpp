#pragma once

#include <string>
#include <vector>

#include "fem/bench/dataset.hpp"

namespace fem::bench {

struct TabularSplit {
  Dataset train;
  Dataset test;
  std::vector<double> prior;  // empirical class frequencies on the train split
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::vector<double> feature_mean;  // train-split statistics used to standardize
  std::vector<double> feature_std;
  std::vector<std::string> flags;
};

/// Loads a delimited-text table (header row, comma separated), standardizes
/// features with train-split statistics, and splits stratified per class with
/// a fixed seed. Errors: missing label column, non-numeric feature, classes
/// with fewer than two rows.
TabularSplit load_tabular(const std::string& path, const std::string& label_column,
                          uint64_t seed = 42, double test_fraction = 0.2);

}  // namespace fem::bench
