#include "fem/bench/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fem/nd/rng.hpp"

namespace fem::bench {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

TabularSplit load_tabular(const std::string& path, const std::string& label_column, uint64_t seed,
                          double test_fraction) {
  std::ifstream in(path);
  if (!in) throw nd::NdError("load_tabular: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw nd::NdError("load_tabular: empty file");
  const std::vector<std::string> header = split_csv_line(line);
  int label_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_col = static_cast<int>(i);
  }
  if (label_col < 0) {
    throw nd::NdError("load_tabular: missing label column '" + label_column + "'");
  }

  TabularSplit out;
  for (size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) != label_col) out.feature_names.push_back(header[i]);
  }
  const int dim = static_cast<int>(out.feature_names.size());
  if (dim == 0) throw nd::NdError("load_tabular: no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw nd::NdError("load_tabular: row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    std::vector<double> feats;
    feats.reserve(dim);
    for (size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int>(i) == label_col) continue;
      try {
        size_t used = 0;
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing junk");
        feats.push_back(v);
      } catch (const std::exception&) {
        throw nd::NdError("load_tabular: non-numeric feature '" + cells[i] + "' in column " +
                          header[i] + ", row " + std::to_string(line_no));
      }
    }
    rows.push_back(std::move(feats));
    row_labels.push_back(cells[label_col]);
  }
  if (rows.empty()) throw nd::NdError("load_tabular: no data rows");

  // class names sorted for determinism
  std::map<std::string, int> name_to_class;
  for (const std::string& l : row_labels) name_to_class.emplace(l, 0);
  int next = 0;
  for (auto& [name, id] : name_to_class) {
    id = next++;
    out.class_names.push_back(name);
  }
  const int num_classes = next;

  std::vector<std::vector<int>> per_class(num_classes);
  for (size_t r = 0; r < rows.size(); ++r) {
    per_class[name_to_class[row_labels[r]]].push_back(static_cast<int>(r));
  }
  for (int k = 0; k < num_classes; ++k) {
    if (per_class[k].size() < 2) {
      throw nd::NdError("load_tabular: class '" + out.class_names[k] + "' has fewer than 2 rows");
    }
  }

  // stratified split, per-class shuffle from a derived stream
  std::vector<char> is_test(rows.size(), 0);
  for (int k = 0; k < num_classes; ++k) {
    nd::Rng rng(nd::Rng::mix(seed, static_cast<uint64_t>(k)));
    std::vector<int> idx = per_class[k];
    rng.shuffle(idx);
    const int n_test = static_cast<int>(std::llround(test_fraction * idx.size()));
    for (int i = 0; i < n_test; ++i) is_test[idx[i]] = 1;
  }

  // standardization statistics from the train split
  out.feature_mean.assign(dim, 0.0);
  out.feature_std.assign(dim, 0.0);
  int n_train = 0;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (is_test[r]) continue;
    ++n_train;
    for (int c = 0; c < dim; ++c) out.feature_mean[c] += rows[r][c];
  }
  for (int c = 0; c < dim; ++c) out.feature_mean[c] /= n_train;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (is_test[r]) continue;
    for (int c = 0; c < dim; ++c) {
      const double d = rows[r][c] - out.feature_mean[c];
      out.feature_std[c] += d * d;
    }
  }
  for (int c = 0; c < dim; ++c) {
    out.feature_std[c] = std::sqrt(out.feature_std[c] / n_train);
    if (out.feature_std[c] < 1e-12) {
      out.feature_std[c] = 1.0;
      out.flags.push_back("constant feature standardized with unit scale: " +
                          out.feature_names[c]);
    }
  }

  const int n_test_total = static_cast<int>(rows.size()) - n_train;
  out.train.y = nd::Mat(n_train, dim);
  out.test.y = nd::Mat(n_test_total, dim);
  out.train.num_labels = out.test.num_labels = num_classes;
  int tr = 0, te = 0;
  for (size_t r = 0; r < rows.size(); ++r) {
    Dataset& dst = is_test[r] ? out.test : out.train;
    const int dr = is_test[r] ? te++ : tr++;
    for (int c = 0; c < dim; ++c) {
      dst.y.at(dr, c) = (rows[r][c] - out.feature_mean[c]) / out.feature_std[c];
    }
    dst.labels.push_back(name_to_class[row_labels[r]]);
  }
  out.train.leaf_ids.assign(n_train, 0);
  out.test.leaf_ids.assign(n_test_total, 0);
  out.train.compute_extent();
  out.test.compute_extent();

  out.prior.assign(num_classes, 0.0);
  for (int k : out.train.labels) out.prior[k] += 1.0;
  for (double& p : out.prior) p /= n_train;
  return out;
}

}  // namespace fem::bench
