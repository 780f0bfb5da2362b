#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "drate/json_util.hpp"
#include "drate/rng.hpp"

namespace drate {

enum class ForestTask { Regression, Probability };

std::string to_string(ForestTask task);
ForestTask parse_forest_task(const std::string& s);

struct ForestParams {
  int num_trees = 500;
  int mtry = 0;  // 0 selects ceil(sqrt(p)) at fit time
  int min_leaf = 5;
  double subsample_fraction = 0.5;  // drawn without replacement
  double honesty_fraction = 0.5;    // share of the subsample that picks splits
  int max_depth = -1;               // negative: unlimited
  std::uint64_t seed = 42;

  /// mtry resolved against the feature count.
  int effective_mtry(int p) const;
  /// Throws InvalidParameter on out-of-range fields.
  void validate(int p) const;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

Json params_to_json(const ForestParams& params);
ForestParams params_from_json(const Json& j, const ForestParams& defaults = {});

/// One node of a flattened tree. Leaves have feature < 0. Every node keeps
/// the mean and count of the estimation-half responses routed through it.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int count = 0;
  bool inherited = false;  // leaf without estimation points, value copied from an ancestor

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root; children follow parents

  int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return nodes[static_cast<std::size_t>(leaf_index(x))].value;
  }
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
  std::vector<Tree> trees;
  ForestParams params;
  ForestTask task = ForestTask::Regression;
  int num_features = 0;
  std::size_t empty_leaf_count = 0;

  friend bool operator==(const Forest&, const Forest&) = default;
};

/// Per-tree row provenance, filled when a trace is requested from fit_forest.
struct TreeTrace {
  std::vector<int> structure_rows;
  std::vector<int> estimation_rows;
  std::vector<std::vector<int>> leaf_rows;  // indexed by node; rows averaged into that leaf
};

struct FitOptions {
  int threads = 1;
  std::vector<TreeTrace>* trace = nullptr;
};

/// Honest subsampled forest. Throws InvalidInput on empty data, length
/// mismatch, n < 2*min_leaf or non-binary responses for Probability.
Forest fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params,
                  ForestTask task, const FitOptions& options = {});

/// Mean of per-tree leaf values; x[f] <= threshold routes left.
Eigen::VectorXd predict(const Forest& forest, const Eigen::MatrixXd& x);

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // variance reduction: Var(parent) - weighted child variances
};

/// Best CART variance-reduction split over the given rows and features.
///
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// values with at least min_leaf rows on each side. Ties (scores within
/// 1e-12 of the parent variance) go to the lowest feature index, then the
/// lowest threshold. Returns nullopt when no admissible split reduces the
/// variance.
std::optional<Split> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                std::span<const int> rows, std::span<const int> features,
                                int min_leaf = 1);

/// Default tuning grid: mtry in {ceil(sqrt p), ceil(p/3), p} (deduplicated)
/// crossed with min_leaf in {5, 20, 50}; other fields copied from base.
std::vector<ForestParams> default_grid(int p, const ForestParams& base = {});

// Min: the grid point with the lowest CV loss. OneStandardError: the first
// grid point (in grid order) whose loss is within one standard error of the
// lowest.
enum class CvRule { Min, OneStandardError };

struct CvResult {
  ForestParams best;
  std::size_t best_index = 0;
  std::vector<double> losses;      // per grid point; empty for a singleton grid
  std::vector<double> std_errors;  // of each loss, over held-out rows
};

/// k-fold cross-validated selection (squared error; Brier score for
/// Probability). Ties resolve to the earliest grid entry.
CvResult cv_tune_detailed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                          const std::vector<ForestParams>& grid, int k, Rng& rng, CvRule rule = CvRule::Min);
ForestParams cv_tune(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                     const std::vector<ForestParams>& grid, int k, Rng& rng, CvRule rule = CvRule::Min);

Json forest_to_json(const Forest& forest);
Forest forest_from_json(const Json& j);

}  // namespace drate
