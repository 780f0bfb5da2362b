#include "drate/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "drate/error.hpp"

namespace drate {
namespace {

struct Sample {
  double x;
  double y;
};

// Dense ranks of every training value, per feature. Lets large nodes find
// splits with a counting pass over the distinct values instead of a sort.
struct FeatureIndex {
  std::vector<std::vector<double>> values;  // sorted distinct values per feature
  std::vector<std::vector<int>> rank;       // rank[f][row]

  explicit FeatureIndex(const Eigen::MatrixXd& x) : values(static_cast<std::size_t>(x.cols())), rank(values.size()) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<int> order(n);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
      auto& vals = values[static_cast<std::size_t>(f)];
      auto& rk = rank[static_cast<std::size_t>(f)];
      rk.resize(n);
      for (int r : order) {
        if (vals.empty() || vals.back() != x(r, f)) vals.push_back(x(r, f));
        rk[static_cast<std::size_t>(r)] = static_cast<int>(vals.size()) - 1;
      }
    }
  }
};

struct Bin {
  int count = 0;
  double sum = 0.0;
};

// Core of best_split. Large nodes count rows into per-feature value bins,
// small ones sort. Scratch buffers are reused across calls.
std::optional<Split> find_split(const Eigen::VectorXd& y, const FeatureIndex& index,
                                       std::span<const int> rows, std::span<const int> features, int min_leaf,
                                       std::vector<Sample>& scratch, std::vector<Bin>& bins,
                                       const Eigen::MatrixXd& x) {
  const auto n = static_cast<int>(rows.size());
  min_leaf = std::max(min_leaf, 1);
  if (n < 2 || n < 2 * min_leaf) return std::nullopt;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  for (int r : rows) {
    const double v = y(r);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  if (lo == hi) return std::nullopt;
  const double mean = sum / n;
  double sse = 0.0, centered_total = 0.0;
  for (int r : rows) {
    const double c = y(r) - mean;
    sse += c * c;
    centered_total += c;
  }
  const double eps = 1e-12 * sse / n;
  const double log_n = std::log2(static_cast<double>(n));

  std::optional<Split> best;
  auto consider = [&](int f, int nl, double left, double a, double b) {
    const int nr = n - nl;
    const double right = centered_total - left;
    const double score = (left * left / nl + right * right / nr - centered_total * centered_total / n) / n;
    const double bar = best ? best->score + eps : eps;
    if (score > bar) {
      double threshold = 0.5 * (a + b);
      if (!(threshold < b)) threshold = a;
      best = Split{f, threshold, score};
    }
  };

  for (int f : features) {
    const auto& vals = index.values[static_cast<std::size_t>(f)];
    const auto& rk = index.rank[static_cast<std::size_t>(f)];
    const auto distinct = static_cast<double>(vals.size());
    if (distinct > 3.0 * n * log_n) {
      // Small node: sort its rows.
      scratch.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) scratch[i] = {x(rows[i], f), y(rows[i]) - mean};
      std::sort(scratch.begin(), scratch.end(), [](const Sample& a, const Sample& b) { return a.x < b.x; });
      if (scratch.front().x == scratch.back().x) continue;
      double left = 0.0;
      for (int i = 0; i < min_leaf - 1; ++i) left += scratch[i].y;
      for (int k = min_leaf - 1; k < n - min_leaf; ++k) {
        left += scratch[k].y;
        if (scratch[k].x == scratch[k + 1].x) continue;
        consider(f, k + 1, left, scratch[k].x, scratch[k + 1].x);
      }
      continue;
    }
    bins.resize(vals.size());
    int first = std::numeric_limits<int>::max(), last = -1;
    for (int r : rows) {
      const int k = rk[static_cast<std::size_t>(r)];
      ++bins[static_cast<std::size_t>(k)].count;
      bins[static_cast<std::size_t>(k)].sum += y(r) - mean;
      first = std::min(first, k);
      last = std::max(last, k);
    }
    int nl = 0;
    double left = 0.0;
    int prev = -1;
    for (int k = first; k <= last; ++k) {
      auto& bin = bins[static_cast<std::size_t>(k)];
      if (bin.count == 0) continue;
      if (prev >= 0 && nl >= min_leaf && n - nl >= min_leaf)
        consider(f, nl, left, vals[static_cast<std::size_t>(prev)], vals[static_cast<std::size_t>(k)]);
      nl += bin.count;
      left += bin.sum;
      prev = k;
      bin = Bin{};
    }
  }
  return best;
}

int route(const std::vector<TreeNode>& nodes, const double* row) {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const auto& node = nodes[static_cast<std::size_t>(idx)];
    idx = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return idx;
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FeatureIndex& index,
              const ForestParams& params, int mtry)
      : x_(x), y_(y), index_(index), params_(params), mtry_(mtry), feature_pool_(static_cast<std::size_t>(x.cols())) {
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
  }

  Tree build(std::uint64_t seed, TreeTrace* trace) {
    Rng rng(seed);
    const auto n = static_cast<int>(x_.rows());

    // Subsample without replacement via a partial Fisher-Yates shuffle.
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    const int sub = std::clamp(static_cast<int>(std::floor(params_.subsample_fraction * n)), 2, n);
    for (int i = 0; i < sub; ++i) std::swap(pool[i], pool[i + static_cast<int>(rng.index(n - i))]);
    const int n_struct =
        std::clamp(static_cast<int>(std::floor(params_.honesty_fraction * sub)), 1, sub - 1);
    std::vector<int> structure(pool.begin(), pool.begin() + n_struct);
    std::vector<int> estimation(pool.begin() + n_struct, pool.begin() + sub);

    Tree tree;
    std::vector<int> parent;
    grow(tree, parent, structure, rng);
    std::vector<std::vector<int>> leaf_rows;
    if (trace) leaf_rows.resize(tree.nodes.size());
    estimate(tree, parent, estimation, trace ? &leaf_rows : nullptr);

    if (trace) {
      trace->structure_rows = std::move(structure);
      trace->estimation_rows = std::move(estimation);
      trace->leaf_rows = std::move(leaf_rows);
    }
    return tree;
  }

  std::size_t empty_leaves() const noexcept { return empty_leaves_; }

 private:
  struct Pending {
    int node;
    int begin;
    int end;
    int depth;
  };

  void grow(Tree& tree, std::vector<int>& parent, std::vector<int> rows, Rng& rng) {
    tree.nodes.push_back(TreeNode{});
    parent.push_back(-1);
    std::vector<Pending> stack{{0, 0, static_cast<int>(rows.size()), 0}};
    std::vector<int> chosen(static_cast<std::size_t>(mtry_));
    const int p = static_cast<int>(feature_pool_.size());
    while (!stack.empty()) {
      const Pending item = stack.back();
      stack.pop_back();
      const int count = item.end - item.begin;
      if (count < 2 * params_.min_leaf || count < 2) continue;
      if (params_.max_depth >= 0 && item.depth >= params_.max_depth) continue;

      for (int i = 0; i < mtry_; ++i) {
        std::swap(feature_pool_[i], feature_pool_[i + static_cast<int>(rng.index(p - i))]);
        chosen[i] = feature_pool_[i];
      }
      std::sort(chosen.begin(), chosen.end());
      const std::span<const int> node_rows(rows.data() + item.begin, static_cast<std::size_t>(count));
      const auto split = find_split(y_, index_, node_rows, chosen, params_.min_leaf, scratch_, bins_, x_);
      if (!split) continue;

      const auto mid = std::partition(rows.begin() + item.begin, rows.begin() + item.end,
                                      [&](int r) { return x_(r, split->feature) <= split->threshold; });
      const int boundary = static_cast<int>(mid - rows.begin());
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back(TreeNode{});
      tree.nodes.push_back(TreeNode{});
      parent.push_back(item.node);
      parent.push_back(item.node);
      auto& node = tree.nodes[static_cast<std::size_t>(item.node)];
      node.feature = split->feature;
      node.threshold = split->threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, boundary, item.end, item.depth + 1});
      stack.push_back({left, item.begin, boundary, item.depth + 1});
    }
  }

  void estimate(Tree& tree, const std::vector<int>& parent, const std::vector<int>& rows,
                std::vector<std::vector<int>>* leaf_rows) {
    std::vector<double> sums(tree.nodes.size(), 0.0);
    Eigen::RowVectorXd buf(x_.cols());
    for (int r : rows) {
      buf = x_.row(r);
      int idx = 0;
      while (true) {
        auto& node = tree.nodes[static_cast<std::size_t>(idx)];
        sums[static_cast<std::size_t>(idx)] += y_(r);
        ++node.count;
        if (node.is_leaf()) break;
        idx = buf(node.feature) <= node.threshold ? node.left : node.right;
      }
      if (leaf_rows) (*leaf_rows)[static_cast<std::size_t>(idx)].push_back(r);
    }
    // Parents precede children, so one forward pass resolves inheritance.
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      auto& node = tree.nodes[i];
      if (node.count > 0) {
        node.value = sums[i] / node.count;
      } else {
        node.value = tree.nodes[static_cast<std::size_t>(parent[i])].value;
        if (node.is_leaf()) {
          node.inherited = true;
          ++empty_leaves_;
        }
      }
    }
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const FeatureIndex& index_;
  const ForestParams& params_;
  int mtry_;
  std::vector<int> feature_pool_;
  std::vector<Sample> scratch_;
  std::vector<Bin> bins_;
  std::size_t empty_leaves_ = 0;
};

void check_binary(const Eigen::VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0)
      throw InvalidInput("probability forest requires 0/1 responses");
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace

std::string to_string(ForestTask task) {
  return task == ForestTask::Regression ? "regression" : "probability";
}

ForestTask parse_forest_task(const std::string& s) {
  if (s == "regression") return ForestTask::Regression;
  if (s == "probability") return ForestTask::Probability;
  throw InvalidParameter("unknown forest task '" + s + "' (valid: regression, probability)");
}

int ForestParams::effective_mtry(int p) const {
  if (mtry > 0) return mtry;
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))));
}

void ForestParams::validate(int p) const {
  if (num_trees < 1) throw InvalidParameter("num_trees must be >= 1");
  if (mtry < 0 || effective_mtry(p) > p)
    throw InvalidParameter("mtry must lie in [1, p] (p = " + std::to_string(p) + "), got " +
                           std::to_string(mtry));
  if (min_leaf < 1) throw InvalidParameter("min_leaf must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
    throw InvalidParameter("subsample_fraction must lie in (0, 1]");
  if (!(honesty_fraction > 0.0 && honesty_fraction < 1.0))
    throw InvalidParameter("honesty_fraction must lie in (0, 1)");
}

int Tree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const Eigen::RowVectorXd row = x;
  return route(nodes, row.data());
}

Forest fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params,
                  ForestTask task, const FitOptions& options) {
  if (x.rows() == 0 || x.cols() == 0) throw InvalidInput("fit_forest: empty data");
  if (y.size() != x.rows()) throw InvalidInput("fit_forest: response length differs from row count");
  const int p = static_cast<int>(x.cols());
  params.validate(p);
  if (x.rows() < 2 * params.min_leaf)
    throw InvalidInput("fit_forest: need at least 2*min_leaf = " + std::to_string(2 * params.min_leaf) +
                       " rows, got " + std::to_string(x.rows()));
  if (x.rows() < 2) throw InvalidInput("fit_forest: need at least 2 rows");
  if (task == ForestTask::Probability) check_binary(y);

  Forest forest;
  forest.params = params;
  forest.task = task;
  forest.num_features = p;
  const auto num_trees = static_cast<std::size_t>(params.num_trees);
  forest.trees.resize(num_trees);
  if (options.trace) options.trace->assign(num_trees, TreeTrace{});
  std::vector<std::size_t> empties(num_trees, 0);

  const int mtry = params.effective_mtry(p);
  const FeatureIndex index(x);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    TreeBuilder builder(x, y, index, params, mtry);
    for (std::size_t t = next++; t < num_trees; t = next++) {
      const std::size_t before = builder.empty_leaves();
      forest.trees[t] = builder.build(derive_seed(params.seed, t),
                                      options.trace ? &(*options.trace)[t] : nullptr);
      empties[t] = builder.empty_leaves() - before;
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, params.num_trees));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  forest.empty_leaf_count = std::accumulate(empties.begin(), empties.end(), std::size_t{0});
  return forest;
}

Eigen::VectorXd predict(const Forest& forest, const Eigen::MatrixXd& x) {
  if (x.cols() != forest.num_features)
    throw InvalidInput("predict: query has " + std::to_string(x.cols()) + " columns, forest expects " +
                       std::to_string(forest.num_features));
  Eigen::VectorXd out(x.rows());
  Eigen::RowVectorXd row(x.cols());
  const double scale = 1.0 / static_cast<double>(forest.trees.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    row = x.row(i);
    double acc = 0.0;
    for (const auto& tree : forest.trees)
      acc += tree.nodes[static_cast<std::size_t>(route(tree.nodes, row.data()))].value;
    out(i) = acc * scale;
    if (forest.task == ForestTask::Probability) out(i) = std::clamp(out(i), 0.0, 1.0);
  }
  return out;
}

std::optional<Split> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                std::span<const int> rows, std::span<const int> features,
                                int min_leaf) {
  std::vector<int> sorted(features.begin(), features.end());
  std::sort(sorted.begin(), sorted.end());
  const FeatureIndex index(x);
  std::vector<Sample> scratch;
  std::vector<Bin> bins;
  return find_split(y, index, rows, sorted, min_leaf, scratch, bins, x);
}

std::vector<ForestParams> default_grid(int p, const ForestParams& base) {
  std::vector<int> mtrys;
  for (int m : {static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))),
                static_cast<int>(std::ceil(p / 3.0)), p}) {
    m = std::clamp(m, 1, p);
    if (std::find(mtrys.begin(), mtrys.end(), m) == mtrys.end()) mtrys.push_back(m);
  }
  std::vector<ForestParams> grid;
  for (int m : mtrys)
    for (int leaf : {5, 20, 50}) {
      ForestParams params = base;
      params.mtry = m;
      params.min_leaf = leaf;
      grid.push_back(params);
    }
  return grid;
}

CvResult cv_tune_detailed(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                          const std::vector<ForestParams>& grid, int k, Rng& rng, CvRule rule) {
  if (grid.empty()) throw InvalidParameter("cv_tune: grid must be nonempty");
  if (k < 2) throw InvalidParameter("cv_tune: need k >= 2 folds");
  const auto n = static_cast<int>(x.rows());
  if (n < k) throw InvalidInput("cv_tune: fewer rows (" + std::to_string(n) + ") than folds");
  if (y.size() != x.rows()) throw InvalidInput("cv_tune: response length differs from row count");
  if (grid.size() == 1) return {grid.front(), 0, {}, {}};

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  struct Fold {
    Eigen::MatrixXd x_train, x_test;
    Eigen::VectorXd y_train, y_test;
    std::uint64_t seed;
  };
  std::vector<Fold> folds;
  for (int f = 0; f < k; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (i % k == f ? test : train).push_back(perm[i]);
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    folds.push_back({take_rows(x, train), take_rows(x, test), take(y, train), take(y, test), rng.next_u64()});
  }

  CvResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sse = 0.0, sq = 0.0;
    for (const auto& fold : folds) {
      if (fold.x_train.rows() < 2 * grid[g].min_leaf) {
        sse = std::numeric_limits<double>::infinity();
        break;
      }
      ForestParams params = grid[g];
      params.seed = fold.seed;
      const Forest forest = fit_forest(fold.x_train, fold.y_train, params, task);
      const Eigen::ArrayXd e2 = (predict(forest, fold.x_test) - fold.y_test).array().square();
      sse += e2.sum();
      sq += e2.square().sum();
    }
    const double loss = sse / n;
    // standard error of the mean per-row loss
    const double se = std::isfinite(loss) && n > 1 ? std::sqrt(std::max(0.0, (sq / n - loss * loss) / (n - 1))) : 0.0;
    result.losses.push_back(loss);
    result.std_errors.push_back(se);
    if (loss < best) {
      best = loss;
      result.best_index = g;
    }
  }
  if (!std::isfinite(best))
    throw InvalidInput("cv_tune: no grid point is feasible for " + std::to_string(n) + " rows");
  if (rule == CvRule::OneStandardError) {
    const double bar = best + result.std_errors[result.best_index];
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (result.losses[g] <= bar) {
        result.best_index = g;
        break;
      }
  }
  result.best = grid[result.best_index];
  return result;
}

ForestParams cv_tune(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                     const std::vector<ForestParams>& grid, int k, Rng& rng, CvRule rule) {
  return cv_tune_detailed(x, y, task, grid, k, rng, rule).best;
}

Json params_to_json(const ForestParams& params) {
  return {{"num_trees", params.num_trees},
          {"mtry", params.mtry},
          {"min_leaf", params.min_leaf},
          {"subsample_fraction", params.subsample_fraction},
          {"honesty_fraction", params.honesty_fraction},
          {"max_depth", params.max_depth},
          {"seed", params.seed}};
}

ForestParams params_from_json(const Json& j, const ForestParams& defaults) {
  constexpr std::string_view ctx = "forest";
  check_keys(j, {"num_trees", "mtry", "min_leaf", "subsample_fraction", "honesty_fraction", "max_depth", "seed"},
             ctx);
  ForestParams p = defaults;
  p.num_trees = get_field_or(j, "num_trees", p.num_trees, ctx);
  p.mtry = get_field_or(j, "mtry", p.mtry, ctx);
  p.min_leaf = get_field_or(j, "min_leaf", p.min_leaf, ctx);
  p.subsample_fraction = get_field_or(j, "subsample_fraction", p.subsample_fraction, ctx);
  p.honesty_fraction = get_field_or(j, "honesty_fraction", p.honesty_fraction, ctx);
  p.max_depth = get_field_or(j, "max_depth", p.max_depth, ctx);
  p.seed = get_field_or(j, "seed", p.seed, ctx);
  return p;
}

Json forest_to_json(const Forest& forest) {
  Json trees = Json::array();
  for (const auto& tree : forest.trees) {
    Json feature = Json::array(), threshold = Json::array(), left = Json::array(), right = Json::array(),
         value = Json::array(), count = Json::array(), inherited = Json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      value.push_back(node.value);
      count.push_back(node.count);
      inherited.push_back(node.inherited);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"value", value},
                     {"count", count},
                     {"inherited", inherited}});
  }
  return {{"format", "drate-forest"},
          {"version", 1},
          {"task", to_string(forest.task)},
          {"num_features", forest.num_features},
          {"empty_leaf_count", forest.empty_leaf_count},
          {"params", params_to_json(forest.params)},
          {"trees", trees}};
}

Forest forest_from_json(const Json& j) {
  constexpr std::string_view ctx = "forest document";
  check_keys(j, {"format", "version", "task", "num_features", "empty_leaf_count", "params", "trees"}, ctx);
  if (get_field<std::string>(j, "format", ctx) != "drate-forest" || get_field<int>(j, "version", ctx) != 1)
    throw InvalidInput("unsupported forest document format or version");
  Forest forest;
  forest.task = parse_forest_task(get_field<std::string>(j, "task", ctx));
  forest.num_features = get_field<int>(j, "num_features", ctx);
  forest.empty_leaf_count = get_field<std::size_t>(j, "empty_leaf_count", ctx);
  forest.params = params_from_json(j.at("params"));
  for (const auto& t : j.at("trees")) {
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto threshold = t.at("threshold").get<std::vector<double>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto value = t.at("value").get<std::vector<double>>();
    const auto count = t.at("count").get<std::vector<int>>();
    const auto inherited = t.at("inherited").get<std::vector<bool>>();
    const auto m = feature.size();
    if (threshold.size() != m || left.size() != m || right.size() != m || value.size() != m ||
        count.size() != m || inherited.size() != m || m == 0)
      throw InvalidInput("forest document: node arrays have inconsistent lengths");
    Tree tree;
    for (std::size_t i = 0; i < m; ++i) {
      const bool leaf = feature[i] < 0;
      if (!leaf && (feature[i] >= forest.num_features || left[i] <= static_cast<int>(i) ||
                    right[i] <= static_cast<int>(i) || left[i] >= static_cast<int>(m) ||
                    right[i] >= static_cast<int>(m)))
        throw InvalidInput("forest document: malformed node " + std::to_string(i));
      tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i], count[i],
                            static_cast<bool>(inherited[i])});
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace drate
