#include "semtsdf/tree.hpp"

#include <cmath>
#include <map>

namespace semtsdf {

namespace {

std::unique_ptr<TreeNode> copy_node(const TreeNode& n) {
    auto m = std::make_unique<TreeNode>();
    m->level = n.level;
    m->ctr = n.ctr;
    m->stats = n.stats;
    m->cache = n.cache;
    m->children.reserve(n.children.size());
    for (const auto& c : n.children) m->children.push_back(copy_node(*c));
    return m;
}

WeightedBatch subset_batch(const WeightedBatch& b, const std::vector<int>& idx) {
    WeightedBatch s;
    s.keys.reserve(idx.size());
    s.counts.resize(idx.size());
    s.means.resize(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        s.keys.push_back(b.keys[idx[j]]);
        s.counts[j] = b.counts[idx[j]];
        s.means[j] = b.means[idx[j]];
    }
    return s;
}

}  // namespace

SpatialTree::SpatialTree(int dim, Vec root_ctr, double root_side, KernelSpec kernel,
                         double sigma2, TreeParams params)
    : dim_(dim),
      root_ctr_(std::move(root_ctr)),
      root_side_(root_side),
      kernel_(kernel),
      sigma2_(sigma2),
      params_(params) {
    if (dim_ != 2 && dim_ != 3) throw ConfigError("tree dimension must be 2 or 3");
    if (!(root_side_ > 0.0)) throw ConfigError("root side must be > 0");
    if (root_ctr_.size() != dim_) throw ConfigError("root center dimension mismatch");
    if (!(sigma2_ > 0.0)) throw ConfigError("sigma2 must be > 0");
    params_.validate();
    kernel_.validate();
    root_ = std::make_unique<TreeNode>();
    root_->level = 0;
    root_->ctr = root_ctr_;
    root_->stats.prior_mean = params_.prior_mean;
    root_->stats.voxel_size = params_.voxel_size;
}

SpatialTree SpatialTree::clone() const {
    SpatialTree t;
    t.dim_ = dim_;
    t.root_ctr_ = root_ctr_;
    t.root_side_ = root_side_;
    t.kernel_ = kernel_;
    t.sigma2_ = sigma2_;
    t.params_ = params_;
    t.total_points_ = total_points_;
    if (root_) t.root_ = copy_node(*root_);
    return t;
}

double SpatialTree::test_half_side(int level) const {
    return std::ldexp(root_side_, -(level + 1));
}

bool SpatialTree::in_root(const Eigen::Ref<const Vec>& x) const {
    return (x - root_ctr_).cwiseAbs().maxCoeff() <= 0.5 * root_side_;
}

bool SpatialTree::support_contains(const TreeNode& node,
                                   const Eigen::Ref<const Vec>& x) const {
    double bound = params_.delta * test_half_side(node.level);
    return (x - node.ctr).cwiseAbs().maxCoeff() <= bound;
}

void SpatialTree::insert(const ObservationBatch& batch, double weight) {
    insert_weighted(WeightedBatch::from(batch, weight));
}

void SpatialTree::insert_weighted(const WeightedBatch& batch) {
    if (!root_) throw InvalidInputError("tree not initialized");
    if (batch.empty()) return;
    Points pts(dim_, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.keys[i].dim != dim_)
            throw InvalidInputError("insert: key dimension mismatch");
        pts.col(static_cast<Eigen::Index>(i)) =
            batch.keys[i].world(params_.voxel_size);
        if (!in_root(pts.col(static_cast<Eigen::Index>(i))))
            throw OutOfBoundsError("insert: point outside root region: " +
                                   batch.keys[i].str());
    }
    std::vector<int> idx(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) idx[i] = static_cast<int>(i);
    insert_rec(*root_, batch, pts, idx);
    total_points_ += batch.size();
}

void SpatialTree::insert_rec(TreeNode& node, const WeightedBatch& batch,
                             const Points& pts, const std::vector<int>& idx) {
    if (!node.is_leaf()) {
        std::vector<int> sub;
        for (const auto& child : node.children) {
            sub.clear();
            for (int i : idx)
                if (support_contains(*child, pts.col(i))) sub.push_back(i);
            if (!sub.empty()) insert_rec(*child, batch, pts, sub);
        }
        return;
    }
    WeightedBatch sub = subset_batch(batch, idx);
    if (params_.maintain_cache) {
        merge_weighted_with_cache(node.stats, node.cache, sub, kernel_, sigma2_);
    } else {
        node.stats = merge_weighted(std::move(node.stats), sub);
    }
    if (node.stats.size() > params_.max_leaf_points) split(node);
}

void SpatialTree::split(TreeNode& node) {
    int nc = 1 << dim_;
    double off = test_half_side(node.level + 1);
    node.children.reserve(nc);
    for (int c = 0; c < nc; ++c) {
        auto child = std::make_unique<TreeNode>();
        child->level = node.level + 1;
        child->ctr = node.ctr;
        for (int a = 0; a < dim_; ++a) child->ctr[a] += ((c >> a) & 1) ? off : -off;
        child->stats.prior_mean = params_.prior_mean;
        child->stats.voxel_size = params_.voxel_size;
        child->stats.reserve(node.stats.size());
        for (int i = 0; i < node.stats.size(); ++i) {
            if (support_contains(*child, node.stats.pts.col(i)))
                child->stats.append(node.stats.keys[i], node.stats.counts[i],
                                    node.stats.means[i]);
        }
        if (params_.maintain_cache && !child->stats.empty())
            child->cache = build_precision(kernel_, child->stats, sigma2_);
        node.children.push_back(std::move(child));
    }
    node.stats = GpStats{};
    node.cache = PrecisionCache{};
    for (auto& child : node.children)
        if (child->stats.size() > params_.max_leaf_points) split(*child);
}

const TreeNode& SpatialTree::locate_leaf(const Eigen::Ref<const Vec>& x) const {
    if (!root_) throw InvalidInputError("tree not initialized");
    if (!in_root(x)) throw OutOfBoundsError("locate_leaf: point outside root region");
    const TreeNode* node = root_.get();
    while (!node->is_leaf()) {
        int c = 0;
        for (int a = 0; a < dim_; ++a)
            if (x[a] >= node->ctr[a]) c |= 1 << a;
        node = node->children[c].get();
    }
    return *node;
}

GpMarginals SpatialTree::predict(const Eigen::Ref<const Vec>& x) const {
    const TreeNode& leaf = locate_leaf(x);
    Points q(dim_, 1);
    q.col(0) = x;
    if (leaf.stats.empty()) {
        GpMarginals out;
        out.mean = Vec::Constant(1, params_.prior_mean);
        out.var = Vec::Constant(1, kernel_.signal_variance);
        return out;
    }
    const PrecisionCache* cache =
        params_.maintain_cache && !leaf.cache.empty() ? &leaf.cache : nullptr;
    return compressed_marginals(kernel_, leaf.stats, sigma2_, q, cache);
}

GpMarginals SpatialTree::predict_many(const Eigen::Ref<const Points>& queries) const {
    GpMarginals out;
    Eigen::Index q = queries.cols();
    out.mean.resize(q);
    out.var.resize(q);
    std::map<const TreeNode*, std::vector<int>> groups;
    for (Eigen::Index i = 0; i < q; ++i)
        groups[&locate_leaf(queries.col(i))].push_back(static_cast<int>(i));
    for (const auto& [leaf, idx] : groups) {
        if (leaf->stats.empty()) {
            for (int i : idx) {
                out.mean[i] = params_.prior_mean;
                out.var[i] = kernel_.signal_variance;
            }
            continue;
        }
        Points sub(dim_, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) sub.col(j) = queries.col(idx[j]);
        const PrecisionCache* cache =
            params_.maintain_cache && !leaf->cache.empty() ? &leaf->cache : nullptr;
        GpMarginals m = compressed_marginals(kernel_, leaf->stats, sigma2_, sub, cache);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out.mean[idx[j]] = m.mean[j];
            out.var[idx[j]] = m.var[j];
        }
    }
    return out;
}

GpStats SpatialTree::flat_stats() const {
    GpStats out;
    out.prior_mean = params_.prior_mean;
    out.voxel_size = params_.voxel_size;
    for_each_leaf([&](const TreeNode& leaf) {
        for (int i = 0; i < leaf.stats.size(); ++i) {
            if (out.find(leaf.stats.keys[i]) < 0)
                out.append(leaf.stats.keys[i], leaf.stats.counts[i],
                           leaf.stats.means[i]);
        }
    });
    return out;
}

void SpatialTree::for_each_leaf(const std::function<void(const TreeNode&)>& fn) const {
    if (!root_) return;
    std::vector<const TreeNode*> stack{root_.get()};
    while (!stack.empty()) {
        const TreeNode* n = stack.back();
        stack.pop_back();
        if (n->is_leaf()) {
            fn(*n);
            continue;
        }
        for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
            stack.push_back(it->get());
    }
}

}  // namespace semtsdf
