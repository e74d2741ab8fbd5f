#include "pml/nn_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "pml/errors.hpp"

namespace pml {
namespace {

bool better(double d2, std::size_t idx, const Neighbor& best) {
    return d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index);
}

}  // namespace

NeighborIndex::NeighborIndex(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    if (points_.empty()) throw EmptyInputError("cannot build a neighbor index over an empty point set");
    if (points_.size() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("point set too large");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!points_[i].allFinite()) throw NumericalError("non-finite coordinate in point " + std::to_string(i));
    }
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
}

std::uint32_t NeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= leaf_size_) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (auto i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    if (hi[dim] == lo[dim]) {
        // All points coincide; splitting cannot separate them.
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }

    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][dim] < points_[b][dim]; });
    const double split = points_[order_[mid]][dim];

    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].split_dim = dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void NeighborIndex::search(std::uint32_t node_id, const Point3& q, Neighbor& best, std::size_t* visited) const {
    const Node& node = nodes_[node_id];
    if (visited) ++*visited;
    if (node.split_dim < 0) {
        for (auto i = node.begin; i < node.end; ++i) {
            const auto idx = order_[i];
            const double d2 = (points_[idx] - q).squaredNorm();
            if (better(d2, idx, best)) best = {idx, d2};
        }
        return;
    }

    // Left subtree holds values <= split, right holds values >= split.
    const double diff = q[node.split_dim] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    search(near, q, best, visited);
    // `<=` keeps equidistant candidates with smaller indices reachable.
    if (diff * diff <= best.squared_distance) search(far, q, best, visited);
}

Neighbor NeighborIndex::nearest(const Point3& query) const {
    Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    search(0, query, best, nullptr);
    return best;
}

Neighbor NeighborIndex::nearest_counting(const Point3& query, std::size_t& visited) const {
    Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    visited = 0;
    search(0, query, best, &visited);
    return best;
}

Neighbor brute_force_nearest(std::span<const Point3> points, const Point3& query) {
    if (points.empty()) throw EmptyInputError("brute-force nearest over an empty point set");
    Neighbor best{0, (points[0] - query).squaredNorm()};
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d2 = (points[i] - query).squaredNorm();
        if (d2 < best.squared_distance) best = {i, d2};
    }
    return best;
}

}  // namespace pml
