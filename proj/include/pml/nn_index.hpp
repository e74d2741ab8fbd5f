#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pml/geometry.hpp"

namespace pml {

struct Neighbor {
    std::size_t index = 0;
    double squared_distance = 0.0;
};

/// Exact nearest-neighbor index over a fixed 3D point set (axis-aligned
/// splitting tree). Among equidistant points the smallest index wins.
///
/// Immutable after construction; concurrent queries are safe.
class NeighborIndex {
public:
    /// Throws EmptyInputError for an empty set.
    explicit NeighborIndex(std::span<const Point3> points, std::size_t leaf_size = 12);

    Neighbor nearest(const Point3& query) const;

    /// As `nearest`, also reporting how many tree nodes the query visited.
    Neighbor nearest_counting(const Point3& query, std::size_t& visited) const;

    std::size_t size() const { return points_.size(); }
    const Point3& point(std::size_t i) const { return points_[i]; }

private:
    struct Node {
        // Leaf when `split_dim < 0`: covers order_[begin, end).
        int split_dim = -1;
        double split = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::uint32_t node, const Point3& q, Neighbor& best, std::size_t* visited) const;

    std::vector<Point3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

/// Reference O(n) scan with the same tie rule.
Neighbor brute_force_nearest(std::span<const Point3> points, const Point3& query);

}  // namespace pml
