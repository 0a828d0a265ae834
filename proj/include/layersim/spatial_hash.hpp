#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "layersim/mesh.hpp"
#include "layersim/vec3.hpp"

namespace layersim {

// Uniform spatial hash over integer cells of a fixed size. Cells map into a
// power-of-two bucket table; queries with radius <= cell size scan the 3^3
// neighborhood. Collisions only add candidates, the caller's distance check
// keeps results exact. Build is single-writer; queries are const.
class SpatialHashGrid {
  public:
    SpatialHashGrid(const std::vector<Vec3>& points, double cell_size);

    // Calls fn(index, distance_squared) for every stored point with
    // |p - q| < radius. Requires radius <= cell size.
    template <typename F>
    void for_neighbors(const Vec3& q, double radius, F&& fn) const {
        uint64_t buckets[27];
        int nb = gather_buckets(q, buckets);
        double r2 = radius * radius;
        for (int b = 0; b < nb; b++) {
            uint64_t h = buckets[b];
            for (uint32_t k = offsets_[h]; k < offsets_[h + 1]; k++) {
                int idx = indices_[k];
                double d2 = (points_[idx] - q).norm2();
                if (d2 < r2) fn(idx, d2);
            }
        }
    }

    double cell_size() const { return cell_size_; }

  private:
    int gather_buckets(const Vec3& q, uint64_t* out) const;
    uint64_t bucket_of(int64_t cx, int64_t cy, int64_t cz) const;

    std::vector<Vec3> points_;
    std::vector<uint32_t> offsets_;
    std::vector<int> indices_;
    uint64_t mask_ = 0;
    double cell_size_ = 1.0;
};

// Directed key set for edge exclusion tests.
struct EdgeKeySet {
    std::unordered_set<int64_t> keys;
    explicit EdgeKeySet(const EdgeSet& edges) {
        for (size_t e = 0; e < edges.size(); e++)
            keys.insert((int64_t(edges.receivers[e]) << 32) | uint32_t(edges.senders[e]));
    }
    EdgeKeySet() = default;
    bool contains(int r, int s) const { return keys.count((int64_t(r) << 32) | uint32_t(s)) != 0; }
};

// Proximity edges within one point set: both directions for every unordered
// pair with distance strictly below radius, no self edges, minus exclusions.
EdgeSet world_edges_self(const std::vector<Vec3>& points, double radius, const EdgeKeySet& exclusions,
                         EdgeKind kind = EdgeKind::World);

// Proximity edges receiver <- sender across two distinct point sets.
EdgeSet world_edges_bipartite(const std::vector<Vec3>& receivers, const std::vector<Vec3>& senders,
                              double radius, EdgeKind kind = EdgeKind::Body);

// Index of the anchor nearest to each query (ties go to the lower index).
// Anchors must be nonempty.
std::vector<int> nearest_anchors(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors);

// Same, but only anchors with |a - q| < radius count; -1 when none qualify.
std::vector<int> nearest_anchors_within(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors,
                                        double radius);

namespace ref {
// O(n^2) pairwise scans, kept serial; the independent check for the hashed paths.
EdgeSet world_edges_self_bruteforce(const std::vector<Vec3>& points, double radius, const EdgeKeySet& exclusions,
                                    EdgeKind kind = EdgeKind::World);
EdgeSet world_edges_bipartite_bruteforce(const std::vector<Vec3>& receivers, const std::vector<Vec3>& senders,
                                         double radius, EdgeKind kind = EdgeKind::Body);
std::vector<int> nearest_anchors_serial(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors);
}  // namespace ref

}  // namespace layersim
