#include "layersim/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "layersim/parallel.hpp"

namespace layersim {

static inline int64_t cell_coord(double x, double inv_cell) { return int64_t(std::floor(x * inv_cell)); }

static inline uint64_t hash_cell(int64_t cx, int64_t cy, int64_t cz) {
    uint64_t x = uint64_t(cx) * 0x8da6b343u;
    uint64_t y = uint64_t(cy) * 0xd8163841u;
    uint64_t z = uint64_t(cz) * 0xcb1ab31fu;
    uint64_t h = x ^ y ^ z;
    h ^= h >> 13;
    h *= 0x9E3779B97F4A7C15ull;
    h ^= h >> 29;
    return h;
}

SpatialHashGrid::SpatialHashGrid(const std::vector<Vec3>& points, double cell_size)
    : points_(points), cell_size_(cell_size) {
    if (cell_size <= 0.0) throw std::invalid_argument("SpatialHashGrid: cell size must be positive");

    size_t nbuckets = 4;
    while (nbuckets < 2 * points.size() + 1) nbuckets <<= 1;
    mask_ = nbuckets - 1;

    // counting sort into CSR buckets; stable, so in-bucket order is index order
    double inv = 1.0 / cell_size_;
    std::vector<uint64_t> bucket(points.size());
    std::vector<uint32_t> counts(nbuckets + 1, 0);
    for (size_t i = 0; i < points.size(); i++) {
        const Vec3& p = points[i];
        bucket[i] = hash_cell(cell_coord(p.x, inv), cell_coord(p.y, inv), cell_coord(p.z, inv)) & mask_;
        counts[bucket[i] + 1]++;
    }
    for (size_t b = 0; b < nbuckets; b++) counts[b + 1] += counts[b];
    offsets_ = counts;
    indices_.assign(points.size(), 0);
    std::vector<uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (size_t i = 0; i < points.size(); i++) indices_[cursor[bucket[i]]++] = int(i);
}

int SpatialHashGrid::gather_buckets(const Vec3& q, uint64_t* out) const {
    double inv = 1.0 / cell_size_;
    int64_t cx = cell_coord(q.x, inv), cy = cell_coord(q.y, inv), cz = cell_coord(q.z, inv);
    int n = 0;
    for (int dx = -1; dx <= 1; dx++)
        for (int dy = -1; dy <= 1; dy++)
            for (int dz = -1; dz <= 1; dz++) out[n++] = hash_cell(cx + dx, cy + dy, cz + dz) & mask_;
    // distinct cells can collide into one bucket; dedupe so no point is
    // visited twice
    std::sort(out, out + n);
    return int(std::unique(out, out + n) - out);
}

EdgeSet world_edges_self(const std::vector<Vec3>& points, double radius, const EdgeKeySet& exclusions,
                         EdgeKind kind) {
    if (radius <= 0.0) throw std::invalid_argument("world_edges_self: radius must be positive");
    SpatialHashGrid grid(points, radius);

    const int n = int(points.size());
    std::vector<std::vector<int>> partners(n);
    parallel_for(n, [&](int64_t i) {
        auto& out = partners[i];
        grid.for_neighbors(points[i], radius, [&](int j, double) {
            if (j != int(i) && !exclusions.contains(int(i), j)) out.push_back(j);
        });
        std::sort(out.begin(), out.end());
    });

    EdgeSet edges;
    for (int i = 0; i < n; i++)
        for (int j : partners[i]) edges.add(i, j, kind);
    return edges;
}

EdgeSet world_edges_bipartite(const std::vector<Vec3>& receivers, const std::vector<Vec3>& senders,
                              double radius, EdgeKind kind) {
    if (radius <= 0.0) throw std::invalid_argument("world_edges_bipartite: radius must be positive");
    SpatialHashGrid grid(senders, radius);

    const int n = int(receivers.size());
    std::vector<std::vector<int>> partners(n);
    parallel_for(n, [&](int64_t i) {
        auto& out = partners[i];
        grid.for_neighbors(receivers[i], radius, [&](int j, double) { out.push_back(j); });
        std::sort(out.begin(), out.end());
    });

    EdgeSet edges;
    for (int i = 0; i < n; i++)
        for (int j : partners[i]) edges.add(i, j, kind);
    return edges;
}

std::vector<int> nearest_anchors(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors) {
    if (anchors.empty()) throw std::invalid_argument("nearest_anchors: anchors must be nonempty");
    std::vector<int> out(queries.size(), 0);
    parallel_for(int64_t(queries.size()), [&](int64_t i) {
        double best = (anchors[0] - queries[i]).norm2();
        int arg = 0;
        for (int a = 1; a < int(anchors.size()); a++) {
            double d2 = (anchors[a] - queries[i]).norm2();
            if (d2 < best) {
                best = d2;
                arg = a;
            }
        }
        out[i] = arg;
    }, 64);
    return out;
}

std::vector<int> nearest_anchors_within(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors,
                                        double radius) {
    std::vector<int> out(queries.size(), -1);
    if (anchors.empty() || radius <= 0.0) return out;
    SpatialHashGrid grid(anchors, radius);
    parallel_for(int64_t(queries.size()), [&](int64_t i) {
        double best = radius * radius;
        int arg = -1;
        grid.for_neighbors(queries[i], radius, [&](int a, double d2) {
            // lexicographic (distance, index) min keeps ties deterministic
            if (d2 < best || (d2 == best && (arg < 0 || a < arg))) {
                best = d2;
                arg = a;
            }
        });
        out[i] = arg;
    }, 64);
    return out;
}

namespace ref {

EdgeSet world_edges_self_bruteforce(const std::vector<Vec3>& points, double radius, const EdgeKeySet& exclusions,
                                    EdgeKind kind) {
    EdgeSet edges;
    double r2 = radius * radius;
    for (int i = 0; i < int(points.size()); i++)
        for (int j = 0; j < int(points.size()); j++) {
            if (i == j) continue;
            if ((points[i] - points[j]).norm2() >= r2) continue;
            if (exclusions.contains(i, j)) continue;
            edges.add(i, j, kind);
        }
    return edges;
}

EdgeSet world_edges_bipartite_bruteforce(const std::vector<Vec3>& receivers, const std::vector<Vec3>& senders,
                                         double radius, EdgeKind kind) {
    EdgeSet edges;
    double r2 = radius * radius;
    for (int i = 0; i < int(receivers.size()); i++)
        for (int j = 0; j < int(senders.size()); j++)
            if ((receivers[i] - senders[j]).norm2() < r2) edges.add(i, j, kind);
    return edges;
}

std::vector<int> nearest_anchors_serial(const std::vector<Vec3>& queries, const std::vector<Vec3>& anchors) {
    std::vector<int> out(queries.size(), 0);
    for (size_t i = 0; i < queries.size(); i++) {
        double best = (anchors.at(0) - queries[i]).norm2();
        int arg = 0;
        for (int a = 1; a < int(anchors.size()); a++) {
            double d2 = (anchors[a] - queries[i]).norm2();
            if (d2 < best) {
                best = d2;
                arg = a;
            }
        }
        out[i] = arg;
    }
    return out;
}

}  // namespace ref
}  // namespace layersim
