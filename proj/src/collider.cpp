#include "layersim/collider.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace layersim {

// distance from p to segment a..b and the closest point
static double point_segment(const Vec3& p, const Vec3& a, const Vec3& b, Vec3* closest) {
    Vec3 ab = b - a;
    double len2 = ab.norm2();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    *closest = a + ab * t;
    return (p - *closest).norm();
}

static double shape_sd(const RigidShape& s, const Vec3& p, Vec3* normal) {
    Vec3 center = s.a;
    if (s.kind == RigidShape::Capsule) point_segment(p, s.a, s.b, &center);
    Vec3 d = p - center;
    double dist = d.norm();
    if (dist > 1e-12) {
        *normal = d / dist;
    } else {
        *normal = Vec3(0, 0, 1);  // degenerate: query on the centerline
    }
    return dist - s.radius;
}

double BodyCollider::signed_distance_local(const Vec3& p, Vec3* normal) const {
    double best = 1e300;
    Vec3 best_n(0, 0, 1);
    for (const auto& s : shapes) {
        Vec3 n;
        double sd = shape_sd(s, p, &n);
        if (sd < best) {
            best = sd;
            best_n = n;
        }
    }
    if (normal) *normal = best_n;
    return best;
}

double BodyCollider::signed_distance(const Vec3& p, int frame, Vec3* normal) const {
    const RigidTransform& xf = trajectory.at(frame);
    Vec3 local_n;
    double sd = signed_distance_local(xf.to_local(p), &local_n);
    if (normal) *normal = xf.apply_dir(local_n);
    return sd;
}

static double shape_area(const RigidShape& s) {
    double caps = 4.0 * M_PI * s.radius * s.radius;
    if (s.kind == RigidShape::Sphere) return caps;
    double h = (s.b - s.a).norm();
    return caps + 2.0 * M_PI * s.radius * h;
}

// golden-angle spiral on the unit sphere
static Vec3 fibonacci_dir(int i, int n) {
    double z = 1.0 - (2.0 * i + 1.0) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = double(i) * 2.39996322972865332;
    return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

static void sample_shape(const RigidShape& s, int count, std::vector<SurfaceSample>& out) {
    if (s.kind == RigidShape::Sphere) {
        for (int i = 0; i < count; i++) {
            Vec3 n = fibonacci_dir(i, count);
            out.push_back({s.a + n * s.radius, n});
        }
        return;
    }
    Vec3 axis = s.b - s.a;
    double h = axis.norm();
    if (h < 1e-12) {
        RigidShape sph{RigidShape::Sphere, s.a, s.a, s.radius};
        sample_shape(sph, count, out);
        return;
    }
    Vec3 u = axis / h;
    // any frame orthogonal to the axis
    Vec3 e = std::abs(u.x) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    Vec3 p1 = u.cross(e).normalized();
    Vec3 p2 = u.cross(p1);

    double cap_area = 4.0 * M_PI * s.radius * s.radius;
    double cyl_area = 2.0 * M_PI * s.radius * h;
    int n_cyl = int(std::lround(count * cyl_area / (cap_area + cyl_area)));
    int n_caps = count - n_cyl;
    int n_cap_a = n_caps / 2;
    int n_cap_b = n_caps - n_cap_a;

    for (int i = 0; i < n_cyl; i++) {
        double t = (i + 0.5) / n_cyl;
        double phi = double(i) * 2.39996322972865332;
        Vec3 n = p1 * std::cos(phi) + p2 * std::sin(phi);
        out.push_back({s.a + axis * t + n * s.radius, n});
    }
    for (int i = 0; i < n_cap_a; i++) {
        Vec3 n = fibonacci_dir(i, 2 * n_cap_a);  // hemisphere around -u
        if (n.dot(u) > 0) n = n - u * (2.0 * n.dot(u));
        out.push_back({s.a + n * s.radius, n});
    }
    for (int i = 0; i < n_cap_b; i++) {
        Vec3 n = fibonacci_dir(i, 2 * n_cap_b);
        if (n.dot(u) < 0) n = n - u * (2.0 * n.dot(u));
        out.push_back({s.b + n * s.radius, n});
    }
}

std::vector<SurfaceSample> BodyCollider::sample_surface_local(int count) const {
    if (count <= 0 || shapes.empty()) return {};
    double total = 0.0;
    for (const auto& s : shapes) total += shape_area(s);

    std::vector<SurfaceSample> out;
    out.reserve(count);
    int assigned = 0;
    for (size_t k = 0; k < shapes.size(); k++) {
        int n = (k + 1 == shapes.size()) ? count - assigned
                                         : int(std::lround(count * shape_area(shapes[k]) / total));
        n = std::max(n, 1);
        if (assigned + n > count) n = count - assigned;
        sample_shape(shapes[k], n, out);
        assigned += n;
        if (assigned >= count) break;
    }
    return out;
}

std::vector<SurfaceSample> BodyCollider::sample_surface(const std::vector<SurfaceSample>& local, int frame) const {
    const RigidTransform& xf = trajectory.at(frame);
    std::vector<SurfaceSample> out(local.size());
    for (size_t i = 0; i < local.size(); i++)
        out[i] = {xf.apply(local[i].position), xf.apply_dir(local[i].normal)};
    return out;
}

}  // namespace layersim
