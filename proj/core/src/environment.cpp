#include "semtsdf/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semtsdf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() * b.y() - a.y() * b.x();
}

double point_segment_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                              const Eigen::Vector2d& x) {
    Eigen::Vector2d ab = b - a;
    double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (x - a).norm();
    double t = std::clamp((x - a).dot(ab) / len2, 0.0, 1.0);
    return (x - (a + t * ab)).norm();
}

// Smallest t >= 0 with origin + t*dir on segment [a, b]; +inf if none.
double ray_segment(const Eigen::Vector2d& origin, const Eigen::Vector2d& dir,
                   const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    Eigen::Vector2d s = b - a;
    double denom = cross2(dir, s);
    if (std::abs(denom) < 1e-15) return kInf;
    Eigen::Vector2d ao = a - origin;
    double t = cross2(ao, s) / denom;
    double u = cross2(ao, dir) / denom;
    if (t < 0.0 || u < -1e-12 || u > 1.0 + 1e-12) return kInf;
    return t;
}

bool segments_intersect(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
    auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                     const Eigen::Vector2d& r) { return cross2(q - p, r - p); };
    double o1 = orient(a, b, c), o2 = orient(a, b, d);
    double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

double polygon_distance(const Polygon& p, const Polygon& q) {
    for (const auto& v : p.v)
        if (q.contains(v)) return 0.0;
    for (const auto& v : q.v)
        if (p.contains(v)) return 0.0;
    std::size_t np = p.v.size(), nq = q.v.size();
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < nq; ++j)
            if (segments_intersect(p.v[i], p.v[(i + 1) % np], q.v[j], q.v[(j + 1) % nq]))
                return 0.0;
    double best = kInf;
    for (const auto& v : p.v) best = std::min(best, q.boundary_distance(v));
    for (const auto& v : q.v) best = std::min(best, p.boundary_distance(v));
    return best;
}

// Andrew monotone chain; returns a counter-clockwise hull.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const auto& a, const auto& b) { return a == b; }),
              pts.end());
    std::size_t n = pts.size();
    if (n < 3) return {};
    std::vector<Eigen::Vector2d> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
            --k;
        hull[k++] = pts[i];
    }
    std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
            --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace

bool Polygon::contains(const Eigen::Vector2d& x) const {
    std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (cross2(v[(i + 1) % n] - v[i], x - v[i]) < 0.0) return false;
    }
    return true;
}

double Polygon::boundary_distance(const Eigen::Vector2d& x) const {
    double best = kInf;
    std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i)
        best = std::min(best, point_segment_distance(v[i], v[(i + 1) % n], x));
    return best;
}

double Polygon::ray_distance(const Eigen::Vector2d& x, const Eigen::Vector2d& dir) const {
    double best = kInf;
    std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i)
        best = std::min(best, ray_segment(x, dir, v[i], v[(i + 1) % n]));
    return best;
}

double Polygon::perimeter() const {
    double p = 0.0;
    std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) p += (v[(i + 1) % n] - v[i]).norm();
    return p;
}

bool Environment::class_contains(int cls, const Eigen::Vector2d& x) const {
    for (const auto& p : obstacles.at(cls - 1))
        if (p.contains(x)) return true;
    return false;
}

bool Environment::occupied(const Eigen::Vector2d& x) const {
    for (int l = 1; l <= num_classes; ++l)
        if (class_contains(l, x)) return true;
    return false;
}

bool Environment::in_bounds(const Eigen::Vector2d& x) const {
    return x.x() >= bbox.lo.x() && x.x() <= bbox.hi.x() && x.y() >= bbox.lo.y() &&
           x.y() <= bbox.hi.y();
}

double Environment::boundary_distance(int cls, const Eigen::Vector2d& x) const {
    double best = kInf;
    for (const auto& p : obstacles.at(cls - 1))
        best = std::min(best, p.boundary_distance(x));
    return best;
}

double Environment::signed_distance(int cls, const Eigen::Vector2d& x,
                                    double truncation) const {
    double d = std::min(boundary_distance(cls, x), truncation);
    return class_contains(cls, x) ? -d : d;
}

double Environment::ray_distance(int cls, const Eigen::Vector2d& x,
                                 const Eigen::Vector2d& dir) const {
    double best = kInf;
    for (const auto& p : obstacles.at(cls - 1))
        best = std::min(best, p.ray_distance(x, dir));
    return best;
}

void EnvGenParams::validate() const {
    if (min_polygons < 1 || max_polygons < min_polygons)
        throw ConfigError("invalid polygon count range");
    if (!(min_radius > 0.0) || !(max_radius >= min_radius))
        throw ConfigError("invalid polygon size range");
    if (min_vertices < 3 || max_vertices < min_vertices)
        throw ConfigError("invalid vertex count range");
    if (separation < 0.0) throw ConfigError("separation must be >= 0");
    if (retry_budget < 1) throw ConfigError("retry budget must be >= 1");
}

Environment generate_environment(std::uint64_t seed, const BBox& bbox, int num_classes,
                                 const EnvGenParams& params) {
    params.validate();
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (!((bbox.extent().array() > 0.0).all())) throw ConfigError("empty bounding box");

    std::mt19937_64 rng(seed);
    Environment env;
    env.bbox = bbox;
    env.num_classes = num_classes;
    env.obstacles.resize(num_classes);

    int count = std::uniform_int_distribution<int>(params.min_polygons,
                                                   params.max_polygons)(rng);
    count = std::max(count, num_classes);

    std::vector<Polygon> placed;
    for (int i = 0; i < count; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < params.retry_budget && !ok; ++attempt) {
            double r = std::uniform_real_distribution<double>(params.min_radius,
                                                              params.max_radius)(rng);
            double pad = r + params.separation;
            if (bbox.lo.x() + pad >= bbox.hi.x() - pad ||
                bbox.lo.y() + pad >= bbox.hi.y() - pad)
                continue;
            Eigen::Vector2d ctr(
                std::uniform_real_distribution<double>(bbox.lo.x() + pad,
                                                       bbox.hi.x() - pad)(rng),
                std::uniform_real_distribution<double>(bbox.lo.y() + pad,
                                                       bbox.hi.y() - pad)(rng));
            int k = std::uniform_int_distribution<int>(params.min_vertices,
                                                       params.max_vertices)(rng);
            std::vector<double> angles(k);
            for (auto& a : angles)
                a = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
            std::sort(angles.begin(), angles.end());
            std::vector<Eigen::Vector2d> pts;
            pts.reserve(k);
            for (double a : angles) {
                double rr = std::uniform_real_distribution<double>(0.5 * r, r)(rng);
                pts.emplace_back(ctr.x() + rr * std::cos(a), ctr.y() + rr * std::sin(a));
            }
            Polygon poly{convex_hull(pts)};
            if (poly.v.size() < 3) continue;
            bool clear = true;
            for (const auto& other : placed) {
                if (polygon_distance(poly, other) < params.separation) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
            env.obstacles[i % num_classes].push_back(poly);
            placed.push_back(std::move(poly));
            ok = true;
        }
        if (!ok)
            throw GenerationError("environment generation: could not place polygon " +
                                  std::to_string(i + 1) + " of " + std::to_string(count));
    }
    return env;
}

Vec directional_distance(const Environment& env, const Eigen::Vector2d& x,
                         const Eigen::Vector2d& eta, double truncation) {
    if (std::abs(eta.norm() - 1.0) > 1e-9)
        throw InvalidInputError("directional_distance: direction must be unit length");
    Vec h(env.num_classes);
    for (int l = 1; l <= env.num_classes; ++l) {
        double d = std::min(env.ray_distance(l, x, eta), truncation);
        h[l - 1] = env.class_contains(l, x) ? -d : d;
    }
    return h;
}

}  // namespace semtsdf
