#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "heatlab/errors.hpp"

namespace heatlab {

using Point = std::vector<double>;

inline double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double max_norm_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::fabs(a[i] - b[i]));
  return s;
}

struct Ball {
  Point center;
  double radius = 0.0;
};

// Compact target set A in [-M, M]^d.
//   singleton / points: `points`
//   segment:            `points` = {a, b}
//   ball:               `points` = {center}, `radius`
//   cantor_dust:        product of middle-thirds Cantor sets on the cube
//                       corner + [0, side]^d, resolved to `depth` levels
struct TargetSet {
  enum class Kind { singleton, points, segment, ball, cantor_dust };

  Kind kind = Kind::singleton;
  int d = 1;
  double M = 1.0;
  std::vector<Point> points;
  double radius = 0.0;
  double side = 0.0;
  int depth = 0;

  static TargetSet singleton(Point z, double M) { return make(Kind::singleton, M, {std::move(z)}); }
  static TargetSet finite(std::vector<Point> pts, double M) { return make(Kind::points, M, std::move(pts)); }
  static TargetSet segment(Point a, Point b, double M) { return make(Kind::segment, M, {std::move(a), std::move(b)}); }
  static TargetSet ball(Point c, double r, double M) {
    if (!(r > 0.0)) throw DomainError("ball target needs a positive radius");
    TargetSet s;
    s.kind = Kind::ball;
    s.M = M;
    s.d = static_cast<int>(c.size());
    s.points = {std::move(c)};
    s.radius = r;
    s.check();
    return s;
  }
  static TargetSet cantor_dust(Point corner, double side, int depth, double M) {
    if (!(side > 0.0)) throw DomainError("cantor dust needs a positive side");
    if (depth < 0 || depth > 40) throw DomainError("cantor dust depth must lie in 0..40");
    TargetSet s;
    s.kind = Kind::cantor_dust;
    s.M = M;
    s.d = static_cast<int>(corner.size());
    s.points = {std::move(corner)};
    s.side = side;
    s.depth = depth;
    s.check();
    return s;
  }

  double length() const {
    if (kind != Kind::segment) throw CapabilityError("length is defined for segments only");
    return heatlab::distance(points[0], points[1]);
  }

  // Euclidean distance from z to A (to the depth-level construction for dust).
  double distance(const Point& z) const {
    if (static_cast<int>(z.size()) != d) throw DomainError("target set: dimension mismatch");
    switch (kind) {
      case Kind::singleton:
      case Kind::points: {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points) best = std::min(best, heatlab::distance(p, z));
        return best;
      }
      case Kind::segment: {
        const Point& a = points[0];
        const Point& b = points[1];
        double ab2 = 0.0, dot = 0.0;
        for (int i = 0; i < d; ++i) {
          ab2 += (b[i] - a[i]) * (b[i] - a[i]);
          dot += (z[i] - a[i]) * (b[i] - a[i]);
        }
        const double s = ab2 > 0.0 ? std::clamp(dot / ab2, 0.0, 1.0) : 0.0;
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
          const double c = a[i] + s * (b[i] - a[i]) - z[i];
          q += c * c;
        }
        return std::sqrt(q);
      }
      case Kind::ball:
        return std::max(0.0, heatlab::distance(points[0], z) - radius);
      case Kind::cantor_dust: {
        // Coordinates are independent, so the distance splits into per-axis
        // distances to the 1-d Cantor construction.
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
          const double c = cantor_distance_1d(z[i] - points[0][i], side, depth);
          q += c * c;
        }
        return std::sqrt(q);
      }
    }
    return std::numeric_limits<double>::infinity();
  }

  // Uniform-ish sample of A: parametric points for continua, all points for
  // finite sets, random level-`depth` cell corners for dust.
  std::vector<Point> sample(std::size_t n, std::uint64_t seed = 1) const {
    std::vector<Point> out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (kind) {
      case Kind::singleton:
      case Kind::points:
        return points;
      case Kind::segment:
        for (std::size_t k = 0; k < n; ++k) {
          const double s = n == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(n - 1);
          Point p(static_cast<std::size_t>(d));
          for (int i = 0; i < d; ++i) p[i] = points[0][i] + s * (points[1][i] - points[0][i]);
          out.push_back(std::move(p));
        }
        return out;
      case Kind::ball: {
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
          Point p(static_cast<std::size_t>(d));
          double r2 = 0.0;
          for (auto& x : p) {
            x = g(rng);
            r2 += x * x;
          }
          const double scale = radius * std::pow(unit(rng), 1.0 / d) / std::sqrt(r2);
          for (int i = 0; i < d; ++i) p[i] = points[0][i] + scale * p[i];
          out.push_back(std::move(p));
        }
        return out;
      }
      case Kind::cantor_dust:
        for (std::size_t k = 0; k < n; ++k) {
          Point p(static_cast<std::size_t>(d));
          for (int i = 0; i < d; ++i) {
            double x = 0.0, w = side;
            for (int lvl = 0; lvl < depth; ++lvl) {
              w /= 3.0;
              if (rng() & 1) x += 2.0 * w;
            }
            p[i] = points[0][i] + x + unit(rng) * w;
          }
          out.push_back(std::move(p));
        }
        return out;
    }
    return out;
  }

  friend bool operator==(const TargetSet&, const TargetSet&) = default;

 private:
  static TargetSet make(Kind kind, double M, std::vector<Point> pts) {
    if (pts.empty()) throw DomainError("target set needs at least one point");
    TargetSet s;
    s.kind = kind;
    s.M = M;
    s.d = static_cast<int>(pts.front().size());
    s.points = std::move(pts);
    s.check();
    return s;
  }

  void check() const {
    if (d < 1) throw DomainError("target set: dimension must be >= 1");
    if (!(M > 0.0)) throw DomainError("target set: M must be > 0");
    auto inside = [&](double v) { return v >= -M && v <= M; };
    for (const auto& p : points) {
      if (static_cast<int>(p.size()) != d) throw DomainError("target set: points of mixed dimension");
    }
    for (const auto& p : points) {
      for (double v : p) {
        const double lo = kind == Kind::ball ? v - radius : v;
        const double hi = kind == Kind::ball ? v + radius : kind == Kind::cantor_dust ? v + side : v;
        if (!inside(lo) || !inside(hi)) throw DomainError("target set must lie in [-M, M]^d");
      }
    }
  }

  // Distance from x to the depth-level construction of the Cantor set on [0, w].
  static double cantor_distance_1d(double x, double w, int depth) {
    double lo = 0.0;
    for (int lvl = 0; lvl < depth; ++lvl) {
      if (x <= lo) return lo - x;
      if (x >= lo + w) return x - (lo + w);
      const double third = w / 3.0;
      if (x <= lo + third) {
        w = third;
      } else if (x >= lo + 2.0 * third) {
        lo += 2.0 * third;
        w = third;
      } else {
        return std::min(x - (lo + third), lo + 2.0 * third - x);
      }
    }
    if (x < lo) return lo - x;
    if (x > lo + w) return x - (lo + w);
    return 0.0;
  }
};

inline std::string to_string(TargetSet::Kind k) {
  switch (k) {
    case TargetSet::Kind::singleton: return "singleton";
    case TargetSet::Kind::points: return "points";
    case TargetSet::Kind::segment: return "segment";
    case TargetSet::Kind::ball: return "ball";
    case TargetSet::Kind::cantor_dust: return "cantor_dust";
  }
  return "unknown";
}

}  // namespace heatlab
