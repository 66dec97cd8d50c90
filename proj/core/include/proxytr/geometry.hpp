#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace proxytr {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Point3 operator+(Point3 a, Point3 b) noexcept { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Point3 operator-(Point3 a, Point3 b) noexcept { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Point3 operator*(Point3 a, double s) noexcept { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr bool operator==(Point3 a, Point3 b) noexcept = default;
};

constexpr double dot(Point3 a, Point3 b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Point3 cross(Point3 a, Point3 b) noexcept {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
constexpr double squared_distance(Point3 a, Point3 b) noexcept {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}
double distance(Point3 a, Point3 b) noexcept;
double norm(Point3 p) noexcept;
Point3 normalized(Point3 p);

/// Non-empty sequence of finite 3D points in normalized object space.
class PointCloud {
 public:
  /// Throws DomainError when `points` is empty or holds a non-finite coordinate.
  explicit PointCloud(std::vector<Point3> points);

  std::size_t size() const noexcept { return points_.size(); }
  const Point3& operator[](std::size_t i) const noexcept { return points_[i]; }
  std::span<const Point3> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  Point3 centroid() const noexcept;
  /// Length of the axis-aligned bounding box diagonal.
  double diagonal() const noexcept;

  /// Points at the given indices, in that order.
  PointCloud subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point3> points_;
};

/// Index of the lexicographically smallest point: a start for fps that does
/// not depend on input order.
std::size_t canonical_start(std::span<const Point3> points);

/// Greedy farthest point sampling. Each pick maximizes the distance to the
/// already-selected set; ties go to the lowest index.
std::vector<std::size_t> fps(std::span<const Point3> points, std::size_t count, std::size_t start = 0);
inline std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t count, std::size_t start = 0) {
  return fps(cloud.points(), count, start);
}

/// Row-major (query × k) neighbor indices into a reference set, each row sorted
/// by ascending distance with ties broken by index.
struct NeighborIndex {
  std::size_t queries = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;

  std::span<const std::size_t> row(std::size_t q) const { return {indices.data() + q * k, k}; }
};

/// Exact k nearest neighbors. Uses a uniform grid over the reference set from
/// 64 points upward and brute force below.
NeighborIndex knn(std::span<const Point3> reference, std::span<const Point3> queries, std::size_t k);
NeighborIndex knn_brute_force(std::span<const Point3> reference, std::span<const Point3> queries, std::size_t k);

/// Squared distance from each query to its nearest reference point.
std::vector<double> nearest_squared_distances(std::span<const Point3> reference, std::span<const Point3> queries);

struct Normalization {
  PointCloud cloud;
  Point3 centroid;
  double scale = 1.0;

  /// Maps a point of the normalized cloud back to the input frame.
  Point3 restore(Point3 p) const noexcept { return p * scale + centroid; }
};

/// Centers on the centroid and scales to unit max norm.
Normalization normalize(const PointCloud& cloud);

// XYZ text: one "x y z" line per point, '#' lines are comments.
PointCloud parse_xyz(std::istream& in);
PointCloud read_xyz(const std::filesystem::path& path);
std::string format_xyz(std::span<const Point3> points);
void write_xyz(const std::filesystem::path& path, std::span<const Point3> points);

}  // namespace proxytr
