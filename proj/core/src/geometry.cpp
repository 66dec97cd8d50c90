#include "proxytr/geometry.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>

#include "proxytr/errors.hpp"

namespace proxytr {

double distance(Point3 a, Point3 b) noexcept { return std::sqrt(squared_distance(a, b)); }
double norm(Point3 p) noexcept { return std::sqrt(dot(p, p)); }

Point3 normalized(Point3 p) {
  const double n = norm(p);
  if (!(n > 0.0)) throw DegenerateInputError("cannot normalize a zero vector");
  return p * (1.0 / n);
}

PointCloud::PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
  if (points_.empty()) throw DomainError("point cloud must be non-empty");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw DomainError("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

Point3 PointCloud::centroid() const noexcept {
  Point3 c;
  for (const auto& p : points_) c = c + p;
  return c * (1.0 / static_cast<double>(points_.size()));
}

double PointCloud::diagonal() const noexcept {
  Point3 lo = points_.front(), hi = points_.front();
  for (const auto& p : points_) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  return distance(lo, hi);
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  std::vector<Point3> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= points_.size()) throw DomainError("subset index " + std::to_string(i) + " out of range");
    out.push_back(points_[i]);
  }
  return PointCloud(std::move(out));
}

std::size_t canonical_start(std::span<const Point3> points) {
  if (points.empty()) throw DomainError("canonical_start: empty point set");
  std::size_t best = 0;
  auto key = [&](std::size_t i) { return std::array{points[i].x, points[i].y, points[i].z}; };
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (key(i) < key(best)) best = i;
  }
  return best;
}

std::vector<std::size_t> fps(std::span<const Point3> points, std::size_t count, std::size_t start) {
  const std::size_t n = points.size();
  if (count == 0 || count > n) {
    throw DomainError("fps: cannot select " + std::to_string(count) + " of " + std::to_string(n) + " points");
  }
  if (start >= n) throw DomainError("fps: start index " + std::to_string(start) + " out of range");
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> selected;
  selected.reserve(count);
  std::size_t current = start;
  for (std::size_t s = 0; s < count; ++s) {
    selected.push_back(current);
    min_d2[current] = -1.0;  // never re-selected, even among duplicates
    const Point3 c = points[current];
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      const double d2 = squared_distance(points[i], c);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

namespace {

struct Candidate {
  double d2;
  std::size_t index;
  friend bool operator<(const Candidate& a, const Candidate& b) {
    return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
  }
};

void check_knn_args(std::span<const Point3> reference, std::size_t k) {
  if (k == 0) throw DomainError("knn: k must be positive");
  if (k > reference.size()) {
    throw DomainError("knn: k=" + std::to_string(k) + " exceeds reference size " + std::to_string(reference.size()));
  }
}

// Uniform grid with cell edge = diameter / cbrt(count).
class SpatialGrid {
 public:
  explicit SpatialGrid(std::span<const Point3> points) : points_(points) {
    lo_ = hi_ = points.front();
    for (const auto& p : points) {
      lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
      hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y), std::max(hi_.z, p.z)};
    }
    const double diameter = distance(lo_, hi_);
    cell_ = diameter / std::cbrt(static_cast<double>(points.size()));
    if (!(cell_ > 0.0)) cell_ = 1.0;
    const std::array<double, 3> extent{hi_.x - lo_.x, hi_.y - lo_.y, hi_.z - lo_.z};
    for (int a = 0; a < 3; ++a) {
      dims_[a] = std::clamp<long>(static_cast<long>(std::floor(extent[a] / cell_)) + 1, 1, 1024);
    }
    const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = flat(cell_coords(points[i]));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    order_.resize(points.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) order_[fill[cell_of[i]]++] = i;
  }

  /// `heap` is caller-owned scratch reused across queries.
  void query(Point3 q, std::size_t k, std::size_t* out, std::vector<Candidate>& heap) const {
    heap.clear();
    const auto qc = cell_coords(q);
    const long max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    auto visit = [&](long i, long j, long l) {
      const std::size_t c = flat({i, j, l});
      for (std::size_t s = start_[c]; s < start_[c + 1]; ++s) {
        const std::size_t idx = order_[s];
        const Candidate cand{squared_distance(points_[idx], q), idx};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
    };
    for (long r = 0; r <= max_ring; ++r) {
      const long i0 = std::max(qc[0] - r, 0L), i1 = std::min(qc[0] + r, dims_[0] - 1);
      const long j0 = std::max(qc[1] - r, 0L), j1 = std::min(qc[1] + r, dims_[1] - 1);
      const long l0 = std::max(qc[2] - r, 0L), l1 = std::min(qc[2] + r, dims_[2] - 1);
      for (long i = i0; i <= i1; ++i) {
        const bool i_edge = std::labs(i - qc[0]) == r;
        for (long j = j0; j <= j1; ++j) {
          if (i_edge || std::labs(j - qc[1]) == r) {
            for (long l = l0; l <= l1; ++l) visit(i, j, l);
          } else {
            // Interior column: only the two shell faces along the last axis.
            if (qc[2] - r >= 0) visit(i, j, qc[2] - r);
            if (r > 0 && qc[2] + r < dims_[2]) visit(i, j, qc[2] + r);
          }
        }
      }
      if (heap.size() == k) {
        // Unvisited points lie beyond a face of the searched box that still has
        // grid cells behind it; the nearest such face bounds their distance.
        const std::array<double, 3> qv{q.x, q.y, q.z}, lov{lo_.x, lo_.y, lo_.z};
        double bound = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          if (qc[a] - r > 0) bound = std::min(bound, qv[a] - (lov[a] + static_cast<double>(qc[a] - r) * cell_));
          if (qc[a] + r < dims_[a] - 1) {
            bound = std::min(bound, lov[a] + static_cast<double>(qc[a] + r + 1) * cell_ - qv[a]);
          }
        }
        if (bound == std::numeric_limits<double>::infinity()) break;
        bound = std::max(bound, 0.0) * (1.0 - 1e-9);
        if (heap.front().d2 < bound * bound) break;
      }
    }
    std::sort_heap(heap.begin(), heap.end());
    for (std::size_t s = 0; s < k; ++s) out[s] = heap[s].index;
  }

 private:
  std::array<long, 3> cell_coords(Point3 p) const {
    auto axis = [&](double v, double lo, long dim) {
      const double f = std::floor((v - lo) / cell_);
      if (!(f >= 0.0)) return 0L;
      return std::min(static_cast<long>(std::min(f, 1e9)), dim - 1);
    };
    return {axis(p.x, lo_.x, dims_[0]), axis(p.y, lo_.y, dims_[1]), axis(p.z, lo_.z, dims_[2])};
  }

  std::size_t flat(std::array<long, 3> c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  std::span<const Point3> points_;
  Point3 lo_, hi_;
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> order_;
};

}  // namespace

NeighborIndex knn_brute_force(std::span<const Point3> reference, std::span<const Point3> queries, std::size_t k) {
  check_knn_args(reference, k);
  NeighborIndex result{queries.size(), k, std::vector<std::size_t>(queries.size() * k)};
  std::vector<Candidate> all(reference.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t i = 0; i < reference.size(); ++i) all[i] = {squared_distance(reference[i], queries[q]), i};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    for (std::size_t s = 0; s < k; ++s) result.indices[q * k + s] = all[s].index;
  }
  return result;
}

NeighborIndex knn(std::span<const Point3> reference, std::span<const Point3> queries, std::size_t k) {
  check_knn_args(reference, k);
  if (reference.size() < 64) return knn_brute_force(reference, queries, k);
  SpatialGrid grid(reference);
  NeighborIndex result{queries.size(), k, std::vector<std::size_t>(queries.size() * k)};
  std::vector<Candidate> heap;
  heap.reserve(k);
  for (std::size_t q = 0; q < queries.size(); ++q) grid.query(queries[q], k, result.indices.data() + q * k, heap);
  return result;
}

std::vector<double> nearest_squared_distances(std::span<const Point3> reference, std::span<const Point3> queries) {
  const auto nn = knn(reference, queries, 1);
  std::vector<double> d2(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) d2[q] = squared_distance(reference[nn.indices[q]], queries[q]);
  return d2;
}

Normalization normalize(const PointCloud& cloud) {
  const Point3 c = cloud.centroid();
  std::vector<Point3> shifted;
  shifted.reserve(cloud.size());
  double scale = 0.0;
  for (const auto& p : cloud) {
    shifted.push_back(p - c);
    scale = std::max(scale, norm(shifted.back()));
  }
  if (!(scale > 0.0)) throw DegenerateInputError("normalize: all points are identical");
  for (auto& p : shifted) p = p * (1.0 / scale);
  return Normalization{PointCloud(std::move(shifted)), c, scale};
}

PointCloud parse_xyz(std::istream& in) {
  std::vector<Point3> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto blank = [](char c) { return c == ' ' || c == '\t'; };
    while (p != end && blank(*p)) ++p;
    if (p == end) continue;
    std::array<double, 3> xyz{};
    for (int a = 0; a < 3; ++a) {
      if (a > 0) {
        if (p == end || !blank(*p)) throw ParseError("expected whitespace between coordinates", line_no);
        while (p != end && blank(*p)) ++p;
      }
      auto [next, ec] = std::from_chars(p, end, xyz[a]);
      if (ec != std::errc{}) throw ParseError("malformed coordinate in '" + line + "'", line_no);
      p = next;
    }
    while (p != end && blank(*p)) ++p;
    if (p != end) throw ParseError("trailing characters in '" + line + "'", line_no);
    if (!std::isfinite(xyz[0]) || !std::isfinite(xyz[1]) || !std::isfinite(xyz[2])) {
      throw ParseError("non-finite coordinate", line_no);
    }
    points.push_back({xyz[0], xyz[1], xyz[2]});
  }
  if (points.empty()) throw ParseError("no points in input", line_no);
  return PointCloud(std::move(points));
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return parse_xyz(in);
}

std::string format_xyz(std::span<const Point3> points) {
  std::string out;
  out.reserve(points.size() * 40);
  char buf[32];
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      const double v = a == 0 ? p.x : (a == 1 ? p.y : p.z);
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out.append(buf, end);
      out.push_back(a == 2 ? '\n' : ' ');
    }
  }
  return out;
}

void write_xyz(const std::filesystem::path& path, std::span<const Point3> points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const auto text = format_xyz(points);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace proxytr
