#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "proxytr/geometry.hpp"
#include "proxytr/random.hpp"

namespace proxytr {

enum class Difficulty { simple, moderate, hard, random };

std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& name);

/// Points removed for a fixed difficulty: 25%, 50% or 75% of the complete cloud.
std::size_t removal_count(Difficulty d, std::size_t complete_size);
/// Uniform draw from [25%, 75%] of the complete cloud (2048..6144 for 8192).
std::size_t random_removal_count(std::size_t complete_size, Rng& rng);

struct DatasetSample {
  PointCloud partial;
  PointCloud complete;
  Point3 viewpoint;  // unit direction
  std::size_t n_removed = 0;
  Difficulty difficulty = Difficulty::random;
};

/// Radius of the sphere the cropping viewpoint sits on.
inline constexpr double kCropViewpointRadius = 2.0;

struct ViewpointSplit {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;  // farthest first
};

/// Ranks points by distance to `direction * kCropViewpointRadius` and removes the `n` farthest.
ViewpointSplit split_by_viewpoint(const PointCloud& complete, Point3 direction, std::size_t n);

/// fps-downsamples (start 0) or pads by replicating random existing points.
PointCloud resample(const PointCloud& cloud, std::size_t count, Rng& rng);

DatasetSample crop_partial(const PointCloud& complete, Point3 direction, std::size_t n, std::size_t input_size,
                           Rng& rng, Difficulty tag = Difficulty::random);

Point3 random_direction(Rng& rng);
/// The 8 normalized cube-vertex directions used for evaluation.
std::array<Point3, 8> cube_viewpoints();

struct CameraModel {
  Point3 eye{0.0, 0.0, 3.0};
  Point3 target{};
  std::size_t width = 200;
  std::size_t height = 200;
  double focal = 200.0;

  void validate() const;
};

CameraModel camera_for(Point3 direction, double eye_distance = 3.0, std::size_t resolution = 200,
                       double focal = 200.0);

/// Z-buffer of a point splat. Depth is measured along the optical axis.
struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> depth;         // +inf where empty
  std::vector<std::size_t> source;   // winning point index, or npos
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  bool valid(std::size_t u, std::size_t v) const { return source[v * width + u] != npos; }
  std::size_t valid_count() const;
  /// Indices of the points that won a pixel.
  std::vector<std::size_t> visible_indices() const;
};

DepthImage render_depth(const PointCloud& cloud, const CameraModel& camera);
/// Lifts every valid pixel center back to 3D.
std::vector<Point3> backproject(const DepthImage& image, const CameraModel& camera);

inline constexpr std::size_t kMinValidPixels = 16;

/// Renders, perturbs each valid depth uniformly within ±noise_frac·(depth range),
/// back-projects and resamples to `input_size`.
DatasetSample noised_backproject(const PointCloud& complete, const CameraModel& camera, double noise_frac,
                                 std::size_t input_size, Rng& rng);

enum class PrimitiveKind { sphere, box, cylinder };

std::string to_string(PrimitiveKind k);
PrimitiveKind primitive_from_string(const std::string& name);

/// sphere: a = radius. box: a, b, c = half extents. cylinder: a = radius, b = half height.
struct PrimitiveParams {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
};

PrimitiveParams random_params(PrimitiveKind kind, Rng& rng);

/// Uniform surface samples drawn in antipodal pairs, scaled to unit max norm
/// about the primitive's center. Even counts therefore have zero centroid.
PointCloud make_primitive(PrimitiveKind kind, PrimitiveParams params, std::size_t count, Rng& rng);

// Dataset synthesis -----------------------------------------------------------

enum class SynthKind { crop, backproject };

struct SynthConfig {
  SynthKind kind = SynthKind::crop;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::size_t complete_points = 8192;
  std::size_t partial_points = 2048;
  /// Partials per object. 0 selects the default: 1 for crop/train, 16 for backproject.
  std::size_t views = 0;
  Difficulty difficulty = Difficulty::random;
  double noise_frac = 0.02;
  std::size_t resolution = 200;
  double focal = 200.0;
  double camera_distance = 3.0;
};

struct SynthPartial {
  std::size_t view = 0;
  DatasetSample sample;
};

struct SynthObject {
  std::string id;
  PrimitiveKind primitive = PrimitiveKind::sphere;
  PointCloud complete;
  std::vector<SynthPartial> partials;
};

/// Object `index` of a synthesis run; depends only on (config, index).
SynthObject synthesize_object(const SynthConfig& config, std::size_t index);

/// Writes `{split}/{id}_complete.xyz`, `{split}/{id}_partial_{view}.xyz` and
/// `{split}/manifest.json` below `root`.
void write_dataset(const SynthConfig& config, const std::filesystem::path& root, std::size_t threads = 1);

struct ManifestPartial {
  std::size_t view = 0;
  std::filesystem::path file;
  Point3 viewpoint;
  std::size_t n_removed = 0;
  Difficulty difficulty = Difficulty::random;
};

struct ManifestObject {
  std::string id;
  std::filesystem::path complete_file;
  std::vector<ManifestPartial> partials;
};

std::vector<ManifestObject> read_manifest(const std::filesystem::path& root, const std::string& split);

}  // namespace proxytr
