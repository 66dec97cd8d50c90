#include "proxytr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>
#include <thread>

#include "proxytr/errors.hpp"

namespace proxytr {

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::simple: return "simple";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
    default: return "random";
  }
}

Difficulty difficulty_from_string(const std::string& name) {
  if (name == "simple") return Difficulty::simple;
  if (name == "moderate") return Difficulty::moderate;
  if (name == "hard") return Difficulty::hard;
  if (name == "random") return Difficulty::random;
  throw UsageError("unknown difficulty '" + name + "'");
}

std::size_t removal_count(Difficulty d, std::size_t complete_size) {
  switch (d) {
    case Difficulty::simple: return complete_size / 4;
    case Difficulty::moderate: return complete_size / 2;
    case Difficulty::hard: return complete_size * 3 / 4;
    default: throw UsageError("removal_count: random difficulty has no fixed count");
  }
}

std::size_t random_removal_count(std::size_t complete_size, Rng& rng) {
  return rng.between(complete_size / 4, complete_size * 3 / 4);
}

ViewpointSplit split_by_viewpoint(const PointCloud& complete, Point3 direction, std::size_t n) {
  if (n == 0 || n >= complete.size()) {
    throw DomainError("crop: n=" + std::to_string(n) + " must lie in (0, " + std::to_string(complete.size()) + ")");
  }
  const Point3 eye = normalized(direction) * kCropViewpointRadius;
  std::vector<std::size_t> order(complete.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> d2(complete.size());
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] = squared_distance(complete[i], eye);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d2[a] > d2[b]; });
  ViewpointSplit split;
  split.removed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  split.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(n), order.end());
  std::sort(split.kept.begin(), split.kept.end());
  return split;
}

PointCloud resample(const PointCloud& cloud, std::size_t count, Rng& rng) {
  if (count == 0) throw DomainError("resample: count must be positive");
  if (cloud.size() >= count) return cloud.subset(fps(cloud, count, 0));
  std::vector<Point3> out(cloud.begin(), cloud.end());
  while (out.size() < count) out.push_back(cloud[rng.below(cloud.size())]);
  return PointCloud(std::move(out));
}

DatasetSample crop_partial(const PointCloud& complete, Point3 direction, std::size_t n, std::size_t input_size,
                           Rng& rng, Difficulty tag) {
  const auto split = split_by_viewpoint(complete, direction, n);
  return DatasetSample{resample(complete.subset(split.kept), input_size, rng), complete, normalized(direction), n,
                       tag};
}

Point3 random_direction(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

std::array<Point3, 8> cube_viewpoints() {
  std::array<Point3, 8> out;
  const double s = 1.0 / std::sqrt(3.0);
  for (int i = 0; i < 8; ++i) out[i] = {(i & 1) ? s : -s, (i & 2) ? s : -s, (i & 4) ? s : -s};
  return out;
}

void CameraModel::validate() const {
  if (eye == target) throw DomainError("camera eye coincides with its target");
  if (!(focal > 0.0) || width == 0 || height == 0) throw DomainError("camera needs positive focal length and extents");
}

CameraModel camera_for(Point3 direction, double eye_distance, std::size_t resolution, double focal) {
  CameraModel cam;
  cam.eye = normalized(direction) * eye_distance;
  cam.width = cam.height = resolution;
  cam.focal = focal;
  return cam;
}

namespace {

struct CameraFrame {
  Point3 forward, right, up;
};

CameraFrame frame_of(const CameraModel& cam) {
  CameraFrame f;
  f.forward = normalized(cam.target - cam.eye);
  Point3 world_up{0.0, 0.0, 1.0};
  if (std::abs(dot(f.forward, world_up)) > 0.999) world_up = {0.0, 1.0, 0.0};
  f.right = normalized(cross(f.forward, world_up));
  f.up = cross(f.right, f.forward);
  return f;
}

}  // namespace

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(source.begin(), source.end(), [](std::size_t s) { return s != npos; }));
}

std::vector<std::size_t> DepthImage::visible_indices() const {
  std::vector<std::size_t> out;
  for (auto s : source) {
    if (s != npos) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

DepthImage render_depth(const PointCloud& cloud, const CameraModel& camera) {
  camera.validate();
  const CameraFrame f = frame_of(camera);
  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.depth.assign(img.width * img.height, std::numeric_limits<double>::infinity());
  img.source.assign(img.width * img.height, DepthImage::npos);
  const double cx = static_cast<double>(camera.width) / 2.0;
  const double cy = static_cast<double>(camera.height) / 2.0;
  std::size_t in_front = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 d = cloud[i] - camera.eye;
    const double z = dot(d, f.forward);
    if (!(z > 0.0)) continue;
    ++in_front;
    const double u = cx + camera.focal * dot(d, f.right) / z;
    const double v = cy - camera.focal * dot(d, f.up) / z;
    if (!(u >= 0.0) || !(v >= 0.0) || u >= static_cast<double>(camera.width) ||
        v >= static_cast<double>(camera.height)) {
      continue;
    }
    const std::size_t px = static_cast<std::size_t>(u);
    const std::size_t py = static_cast<std::size_t>(v);
    const std::size_t at = py * img.width + px;
    if (z < img.depth[at]) {
      img.depth[at] = z;
      img.source[at] = i;
    }
  }
  if (in_front == 0) throw DegenerateInputError("render_depth: every point lies behind the camera");
  return img;
}

std::vector<Point3> backproject(const DepthImage& image, const CameraModel& camera) {
  const CameraFrame f = frame_of(camera);
  const double cx = static_cast<double>(camera.width) / 2.0;
  const double cy = static_cast<double>(camera.height) / 2.0;
  std::vector<Point3> out;
  for (std::size_t py = 0; py < image.height; ++py) {
    for (std::size_t px = 0; px < image.width; ++px) {
      if (!image.valid(px, py)) continue;
      const double z = image.depth[py * image.width + px];
      const double x = (static_cast<double>(px) + 0.5 - cx) * z / camera.focal;
      const double y = (cy - static_cast<double>(py) - 0.5) * z / camera.focal;
      out.push_back(camera.eye + f.forward * z + f.right * x + f.up * y);
    }
  }
  return out;
}

DatasetSample noised_backproject(const PointCloud& complete, const CameraModel& camera, double noise_frac,
                                 std::size_t input_size, Rng& rng) {
  if (!(noise_frac >= 0.0)) throw DomainError("noised_backproject: noise_frac must be non-negative");
  DepthImage img = render_depth(complete, camera);
  const std::size_t valid = img.valid_count();
  if (valid < kMinValidPixels) {
    throw DegenerateInputError("noised_backproject: only " + std::to_string(valid) + " valid pixels (need " +
                               std::to_string(kMinValidPixels) + ")");
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < img.depth.size(); ++i) {
    if (img.source[i] == DepthImage::npos) continue;
    lo = std::min(lo, img.depth[i]);
    hi = std::max(hi, img.depth[i]);
  }
  const double amplitude = noise_frac * (hi - lo);
  if (amplitude > 0.0) {
    for (std::size_t i = 0; i < img.depth.size(); ++i) {
      if (img.source[i] != DepthImage::npos) img.depth[i] += rng.uniform(-amplitude, amplitude);
    }
  }
  PointCloud lifted(backproject(img, camera));
  const std::size_t removed = complete.size() > valid ? complete.size() - valid : 0;
  return DatasetSample{resample(lifted, input_size, rng), complete, normalized(camera.eye - camera.target), removed,
                       Difficulty::random};
}

std::string to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    default: return "cylinder";
  }
}

PrimitiveKind primitive_from_string(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::sphere;
  if (name == "box") return PrimitiveKind::box;
  if (name == "cylinder") return PrimitiveKind::cylinder;
  throw UsageError("unknown primitive '" + name + "'");
}

PrimitiveParams random_params(PrimitiveKind kind, Rng& rng) {
  switch (kind) {
    case PrimitiveKind::sphere: return {1.0, 1.0, 1.0};
    case PrimitiveKind::box: return {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)};
    default: return {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), 1.0};
  }
}

namespace {

Point3 sample_surface(PrimitiveKind kind, const PrimitiveParams& p, Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case PrimitiveKind::sphere: {
      return random_direction(rng) * p.a;
    }
    case PrimitiveKind::box: {
      const double ax = p.b * p.c, ay = p.a * p.c, az = p.a * p.b;
      const double pick = rng.uniform() * (ax + ay + az);
      const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      if (pick < ax) return {s * p.a, u * p.b, v * p.c};
      if (pick < ax + ay) return {u * p.a, s * p.b, v * p.c};
      return {u * p.a, v * p.b, s * p.c};
    }
    default: {
      const double side = 2.0 * p.a * p.b;  // ∝ 2πr·2h
      const double caps = p.a * p.a;        // ∝ 2πr²
      const double phi = rng.uniform(0.0, two_pi);
      if (rng.uniform() * (side + caps) < side) {
        return {p.a * std::cos(phi), p.a * std::sin(phi), rng.uniform(-p.b, p.b)};
      }
      const double r = p.a * std::sqrt(rng.uniform());
      const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
      return {r * std::cos(phi), r * std::sin(phi), s * p.b};
    }
  }
}

}  // namespace

PointCloud make_primitive(PrimitiveKind kind, PrimitiveParams params, std::size_t count, Rng& rng) {
  if (count < 8) throw DomainError("make_primitive: need at least 8 samples");
  for (double v : {params.a, params.b, params.c}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("make_primitive: parameters must be positive and finite");
  }
  std::vector<Point3> pts;
  pts.reserve(count);
  while (pts.size() + 2 <= count) {
    const Point3 p = sample_surface(kind, params, rng);
    pts.push_back(p);
    pts.push_back(p * -1.0);
  }
  if (pts.size() < count) pts.push_back(sample_surface(kind, params, rng));
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, norm(p));
  for (auto& p : pts) p = p * (1.0 / scale);
  return PointCloud(std::move(pts));
}

// Dataset synthesis -----------------------------------------------------------

namespace {

std::string object_id(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

std::size_t default_views(const SynthConfig& c) {
  if (c.views > 0) return c.views;
  return c.kind == SynthKind::backproject ? 16 : 1;
}

}  // namespace

SynthObject synthesize_object(const SynthConfig& config, std::size_t index) {
  Rng rng = Rng::derive(config.seed, index);
  const auto kind = static_cast<PrimitiveKind>(rng.below(3));
  const auto params = random_params(kind, rng);
  SynthObject obj{object_id(index), kind, make_primitive(kind, params, config.complete_points, rng), {}};

  if (config.kind == SynthKind::backproject) {
    const std::size_t views = default_views(config);
    for (std::size_t v = 0; v < views; ++v) {
      const auto cam = camera_for(random_direction(rng), config.camera_distance, config.resolution, config.focal);
      obj.partials.push_back({v, noised_backproject(obj.complete, cam, config.noise_frac, config.partial_points, rng)});
    }
    return obj;
  }

  if (config.split == "test") {
    // Evaluation protocol: 8 fixed viewpoints, each at the requested difficulty (or all three).
    std::vector<Difficulty> levels;
    if (config.difficulty == Difficulty::random) {
      levels = {Difficulty::simple, Difficulty::moderate, Difficulty::hard};
    } else {
      levels = {config.difficulty};
    }
    const auto views = cube_viewpoints();
    const std::size_t view_count = config.views > 0 ? std::min<std::size_t>(config.views, 8) : 8;
    std::size_t view = 0;
    for (std::size_t v = 0; v < view_count; ++v) {
      for (auto level : levels) {
        const std::size_t n = removal_count(level, obj.complete.size());
        obj.partials.push_back(
            {view++, crop_partial(obj.complete, views[v], n, config.partial_points, rng, level)});
      }
    }
    return obj;
  }

  const std::size_t views = default_views(config);
  for (std::size_t v = 0; v < views; ++v) {
    const Point3 dir = random_direction(rng);
    const std::size_t n = config.difficulty == Difficulty::random ? random_removal_count(obj.complete.size(), rng)
                                                                  : removal_count(config.difficulty, obj.complete.size());
    obj.partials.push_back({v, crop_partial(obj.complete, dir, n, config.partial_points, rng, config.difficulty)});
  }
  return obj;
}

void write_dataset(const SynthConfig& config, const std::filesystem::path& root, std::size_t threads) {
  namespace fs = std::filesystem;
  if (config.count == 0) throw UsageError("synth: --count must be positive");
  const fs::path dir = root / config.split;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("synth: cannot create output directory '" + dir.string() + "'");

  std::vector<nlohmann::ordered_json> records(config.count);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, config.count));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < config.count; i += workers) {
      const SynthObject obj = synthesize_object(config, i);
      write_xyz(dir / (obj.id + "_complete.xyz"), obj.complete.points());
      nlohmann::ordered_json rec;
      rec["id"] = obj.id;
      rec["primitive"] = to_string(obj.primitive);
      rec["complete"] = obj.id + "_complete.xyz";
      rec["partials"] = nlohmann::ordered_json::array();
      for (const auto& part : obj.partials) {
        const std::string file = obj.id + "_partial_" + std::to_string(part.view) + ".xyz";
        write_xyz(dir / file, part.sample.partial.points());
        const auto& vp = part.sample.viewpoint;
        nlohmann::ordered_json p;
        p["view"] = part.view;
        p["file"] = file;
        p["viewpoint"] = {vp.x, vp.y, vp.z};
        p["n_removed"] = part.sample.n_removed;
        p["difficulty"] = to_string(part.sample.difficulty);
        rec["partials"].push_back(std::move(p));
      }
      records[i] = std::move(rec);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  nlohmann::ordered_json manifest;
  manifest["kind"] = config.kind == SynthKind::crop ? "crop" : "backproject";
  manifest["split"] = config.split;
  manifest["seed"] = config.seed;
  manifest["complete_points"] = config.complete_points;
  manifest["partial_points"] = config.partial_points;
  manifest["objects"] = std::move(records);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("synth: cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
}

std::vector<ManifestObject> read_manifest(const std::filesystem::path& root, const std::string& split) {
  const auto dir = root / split;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw UsageError("no manifest.json in '" + dir.string() + "'");
  const auto doc = nlohmann::json::parse(in);
  std::vector<ManifestObject> out;
  for (const auto& rec : doc.at("objects")) {
    ManifestObject obj;
    obj.id = rec.at("id").get<std::string>();
    obj.complete_file = dir / rec.at("complete").get<std::string>();
    for (const auto& p : rec.at("partials")) {
      ManifestPartial mp;
      mp.view = p.at("view").get<std::size_t>();
      mp.file = dir / p.at("file").get<std::string>();
      const auto& vp = p.at("viewpoint");
      mp.viewpoint = {vp.at(0).get<double>(), vp.at(1).get<double>(), vp.at(2).get<double>()};
      mp.n_removed = p.at("n_removed").get<std::size_t>();
      mp.difficulty = difficulty_from_string(p.at("difficulty").get<std::string>());
      obj.partials.push_back(std::move(mp));
    }
    out.push_back(std::move(obj));
  }
  return out;
}

}  // namespace proxytr
