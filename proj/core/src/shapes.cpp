// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "semmix/array_io.hpp"
#include "semmix/error.hpp"
#include "semmix/manifest.hpp"

namespace semmix {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSuper = 8;
constexpr int kStripePeriod = 4;
constexpr int kDotPeriod = 4;
constexpr double kDotRadius = 1.2;
constexpr double kDotBase = 0.3;
constexpr double kBright = 1.0;
constexpr double kDark = 0.0;

using Point = std::array<double, 2>;

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) in = !in;
  }
  return in;
}

std::vector<Point> local_polygon(const std::string& shape, double r) {
  std::vector<Point> pts;
  if (shape == "square") {
    const double h = 0.8 * r;
    pts = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
  } else if (shape == "triangle") {
    const double R = 1.15 * r;
    for (int i = 0; i < 3; ++i) {
      const double a = -kPi / 2 + 2 * kPi * i / 3;
      pts.push_back({R * std::cos(a), R * std::sin(a)});
    }
  } else if (shape == "cross") {
    const double w = 0.35 * r;
    pts = {{-w, -r}, {w, -r}, {w, -w}, {r, -w}, {r, w}, {w, w},
           {w, r},   {-w, r}, {-w, w}, {-r, w}, {-r, -w}, {-w, -w}};
  } else if (shape == "star") {
    const double outer = 1.1 * r;
    const double inner = 0.45 * outer;
    for (int i = 0; i < 10; ++i) {
      const double a = -kPi / 2 + kPi * i / 5;
      const double rad = i % 2 == 0 ? outer : inner;
      pts.push_back({rad * std::cos(a), rad * std::sin(a)});
    }
  } else {
    throw_invalid("unknown shape '" + shape + "'");
  }
  return pts;
}

double texture_value(const std::string& texture, const ShapeParams& p, double x, double y) {
  if (texture == "solid") return kSolidLevel;
  if (texture == "striped") {
    const int row = static_cast<int>(std::floor(y)) + p.phase_y;
    return ((row % kStripePeriod) + kStripePeriod) % kStripePeriod < kStripePeriod / 2 ? kBright : kDark;
  }
  if (texture == "dotted") {
    const double gx = x - p.phase_x;
    const double gy = y - p.phase_y;
    const double dx = gx - kDotPeriod * std::round(gx / kDotPeriod);
    const double dy = gy - kDotPeriod * std::round(gy / kDotPeriod);
    return dx * dx + dy * dy <= kDotRadius * kDotRadius ? kBright : kDotBase;
  }
  throw_invalid("unknown texture '" + texture + "'");
}

ShapeParams draw_params(const ShapesSpec& spec, int shape, int texture, Rng& rng) {
  const double n = spec.image_size;
  std::uniform_real_distribution<double> radius(0.22 * n, 0.34 * n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> phase(0, kStripePeriod - 1);
  ShapeParams p;
  p.shape = shape;
  p.texture = texture;
  p.radius = radius(rng);
  const double margin = 1.12 * p.radius + 1.0;
  const double span = std::max(0.0, n - 2 * margin);
  const double jitter = std::min(span, 0.25 * n);
  p.cx = n / 2 + (unit(rng) - 0.5) * jitter;
  p.cy = n / 2 + (unit(rng) - 0.5) * jitter;
  p.angle = 2 * kPi * unit(rng);
  p.phase_x = phase(rng);
  p.phase_y = phase(rng);
  return p;
}

}  // namespace

void ShapesSpec::validate() const {
  if (shapes.empty()) throw_invalid("shapes spec needs at least one shape");
  if (textures.empty()) throw_invalid("shapes spec needs at least one texture");
  if (count_per_class < 1) throw_invalid("count per class must be >= 1");
  if (image_size < 8 || image_size > 256) throw_invalid("image size must lie in [8, 256]");
  std::set<std::string> seen;
  for (const auto& s : shapes) {
    if (std::find(kAllShapes.begin(), kAllShapes.end(), s) == kAllShapes.end()) throw_invalid("unknown shape '" + s + "'");
    if (!seen.insert(s).second) throw_invalid("duplicate shape '" + s + "'");
  }
  for (const auto& t : textures) {
    if (std::find(kAllTextures.begin(), kAllTextures.end(), t) == kAllTextures.end()) throw_invalid("unknown texture '" + t + "'");
    if (!seen.insert(t).second) throw_invalid("duplicate texture '" + t + "'");
  }
}

Vocabulary ShapesSpec::vocabulary() const {
  std::vector<std::string> words = shapes;
  words.insert(words.end(), textures.begin(), textures.end());
  return Vocabulary(words);
}

nlohmann::json ShapesSpec::to_json() const {
  return {{"shapes", shapes}, {"textures", textures}, {"count_per_class", count_per_class},
          {"seed", seed}, {"image_size", image_size}};
}

ShapesSpec ShapesSpec::from_json(const nlohmann::json& doc) {
  ShapesSpec s;
  try {
    s.shapes = doc.value("shapes", s.shapes);
    s.textures = doc.value("textures", s.textures);
    s.count_per_class = doc.value("count_per_class", s.count_per_class);
    s.seed = doc.value("seed", s.seed);
    s.image_size = doc.value("image_size", s.image_size);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed shapes spec: ") + e.what());
  }
  s.validate();
  return s;
}

bool shape_contains(const std::string& shape, const ShapeParams& p, double x, double y) {
  const double dx = x - p.cx;
  const double dy = y - p.cy;
  if (shape == "circle") return dx * dx + dy * dy <= p.radius * p.radius;
  const double c = std::cos(p.angle);
  const double s = std::sin(p.angle);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return inside_polygon(local_polygon(shape, p.radius), lx, ly);
}

std::vector<double> render_shape(const ShapeParams& p, const ShapesSpec& spec) {
  const int n = spec.image_size;
  const std::string& shape = spec.shapes.at(static_cast<std::size_t>(p.shape));
  const std::string& texture = spec.textures.at(static_cast<std::size_t>(p.texture));
  std::vector<Point> poly;
  double c = 1.0, s = 0.0;
  if (shape != "circle") {
    poly = local_polygon(shape, p.radius);
    c = std::cos(p.angle);
    s = std::sin(p.angle);
  }
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int py = 0; py < n; ++py) {
    for (int px = 0; px < n; ++px) {
      double acc = 0.0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = px + (sx + 0.5) / kSuper;
          const double y = py + (sy + 0.5) / kSuper;
          const double dx = x - p.cx;
          const double dy = y - p.cy;
          bool in;
          if (shape == "circle") {
            in = dx * dx + dy * dy <= p.radius * p.radius;
          } else {
            in = inside_polygon(poly, c * dx + s * dy, -s * dx + c * dy);
          }
          acc += in ? texture_value(texture, p, x, y) : kBackgroundLevel;
        }
      }
      out[static_cast<std::size_t>(py * n + px)] = static_cast<float>(acc / (kSuper * kSuper));
    }
  }
  return out;
}

ShapesDataset generate_shapes(const ShapesSpec& spec) {
  spec.validate();
  ShapesDataset data;
  data.spec = spec;
  data.vocabulary = spec.vocabulary();
  const auto per = static_cast<std::size_t>(spec.count_per_class);
  const std::size_t total = spec.shapes.size() * spec.textures.size() * per;
  data.images = SampleBatch(SampleShape::image(spec.image_size), total);
  std::size_t i = 0;
  for (std::size_t si = 0; si < spec.shapes.size(); ++si) {
    for (std::size_t ti = 0; ti < spec.textures.size(); ++ti) {
      const Prompt prompt = parse_prompt(spec.shapes[si] + " " + spec.textures[ti], data.vocabulary);
      for (std::size_t k = 0; k < per; ++k, ++i) {
        Rng rng = make_rng(spec.seed, i);
        const auto p = draw_params(spec, static_cast<int>(si), static_cast<int>(ti), rng);
        const auto img = render_shape(p, spec);
        std::copy(img.begin(), img.end(), data.images.sample(i).begin());
        data.prompts.push_back(prompt);
        data.params.push_back(p);
      }
    }
  }
  return data;
}

nlohmann::json ShapesDataset::manifest() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& s : spec.shapes) {
    for (const auto& t : spec.textures) pairs.push_back(s + " " + t);
  }
  return {{"format", "semmix-shapes"},
          {"version", 1},
          {"spec", spec.to_json()},
          {"vocabulary", vocabulary.to_json()},
          {"count", size()},
          {"pairs", pairs},
          {"images", "images.smxarr"},
          {"prompts", "prompts.tsv"}};
}

void save_dataset(const ShapesDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int n = data.spec.image_size;
  FloatArray arr;
  arr.dims = {data.size(), 1, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n)};
  arr.values.assign(data.images.values().begin(), data.images.values().end());
  write_array(dir / "images.smxarr", arr);
  std::ostringstream tsv;
  tsv.precision(17);
  tsv << "index\tshape\ttexture\tprompt\tcx\tcy\tradius\tangle\tphase_x\tphase_y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.params[i];
    tsv << i << '\t' << data.spec.shapes[static_cast<std::size_t>(p.shape)] << '\t'
        << data.spec.textures[static_cast<std::size_t>(p.texture)] << '\t'
        << format_prompt(data.prompts[i], data.vocabulary) << '\t' << p.cx << '\t' << p.cy << '\t'
        << p.radius << '\t' << p.angle << '\t' << p.phase_x << '\t' << p.phase_y << '\n';
  }
  write_file_atomic(dir / "prompts.tsv", tsv.str());
  write_file_atomic(dir / "manifest.json", data.manifest().dump(2) + "\n");
}

ShapesDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw_not_found("no dataset manifest in '" + dir.string() + "'");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw_io(std::string("dataset manifest is not valid JSON: ") + e.what());
  }
  ShapesDataset data;
  data.spec = ShapesSpec::from_json(doc.at("spec"));
  data.vocabulary = Vocabulary::from_json(doc.at("vocabulary"));
  const auto arr = read_array(dir / "images.smxarr");
  const auto n = static_cast<std::uint64_t>(data.spec.image_size);
  const auto count = doc.at("count").get<std::uint64_t>();
  if (arr.dims != std::vector<std::uint64_t>{count, 1, n, n}) throw_io("dataset images have unexpected dims");
  data.images = SampleBatch(SampleShape::image(data.spec.image_size), count,
                            std::vector<double>(arr.values.begin(), arr.values.end()));
  std::istringstream tsv(read_file(dir / "prompts.tsv"));
  std::string line;
  std::getline(tsv, line);
  while (std::getline(tsv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string part; std::getline(ls, part, '\t');) f.push_back(part);
    if (f.size() != 10) throw_io("prompt table row has " + std::to_string(f.size()) + " fields");
    ShapeParams p;
    const auto find_index = [](const std::vector<std::string>& list, const std::string& w) {
      const auto it = std::find(list.begin(), list.end(), w);
      if (it == list.end()) throw_io("prompt table names unknown attribute '" + w + "'");
      return static_cast<int>(it - list.begin());
    };
    p.shape = find_index(data.spec.shapes, f[1]);
    p.texture = find_index(data.spec.textures, f[2]);
    p.cx = std::stod(f[4]);
    p.cy = std::stod(f[5]);
    p.radius = std::stod(f[6]);
    p.angle = std::stod(f[7]);
    p.phase_x = std::stoi(f[8]);
    p.phase_y = std::stoi(f[9]);
    data.prompts.push_back(parse_prompt(f[3], data.vocabulary));
    data.params.push_back(p);
  }
  if (data.prompts.size() != count) throw_io("prompt table row count does not match the manifest");
  return data;
}

}  // namespace semmix
