// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "semmix/error.hpp"

namespace semmix {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kRays = 64;
constexpr int kHarmonics = 6;

std::size_t idx(int x, int y, int side) {
  return static_cast<std::size_t>(y) * static_cast<std::size_t>(side) + static_cast<std::size_t>(x);
}

bool in_mask(const Mask& m, int x, int y, int side) {
  return x >= 0 && y >= 0 && x < side && y < side && m[idx(x, y, side)] != 0;
}

Mask erode(const Mask& m, int side) {
  Mask out(m.size(), 0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out[idx(x, y, side)] = in_mask(m, x, y, side) && in_mask(m, x - 1, y, side) &&
                             in_mask(m, x + 1, y, side) && in_mask(m, x, y - 1, side) &&
                             in_mask(m, x, y + 1, side);
    }
  }
  return out;
}

double cross(const std::array<double, 2>& o, const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Area of the convex hull of all mask pixel squares.
double hull_area(const Mask& m, int side) {
  std::vector<std::array<double, 2>> pts;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (!m[idx(x, y, side)]) continue;
      pts.push_back({double(x), double(y)});
      pts.push_back({double(x + 1), double(y)});
      pts.push_back({double(x), double(y + 1)});
      pts.push_back({double(x + 1), double(y + 1)});
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;
  std::vector<std::array<double, 2>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(area) / 2;
}

// Bilinear mask occupancy at a point in pixel-center coordinates.
double occupancy(const Mask& m, int side, double x, double y) {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0;
  const double ty = fy - y0;
  auto v = [&](int xx, int yy) { return in_mask(m, xx, yy, side) ? 1.0 : 0.0; };
  return (1 - tx) * (1 - ty) * v(x0, y0) + tx * (1 - ty) * v(x0 + 1, y0) +
         (1 - tx) * ty * v(x0, y0 + 1) + tx * ty * v(x0 + 1, y0 + 1);
}

double lag_correlation(const std::vector<double>& img, const Mask& interior, int side, int dx, int dy,
                       double mean, double var) {
  if (var < 1e-6) return 0.0;
  double acc = 0.0;
  int n = 0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (!in_mask(interior, x, y, side) || !in_mask(interior, x + dx, y + dy, side)) continue;
      acc += (img[idx(x, y, side)] - mean) * (img[idx(x + dx, y + dy, side)] - mean);
      ++n;
    }
  }
  return n > 0 ? acc / n / var : 0.0;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Mask silhouette(std::span<const double> image, int side, double threshold) {
  if (image.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side)) {
    throw_invalid("silhouette: image is not side x side");
  }
  std::vector<int> label(image.size(), 0);
  int best_label = 0;
  std::size_t best_size = 0;
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (image[idx(x, y, side)] <= threshold || label[idx(x, y, side)] != 0) continue;
      ++next;
      std::size_t size = 0;
      stack.assign(1, {x, y});
      label[idx(x, y, side)] = next;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++size;
        const std::array<std::pair<int, int>, 4> nbrs{{{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}}};
        for (const auto& [nx, ny] : nbrs) {
          if (nx < 0 || ny < 0 || nx >= side || ny >= side) continue;
          const auto j = idx(nx, ny, side);
          if (label[j] != 0 || image[j] <= threshold) continue;
          label[j] = next;
          stack.push_back({nx, ny});
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = next;
      }
    }
  }
  Mask out(image.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = best_label != 0 && label[i] == best_label;
  return out;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw_invalid("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double silhouette_iou(std::span<const double> a, std::span<const double> b, int side) {
  return mask_iou(silhouette(a, side), silhouette(b, side));
}

double high_frequency_energy(std::span<const double> image, int side) {
  if (side < 3 || image.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side)) {
    throw_invalid("high_frequency_energy: image is not side x side");
  }
  double acc = 0.0;
  for (int y = 1; y + 1 < side; ++y) {
    for (int x = 1; x + 1 < side; ++x) {
      const double l = image[idx(x - 1, y, side)] + image[idx(x + 1, y, side)] +
                       image[idx(x, y - 1, side)] + image[idx(x, y + 1, side)] - 4 * image[idx(x, y, side)];
      acc += l * l;
    }
  }
  return acc / ((side - 2) * (side - 2));
}

std::vector<double> attribute_features(std::span<const double> image, int side) {
  std::vector<double> f(kFeatureCount, 0.0);
  const Mask mask = silhouette(image, side);
  double area = 0.0, mx = 0.0, my = 0.0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (!mask[idx(x, y, side)]) continue;
      area += 1;
      mx += x + 0.5;
      my += y + 0.5;
    }
  }
  if (area < 4) return f;
  mx /= area;
  my /= area;

  std::array<double, kRays> radius{};
  for (int j = 0; j < kRays; ++j) {
    const double phi = 2 * kPi * j / kRays;
    const double dx = std::cos(phi), dy = std::sin(phi);
    double r = 0.0;
    for (double s = 0.0; s < side; s += 0.125) {
      if (occupancy(mask, side, mx + s * dx, my + s * dy) < 0.5) break;
      r = s;
    }
    radius[static_cast<std::size_t>(j)] = r + 0.0625;
  }
  double rsum = 0.0, rmin = radius[0], rmax = radius[0];
  for (double r : radius) {
    rsum += r;
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  const double rmean = rsum / kRays;
  double rvar = 0.0;
  for (double r : radius) rvar += (r - rmean) * (r - rmean);
  rvar /= kRays;
  for (int k = 1; k <= kHarmonics; ++k) {
    double re = 0.0, im = 0.0;
    for (int j = 0; j < kRays; ++j) {
      const double phi = 2 * kPi * k * j / kRays;
      re += radius[static_cast<std::size_t>(j)] * std::cos(phi);
      im -= radius[static_cast<std::size_t>(j)] * std::sin(phi);
    }
    f[static_cast<std::size_t>(k - 1)] = std::hypot(re, im) / std::max(rsum, 1e-9);
  }
  const double hull = hull_area(mask, side);
  f[6] = hull > 0 ? area / hull : 0.0;
  f[7] = area / (kPi * rmean * rmean);
  f[8] = std::sqrt(rvar) / rmean;
  f[9] = rmax > 0 ? rmin / rmax : 0.0;

  Mask interior = erode(mask, side);
  if (std::count(interior.begin(), interior.end(), 1) < 4) interior = mask;
  const std::vector<double> img(image.begin(), image.end());
  double n = 0, mean = 0, sq = 0, vdiff = 0, hdiff = 0, vn = 0, hn = 0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (!in_mask(interior, x, y, side)) continue;
      const double v = img[idx(x, y, side)];
      n += 1;
      mean += v;
      sq += v * v;
      if (in_mask(interior, x, y + 1, side)) {
        vdiff += std::abs(img[idx(x, y + 1, side)] - v);
        vn += 1;
      }
      if (in_mask(interior, x + 1, y, side)) {
        hdiff += std::abs(img[idx(x + 1, y, side)] - v);
        hn += 1;
      }
    }
  }
  mean /= n;
  const double var = std::max(0.0, sq / n - mean * mean);
  f[10] = mean;
  f[11] = std::sqrt(var);
  f[12] = vn > 0 ? vdiff / vn : 0.0;
  f[13] = hn > 0 ? hdiff / hn : 0.0;
  f[14] = lag_correlation(img, interior, side, 0, 2, mean, var);
  f[15] = lag_correlation(img, interior, side, 2, 0, mean, var);
  return f;
}

namespace {

void fit_head(const Eigen::MatrixXd& X, const std::vector<int>& labels, int classes,
              const AttributeClassifier::Options& opt, Eigen::MatrixXd& w, Eigen::VectorXd& b) {
  const auto n = X.rows();
  const auto d = X.cols();
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  w = Eigen::MatrixXd::Zero(d, classes);
  b = Eigen::VectorXd::Zero(classes);
  Eigen::MatrixXd mw = w, vw = w;
  Eigen::VectorXd mb = b, vb = b;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 1; it <= opt.iterations; ++it) {
    Eigen::MatrixXd Z = X * w;
    Z.rowwise() += b.transpose();
    for (Eigen::Index i = 0; i < n; ++i) Z.row(i) = softmax(Z.row(i).transpose()).transpose();
    const Eigen::MatrixXd G = (Z - Y) / static_cast<double>(n);
    const Eigen::MatrixXd gw = X.transpose() * G + opt.l2 * w;
    const Eigen::VectorXd gb = G.colwise().sum().transpose();
    mw = b1 * mw + (1 - b1) * gw;
    vw = b2 * vw + (1 - b2) * gw.cwiseAbs2();
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb.cwiseAbs2();
    const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
    w.array() -= opt.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
    b.array() -= opt.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
  }
}

template <typename V>
std::vector<double> to_vec(const V& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_vec(Eigen::VectorXd(m.row(r).transpose())));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw_invalid("classifier weight row has the wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& v) {
  const auto x = v.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

}  // namespace

AttributeClassifier AttributeClassifier::train(const ShapesDataset& data, const Options& opt) {
  if (data.size() == 0) throw_invalid("classifier needs training images");
  const int side = data.spec.image_size;
  const bool augment = opt.noise_sd > 0.0;
  const auto n = static_cast<Eigen::Index>(data.size() * (augment ? 2 : 1));
  Eigen::MatrixXd X(n, kFeatureCount);
  std::vector<int> shape_labels, texture_labels;
  Rng rng = make_rng(opt.seed, 0);
  std::normal_distribution<double> noise(0.0, opt.noise_sd > 0.0 ? opt.noise_sd : 1.0);
  Eigen::Index row = 0;
  for (int copy = 0; copy < (augment ? 2 : 1); ++copy) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<double> img(data.images.sample(i).begin(), data.images.sample(i).end());
      if (copy == 1) {
        for (auto& v : img) v += noise(rng);
      }
      const auto f = attribute_features(img, side);
      for (int j = 0; j < kFeatureCount; ++j) X(row, j) = f[static_cast<std::size_t>(j)];
      shape_labels.push_back(data.params[i].shape);
      texture_labels.push_back(data.params[i].texture);
      ++row;
    }
  }
  AttributeClassifier clf;
  clf.shapes_ = data.spec.shapes;
  clf.textures_ = data.spec.textures;
  clf.image_size_ = side;
  clf.mean_ = X.colwise().mean().transpose();
  clf.scale_ = ((X.rowwise() - clf.mean_.transpose()).array().square().colwise().mean().sqrt().transpose())
                   .max(1e-9)
                   .matrix();
  const Eigen::MatrixXd Xs =
      ((X.rowwise() - clf.mean_.transpose()).array().rowwise() / clf.scale_.transpose().array()).matrix();
  fit_head(Xs, shape_labels, static_cast<int>(clf.shapes_.size()), opt, clf.shape_w_, clf.shape_b_);
  fit_head(Xs, texture_labels, static_cast<int>(clf.textures_.size()), opt, clf.texture_w_, clf.texture_b_);
  return clf;
}

AttributePrediction AttributeClassifier::predict(std::span<const double> image) const {
  const auto side = image_size_;
  const Mask mask = silhouette(image, side);
  AttributePrediction out;
  if (std::count(mask.begin(), mask.end(), 1) < 4) return out;
  const auto f = attribute_features(image, side);
  const Eigen::VectorXd x =
      (Eigen::Map<const Eigen::VectorXd>(f.data(), kFeatureCount) - mean_).cwiseQuotient(scale_);
  const Eigen::VectorXd ps = softmax(shape_w_.transpose() * x + shape_b_);
  const Eigen::VectorXd pt = softmax(texture_w_.transpose() * x + texture_b_);
  Eigen::Index s = 0, t = 0;
  out.shape_confidence = ps.maxCoeff(&s);
  out.texture_confidence = pt.maxCoeff(&t);
  out.shape = static_cast<int>(s);
  out.texture = static_cast<int>(t);
  return out;
}

int AttributeClassifier::shape_index(const std::string& name) const {
  const auto it = std::find(shapes_.begin(), shapes_.end(), name);
  if (it == shapes_.end()) throw_invalid("classifier does not know shape '" + name + "'");
  return static_cast<int>(it - shapes_.begin());
}

int AttributeClassifier::texture_index(const std::string& name) const {
  const auto it = std::find(textures_.begin(), textures_.end(), name);
  if (it == textures_.end()) throw_invalid("classifier does not know texture '" + name + "'");
  return static_cast<int>(it - textures_.begin());
}

nlohmann::json AttributeClassifier::to_json() const {
  return {{"format", "semmix-classifier"},
          {"version", 1},
          {"image_size", image_size_},
          {"shapes", shapes_},
          {"textures", textures_},
          {"feature_mean", to_vec(mean_)},
          {"feature_scale", to_vec(scale_)},
          {"shape_weights", matrix_json(shape_w_)},
          {"shape_bias", to_vec(shape_b_)},
          {"texture_weights", matrix_json(texture_w_)},
          {"texture_bias", to_vec(texture_b_)}};
}

AttributeClassifier AttributeClassifier::from_json(const nlohmann::json& doc) {
  AttributeClassifier clf;
  try {
    if (doc.at("format") != "semmix-classifier") throw_invalid("not a classifier document");
    clf.image_size_ = doc.at("image_size").get<int>();
    clf.shapes_ = doc.at("shapes").get<std::vector<std::string>>();
    clf.textures_ = doc.at("textures").get<std::vector<std::string>>();
    clf.mean_ = vector_from_json(doc.at("feature_mean"));
    clf.scale_ = vector_from_json(doc.at("feature_scale"));
    clf.shape_w_ = matrix_from_json(doc.at("shape_weights"), static_cast<Eigen::Index>(clf.shapes_.size()));
    clf.shape_b_ = vector_from_json(doc.at("shape_bias"));
    clf.texture_w_ = matrix_from_json(doc.at("texture_weights"), static_cast<Eigen::Index>(clf.textures_.size()));
    clf.texture_b_ = vector_from_json(doc.at("texture_bias"));
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed classifier document: ") + e.what());
  }
  if (clf.mean_.size() != kFeatureCount || clf.scale_.size() != kFeatureCount ||
      clf.shape_w_.rows() != kFeatureCount || clf.texture_w_.rows() != kFeatureCount ||
      clf.shape_b_.size() != static_cast<Eigen::Index>(clf.shapes_.size()) ||
      clf.texture_b_.size() != static_cast<Eigen::Index>(clf.textures_.size())) {
    throw_invalid("classifier document has inconsistent sizes");
  }
  return clf;
}

double shape_rate(const AttributeClassifier& clf, const SampleBatch& images, int target) {
  if (images.count() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.count(); ++i) hits += clf.predict(images.sample(i)).shape == target;
  return static_cast<double>(hits) / static_cast<double>(images.count());
}

double texture_rate(const AttributeClassifier& clf, const SampleBatch& images, int target) {
  if (images.count() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.count(); ++i) hits += clf.predict(images.sample(i)).texture == target;
  return static_cast<double>(hits) / static_cast<double>(images.count());
}

}  // namespace semmix
