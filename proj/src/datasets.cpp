#include "dalign/datasets.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace dalign {

void LabeledSet::validate() const {
  if (x.rank() != 2 || x.rows() != y.size()) {
    throw ShapeError("labeled set: " + std::to_string(y.size()) + " labels for samples of shape " +
                     shape_to_string(x.shape()));
  }
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw std::invalid_argument("labeled set: class id " + std::to_string(label) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Tensor sample_two_moons(std::size_t count, double noise, Rng& rng, std::vector<int>* labels) {
  if (!(noise >= 0.0)) throw std::invalid_argument("two moons: noise must be non-negative");
  Tensor out(Shape{count, 2});
  if (labels) labels->resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = rng.uniform(0.0, std::numbers::pi);
    double px = 0.0, py = 0.0;
    if (label == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    if (noise > 0.0) {
      px += noise * rng.normal();
      py += noise * rng.normal();
    }
    out.at(i, 0) = px;
    out.at(i, 1) = py;
    if (labels) (*labels)[i] = label;
  }
  return out;
}

TwoMoons gen_two_moons(const TwoMoonsOptions& options) {
  if (options.n_labeled < 1 || options.n_unlabeled < 1) {
    throw std::invalid_argument("two moons: labeled and unlabeled counts must be >= 1");
  }
  const Rng root(options.seed);
  TwoMoons out;
  Rng labeled_rng = root.stream("data-gen/labeled");
  out.labeled.x = sample_two_moons(options.n_labeled, options.noise, labeled_rng, &out.labeled.y);
  out.labeled.num_classes = 2;
  Rng unlabeled_rng = root.stream("data-gen/unlabeled");
  out.unlabeled.x = sample_two_moons(options.n_unlabeled, options.noise, unlabeled_rng, nullptr);
  Rng test_rng = root.stream("data-gen/test");
  out.test.x = sample_two_moons(options.n_test, options.noise, test_rng, &out.test.y);
  out.test.num_classes = 2;
  return out;
}

const char* shape_class_name(ShapeClass shape) {
  switch (shape) {
    case ShapeClass::sphere: return "sphere";
    case ShapeClass::cube: return "cube";
    case ShapeClass::cylinder: return "cylinder";
    case ShapeClass::cone: return "cone";
  }
  return "unknown";
}

ShapeClass parse_shape_class(std::string_view name) {
  for (ShapeClass s : {ShapeClass::sphere, ShapeClass::cube, ShapeClass::cylinder, ShapeClass::cone}) {
    if (name == shape_class_name(s)) return s;
  }
  throw std::invalid_argument("unknown shape class '" + std::string(name) + "'");
}

namespace {

Point3 unit_vector(Rng& rng) {
  while (true) {
    Point3 v{rng.normal(), rng.normal(), rng.normal()};
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (norm > 1e-12) return {v[0] / norm, v[1] / norm, v[2] / norm};
  }
}

Point3 surface_point(ShapeClass shape, Rng& rng) {
  constexpr double pi = std::numbers::pi;
  switch (shape) {
    case ShapeClass::sphere:
      return unit_vector(rng);
    case ShapeClass::cube: {
      const std::size_t face = rng.uniform_index(6);
      const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
      const double side = face % 2 == 0 ? 1.0 : -1.0;
      switch (face / 2) {
        case 0: return {side, u, v};
        case 1: return {u, side, v};
        default: return {u, v, side};
      }
    }
    case ShapeClass::cylinder: {
      // radius 1, z in [-1, 1]: lateral area 4 pi, each cap pi.
      const double pick = rng.uniform() * 6.0;
      const double angle = rng.uniform(0.0, 2.0 * pi);
      if (pick < 4.0) return {std::cos(angle), std::sin(angle), rng.uniform(-1.0, 1.0)};
      const double r = std::sqrt(rng.uniform());
      return {r * std::cos(angle), r * std::sin(angle), pick < 5.0 ? 1.0 : -1.0};
    }
    case ShapeClass::cone: {
      // apex (0,0,1), base radius 1 at z = -1: lateral area pi sqrt(5), base pi.
      const double lateral = std::sqrt(5.0);
      const double pick = rng.uniform() * (lateral + 1.0);
      const double angle = rng.uniform(0.0, 2.0 * pi);
      const double r = std::sqrt(rng.uniform());
      if (pick < lateral) return {r * std::cos(angle), r * std::sin(angle), 1.0 - 2.0 * r};
      return {r * std::cos(angle), r * std::sin(angle), -1.0};
    }
  }
  return {0.0, 0.0, 0.0};
}

// Area-weighted centroid of the exact class surface.
Point3 surface_centroid(ShapeClass shape) {
  if (shape != ShapeClass::cone) return {0.0, 0.0, 0.0};
  // Lateral surface centroid sits a third of the height above the base.
  const double lateral = std::sqrt(5.0);
  return {0.0, 0.0, (lateral * (-1.0 / 3.0) + 1.0 * -1.0) / (lateral + 1.0)};
}

}  // namespace

PointCloud sample_shape(ShapeClass shape, std::size_t points, double noise, Rng& rng) {
  if (points < 8) throw std::invalid_argument("point clouds need at least 8 points");
  if (!(noise >= 0.0)) throw std::invalid_argument("shape noise must be non-negative");
  PointCloud cloud;
  cloud.points.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    Point3 p = surface_point(shape, rng);
    if (noise > 0.0) {
      const Point3 dir = unit_vector(rng);
      const double radius = noise * std::cbrt(rng.uniform());
      for (int k = 0; k < 3; ++k) p[k] += radius * dir[k];
    }
    cloud.points.push_back(p);
  }
  const Point3 centroid = surface_centroid(shape);
  double max_norm = 0.0;
  for (Point3& p : cloud.points) {
    for (int k = 0; k < 3; ++k) p[k] -= centroid[k];
    max_norm = std::max(max_norm, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (max_norm > 0.0) {
    for (Point3& p : cloud.points) {
      for (double& c : p) c /= max_norm;
    }
  }
  return cloud;
}

namespace {

CloudSet make_cloud_set(std::size_t count, const ShapesOptions& options, Rng rng, bool labeled) {
  std::vector<int> classes(count);
  for (std::size_t i = 0; i < count; ++i) classes[i] = static_cast<int>(i % options.classes.size());
  shuffle(std::span<int>(classes), rng);
  CloudSet set;
  for (int c : classes) {
    set.clouds.push_back(sample_shape(options.classes[static_cast<std::size_t>(c)],
                                      options.points_per_cloud, options.noise, rng));
    set.labels.push_back(labeled ? c : -1);
  }
  return set;
}

}  // namespace

ShapeSets gen_shapes(const ShapesOptions& options) {
  if (options.classes.empty()) throw std::invalid_argument("shape class list is empty");
  for (std::size_t i = 0; i < options.classes.size(); ++i) {
    for (std::size_t j = i + 1; j < options.classes.size(); ++j) {
      if (options.classes[i] == options.classes[j]) {
        throw std::invalid_argument("shape class list has duplicates");
      }
    }
  }
  if (options.points_per_cloud < 8) throw std::invalid_argument("point clouds need at least 8 points");
  const Rng root(options.seed);
  ShapeSets out;
  out.labeled = make_cloud_set(options.n_labeled, options, root.stream("data-gen/labeled"), true);
  out.unlabeled =
      make_cloud_set(options.n_unlabeled, options, root.stream("data-gen/unlabeled"), false);
  out.test = make_cloud_set(options.n_test, options, root.stream("data-gen/test"), true);
  return out;
}

// ---- file IO ----

DatasetFormatError::DatasetFormatError(const std::string& path, std::size_t line,
                                       const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

bool parse_int(std::string_view text, int& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return !text.empty() && res.ec == std::errc() && res.ptr == text.data() + text.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void save_vector_csv(const std::filesystem::path& path, const LabeledSet* labeled,
                     const UnlabeledSet* unlabeled) {
  std::size_t dim = 0;
  if (labeled && labeled->size() > 0) dim = labeled->x.cols();
  else if (unlabeled && unlabeled->size() > 0) dim = unlabeled->x.cols();
  else throw std::invalid_argument("save_vector_csv: nothing to write");
  if (labeled) labeled->validate();
  if (labeled && unlabeled && unlabeled->size() > 0 && labeled->size() > 0 &&
      unlabeled->x.cols() != dim) {
    throw ShapeError("save_vector_csv: labeled and unlabeled widths differ");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t c = 0; c < dim; ++c) out << 'f' << c << ',';
  out << "label\n";
  auto write_row = [&](std::span<const double> row, int label) {
    for (double v : row) out << format_double(v) << ',';
    out << label << '\n';
  };
  if (labeled) {
    for (std::size_t r = 0; r < labeled->size(); ++r) write_row(labeled->x.row(r), labeled->y[r]);
  }
  if (unlabeled) {
    for (std::size_t r = 0; r < unlabeled->size(); ++r) write_row(unlabeled->x.row(r), -1);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

VectorFile load_vector_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DatasetFormatError(name, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 2 || header.back() != "label") {
    throw DatasetFormatError(name, 1, "header must be f0,...,f{d-1},label");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t c = 0; c < dim; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw DatasetFormatError(name, 1, "unexpected column name '" + std::string(header[c]) + "'");
    }
  }
  std::vector<double> lx, ux;
  std::vector<int> ly;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != dim + 1) {
      throw DatasetFormatError(name, line_no, "expected " + std::to_string(dim + 1) +
                                                  " columns, found " + std::to_string(fields.size()));
    }
    int label = 0;
    if (!parse_int(fields.back(), label) || label < -1) {
      throw DatasetFormatError(name, line_no, "label must be an integer >= -1");
    }
    auto& dst = label == -1 ? ux : lx;
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        throw DatasetFormatError(name, line_no, "column " + std::to_string(c) + " is not a finite number");
      }
      dst.push_back(v);
    }
    if (label >= 0) {
      ly.push_back(label);
      max_label = std::max(max_label, label);
    }
  }
  VectorFile file;
  const std::size_t n = ly.size();
  file.labeled.x = Tensor(Shape{n, dim}, std::move(lx));
  file.labeled.y = std::move(ly);
  file.labeled.num_classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
  const std::size_t m = ux.size() / dim;
  file.unlabeled.x = Tensor(Shape{m, dim}, std::move(ux));
  return file;
}

void save_cloud_jsonl(const std::filesystem::path& path, const CloudSet& set) {
  if (set.clouds.size() != set.labels.size()) {
    throw std::invalid_argument("cloud set: clouds and labels differ in length");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < set.clouds.size(); ++i) {
    nlohmann::json row;
    row["points"] = set.clouds[i].points;
    row["label"] = set.labels[i] < 0 ? nlohmann::json(nullptr) : nlohmann::json(set.labels[i]);
    out << row.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CloudSet load_cloud_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  const std::string name = path.string();
  CloudSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetFormatError(name, line_no, e.what());
    }
    if (!row.is_object() || !row.contains("points") || !row["points"].is_array() ||
        !row.contains("label")) {
      throw DatasetFormatError(name, line_no, "expected {\"points\": [...], \"label\": ...}");
    }
    PointCloud cloud;
    for (const auto& p : row["points"]) {
      if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
          !p[2].is_number()) {
        throw DatasetFormatError(name, line_no, "points must be [x, y, z] number triples");
      }
      cloud.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    try {
      cloud.validate();
    } catch (const std::invalid_argument& e) {
      throw DatasetFormatError(name, line_no, e.what());
    }
    const auto& label = row["label"];
    if (label.is_null()) set.labels.push_back(-1);
    else if (label.is_number_integer() && label.get<int>() >= 0) set.labels.push_back(label.get<int>());
    else throw DatasetFormatError(name, line_no, "label must be a non-negative integer or null");
    set.clouds.push_back(std::move(cloud));
  }
  return set;
}

}  // namespace dalign
