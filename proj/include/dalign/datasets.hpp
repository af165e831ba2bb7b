#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dalign/assignment.hpp"
#include "dalign/rng.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

struct LabeledSet {
  Tensor x;  // [n, dim]
  std::vector<int> y;
  std::size_t num_classes = 0;

  std::size_t size() const { return y.size(); }
  void validate() const;
};

struct UnlabeledSet {
  Tensor x;  // [m, dim]
  std::size_t size() const { return x.rows(); }
};

struct TwoMoonsOptions {
  std::size_t n_labeled = 6;
  std::size_t n_unlabeled = 1000;
  std::size_t n_test = 1000;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

struct TwoMoons {
  LabeledSet labeled;
  UnlabeledSet unlabeled;
  LabeledSet test;
};

// Upper arc (cos t, sin t) is class 0, lower arc (1 - cos t, 0.5 - sin t)
// is class 1, t ~ U[0, pi], plus isotropic Gaussian noise. Classes
// alternate so any prefix is stratified.
Tensor sample_two_moons(std::size_t count, double noise, Rng& rng, std::vector<int>* labels);

// The labeled, unlabeled and test splits use independent seed streams.
TwoMoons gen_two_moons(const TwoMoonsOptions& options);

enum class ShapeClass { sphere, cube, cylinder, cone };

const char* shape_class_name(ShapeClass shape);
ShapeClass parse_shape_class(std::string_view name);

struct CloudSet {
  std::vector<PointCloud> clouds;
  std::vector<int> labels;  // -1 marks unlabeled
};

struct ShapesOptions {
  std::size_t n_labeled = 8;
  std::size_t n_unlabeled = 64;
  std::size_t n_test = 64;
  std::size_t points_per_cloud = 256;
  std::vector<ShapeClass> classes{ShapeClass::sphere, ShapeClass::cube, ShapeClass::cylinder,
                                  ShapeClass::cone};
  double noise = 0.01;
  std::uint64_t seed = 1;
};

struct ShapeSets {
  CloudSet labeled;
  CloudSet unlabeled;
  CloudSet test;
};

// Points uniform on the class surface, displaced by a uniform offset in a
// ball of radius `noise`, then shifted by the exact surface centroid and
// scaled to max norm 1.
PointCloud sample_shape(ShapeClass shape, std::size_t points, double noise, Rng& rng);
ShapeSets gen_shapes(const ShapesOptions& options);

class DatasetFormatError : public std::runtime_error {
 public:
  DatasetFormatError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct VectorFile {
  LabeledSet labeled;
  UnlabeledSet unlabeled;
};

// CSV with header f0,...,f{d-1},label; label -1 marks unlabeled rows.
// Values are written in shortest round-trip form.
void save_vector_csv(const std::filesystem::path& path, const LabeledSet* labeled,
                     const UnlabeledSet* unlabeled);
VectorFile load_vector_csv(const std::filesystem::path& path);

// JSON lines, one {"points": [[x,y,z],...], "label": int|null} per cloud.
void save_cloud_jsonl(const std::filesystem::path& path, const CloudSet& set);
CloudSet load_cloud_jsonl(const std::filesystem::path& path);

}  // namespace dalign
