#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dalign/rng.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// Gaussian KDE on a uniform grid spanning the data range +/- 4 bandwidths.
// Default bandwidth is Silverman's rule 1.06 * sd * n^(-1/5).
DensityCurve kde_1d(std::span<const double> samples, std::optional<double> bandwidth = {},
                    std::size_t grid_points = 512);

double silverman_bandwidth(std::span<const double> samples);
double trapezoid(std::span<const double> grid, std::span<const double> values);

struct EnergyDistanceResult {
  // D^2 = 2 E|a - b| - E|a - a'| - E|b - b'| (V-statistic), floored at 0.
  double value = 0.0;
  double root() const;
};

EnergyDistanceResult energy_distance(const Tensor& a, const Tensor& b);

// Column `dim` of a rank-2 tensor.
std::vector<double> column(const Tensor& samples, std::size_t dim);

struct MmdCurvePoint {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for one resample)
};

using SampleDraw = std::function<Tensor(std::size_t count, Rng& rng)>;

// For each n, draws `resamples` fresh sets of n points and records the MMD
// to the fixed reference set. One bandwidth (median heuristic of the
// reference) serves the whole curve.
std::vector<MmdCurvePoint> mmd_sampling_curve(const Tensor& reference, const SampleDraw& draw,
                                              std::span<const std::size_t> sizes,
                                              std::size_t resamples, std::uint64_t seed);

struct MixingEnergy {
  double mixed_to_unlabeled = 0.0;
  double labeled_to_unlabeled = 0.0;
};

// Cross-set mixes x = lambda x_l + (1 - lambda) x_u, one per unlabeled
// point with a uniformly drawn labeled partner and lambda ~ Beta(alpha, alpha).
Tensor cross_set_mixed_inputs(const Tensor& labeled, const Tensor& unlabeled, double alpha,
                              Rng& rng);
MixingEnergy mixing_energy(const Tensor& labeled, const Tensor& unlabeled, double alpha, Rng& rng);

struct ScatterSet {
  std::string name;
  std::vector<std::array<double, 2>> points;
  std::string color = "#1f77b4";
  double radius = 2.0;
};

ScatterSet scatter_from_tensor(std::string name, const Tensor& points, std::string color,
                               double radius = 2.0);

struct Series {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> error;  // optional symmetric error bars
  std::string color = "#d62728";
};

struct SvgOptions {
  int width = 480;
  int height = 360;
  int margin = 40;
  std::string title;
  bool log_x = false;
};

// Deterministic standalone SVG documents.
std::string svg_scatter(std::span<const ScatterSet> sets, const SvgOptions& options = {});
std::string svg_lines(std::span<const Series> series, const SvgOptions& options = {});
void emit_svg_scatter(std::span<const ScatterSet> sets, const std::filesystem::path& path,
                      const SvgOptions& options = {});
void emit_svg_lines(std::span<const Series> series, const std::filesystem::path& path,
                    const SvgOptions& options = {});

struct NamedDensity {
  std::string set;
  std::size_t dimension = 0;
  DensityCurve curve;
};

// Long-format CSV: set,dimension,grid,density
void write_density_csv(const std::filesystem::path& path, std::span<const NamedDensity> curves);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dalign
