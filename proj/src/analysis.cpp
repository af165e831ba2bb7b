#include "dalign/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dalign/divergence.hpp"
#include "dalign/kernels.hpp"

namespace dalign {

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("kde: need at least 2 samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples.size() - 1);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw std::invalid_argument("kde: samples have zero spread");
  return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

double trapezoid(std::span<const double> grid, std::span<const double> values) {
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return acc;
}

DensityCurve kde_1d(std::span<const double> samples, std::optional<double> bandwidth,
                    std::size_t grid_points) {
  if (samples.size() < 2) throw std::invalid_argument("kde: need at least 2 samples");
  if (grid_points < 2) throw std::invalid_argument("kde: need at least 2 grid points");
  DensityCurve curve;
  curve.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  if (!(curve.bandwidth > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it - 4.0 * curve.bandwidth;
  const double hi = *hi_it + 4.0 * curve.bandwidth;
  curve.grid.resize(grid_points);
  curve.density.resize(grid_points);
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * curve.bandwidth *
                             std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = lo + step * static_cast<double>(g);
    double acc = 0.0;
    for (double s : samples) {
      const double u = (x - s) / curve.bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    curve.grid[g] = x;
    curve.density[g] = acc * norm;
  }
  return curve;
}

double EnergyDistanceResult::root() const { return std::sqrt(value); }

EnergyDistanceResult energy_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument("energy distance: both sample sets must be non-empty");
  }
  const double n = static_cast<double>(a.rows());
  const double m = static_cast<double>(b.rows());
  const double ab = kernels::distance_sum(a, b) / (n * m);
  const double aa = kernels::distance_sum(a, a) / (n * n);
  const double bb = kernels::distance_sum(b, b) / (m * m);
  return EnergyDistanceResult{std::max(0.0, 2.0 * ab - aa - bb)};
}

std::vector<MmdCurvePoint> mmd_sampling_curve(const Tensor& reference, const SampleDraw& draw,
                                              std::span<const std::size_t> sizes,
                                              std::size_t resamples, std::uint64_t seed) {
  if (resamples == 0) throw std::invalid_argument("mmd curve: need at least one resample");
  if (sizes.empty()) throw std::invalid_argument("mmd curve: no sample sizes given");
  const double sigma = median_heuristic(reference);
  const Rng root(seed);
  std::vector<MmdCurvePoint> out;
  for (std::size_t n : sizes) {
    if (n == 0) throw std::invalid_argument("mmd curve: sample sizes must be positive");
    Rng rng = root.stream("mmd-curve/n=" + std::to_string(n));
    std::vector<double> values(resamples);
    for (auto& v : values) v = mmd_biased(draw(n, rng), reference, sigma).value;
    MmdCurvePoint p;
    p.n = n;
    for (double v : values) p.mean += v;
    p.mean /= static_cast<double>(resamples);
    if (resamples > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - p.mean) * (v - p.mean);
      p.stddev = std::sqrt(ss / static_cast<double>(resamples - 1));
    }
    out.push_back(p);
  }
  return out;
}

Tensor cross_set_mixed_inputs(const Tensor& labeled, const Tensor& unlabeled, double alpha,
                              Rng& rng) {
  if (labeled.rank() != 2 || unlabeled.rank() != 2 || labeled.rows() == 0 ||
      unlabeled.rows() == 0 || labeled.cols() != unlabeled.cols()) {
    throw ShapeError("mixed inputs: need non-empty sets of equal width");
  }
  Tensor out(unlabeled.shape());
  for (std::size_t r = 0; r < unlabeled.rows(); ++r) {
    const std::size_t partner = rng.uniform_index(labeled.rows());
    const double lambda = sample_beta(rng, alpha);
    for (std::size_t c = 0; c < unlabeled.cols(); ++c) {
      out.at(r, c) = lambda * labeled.at(partner, c) + (1.0 - lambda) * unlabeled.at(r, c);
    }
  }
  return out;
}

MixingEnergy mixing_energy(const Tensor& labeled, const Tensor& unlabeled, double alpha, Rng& rng) {
  const Tensor mixed = cross_set_mixed_inputs(labeled, unlabeled, alpha, rng);
  return MixingEnergy{energy_distance(mixed, unlabeled).value,
                      energy_distance(labeled, unlabeled).value};
}

std::vector<double> column(const Tensor& samples, std::size_t dim) {
  if (samples.rank() != 2 || dim >= samples.cols()) {
    throw ShapeError("column " + std::to_string(dim) + " out of range for " +
                     shape_to_string(samples.shape()));
  }
  std::vector<double> out(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r) out[r] = samples.at(r, dim);
  return out;
}

ScatterSet scatter_from_tensor(std::string name, const Tensor& points, std::string color,
                               double radius) {
  if (points.rank() != 2 || points.cols() < 2) {
    throw ShapeError("scatter needs [n, >=2] points, got " + shape_to_string(points.shape()));
  }
  ScatterSet set{std::move(name), {}, std::move(color), radius};
  for (std::size_t r = 0; r < points.rows(); ++r) set.points.push_back({points.at(r, 0), points.at(r, 1)});
  return set;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0 = -1.0, x1 = 1.0, y0 = -1.0, y1 = 1.0;
  const SvgOptions* opt = nullptr;

  void include(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    if (empty) {
      x0 = x1 = x;
      y0 = y1 = y;
      empty = false;
      return;
    }
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void finish() {
    if (x1 - x0 <= 0.0) { x0 -= 1.0; x1 += 1.0; }
    if (y1 - y0 <= 0.0) { y0 -= 1.0; y1 += 1.0; }
    const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
    x0 -= px; x1 += px; y0 -= py; y1 += py;
  }
  double sx(double x) const {
    return opt->margin + (x - x0) / (x1 - x0) * (opt->width - 2 * opt->margin);
  }
  double sy(double y) const {
    return opt->height - opt->margin - (y - y0) / (y1 - y0) * (opt->height - 2 * opt->margin);
  }
  bool empty = true;
};

void open_svg(std::ostringstream& out, const Frame& f, const SvgOptions& opt, double lx0,
              double lx1) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" fill=\"white\"/>\n";
  const int left = opt.margin, right = opt.width - opt.margin;
  const int top = opt.margin, bottom = opt.height - opt.margin;
  out << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
      << bottom << "\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << left << "\" y2=\"" << top
      << "\"/>\n</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"10\">\n"
      << "<text x=\"" << left << "\" y=\"" << bottom + 14 << "\">" << num(lx0) << "</text>\n"
      << "<text x=\"" << right << "\" y=\"" << bottom + 14 << "\" text-anchor=\"end\">"
      << num(lx1) << "</text>\n"
      << "<text x=\"" << left - 4 << "\" y=\"" << bottom << "\" text-anchor=\"end\">" << num(f.y0)
      << "</text>\n"
      << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">"
      << num(f.y1) << "</text>\n";
  if (!opt.title.empty()) {
    out << "<text x=\"" << opt.width / 2 << "\" y=\"" << top / 2 + 5
        << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(opt.title) << "</text>\n";
  }
  out << "</g>\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string svg_scatter(std::span<const ScatterSet> sets, const SvgOptions& options) {
  Frame frame;
  frame.opt = &options;
  for (const auto& s : sets) {
    for (const auto& p : s.points) frame.include(p[0], p[1]);
  }
  frame.finish();
  std::ostringstream out;
  open_svg(out, frame, options, frame.x0, frame.x1);
  int legend_y = options.margin + 12;
  for (const auto& s : sets) {
    out << "<g fill=\"" << escape(s.color) << "\" fill-opacity=\"0.7\">\n";
    for (const auto& p : s.points) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      out << "<circle cx=\"" << num(frame.sx(p[0])) << "\" cy=\"" << num(frame.sy(p[1]))
          << "\" r=\"" << num(s.radius) << "\"/>\n";
    }
    out << "</g>\n";
    out << "<text x=\"" << options.width - options.margin - 4 << "\" y=\"" << legend_y
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\""
        << escape(s.color) << "\">" << escape(s.name) << "</text>\n";
    legend_y += 12;
  }
  out << "</svg>\n";
  return out.str();
}

std::string svg_lines(std::span<const Series> series, const SvgOptions& options) {
  Frame frame;
  frame.opt = &options;
  auto tx = [&](double x) { return options.log_x ? std::log2(x) : x; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.error.size() ? s.error[i] : 0.0;
      frame.include(tx(s.x[i]), s.y[i] - e);
      frame.include(tx(s.x[i]), s.y[i] + e);
    }
  }
  frame.finish();
  std::ostringstream out;
  const double lx0 = options.log_x ? std::exp2(frame.x0) : frame.x0;
  const double lx1 = options.log_x ? std::exp2(frame.x1) : frame.x1;
  open_svg(out, frame, options, lx0, lx1);
  int legend_y = options.margin + 12;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << escape(s.color) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out << ' ';
      out << num(frame.sx(tx(s.x[i]))) << ',' << num(frame.sy(s.y[i]));
    }
    out << "\"/>\n<g stroke=\"" << escape(s.color) << "\" fill=\"" << escape(s.color) << "\">\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double cx = frame.sx(tx(s.x[i]));
      out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(frame.sy(s.y[i])) << "\" r=\"2.5\"/>\n";
      if (i < s.error.size()) {
        out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(frame.sy(s.y[i] - s.error[i]))
            << "\" x2=\"" << num(cx) << "\" y2=\"" << num(frame.sy(s.y[i] + s.error[i])) << "\"/>\n";
      }
    }
    out << "</g>\n<text x=\"" << options.width - options.margin - 4 << "\" y=\"" << legend_y
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\""
        << escape(s.color) << "\">" << escape(s.name) << "</text>\n";
    legend_y += 12;
  }
  out << "</svg>\n";
  return out.str();
}

void emit_svg_scatter(std::span<const ScatterSet> sets, const std::filesystem::path& path,
                      const SvgOptions& options) {
  write_file(path, svg_scatter(sets, options));
}

void emit_svg_lines(std::span<const Series> series, const std::filesystem::path& path,
                    const SvgOptions& options) {
  write_file(path, svg_lines(series, options));
}

void write_density_csv(const std::filesystem::path& path, std::span<const NamedDensity> curves) {
  std::ostringstream out;
  out << "set,dimension,grid,density\n";
  char buf[96];
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.curve.grid.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g,%.10g", c.curve.grid[i], c.curve.density[i]);
      out << c.set << ',' << c.dimension << ',' << buf << '\n';
    }
  }
  write_file(path, out.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, text);
}

}  // namespace dalign
