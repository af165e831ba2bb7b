// dalign: dataset generation, training, MMD curves and bound reports.

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dalign/analysis.hpp"
#include "dalign/datasets.hpp"
#include "dalign/divergence.hpp"
#include "dalign/nn.hpp"
#include "dalign/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "dalign 0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path default_output_root() {
  if (const char* env = std::getenv("DALIGN_OUT_DIR"); env && *env) return env;
  return "runs";
}

// <root>/<UTC timestamp>_seed<seed>_<tag>, suffixed when the name is taken.
fs::path make_run_dir(const fs::path& root, std::uint64_t seed, const std::string& tag) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  const std::string base = std::string(stamp) + "_seed" + std::to_string(seed) + "_" + tag;
  fs::create_directories(root);
  fs::path dir = root / base;
  for (int k = 1; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const ordered_json& doc) {
  dalign::write_text_file(path, doc.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------- config

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Expands `<subcommand> ... --config FILE` by inserting the file's
// key=value lines as flags after the subcommand name. Keys use the flag
// spelling without dashes; flags given on the command line win. Boolean
// flags take true/false. Blank lines and lines starting with # are skipped.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (!file || args.size() < 2) return args;
  std::ifstream in(*file);
  if (!in) throw UsageError("cannot read config file " + *file);
  std::vector<std::string> extra;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(*file + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    if (key.empty() || key == "config" || has_flag(args, flag)) continue;
    if (value == "true") {
      extra.push_back(flag);
    } else if (value != "false") {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string kind;
  std::size_t n_labeled = 6;
  std::size_t n_unlabeled = 1000;
  std::size_t n_test = 1000;
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::size_t points = 256;
  std::vector<std::string> classes{"sphere", "cube", "cylinder", "cone"};
  std::string out;
};

void add_gen_data(CLI::App& app, GenDataArgs& a) {
  auto* sub = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  sub->add_option("--config", "key=value config file; flags override it");
  sub->add_option("kind", a.kind, "two-moons or shapes")
      ->required()
      ->check(CLI::IsMember({"two-moons", "shapes"}));
  sub->add_option("--n-labeled", a.n_labeled, "Labeled samples")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--n-unlabeled", a.n_unlabeled, "Unlabeled samples")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--n-test", a.n_test, "Test samples")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--noise", a.noise, "Noise scale (two-moons: Gaussian sd; shapes: jitter radius)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", a.seed, "Generator seed")->capture_default_str();
  sub->add_option("--points", a.points, "Points per cloud (shapes)")->capture_default_str()
      ->check(CLI::Range(std::size_t{8}, std::size_t{1} << 20));
  sub->add_option("--classes", a.classes, "Shape classes (shapes)")->delimiter(',')
      ->capture_default_str();
  sub->add_option("--out", a.out, "Output directory")->required();
}

int run_gen_data(const GenDataArgs& a) {
  const fs::path out = a.out;
  fs::create_directories(out);
  ordered_json manifest{{"tool", kToolVersion}, {"command", "gen-data"}, {"kind", a.kind},
                        {"seed", a.seed}, {"n_labeled", a.n_labeled},
                        {"n_unlabeled", a.n_unlabeled}, {"n_test", a.n_test}, {"noise", a.noise}};
  if (a.kind == "two-moons") {
    dalign::TwoMoonsOptions o{a.n_labeled, a.n_unlabeled, a.n_test, a.noise, a.seed};
    const dalign::TwoMoons d = dalign::gen_two_moons(o);
    dalign::save_vector_csv(out / "labeled.csv", &d.labeled, nullptr);
    dalign::save_vector_csv(out / "unlabeled.csv", nullptr, &d.unlabeled);
    dalign::save_vector_csv(out / "test.csv", &d.test, nullptr);
    manifest["files"] = {"labeled.csv", "unlabeled.csv", "test.csv"};
  } else {
    dalign::ShapesOptions o;
    o.n_labeled = a.n_labeled;
    o.n_unlabeled = a.n_unlabeled;
    o.n_test = a.n_test;
    o.points_per_cloud = a.points;
    o.noise = a.noise;
    o.seed = a.seed;
    o.classes.clear();
    for (const auto& c : a.classes) o.classes.push_back(dalign::parse_shape_class(c));
    const dalign::ShapeSets s = dalign::gen_shapes(o);
    dalign::save_cloud_jsonl(out / "labeled.jsonl", s.labeled);
    dalign::save_cloud_jsonl(out / "unlabeled.jsonl", s.unlabeled);
    dalign::save_cloud_jsonl(out / "test.jsonl", s.test);
    manifest["points"] = a.points;
    manifest["classes"] = a.classes;
    manifest["files"] = {"labeled.jsonl", "unlabeled.jsonl", "test.jsonl"};
  }
  write_json(out / "manifest.json", manifest);
  std::cout << out.string() << "\n";
  return 0;
}

// -------------------------------------------------------------------- train

struct DataPaths {
  std::string data;
  std::string labeled, unlabeled, test;

  void resolve() {
    const fs::path dir = data;
    if (labeled.empty() && !data.empty()) labeled = (dir / "labeled.csv").string();
    if (unlabeled.empty() && !data.empty()) unlabeled = (dir / "unlabeled.csv").string();
    if (test.empty() && !data.empty() && fs::exists(dir / "test.csv")) {
      test = (dir / "test.csv").string();
    }
    if (labeled.empty() || unlabeled.empty()) {
      throw UsageError("need --data DIR or both --labeled and --unlabeled");
    }
  }
};

void add_data_options(CLI::App* sub, DataPaths& p) {
  sub->add_option("--data", p.data, "Directory with labeled.csv, unlabeled.csv[, test.csv]");
  sub->add_option("--labeled", p.labeled, "Labeled CSV");
  sub->add_option("--unlabeled", p.unlabeled, "Unlabeled CSV");
  sub->add_option("--test", p.test, "Test CSV");
}

struct TrainArgs {
  DataPaths paths;
  std::string variant = "ada";
  dalign::TrainingConfig cfg;
  std::vector<std::size_t> feature_hidden{32, 32};
  std::size_t feature_width = 8;
  std::vector<std::size_t> disc_hidden{64, 64};
  std::string activation = "tanh";
  std::string out_dir;
  std::string run_dir;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train a network on a vector dataset");
  sub->add_option("--config", "key=value config file; flags override it");
  add_data_options(sub, a.paths);
  auto& c = a.cfg;
  sub->add_option("--variant", a.variant, "supervised, das_only, sas_only, ada, ada_ict, ada_ent")
      ->capture_default_str()
      ->check(CLI::IsMember({"supervised", "das_only", "sas_only", "ada", "ada_ict", "ada_ent"}));
  sub->add_option("--gamma", c.gamma, "Domain-loss weight")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--alpha", c.alpha, "Beta(alpha, alpha) mixup shape")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--epochs", c.epochs, "Passes over the unlabeled set")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", c.batch_size, "Samples per domain per step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--lr-decay-start", c.lr_decay_start,
                  "Fraction of training after which the rate decays linearly to 0")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--seed", c.seed, "Training seed")->capture_default_str();
  sub->add_option("--ict-weight-start", c.ict_weight_start, "Consistency weight at epoch 0")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--ict-weight", c.ict_weight_end, "Consistency weight after the ramp")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--ict-ramp", c.ict_ramp_epochs, "Ramp length in epochs")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--ema-decay", c.ema_decay, "Teacher EMA decay in [0, 1)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.999999999));
  sub->add_flag("--teacher-cross-set-labels", c.teacher_cross_set_labels,
                "Teacher pseudo-labels for cross-set mixes too (ada_ict)");
  sub->add_option("--entropy-weight", c.entropy_weight, "Entropy weight (ada_ent)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--proxy-every", c.proxy_every, "Proxy divergence every k epochs (0: ends only)")
      ->capture_default_str();
  sub->add_option("--proxy-splits", c.proxy.splits, "Train/holdout splits for the proxy")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--feature-hidden", a.feature_hidden, "Hidden widths of g")->delimiter(',')
      ->capture_default_str();
  sub->add_option("--feature-width", a.feature_width, "Output width of g")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--disc-hidden", a.disc_hidden, "Hidden widths of the discriminator")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--activation", a.activation, "tanh or relu")->capture_default_str()
      ->check(CLI::IsMember({"tanh", "relu"}));
  sub->add_option("--out-dir", a.out_dir, "Root for run directories (default $DALIGN_OUT_DIR or runs)");
  sub->add_option("--run-dir", a.run_dir, "Exact run directory (no timestamp)");
}

ordered_json config_json(const TrainArgs& a, const dalign::TrainingConfig& c,
                         const dalign::NetworkSpec& spec) {
  ordered_json j;
  j["variant"] = dalign::variant_name(c.variant);
  j["gamma"] = c.gamma;
  j["alpha"] = c.alpha;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.learning_rate;
  j["lr_decay_start"] = c.lr_decay_start;
  j["seed"] = c.seed;
  j["ict_weight_start"] = c.ict_weight_start;
  j["ict_weight"] = c.ict_weight_end;
  j["ict_ramp"] = c.ict_ramp_epochs;
  j["ema_decay"] = c.ema_decay;
  j["teacher_cross_set_labels"] = c.teacher_cross_set_labels;
  j["entropy_weight"] = c.entropy_weight;
  j["proxy_every"] = c.proxy_every;
  j["proxy"] = {{"holdout_fraction", c.proxy.holdout_fraction}, {"splits", c.proxy.splits},
                {"iterations", c.proxy.iterations}, {"learning_rate", c.proxy.learning_rate},
                {"l2", c.proxy.l2}};
  j["network"] = {{"feature_widths", spec.feature_widths},
                  {"class_count", spec.class_count},
                  {"discriminator_hidden", spec.discriminator_hidden},
                  {"activation", dalign::activation_name(spec.activation)},
                  {"grl_scale", spec.grl_scale}};
  j["data"] = {{"labeled", a.paths.labeled}, {"unlabeled", a.paths.unlabeled},
               {"test", a.paths.test}};
  return j;
}

int run_train(TrainArgs a) {
  a.paths.resolve();
  auto& c = a.cfg;
  c.variant = dalign::parse_variant(a.variant);
  if (c.variant == dalign::Variant::das_only && c.gamma == 0.0) {
    std::cerr << "warning: --gamma 0 with --variant das_only leaves distribution alignment "
                 "inert; this is plain supervised training\n";
  }
  const dalign::VectorFile lab = dalign::load_vector_csv(a.paths.labeled);
  const dalign::VectorFile unl = dalign::load_vector_csv(a.paths.unlabeled);
  std::optional<dalign::VectorFile> tst;
  if (!a.paths.test.empty()) tst = dalign::load_vector_csv(a.paths.test);
  if (lab.labeled.size() == 0) throw UsageError("labeled file has no labeled rows");
  dalign::UnlabeledSet unlabeled = unl.unlabeled;
  if (unlabeled.size() == 0) throw UsageError("unlabeled file has no unlabeled rows");
  const std::size_t classes =
      std::max({lab.labeled.num_classes, tst ? tst->labeled.num_classes : std::size_t{2}});

  auto& spec = c.network;
  spec.feature_widths.assign(1, lab.labeled.x.cols());
  spec.feature_widths.insert(spec.feature_widths.end(), a.feature_hidden.begin(),
                             a.feature_hidden.end());
  spec.feature_widths.push_back(a.feature_width);
  spec.class_count = classes;
  spec.discriminator_hidden = a.disc_hidden;
  spec.activation = dalign::parse_activation(a.activation);
  spec.seed = c.seed;
  c.validate();

  const fs::path dir = a.run_dir.empty()
                           ? make_run_dir(a.out_dir.empty() ? default_output_root() : fs::path(a.out_dir),
                                          c.seed, a.variant)
                           : fs::path(a.run_dir);
  fs::create_directories(dir);
  ordered_json manifest{{"tool", kToolVersion}, {"command", "train"}, {"seed", c.seed}};
  manifest["config"] = config_json(a, c, spec);
  manifest["artifacts"] = {{"metrics", "metrics.csv"}, {"checkpoint", "checkpoint.bin"},
                           {"report", "report.txt"}, {"timing", "timing.csv"}};
  write_json(dir / "manifest.json", manifest);

  dalign::LabeledSet labeled = lab.labeled;
  labeled.num_classes = classes;
  std::optional<dalign::LabeledSet> test;
  if (tst) {
    test = tst->labeled;
    test->num_classes = classes;
  }

  std::ofstream metrics(dir / "metrics.csv");
  std::ofstream timing(dir / "timing.csv");
  if (!metrics || !timing) throw std::runtime_error("cannot write into " + dir.string());
  metrics << dalign::metrics_csv_header() << "\n";
  timing << "epoch,wall_seconds\n";
  const dalign::TrainingResult result =
      dalign::train(c, labeled, unlabeled, test ? &*test : nullptr,
                    [&](const dalign::EpochMetrics& m) {
                      metrics << dalign::metrics_csv_row(m) << "\n";
                      timing << m.epoch << "," << format_double(m.wall_seconds) << "\n";
                    });
  metrics.close();
  timing.close();
  dalign::save_checkpoint(dir / "checkpoint.bin", result.network);

  std::ostringstream report;
  const auto train_eval = dalign::evaluate(result.network, labeled);
  report << "variant=" << dalign::variant_name(c.variant) << "\n"
         << "seed=" << c.seed << "\n"
         << "epochs=" << c.epochs << "\n"
         << "train_accuracy=" << format_double(train_eval.accuracy) << "\n";
  if (result.test) {
    report << "test_accuracy=" << format_double(result.test->accuracy) << "\n";
    for (std::size_t k = 0; k < result.test->per_class_accuracy.size(); ++k) {
      report << "test_accuracy_class" << k << "="
             << format_double(result.test->per_class_accuracy[k]) << "\n";
    }
  }
  report << "proxy_divergence_initial=" << format_double(result.initial_proxy.value) << "\n"
         << "proxy_divergence_final=" << format_double(result.final_proxy.value) << "\n";
  dalign::write_text_file(dir / "report.txt", report.str());
  std::cout << "run_dir=" << dir.string() << "\n" << report.str();
  return 0;
}

// ---------------------------------------------------------------- mmd-curve

struct MmdCurveArgs {
  std::vector<std::size_t> n_values{4, 8, 16, 32, 64, 128, 256, 512, 1024};
  std::size_t resamples = 100;
  std::size_t n_unlabeled = 1000;
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

void add_mmd_curve(CLI::App& app, MmdCurveArgs& a) {
  auto* sub = app.add_subcommand("mmd-curve", "MMD between resampled labeled sets and a fixed unlabeled set");
  sub->add_option("--config", "key=value config file; flags override it");
  sub->add_option("--n-values", a.n_values, "Labeled set sizes")->delimiter(',')
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--resamples", a.resamples, "Draws per size")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--n-unlabeled", a.n_unlabeled, "Unlabeled set size")->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
  sub->add_option("--noise", a.noise, "Two-moons noise sd")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", a.seed, "Seed")->capture_default_str();
  sub->add_option("--out", a.out, "Output directory")->required();
}

int run_mmd_curve(const MmdCurveArgs& a) {
  const fs::path out = a.out;
  fs::create_directories(out);
  ordered_json manifest{{"tool", kToolVersion}, {"command", "mmd-curve"}, {"seed", a.seed},
                        {"n_values", a.n_values}, {"resamples", a.resamples},
                        {"n_unlabeled", a.n_unlabeled}, {"noise", a.noise},
                        {"files", {"mmd_curve.csv", "mmd_curve.svg"}}};
  write_json(out / "manifest.json", manifest);
  const dalign::Rng root(a.seed);
  dalign::Rng unl_rng = root.stream("data-gen/unlabeled");
  const dalign::Tensor unlabeled = dalign::sample_two_moons(a.n_unlabeled, a.noise, unl_rng, nullptr);
  const auto curve = dalign::mmd_sampling_curve(
      unlabeled,
      [&](std::size_t n, dalign::Rng& rng) { return dalign::sample_two_moons(n, a.noise, rng, nullptr); },
      a.n_values, a.resamples, a.seed);
  std::ostringstream csv;
  csv << "n,mean_mmd,std_mmd\n";
  dalign::Series series{"mean MMD", {}, {}, {}, "#1f77b4"};
  for (const auto& p : curve) {
    csv << p.n << "," << format_double(p.mean) << "," << format_double(p.stddev) << "\n";
    series.x.push_back(static_cast<double>(p.n));
    series.y.push_back(p.mean);
    series.error.push_back(p.stddev);
  }
  dalign::write_text_file(out / "mmd_curve.csv", csv.str());
  dalign::SvgOptions svg;
  svg.title = "MMD vs labeled set size";
  svg.log_x = true;
  dalign::emit_svg_lines(std::span<const dalign::Series>(&series, 1), out / "mmd_curve.svg", svg);
  std::cout << csv.str();
  return 0;
}

// ------------------------------------------------------------- bound-report

struct BoundArgs {
  std::string checkpoint;
  DataPaths paths;
  double delta = 0.05;
  std::uint64_t seed = 0;
  std::size_t splits = 1;
  std::string out;
};

void add_bound_report(CLI::App& app, BoundArgs& a) {
  auto* sub = app.add_subcommand("bound-report", "Generalization bound terms for a trained network");
  sub->add_option("--config", "key=value config file; flags override it");
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint from train")->required()
      ->check(CLI::ExistingFile);
  add_data_options(sub, a.paths);
  sub->add_option("--delta", a.delta, "Confidence parameter in (0, 1)")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0))
      ->check([](const std::string& s) {
        const double d = std::strtod(s.c_str(), nullptr);
        return d > 0.0 && d < 1.0 ? std::string() : std::string("delta must lie strictly inside (0, 1)");
      });
  sub->add_option("--seed", a.seed, "Seed for the proxy discriminator")->capture_default_str();
  sub->add_option("--proxy-splits", a.splits, "Train/holdout splits for the proxy")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--out", a.out, "Directory for bound_report.txt and bound_report.csv");
}

int run_bound_report(BoundArgs a) {
  a.paths.resolve();
  const dalign::AdaNetwork net = dalign::load_checkpoint(a.checkpoint);
  const dalign::VectorFile lab = dalign::load_vector_csv(a.paths.labeled);
  const dalign::VectorFile unl = dalign::load_vector_csv(a.paths.unlabeled);
  if (lab.labeled.size() == 0) throw UsageError("labeled file has no labeled rows");
  if (unl.unlabeled.size() == 0) throw UsageError("unlabeled file has no unlabeled rows");
  const double labeled_error = dalign::evaluate(net, lab.labeled).error_rate();
  dalign::ProxyOptions po;
  po.seed = a.seed;
  po.splits = a.splits;
  const auto proxy = dalign::proxy_h_divergence(net, lab.labeled.x, unl.unlabeled.x, po);
  std::optional<double> test_error;
  if (!a.paths.test.empty()) {
    test_error = dalign::evaluate(net, dalign::load_vector_csv(a.paths.test).labeled).error_rate();
  }
  const dalign::BoundReport r = dalign::bound_report(labeled_error, proxy.value, lab.labeled.size(),
                                                     unl.unlabeled.size(), a.delta, test_error);
  const std::string text = dalign::format_key_value(r);
  std::cout << text;
  if (!a.out.empty()) {
    const fs::path out = a.out;
    fs::create_directories(out);
    dalign::write_text_file(out / "bound_report.txt", text);
    dalign::write_text_file(out / "bound_report.csv",
                            dalign::bound_csv_header() + "\n" + dalign::bound_csv_row(r) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised learning by empirical distribution alignment"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  GenDataArgs gen;
  TrainArgs train;
  MmdCurveArgs curve;
  BoundArgs bound;
  add_gen_data(app, gen);
  add_train(app, train);
  add_mmd_curve(app, curve);
  add_bound_report(app, bound);
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args.insert(args.begin(), argv[0]);
    args = expand_config(std::move(args));
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (app.got_subcommand("gen-data")) return run_gen_data(gen);
    if (app.got_subcommand("train")) return run_train(train);
    if (app.got_subcommand("mmd-curve")) return run_mmd_curve(curve);
    if (app.got_subcommand("bound-report")) return run_bound_report(bound);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
