// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <sys/wait.h>

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "assignment_oracle.hpp"
#include "dalign/analysis.hpp"
#include "dalign/assignment.hpp"
#include "dalign/datasets.hpp"
#include "dalign/divergence.hpp"
#include "dalign/trainer.hpp"
#include "objective_oracle.hpp"
#include "support.hpp"

using namespace dalign;
using namespace dalign::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[1024];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TwoMoons ablation_data(std::uint64_t seed) {
  TwoMoonsOptions o;
  o.n_labeled = 6;
  o.n_unlabeled = 1000;
  o.seed = seed;
  return gen_two_moons(o);
}

// Training runs shared between criteria 7, 9 and 10.
class RunCache {
 public:
  const TrainingResult& get(const std::string& key, Variant variant, std::uint64_t seed,
                            const std::function<void(TrainingConfig&)>& tweak = {}) {
    const std::string id = key + "/" + std::to_string(seed);
    if (auto it = runs_.find(id); it != runs_.end()) return it->second;
    TrainingConfig c;
    c.variant = variant;
    c.seed = seed;
    c.epochs = 400;
    if (tweak) tweak(c);
    const TwoMoons d = ablation_data(seed);
    return runs_.emplace(id, train(c, d.labeled, d.unlabeled, &d.test)).first->second;
  }

  const TrainingResult& get(Variant variant, std::uint64_t seed) {
    return get(variant_name(variant), variant, seed);
  }

 private:
  std::map<std::string, TrainingResult> runs_;
};

RunCache& runs() {
  static RunCache cache;
  return cache;
}

// ------------------------------------------------------------------- 1

Outcome gradient_oracle() {
  double worst = 0.0;
  std::string where;
  Rng rng(101);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    NetworkSpec spec;
    spec.feature_widths = {2, 16, 16, 8};
    spec.discriminator_hidden = {16, 16};
    spec.seed = seed;
    const AdaNetwork net = init_network(spec);
    const StepBatch batch = random_step_batch(4, 2, 2, rng);
    Rng mix(seed);
    const PreparedBatch prepared = prepare_batch(Variant::ada, net, batch, 1.0, std::nullopt, mix);
    const GradientCheck check = check_objective_gradient(net, prepared, 1.0, 1e-5);
    if (check.worst > worst) {
      worst = check.worst;
      where = check.worst_parameter;
    }
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 5 networks (worst at %s)", worst, where.c_str())};
}

// ------------------------------------------------------------------- 2

// Random chain of ops on top of `input`; both tapes see the same draws.
NodeId random_chain(Tape& tape, NodeId input, std::size_t cols, Rng rng) {
  NodeId x = input;
  const std::size_t depth = 1 + rng.uniform_index(6);
  for (std::size_t k = 0; k < depth; ++k) {
    switch (rng.uniform_index(6)) {
      case 0: x = tape.tanh(x); break;
      case 1: x = tape.scale(x, rng.uniform(-2.0, 2.0)); break;
      case 2: x = tape.mul(x, tape.leaf(random_tensor({cols}, rng))); break;
      case 3: x = tape.add(x, tape.leaf(random_tensor({cols}, rng))); break;
      case 4: x = tape.matmul(x, tape.leaf(random_tensor({cols, cols}, rng, 0.5))); break;
      default: x = tape.softmax(x);
    }
  }
  return tape.sum(tape.mul(x, tape.leaf(random_tensor({cols}, rng))));
}

Outcome grl_contract() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.uniform_index(4);
    const std::size_t cols = 1 + rng.uniform_index(5);
    const Tensor x = random_tensor({rows, cols}, rng);
    const double scale = rng.uniform(0.0, 4.0);
    const Rng chain = rng.stream("chain/" + std::to_string(trial));

    Tape with;
    const NodeId a = with.leaf(x);
    const NodeId r = with.grl(a, scale);
    if (!(with.value(r) == x)) return {false, "forward pass is not the identity"};
    const Tensor g = with.backward(random_chain(with, r, cols, chain))[a];

    Tape plain;
    const NodeId b = plain.leaf(x);
    const Tensor ref = plain.backward(random_chain(plain, b, cols, chain))[b];
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] + scale * ref[i]));
  }
  return {worst <= 1e-12, fmt("max |g_grl + scale * g_identity| = %.3g over 100 tapes", worst)};
}

// ------------------------------------------------------------------- 3

Outcome auction_oracle() {
  Rng rng(303);
  std::size_t violations = 0, non_bijective = 0;
  double worst_gap = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(7);
    const PointCloud a = random_cloud(n, rng);
    const PointCloud b = random_cloud(n, rng);
    const Assignment r = auction_assign(a, b);
    if (!is_bijection(r.permutation)) ++non_bijective;
    const double optimum = brute_force_optimum(a, b);
    const double gap = r.cost - optimum - static_cast<double>(n) * r.epsilon;
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-12) ++violations;
  }
  return {violations == 0 && non_bijective == 0,
          fmt("%zu bound violations, %zu non-bijections in 1000 instances (max cost - opt - N eps = %.3g)",
              violations, non_bijective, worst_gap)};
}

// ------------------------------------------------------------------- 4

Outcome mmd_curve() {
  const Rng root(1);
  Rng unl = root.stream("data-gen/unlabeled");
  const Tensor reference = sample_two_moons(1000, 0.1, unl, nullptr);
  std::vector<std::size_t> sizes;
  for (std::size_t n = 4; n <= 1024; n *= 2) sizes.push_back(n);
  const auto curve = mmd_sampling_curve(
      reference, [](std::size_t n, Rng& rng) { return sample_two_moons(n, 0.1, rng, nullptr); }, sizes,
      100, 1);
  const double slack = 0.05 * curve.front().mean;
  std::size_t inversions = 0;
  bool large_inversion = false;
  std::string means;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    means += fmt("%s%zu:%.4f", i ? " " : "", curve[i].n, curve[i].mean);
    if (i == 0 || curve[i].mean <= curve[i - 1].mean) continue;
    ++inversions;
    if (curve[i].mean - curve[i - 1].mean > slack) large_inversion = true;
  }
  const double ratio = curve.front().mean / curve.back().mean;
  return {inversions <= 1 && !large_inversion && ratio >= 3.0,
          fmt("ratio n=4/n=1024 %.2f, %zu inversion(s) [%s]", ratio, inversions, means.c_str())};
}

// ------------------------------------------------------------------- 5

Outcome prop1_monte_carlo() {
  const std::size_t n = 200, m = 200, trials = 2000;
  const double eps = 0.2;
  const MmdTailBound bound = prop1_bound(n, m, 1.0, eps);
  // One bandwidth fixed in advance from a pilot draw; any RBF kernel has K = 1.
  Rng pilot(505);
  const double sigma = median_heuristic(sample_two_moons(400, 0.1, pilot, nullptr));
  const Rng root(5);
  std::size_t exceed = 0;
  double largest = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.stream("trial/" + std::to_string(t));
    const Tensor a = sample_two_moons(n, 0.1, rng, nullptr);
    const Tensor b = sample_two_moons(m, 0.1, rng, nullptr);
    const double v = mmd_biased(a, b, sigma).value;
    largest = std::max(largest, v);
    if (v > bound.threshold) ++exceed;
  }
  const double freq = static_cast<double>(exceed) / static_cast<double>(trials);
  return {freq <= bound.raw_bound,
          fmt("exceedance %.4f <= bound %.4f (threshold %.4f, largest MMD %.4f)", freq, bound.raw_bound,
              bound.threshold, largest)};
}

// ------------------------------------------------------------------- 6

Outcome bound_arithmetic() {
  const BoundReport base = bound_report(0.0, 0.0, 6, 1000, 0.05);
  const bool minor_ok = std::abs(base.minor_term - 0.04295) <= 1e-5;
  const bool radius_ok = std::abs(base.supervised_radius - 0.5544) <= 1e-4;
  double worst = 0.0;
  Rng rng(606);
  for (int i = 0; i < 100; ++i) {
    const BoundReport r = bound_report(rng.uniform(), rng.uniform(0.0, 2.0), 1 + rng.uniform_index(50),
                                       1 + rng.uniform_index(5000), rng.uniform(0.001, 0.999));
    std::map<std::string, double> kv;
    std::istringstream in(format_key_value(r));
    for (std::string line; std::getline(in, line);) {
      const auto eq = line.find('=');
      kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    }
    const double sum = kv.at("empirical_labeled_error") + kv.at("divergence_term") + kv.at("minor_term");
    worst = std::max(worst, std::abs(kv.at("bound") - sum));
  }
  return {minor_ok && radius_ok && worst <= 1e-12,
          fmt("minor term %.6f, supervised radius %.6f, max |bound - sum of printed terms| %.3g",
              base.minor_term, base.supervised_radius, worst)};
}

// ------------------------------------------------------------------- 7

std::vector<double> test_accuracies(Variant v, std::size_t seeds) {
  std::vector<double> out;
  for (std::uint64_t s = 1; s <= seeds; ++s) out.push_back(runs().get(v, s).test->accuracy);
  return out;
}

Outcome ablation() {
  const double sup = median(test_accuracies(Variant::supervised, 10));
  const double das = median(test_accuracies(Variant::das_only, 10));
  const double sas = median(test_accuracies(Variant::sas_only, 10));
  const double ada = median(test_accuracies(Variant::ada, 10));
  const bool pass = ada - sup >= 0.05 - 1e-12 && ada >= das && ada >= sas;
  return {pass, fmt("median test accuracy supervised %.4f, das_only %.4f, sas_only %.4f, ada %.4f "
                    "(ada - supervised = %+.2f points)",
                    sup, das, sas, ada, 100.0 * (ada - sup))};
}

// ------------------------------------------------------------------- 8

Outcome energy_claim() {
  std::size_t holds = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const TwoMoons d = ablation_data(seed);
    Rng rng = Rng(seed).stream("energy");
    const MixingEnergy e = mixing_energy(d.labeled.x, d.unlabeled.x, 1.0, rng);
    if (e.mixed_to_unlabeled <= e.labeled_to_unlabeled) ++holds;
  }
  return {holds >= 95, fmt("mixed-to-unlabeled <= labeled-to-unlabeled in %zu/100 seeds", holds)};
}

// ------------------------------------------------------------------- 9

Outcome proxy_direction() {
  std::size_t lower = 0, ties = 0;
  std::string trace;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const TrainingResult& r = runs().get(Variant::ada, s);
    if (r.final_proxy.value < r.initial_proxy.value) ++lower;
    if (r.final_proxy.value == r.initial_proxy.value) ++ties;
    trace += fmt("%s%.3f->%.3f", s > 1 ? " " : "", r.initial_proxy.value, r.final_proxy.value);
  }
  return {lower >= 8, fmt("lower in %zu/10 seeds, %zu ties [%s]", lower, ties, trace.c_str())};
}

// ------------------------------------------------------------------ 10

Outcome ict_sanity() {
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const TrainingResult& ada = runs().get(Variant::ada, s);
    const TrainingResult& ict = runs().get("ict-zero", Variant::ada_ict, s, [](TrainingConfig& c) {
      c.ict_weight_start = 0.0;
      c.ict_weight_end = 0.0;
      c.ema_decay = 0.99;
    });
    if (ada.steps.size() != ict.steps.size()) return {false, "step counts differ"};
    for (std::size_t i = 0; i < ada.steps.size(); ++i) {
      worst = std::max(worst, std::abs(ada.steps[i].classification_loss - ict.steps[i].classification_loss));
    }
  }
  const double ada = median(test_accuracies(Variant::ada, 5));
  const double ict = median(test_accuracies(Variant::ada_ict, 5));
  return {worst <= 1e-9 && ict >= ada - 0.01 - 1e-12,
          fmt("w=0 max per-step loss gap %.3g; ramped median accuracy ada_ict %.4f vs ada %.4f", worst, ict,
              ada)};
}

// ------------------------------------------------------------------ 11

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  const std::string cli = DALIGN_CLI_PATH;
  const fs::path root = fs::temp_directory_path() / "dalign_acceptance_cli";
  fs::remove_all(root);
  std::vector<std::string> mismatched;
  std::size_t compared = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    const std::string data = (dir / "data").string();
    const std::vector<std::string> cmds{
        cli + " gen-data two-moons --n-labeled 6 --n-unlabeled 1000 --seed 1 --out " + data,
        cli + " train --variant ada --epochs 20 --seed 3 --proxy-every 5 --data " + data + " --run-dir " +
            (dir / "train").string(),
        cli + " mmd-curve --n-values 4,16,64 --resamples 20 --seed 2 --out " + (dir / "mmd").string(),
        cli + " bound-report --checkpoint " + (dir / "train" / "checkpoint.bin").string() + " --data " + data +
            " --seed 4 --out " + (dir / "bound").string()};
    for (const auto& c : cmds) {
      if (shell(c) != 0) return {false, "command failed: " + c};
    }
  }
  for (const char* f : {"data/labeled.csv", "data/unlabeled.csv", "data/test.csv", "train/metrics.csv",
                        "mmd/mmd_curve.csv", "bound/bound_report.csv"}) {
    ++compared;
    if (slurp(root / "a" / f) != slurp(root / "b" / f)) mismatched.push_back(f);
  }
  std::string detail = fmt("%zu CSV files compared across gen-data, train, mmd-curve, bound-report",
                           compared);
  for (const auto& m : mismatched) detail += "; differs: " + m;
  return {mismatched.empty(), detail};
}

struct Criterion {
  int id;
  const char* title;
  double time_limit;  // seconds, 0 for none
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient oracle", 10, gradient_oracle},
      {2, "gradient reversal contract", 0, grl_contract},
      {3, "auction oracle", 30, auction_oracle},
      {4, "MMD sampling-bias curve", 120, mmd_curve},
      {5, "MMD tail-bound Monte Carlo", 120, prop1_monte_carlo},
      {6, "bound arithmetic", 0, bound_arithmetic},
      {7, "two-moon ablation ordering", 600, ablation},
      {8, "mixing energy distance", 60, energy_claim},
      {9, "proxy divergence direction", 0, proxy_direction},
      {10, "ICT variant sanity", 0, ict_sanity},
      {11, "CLI determinism", 0, cli_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.time_limit > 0) {
      timing += fmt(" of %.0f s", c.time_limit);
      if (secs > c.time_limit) {
        o.pass = false;
        o.detail += "; over time limit";
      }
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
