#pragma once

// Paired-run replicability measurement: run an algorithm twice with shared
// internal randomness and independent environment streams, compare outputs
// exactly, and score accuracy against ground truth (the DP oracle for MDPs,
// closed-form targets for the estimators).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "replin/estimators.hpp"
#include "replin/io.hpp"
#include "replin/linear_mdp.hpp"
#include "replin/policy.hpp"
#include "replin/random.hpp"
#include "replin/rl.hpp"

namespace replin {

enum class AlgorithmId { kRidge, kCov, kGenerative, kUcb };

inline std::string to_string(AlgorithmId id) {
  switch (id) {
    case AlgorithmId::kRidge: return "ridge";
    case AlgorithmId::kCov: return "cov";
    case AlgorithmId::kGenerative: return "generative";
    case AlgorithmId::kUcb: return "ucb";
  }
  return "?";
}

// Synthetic regression task: x drawn uniformly from design_points when given,
// otherwise uniformly from the unit sphere; y = <theta, x> + bounded noise.
struct RegressionTask {
  std::size_t dim = 1;
  Vector theta;
  double noise_bound = 0.1;
  std::size_t num_samples = 100;
  std::vector<Vector> design_points;  // empty = unit sphere
  RidgeConfig cfg;
};

// Synthetic second-moment task: x drawn uniformly from design_points
// (defaults to the standard basis, true moment I/d).
struct MomentTask {
  std::size_t dim = 1;
  std::vector<Vector> design_points;  // empty = standard basis
  CovConfig cfg;
  Matrix true_moment;  // empty = I/len(design_points-ish), see make_default
};

struct TrialPlan {
  AlgorithmId algorithm = AlgorithmId::kRidge;
  std::size_t num_pairs = 1;           // R
  std::uint64_t master_seed = 1;       // base for the shared internal seeds
  std::uint64_t env_seed = 2;          // base for the independent env streams
  bool shared_env = false;             // diagnostic: same env stream both runs

  RegressionTask regression;           // used by kRidge
  MomentTask moment;                   // used by kCov
  LinearMDPSpec mdp;                   // used by kGenerative / kUcb
  CoreSet coreset;                     // used by kGenerative
  LsviConfig lsvi;
  UcbConfig ucb;
};

struct PairRecord {
  std::size_t pair_index = 0;
  bool exact_equal = false;
  double action_agreement = 1.0;       // full-state fraction; 1.0 or exact for estimators
  double error_run1 = 0.0;             // oracle suboptimality / parameter error
  double error_run2 = 0.0;
  bool failed = false;                 // algorithm error aborted the pair
  std::string failure;
  std::vector<double> round_values_run1;  // UCB only: exact value per round
};

struct PairedRunReport {
  AlgorithmId algorithm = AlgorithmId::kRidge;
  std::vector<PairRecord> pairs;
  double replicability_rate = 0.0;
  double rate_ci_low = 0.0;            // binomial normal approx, 95%
  double rate_ci_high = 0.0;
  double mean_error = 0.0;
  double max_error = 0.0;
  double wall_clock_seconds = 0.0;

  double agreement_rate() const {
    if (pairs.empty()) return 0.0;
    double s = 0.0;
    for (const PairRecord& p : pairs) s += (p.action_agreement == 1.0) ? 1.0 : 0.0;
    return s / static_cast<double>(pairs.size());
  }
};

namespace detail {

inline Vector sphere_point(RandomStream& rs, std::size_t d) {
  Vector x(d);
  double n = 0.0;
  do {
    for (std::size_t i = 0; i < d; ++i) x[i] = sample_normal(rs);
    n = norm2(x);
  } while (n < 1e-12);
  for (double& v : x) v /= n;
  return x;
}

inline LabeledDataset draw_regression_data(const RegressionTask& task,
                                           RandomStream& rs) {
  LabeledDataset data;
  data.dim = task.dim;
  for (std::size_t i = 0; i < task.num_samples; ++i) {
    Vector x = task.design_points.empty()
                   ? sphere_point(rs, task.dim)
                   : task.design_points[rs.next_word() %
                                        task.design_points.size()];
    const double noise = rs.next_uniform(-task.noise_bound, task.noise_bound);
    const double y = dot(task.theta, x) + noise;
    data.add(std::move(x), y);
  }
  data.block_sizes = {task.num_samples};
  return data;
}

inline std::vector<Vector> moment_pool(const MomentTask& task) {
  if (!task.design_points.empty()) return task.design_points;
  std::vector<Vector> basis(task.dim, Vector(task.dim, 0.0));
  for (std::size_t i = 0; i < task.dim; ++i) basis[i][i] = 1.0;
  return basis;
}

inline std::vector<Vector> draw_moment_data(const MomentTask& task,
                                            RandomStream& rs) {
  const std::vector<Vector> pool = moment_pool(task);
  std::vector<Vector> pts;
  const std::size_t n = task.cfg.num_blocks * task.cfg.block_size;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pts.push_back(pool[rs.next_word() % pool.size()]);
  return pts;
}

inline double action_agreement_fraction(
    const std::vector<std::vector<std::size_t>>& a,
    const std::vector<std::vector<std::size_t>>& b) {
  std::size_t total = 0, same = 0;
  for (std::size_t h = 0; h < a.size(); ++h)
    for (std::size_t s = 0; s < a[h].size(); ++s) {
      ++total;
      if (a[h][s] == b[h][s]) ++same;
    }
  return total ? static_cast<double>(same) / static_cast<double>(total) : 1.0;
}

}  // namespace detail

// Executes one trial pair. Exposed for tests; run_paired_trials drives it.
inline PairRecord run_pair(const TrialPlan& plan, std::size_t pair_index,
                           const TabularSolution* oracle) {
  PairRecord rec;
  rec.pair_index = pair_index;
  const SharedRandomness internal =
      SharedRandomness(plan.master_seed).child("internal", pair_index);
  const SharedRandomness env_a =
      SharedRandomness(plan.env_seed).child("env", 2 * pair_index);
  const SharedRandomness env_b = SharedRandomness(plan.env_seed)
      .child("env", plan.shared_env ? 2 * pair_index : 2 * pair_index + 1);
  try {
    switch (plan.algorithm) {
      case AlgorithmId::kRidge: {
        RandomStream rs_a(env_a), rs_b(env_b);
        const LabeledDataset da = detail::draw_regression_data(plan.regression, rs_a);
        const LabeledDataset db = detail::draw_regression_data(plan.regression, rs_b);
        const Vector wa = r_ridge_regression(da, plan.regression.cfg, internal);
        const Vector wb = r_ridge_regression(db, plan.regression.cfg, internal);
        rec.exact_equal = (wa == wb);
        rec.action_agreement = rec.exact_equal ? 1.0 : 0.0;
        Vector diff_a = wa, diff_b = wb;
        for (std::size_t i = 0; i < wa.size(); ++i) {
          diff_a[i] -= plan.regression.theta[i];
          diff_b[i] -= plan.regression.theta[i];
        }
        rec.error_run1 = norm2(diff_a);
        rec.error_run2 = norm2(diff_b);
        break;
      }
      case AlgorithmId::kCov: {
        RandomStream rs_a(env_a), rs_b(env_b);
        const std::vector<Vector> pool = detail::moment_pool(plan.moment);
        auto src_a = [&]() -> const Vector& {
          return pool[rs_a.next_word() % pool.size()];
        };
        auto src_b = [&]() -> const Vector& {
          return pool[rs_b.next_word() % pool.size()];
        };
        const Matrix ma = r_uc_cov_estimation_stream(src_a, plan.moment.dim,
                                                     plan.moment.cfg, internal);
        const Matrix mb = r_uc_cov_estimation_stream(src_b, plan.moment.dim,
                                                     plan.moment.cfg, internal);
        rec.exact_equal = (ma == mb);
        rec.action_agreement = rec.exact_equal ? 1.0 : 0.0;
        rec.error_run1 = frobenius_distance(ma, plan.moment.true_moment);
        rec.error_run2 = frobenius_distance(mb, plan.moment.true_moment);
        break;
      }
      case AlgorithmId::kGenerative: {
        const LinearPolicy pa = r_lsvi_generative(plan.mdp, plan.coreset,
                                                  plan.lsvi, internal, env_a);
        const LinearPolicy pb = r_lsvi_generative(plan.mdp, plan.coreset,
                                                  plan.lsvi, internal, env_b);
        rec.exact_equal = (pa == pb);
        const auto ta = action_table(pa, plan.mdp);
        const auto tb = action_table(pb, plan.mdp);
        rec.action_agreement = detail::action_agreement_fraction(ta, tb);
        auto subopt = [&](const std::vector<std::vector<std::size_t>>& t) {
          const auto v = evaluate_policy(plan.mdp, t);
          double worst = 0.0;
          for (std::size_t s = 0; s < plan.mdp.num_states; ++s)
            worst = std::max(worst,
                             std::abs(oracle->v_star[0][s] - v[0][s]));
          return worst;
        };
        rec.error_run1 = subopt(ta);
        rec.error_run2 = subopt(tb);
        break;
      }
      case AlgorithmId::kUcb: {
        const auto pa = r_lsvi_ucb(plan.mdp, plan.ucb, internal, env_a);
        const auto pb = r_lsvi_ucb(plan.mdp, plan.ucb, internal, env_b);
        rec.exact_equal = (pa == pb);
        double total = 0.0, same = 0.0;
        for (std::size_t i = 0; i < pa.size(); ++i) {
          const auto ta = action_table(pa[i], plan.mdp);
          const auto tb = action_table(pb[i], plan.mdp);
          for (std::size_t h = 0; h < ta.size(); ++h)
            for (std::size_t s = 0; s < ta[h].size(); ++s) {
              total += 1.0;
              if (ta[h][s] == tb[h][s]) same += 1.0;
            }
        }
        rec.action_agreement = total > 0.0 ? same / total : 1.0;
        const double v_star = oracle->value_at(plan.mdp.initial_dist);
        rec.error_run1 = v_star - mixture_value(pa, plan.mdp);
        rec.error_run2 = v_star - mixture_value(pb, plan.mdp);
        rec.round_values_run1.reserve(pa.size());
        for (const LinearPolicy& p : pa)
          rec.round_values_run1.push_back(policy_value(p, plan.mdp));
        break;
      }
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.failure = e.what();
    rec.exact_equal = false;
    rec.action_agreement = 0.0;
  }
  return rec;
}

// Runs R pairs (optionally across worker threads; records merge in pair
// order either way) and aggregates the replicability and accuracy metrics.
inline PairedRunReport run_paired_trials(const TrialPlan& plan,
                                         unsigned jobs = 1) {
  if (plan.num_pairs == 0)
    throw std::invalid_argument("run_paired_trials: need at least one pair");
  const auto t0 = std::chrono::steady_clock::now();
  PairedRunReport report;
  report.algorithm = plan.algorithm;
  report.pairs.resize(plan.num_pairs);

  TabularSolution oracle;
  const bool needs_oracle = plan.algorithm == AlgorithmId::kGenerative ||
                            plan.algorithm == AlgorithmId::kUcb;
  if (needs_oracle) oracle = solve_exact(plan.mdp);

  auto worker = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < plan.num_pairs; i += stride)
      report.pairs[i] = run_pair(plan, i, needs_oracle ? &oracle : nullptr);
  };
  if (jobs <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker, j, jobs);
    for (std::thread& t : threads) t.join();
  }

  double eq = 0.0, err_sum = 0.0, err_max = 0.0;
  for (const PairRecord& p : report.pairs) {
    eq += p.exact_equal ? 1.0 : 0.0;
    err_sum += p.error_run1 + p.error_run2;
    err_max = std::max({err_max, p.error_run1, p.error_run2});
  }
  const double n = static_cast<double>(plan.num_pairs);
  report.replicability_rate = eq / n;
  const double se =
      std::sqrt(std::max(report.replicability_rate *
                             (1.0 - report.replicability_rate) / n,
                         0.0));
  report.rate_ci_low = report.replicability_rate - 1.96 * se;
  report.rate_ci_high = report.replicability_rate + 1.96 * se;
  report.mean_error = err_sum / (2.0 * n);
  report.max_error = err_max;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// Applies a named numeric parameter to a plan copy. Supported names:
// "N" (regression sample count), "M" (cov block size / lsvi samples / ucb
// trajectories), "T" (ucb rounds), "R" (trial pairs).
inline void set_plan_parameter(TrialPlan& plan, const std::string& name,
                               double value) {
  const auto as_count = [&](double v) {
    if (v < 1.0) throw std::invalid_argument("parameter must be >= 1");
    return static_cast<std::size_t>(v);
  };
  if (name == "N") {
    plan.regression.num_samples = as_count(value);
  } else if (name == "M") {
    switch (plan.algorithm) {
      case AlgorithmId::kCov: plan.moment.cfg.block_size = as_count(value); break;
      case AlgorithmId::kGenerative: plan.lsvi.samples_override = as_count(value); break;
      case AlgorithmId::kUcb: plan.ucb.trajectories_override = as_count(value); break;
      default:
        throw std::invalid_argument("parameter M not applicable to this algorithm");
    }
  } else if (name == "T") {
    if (plan.algorithm == AlgorithmId::kUcb)
      plan.ucb.rounds_override = as_count(value);
    else if (plan.algorithm == AlgorithmId::kCov)
      plan.moment.cfg.num_blocks = as_count(value);
    else
      throw std::invalid_argument("parameter T not applicable to this algorithm");
  } else if (name == "R") {
    plan.num_pairs = as_count(value);
  } else {
    throw std::invalid_argument("unknown sweep parameter: " + name);
  }
}

struct SweepEntry {
  double value = 0.0;
  PairedRunReport report;
};

inline std::vector<SweepEntry> sweep(const TrialPlan& plan_template,
                                     const std::string& parameter,
                                     const std::vector<double>& values,
                                     unsigned jobs = 1) {
  std::vector<SweepEntry> out;
  for (double v : values) {
    TrialPlan plan = plan_template;
    set_plan_parameter(plan, parameter, v);
    out.push_back({v, run_paired_trials(plan, jobs)});
  }
  return out;
}

// Mass of the most common output across R runs (exact equality), the
// mode-mass view of replicability; the paired Def.-style rate stays primary.
template <typename T>
double mode_mass(const std::vector<T>& outputs) {
  if (outputs.empty()) throw std::invalid_argument("mode_mass: no outputs");
  std::size_t best = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < outputs.size(); ++j)
      if (outputs[j] == outputs[i]) ++count;
    best = std::max(best, count);
  }
  return static_cast<double>(best) / static_cast<double>(outputs.size());
}

struct CalibrationResult {
  double constant = 0.0;
  bool success = false;
  std::vector<std::pair<double, double>> evidence;  // (constant, rate)
};

// Bisection over a schedule constant (monotone response assumed) until the
// empirical replicability rate reaches target_rate. rate_for_constant maps a
// candidate constant to a measured rate.
inline CalibrationResult calibrate_constant(
    const std::function<double(double)>& rate_for_constant, double target_rate,
    double lo, double hi, int iterations = 12) {
  if (!(lo > 0.0 && hi > lo))
    throw std::invalid_argument("calibrate_constant: bad search bounds");
  CalibrationResult res;
  if (target_rate <= 0.0) {
    res.constant = lo;
    res.success = true;
    return res;
  }
  const double rate_lo = rate_for_constant(lo);
  res.evidence.emplace_back(lo, rate_lo);
  if (rate_lo >= target_rate) {
    res.constant = lo;
    res.success = true;
    return res;
  }
  const double rate_hi = rate_for_constant(hi);
  res.evidence.emplace_back(hi, rate_hi);
  if (rate_hi < target_rate) {
    res.constant = hi;
    res.success = false;  // bounds exhausted
    return res;
  }
  double a = lo, b = hi;
  for (int i = 0; i < iterations; ++i) {
    const double mid = std::exp(0.5 * (std::log(a) + std::log(b)));
    const double rate = rate_for_constant(mid);
    res.evidence.emplace_back(mid, rate);
    if (rate >= target_rate)
      b = mid;
    else
      a = mid;
  }
  res.constant = b;
  res.success = true;
  return res;
}

// ---- Report serialization (CSV + JSON). Wall clock goes only into the JSON
// "wall_clock_seconds" key so payload comparisons can strip it. ----

inline std::string report_to_csv(const PairedRunReport& r) {
  std::ostringstream out;
  out << "pair,exact_equal,action_agreement,error_run1,error_run2,failed\n";
  for (const PairRecord& p : r.pairs)
    out << p.pair_index << ',' << (p.exact_equal ? 1 : 0) << ','
        << fmt_full(p.action_agreement) << ',' << fmt_full(p.error_run1) << ','
        << fmt_full(p.error_run2) << ',' << (p.failed ? 1 : 0) << '\n';
  out << "aggregate,replicability_rate," << fmt_full(r.replicability_rate)
      << '\n';
  out << "aggregate,rate_ci_low," << fmt_full(r.rate_ci_low) << '\n';
  out << "aggregate,rate_ci_high," << fmt_full(r.rate_ci_high) << '\n';
  out << "aggregate,mean_error," << fmt_full(r.mean_error) << '\n';
  out << "aggregate,max_error," << fmt_full(r.max_error) << '\n';
  return out.str();
}

inline nlohmann::json report_to_json(const PairedRunReport& r) {
  nlohmann::json j;
  j["schema"] = "paired-run-report/v1";
  j["algorithm"] = to_string(r.algorithm);
  j["replicability_rate"] = r.replicability_rate;
  j["rate_ci_low"] = r.rate_ci_low;
  j["rate_ci_high"] = r.rate_ci_high;
  j["mean_error"] = r.mean_error;
  j["max_error"] = r.max_error;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  nlohmann::json pairs = nlohmann::json::array();
  for (const PairRecord& p : r.pairs) {
    nlohmann::json jp;
    jp["pair"] = p.pair_index;
    jp["exact_equal"] = p.exact_equal;
    jp["action_agreement"] = p.action_agreement;
    jp["error_run1"] = p.error_run1;
    jp["error_run2"] = p.error_run2;
    jp["failed"] = p.failed;
    if (p.failed) jp["failure"] = p.failure;
    if (!p.round_values_run1.empty())
      jp["round_values_run1"] = p.round_values_run1;
    pairs.push_back(std::move(jp));
  }
  j["pairs"] = std::move(pairs);
  return j;
}

}  // namespace replin
