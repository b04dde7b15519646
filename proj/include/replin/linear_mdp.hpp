#pragma once

// Finite synthetic linear MDPs: construction, validation, core sets,
// generative sampling, episodic rollout, and an exact backward-induction
// oracle used as ground truth throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "replin/io.hpp"
#include "replin/matrix.hpp"
#include "replin/random.hpp"

namespace replin {

// Finite-state finite-action horizon-H MDP whose rewards and transitions are
// exactly linear in a d-dimensional feature map:
//   R_h(s,a) = <phi(s,a), theta_h>,  P_h(.|s,a) = phi(s,a)^T mu_h.
struct LinearMDPSpec {
  std::size_t num_states = 0;   // S
  std::size_t num_actions = 0;  // A
  std::size_t horizon = 0;      // H
  std::size_t feature_dim = 0;  // d
  std::vector<Vector> features;   // index s * A + a, each of length d
  std::vector<Vector> theta;      // H vectors of length d
  std::vector<Matrix> mu;         // H matrices, d x S (row j = measure over states)
  Vector initial_dist;            // q, length S

  const Vector& phi(std::size_t s, std::size_t a) const {
    return features[s * num_actions + a];
  }

  double reward(std::size_t s, std::size_t a, std::size_t h) const {
    return dot(phi(s, a), theta[h]);
  }

  Vector transition_probs(std::size_t s, std::size_t a, std::size_t h) const {
    const Vector& x = phi(s, a);
    const Matrix& m = mu[h];
    Vector p(num_states, 0.0);
    for (std::size_t j = 0; j < feature_dim; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      for (std::size_t sp = 0; sp < num_states; ++sp) p[sp] += xj * m(j, sp);
    }
    return p;
  }
};

struct MdpGenOptions {
  // Dirichlet concentration of the feature simplex draws; small values give
  // near-one-hot features, 0 gives exact one-hot (a simplex corner at a
  // random coordinate).
  double feature_concentration = 1.0;
  // Weight each mu row puts on a single random target state; the remaining
  // mass is a Dirichlet(1) spread. 0 gives fully random rows, values near 1
  // give near-deterministic transitions.
  double mu_point_mass = 0.0;
  // Same mixing for the initial distribution q.
  double q_point_mass = 0.0;
  // Sibling mode (requires even S): states come in near-duplicate pairs
  // (2b, 2b+1) whose features differ by a sibling_mix-weighted simplex
  // perturbation, and every mu row splits its mass 50/50 across the two
  // copies of one target pair. Transitions are then genuinely stochastic at
  // every step while the algorithm-visible quantities of the two branches
  // differ only at O(sibling_mix). The two copies share the perturbation
  // direction per action and differ only in its weight, so any score that is
  // smooth in phi orders the actions identically at both copies and the
  // macro-level trajectory stays a function of the policy alone.
  bool sibling_states = false;
  double sibling_mix = 1e-3;
};

namespace detail {

inline double sample_normal(RandomStream& rs) {
  // Box-Muller; one value per call, deterministic consumption order.
  double u1 = rs.next_uniform();
  while (u1 <= 0.0) u1 = rs.next_uniform();
  const double u2 = rs.next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Marsaglia-Tsang gamma sampler (with the shape<1 boost).
inline double sample_gamma(RandomStream& rs, double shape) {
  if (shape < 1.0) {
    const double g = sample_gamma(rs, shape + 1.0);
    double u = rs.next_uniform();
    while (u <= 0.0) u = rs.next_uniform();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double z = sample_normal(rs);
    const double v = 1.0 + c * z;
    if (v <= 0.0) continue;
    const double v3 = v * v * v;
    const double u = rs.next_uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v3;
    if (u > 0.0 &&
        std::log(u) < 0.5 * z * z + d * (1.0 - v3 + std::log(v3))) return d * v3;
  }
}

inline Vector sample_simplex(RandomStream& rs, std::size_t n,
                             double concentration) {
  Vector v(n);
  if (concentration <= 0.0) {  // exact simplex corner
    std::fill(v.begin(), v.end(), 0.0);
    v[rs.next_word() % n] = 1.0;
    return v;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = sample_gamma(rs, concentration);
    sum += v[i];
  }
  if (sum <= 0.0) {  // pathological underflow; fall back to a point mass
    std::fill(v.begin(), v.end(), 0.0);
    v[rs.next_word() % n] = 1.0;
    return v;
  }
  for (double& x : v) x /= sum;
  return v;
}

inline Vector sample_distribution(RandomStream& rs, std::size_t n,
                                  double point_mass) {
  Vector spread = sample_simplex(rs, n, 1.0);
  if (point_mass <= 0.0) return spread;
  const std::size_t target = static_cast<std::size_t>(rs.next_word() % n);
  for (double& x : spread) x *= (1.0 - point_mass);
  spread[target] += point_mass;
  return spread;
}

}  // namespace detail

// Constructs a valid linear MDP: features on the probability simplex (so
// ||phi||_2 <= ||phi||_1 = 1), each mu row a probability distribution over
// states, theta entries in [0,1]. Transitions are then convex mixtures of
// distributions and rewards land in [0,1] by construction.
inline LinearMDPSpec generate_mdp(std::size_t S, std::size_t A, std::size_t H,
                                  std::size_t d, std::uint64_t seed,
                                  const MdpGenOptions& opt = {}) {
  if (S == 0 || A == 0 || H == 0 || d == 0)
    throw std::invalid_argument("generate_mdp: all counts must be >= 1");
  SharedRandomness root(seed);
  LinearMDPSpec spec;
  spec.num_states = S;
  spec.num_actions = A;
  spec.horizon = H;
  spec.feature_dim = d;

  if (opt.sibling_states && S % 2 != 0)
    throw std::invalid_argument("generate_mdp: sibling mode needs even S");

  RandomStream phi_rs(root.child("mdp-gen", 0));
  spec.features.reserve(S * A);
  if (opt.sibling_states) {
    // Paired copies share a base feature and a perturbation direction per
    // action; the second copy mixes the perturbation in at twice the weight
    // (the result stays on the simplex).
    const double mix = opt.sibling_mix;
    for (std::size_t b = 0; b < S / 2; ++b) {
      std::vector<Vector> base(A), noise(A);
      for (std::size_t a = 0; a < A; ++a) {
        base[a] = detail::sample_simplex(phi_rs, d, opt.feature_concentration);
        noise[a] = detail::sample_simplex(phi_rs, d, 1.0);
      }
      for (std::size_t copy = 0; copy < 2; ++copy) {
        const double w = mix * static_cast<double>(copy + 1);
        for (std::size_t a = 0; a < A; ++a) {
          Vector x(d);
          for (std::size_t j = 0; j < d; ++j)
            x[j] = (1.0 - w) * base[a][j] + w * noise[a][j];
          spec.features.push_back(std::move(x));
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < S * A; ++i)
      spec.features.push_back(
          detail::sample_simplex(phi_rs, d, opt.feature_concentration));
  }

  RandomStream theta_rs(root.child("mdp-gen", 1));
  spec.theta.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    spec.theta[h].resize(d);
    for (std::size_t j = 0; j < d; ++j)
      spec.theta[h][j] = theta_rs.next_uniform();
  }

  RandomStream mu_rs(root.child("mdp-gen", 2));
  spec.mu.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    spec.mu[h] = Matrix(d, S);
    for (std::size_t j = 0; j < d; ++j) {
      if (opt.sibling_states) {
        const std::size_t target = static_cast<std::size_t>(
            mu_rs.next_word() % (S / 2));
        spec.mu[h](j, 2 * target) = 0.5;
        spec.mu[h](j, 2 * target + 1) = 0.5;
      } else {
        Vector row = detail::sample_distribution(mu_rs, S, opt.mu_point_mass);
        for (std::size_t sp = 0; sp < S; ++sp) spec.mu[h](j, sp) = row[sp];
      }
    }
  }

  RandomStream q_rs(root.child("mdp-gen", 3));
  if (opt.sibling_states) {
    const std::size_t start = static_cast<std::size_t>(
        q_rs.next_word() % (S / 2));
    spec.initial_dist.assign(S, 0.0);
    spec.initial_dist[2 * start] = 0.5;
    spec.initial_dist[2 * start + 1] = 0.5;
  } else {
    spec.initial_dist = detail::sample_distribution(q_rs, S, opt.q_point_mass);
  }
  return spec;
}

// Returns an empty list iff all LinearMDPSpec invariants hold.
inline std::vector<std::string> validate_mdp(const LinearMDPSpec& spec) {
  std::vector<std::string> out;
  auto complain = [&out](const std::string& msg) { out.push_back(msg); };
  const std::size_t S = spec.num_states, A = spec.num_actions,
                    H = spec.horizon, d = spec.feature_dim;
  if (spec.features.size() != S * A) {
    complain("feature table has wrong size");
    return out;
  }
  if (spec.theta.size() != H || spec.mu.size() != H ||
      spec.initial_dist.size() != S) {
    complain("per-step tables have wrong size");
    return out;
  }
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      if (norm2(spec.phi(s, a)) > 1.0 + 1e-12)
        complain("feature norm > 1 at (s=" + std::to_string(s) +
                 ",a=" + std::to_string(a) + ")");
    }
  }
  for (std::size_t h = 0; h < H; ++h) {
    if (norm2(spec.theta[h]) > sqrt_d + 1e-9)
      complain("||theta|| > sqrt(d) at h=" + std::to_string(h));
    Vector mu_total(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      double row_sum = 0.0;
      for (std::size_t sp = 0; sp < S; ++sp) row_sum += spec.mu[h](j, sp);
      mu_total[j] = row_sum;
    }
    if (norm2(mu_total) > sqrt_d + 1e-9)
      complain("||mu(S)|| > sqrt(d) at h=" + std::to_string(h));
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        const double r = spec.reward(s, a, h);
        if (r < -1e-12 || r > 1.0 + 1e-12)
          complain("reward outside [0,1] at (s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ",h=" + std::to_string(h) + ")");
        Vector p = spec.transition_probs(s, a, h);
        double sum = 0.0;
        for (double v : p) {
          if (v < -1e-12)
            complain("negative transition probability at (s=" +
                     std::to_string(s) + ",a=" + std::to_string(a) +
                     ",h=" + std::to_string(h) + ")");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
          complain("transition row does not sum to 1 at (s=" +
                   std::to_string(s) + ",a=" + std::to_string(a) +
                   ",h=" + std::to_string(h) + ")");
      }
    }
  }
  double q_sum = 0.0;
  for (double v : spec.initial_dist) {
    if (v < -1e-12) complain("negative initial probability");
    q_sum += v;
  }
  if (std::abs(q_sum - 1.0) > 1e-9) complain("initial distribution sum != 1");
  return out;
}

// Weighted set of state-action pairs whose features span the feature domain:
// every phi(s,a) = sum_i eta_i nu_i x_i with ||eta||^2 <= k.
struct CoreSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Vector nu;  // design distribution over pairs
  double k = 0.0;
};

namespace detail {

// Minimum-norm eta with sum_i eta_i nu_i x_i = target; columns of the system
// are nu_i * x_i. Returns ||eta||^2, writes the residual.
inline double min_norm_eta_sq(const std::vector<const Vector*>& xs,
                              const Vector& nu, const Vector& target,
                              double* residual) {
  const std::size_t n = xs.size(), d = target.size();
  Matrix a(d, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) a(j, i) = nu[i] * (*xs[i])[j];
  Vector eta = min_norm_least_squares(a, target, residual);
  return dot(eta, eta);
}

}  // namespace detail

// Greedy max-volume selection: repeatedly picks the feature with the largest
// residual against the span of those already selected, until the residual
// drops below tolerance. nu is uniform over the selection.
inline CoreSet build_coreset(const LinearMDPSpec& spec) {
  const std::size_t n = spec.features.size(), d = spec.feature_dim;
  std::vector<Vector> basis;  // orthonormalized selections
  CoreSet cs;
  constexpr double kSpanTol = 1e-9;
  for (std::size_t round = 0; round < d; ++round) {
    double best = kSpanTol;
    std::size_t best_i = n;
    for (std::size_t i = 0; i < n; ++i) {
      Vector r = spec.features[i];
      for (const Vector& b : basis) {
        const double c = dot(r, b);
        for (std::size_t j = 0; j < d; ++j) r[j] -= c * b[j];
      }
      const double rn = norm2(r);
      if (rn > best) {
        best = rn;
        best_i = i;
      }
    }
    if (best_i == n) break;  // span exhausted
    Vector b = spec.features[best_i];
    for (const Vector& ob : basis) {
      const double c = dot(b, ob);
      for (std::size_t j = 0; j < d; ++j) b[j] -= c * ob[j];
    }
    const double bn = norm2(b);
    for (double& v : b) v /= bn;
    basis.push_back(std::move(b));
    cs.pairs.emplace_back(best_i / spec.num_actions, best_i % spec.num_actions);
  }
  if (cs.pairs.empty())
    throw std::runtime_error("build_coreset: no spanning features found");
  cs.nu.assign(cs.pairs.size(), 1.0 / static_cast<double>(cs.pairs.size()));

  // k = max ||eta||^2 over all (s,a).
  std::vector<const Vector*> xs;
  for (const auto& [s, a] : cs.pairs) xs.push_back(&spec.phi(s, a));
  double k = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double res = 0.0;
    const double e = detail::min_norm_eta_sq(xs, cs.nu, spec.features[i], &res);
    if (res > 1e-8)
      throw std::runtime_error("build_coreset: selection fails to span features");
    k = std::max(k, e);
  }
  cs.k = k;
  return cs;
}

// Independent check of the core-set property: max ||eta||^2 over all (s,a)
// via minimum-norm least squares. Throws if some feature is unrepresentable.
inline double verify_coreset(const LinearMDPSpec& spec, const CoreSet& cs) {
  std::vector<const Vector*> xs;
  for (const auto& [s, a] : cs.pairs) xs.push_back(&spec.phi(s, a));
  double max_eta_sq = 0.0;
  for (const Vector& x : spec.features) {
    double res = 0.0;
    const double e = detail::min_norm_eta_sq(xs, cs.nu, x, &res);
    if (res > 1e-8)
      throw std::runtime_error("verify_coreset: feature outside core-set span");
    max_eta_sq = std::max(max_eta_sq, e);
  }
  return max_eta_sq;
}

// Inverse-CDF draw over the canonical state ordering 0..S-1.
inline std::size_t sample_index(const Vector& probs, double u) {
  double acc = 0.0;
  const std::size_t n = probs.size();
  for (std::size_t i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

// Generative-model access: deterministic reward, sampled next state.
inline std::pair<double, std::size_t> generative_sample(
    const LinearMDPSpec& spec, std::size_t s, std::size_t a, std::size_t h,
    RandomStream& rs) {
  const Vector p = spec.transition_probs(s, a, h);
  return {spec.reward(s, a, h), sample_index(p, rs.next_uniform())};
}

struct TrajectoryStep {
  std::size_t state;
  std::size_t action;
  double reward;
  std::size_t next_state;
};

using Trajectory = std::vector<TrajectoryStep>;

// Rolls one episode: s0 ~ q, then H steps of (act, reward, transition).
// Policy is any callable (state, step) -> action.
template <typename PolicyFn>
Trajectory rollout(const LinearMDPSpec& spec, PolicyFn&& policy,
                   RandomStream& rs) {
  Trajectory traj;
  traj.reserve(spec.horizon);
  std::size_t s = sample_index(spec.initial_dist, rs.next_uniform());
  for (std::size_t h = 0; h < spec.horizon; ++h) {
    const std::size_t a = policy(s, h);
    auto [r, sp] = generative_sample(spec, s, a, h, rs);
    traj.push_back({s, a, r, sp});
    s = sp;
  }
  return traj;
}

struct TabularSolution {
  std::vector<Matrix> q_star;                 // H matrices, S x A
  std::vector<Vector> v_star;                 // H+1 vectors (v_star[H] = 0)
  std::vector<std::vector<std::size_t>> best_action;  // [H][S]

  double value_at(const Vector& initial_dist) const {
    return dot(v_star[0], initial_dist);
  }
};

// Exact backward induction on the finite MDP.
inline TabularSolution solve_exact(const LinearMDPSpec& spec) {
  const std::size_t S = spec.num_states, A = spec.num_actions,
                    H = spec.horizon;
  TabularSolution sol;
  sol.q_star.assign(H, Matrix(S, A));
  sol.v_star.assign(H + 1, Vector(S, 0.0));
  sol.best_action.assign(H, std::vector<std::size_t>(S, 0));
  for (std::size_t h = H; h-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double best = -1.0;
      std::size_t best_a = 0;
      for (std::size_t a = 0; a < A; ++a) {
        const Vector p = spec.transition_probs(s, a, h);
        double q = spec.reward(s, a, h);
        for (std::size_t sp = 0; sp < S; ++sp)
          q += p[sp] * sol.v_star[h + 1][sp];
        sol.q_star[h](s, a) = q;
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      sol.v_star[h][s] = best;
      sol.best_action[h][s] = best_a;
    }
  }
  return sol;
}

// Exact evaluation of a deterministic tabular policy (action per (h, s)).
inline std::vector<Vector> evaluate_policy(
    const LinearMDPSpec& spec,
    const std::vector<std::vector<std::size_t>>& action_table) {
  const std::size_t S = spec.num_states, H = spec.horizon;
  std::vector<Vector> v(H + 1, Vector(S, 0.0));
  for (std::size_t h = H; h-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t a = action_table[h][s];
      const Vector p = spec.transition_probs(s, a, h);
      double q = spec.reward(s, a, h);
      for (std::size_t sp = 0; sp < S; ++sp) q += p[sp] * v[h + 1][sp];
      v[h][s] = q;
    }
  }
  return v;
}

// Exact Q^pi weights: the minimum-norm w with Q^pi_h(s,a) = <phi(s,a), w>
// over all state-action pairs. The MDP is exactly linear, so the fit residual
// is zero up to numerics.
inline Vector exact_policy_weights(
    const LinearMDPSpec& spec,
    const std::vector<std::vector<std::size_t>>& action_table, std::size_t h,
    double* residual = nullptr) {
  const std::size_t S = spec.num_states, A = spec.num_actions,
                    d = spec.feature_dim;
  std::vector<Vector> v = evaluate_policy(spec, action_table);
  Matrix a_mat(S * A, d);
  Vector b(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const Vector& x = spec.phi(s, a);
      for (std::size_t j = 0; j < d; ++j) a_mat(s * A + a, j) = x[j];
      const Vector p = spec.transition_probs(s, a, h);
      double q = spec.reward(s, a, h);
      for (std::size_t sp = 0; sp < S; ++sp) q += p[sp] * v[h + 1][sp];
      b[s * A + a] = q;
    }
  }
  return min_norm_least_squares(a_mat, b, residual);
}

// ---- Serialization: structured text, full-precision decimal. ----

inline std::string serialize_mdp(const LinearMDPSpec& spec) {
  std::ostringstream out;
  out << "linear-mdp v1\n";
  out << spec.num_states << ' ' << spec.num_actions << ' ' << spec.horizon
      << ' ' << spec.feature_dim << '\n';
  auto emit_row = [&out](const Vector& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      out << (i ? " " : "") << fmt_full(v[i]);
    out << '\n';
  };
  out << "phi\n";
  for (const Vector& x : spec.features) emit_row(x);
  out << "theta\n";
  for (const Vector& t : spec.theta) emit_row(t);
  out << "mu\n";
  for (const Matrix& m : spec.mu)
    for (std::size_t j = 0; j < m.rows(); ++j) {
      for (std::size_t sp = 0; sp < m.cols(); ++sp)
        out << (sp ? " " : "") << fmt_full(m(j, sp));
      out << '\n';
    }
  out << "q\n";
  emit_row(spec.initial_dist);
  return out.str();
}

inline LinearMDPSpec parse_mdp(const std::string& body) {
  std::istringstream in(body);
  std::string header, version;
  in >> header >> version;
  if (header != "linear-mdp" || version != "v1")
    throw std::runtime_error("parse_mdp: unrecognized header");
  LinearMDPSpec spec;
  in >> spec.num_states >> spec.num_actions >> spec.horizon >>
      spec.feature_dim;
  if (!in) throw std::runtime_error("parse_mdp: bad dimensions");
  auto expect = [&in](const char* tag) {
    std::string t;
    in >> t;
    if (t != tag)
      throw std::runtime_error(std::string("parse_mdp: expected section ") + tag);
  };
  auto read_row = [&in](std::size_t n) {
    Vector v(n);
    for (double& x : v)
      if (!(in >> x)) throw std::runtime_error("parse_mdp: truncated table");
    return v;
  };
  expect("phi");
  for (std::size_t i = 0; i < spec.num_states * spec.num_actions; ++i)
    spec.features.push_back(read_row(spec.feature_dim));
  expect("theta");
  for (std::size_t h = 0; h < spec.horizon; ++h)
    spec.theta.push_back(read_row(spec.feature_dim));
  expect("mu");
  for (std::size_t h = 0; h < spec.horizon; ++h) {
    Matrix m(spec.feature_dim, spec.num_states);
    for (std::size_t j = 0; j < spec.feature_dim; ++j) {
      Vector row = read_row(spec.num_states);
      for (std::size_t sp = 0; sp < spec.num_states; ++sp) m(j, sp) = row[sp];
    }
    spec.mu.push_back(std::move(m));
  }
  expect("q");
  spec.initial_dist = read_row(spec.num_states);
  return spec;
}

inline void save_mdp(const LinearMDPSpec& spec, const std::string& path) {
  write_text_file(path, serialize_mdp(spec));
}

inline LinearMDPSpec load_mdp(const std::string& path) {
  return parse_mdp(read_text_file(path));
}

}  // namespace replin
