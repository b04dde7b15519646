#pragma once

// Linear greedy policies: per-step weight vectors, optionally with a UCB
// bonus (scale beta and SPD matrices Lambda_h). Action selection is the
// argmax of min{H, <w_h, phi> + beta * sqrt(phi^T Lambda_h^-1 phi)} with ties
// broken toward the lowest action index.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "replin/io.hpp"
#include "replin/linear_mdp.hpp"
#include "replin/matrix.hpp"

namespace replin {

struct LinearPolicy {
  std::vector<Vector> weights;      // one per step h
  double value_cap = 0.0;           // H
  bool has_bonus = false;
  double beta = 0.0;
  std::vector<Matrix> lambda_bar;   // SPD bonus matrices, one per step

  bool operator==(const LinearPolicy& o) const = default;

  double bonus(const Vector& x, std::size_t h) const {
    if (!has_bonus) return 0.0;
    // phi^T Lambda^-1 phi via an SPD solve; Lambda has min eigenvalue >= the
    // ridge regularizer, so this is well posed.
    const Vector y = spd_solve(lambda_bar[h], x);
    const double q = dot(x, y);
    return beta * std::sqrt(std::max(q, 0.0));
  }

  double q_value(const Vector& x, std::size_t h, const Vector& w) const {
    return std::min(value_cap, dot(w, x) + bonus(x, h));
  }

  double q_value(const LinearMDPSpec& spec, std::size_t s, std::size_t a,
                 std::size_t h) const {
    return q_value(spec.phi(s, a), h, weights[h]);
  }
};

// Deterministic argmax over actions, lowest index wins ties.
inline std::size_t act(const LinearPolicy& policy, const LinearMDPSpec& spec,
                       std::size_t s, std::size_t h) {
  std::size_t best_a = 0;
  double best = policy.q_value(spec, s, 0, h);
  for (std::size_t a = 1; a < spec.num_actions; ++a) {
    const double q = policy.q_value(spec, s, a, h);
    if (q > best) {
      best = q;
      best_a = a;
    }
  }
  return best_a;
}

// Tabular action map induced by the policy, for exact DP evaluation.
inline std::vector<std::vector<std::size_t>> action_table(
    const LinearPolicy& policy, const LinearMDPSpec& spec) {
  std::vector<std::vector<std::size_t>> table(
      spec.horizon, std::vector<std::size_t>(spec.num_states, 0));
  for (std::size_t h = 0; h < spec.horizon; ++h)
    for (std::size_t s = 0; s < spec.num_states; ++s)
      table[h][s] = act(policy, spec, s, h);
  return table;
}

// Exact value of the policy's greedy action map from the initial
// distribution.
inline double policy_value(const LinearPolicy& policy,
                           const LinearMDPSpec& spec) {
  const auto v = evaluate_policy(spec, action_table(policy, spec));
  return dot(v[0], spec.initial_dist);
}

inline std::string serialize_policy(const LinearPolicy& p) {
  std::ostringstream out;
  const std::size_t h_count = p.weights.size();
  const std::size_t d = h_count ? p.weights[0].size() : 0;
  out << "linear-policy v1\n";
  out << h_count << ' ' << d << ' ' << fmt_full(p.value_cap) << ' '
      << (p.has_bonus ? 1 : 0) << '\n';
  for (const Vector& w : p.weights) {
    for (std::size_t i = 0; i < w.size(); ++i)
      out << (i ? " " : "") << fmt_full(w[i]);
    out << '\n';
  }
  if (p.has_bonus) {
    out << "beta " << fmt_full(p.beta) << '\n';
    for (const Matrix& m : p.lambda_bar)
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j)
          out << (j ? " " : "") << fmt_full(m(i, j));
        out << '\n';
      }
  }
  return out.str();
}

inline LinearPolicy parse_policy(const std::string& body) {
  std::istringstream in(body);
  std::string header, version;
  in >> header >> version;
  if (header != "linear-policy" || version != "v1")
    throw std::runtime_error("parse_policy: unrecognized header");
  std::size_t h_count = 0, d = 0;
  int bonus_flag = 0;
  LinearPolicy p;
  in >> h_count >> d >> p.value_cap >> bonus_flag;
  if (!in) throw std::runtime_error("parse_policy: bad header line");
  for (std::size_t h = 0; h < h_count; ++h) {
    Vector w(d);
    for (double& x : w)
      if (!(in >> x)) throw std::runtime_error("parse_policy: truncated weights");
    p.weights.push_back(std::move(w));
  }
  if (bonus_flag) {
    p.has_bonus = true;
    std::string tag;
    in >> tag >> p.beta;
    if (tag != "beta") throw std::runtime_error("parse_policy: expected beta");
    for (std::size_t h = 0; h < h_count; ++h) {
      Matrix m(d, d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          if (!(in >> m(i, j)))
            throw std::runtime_error("parse_policy: truncated bonus matrix");
      p.lambda_bar.push_back(std::move(m));
    }
  }
  return p;
}

}  // namespace replin
