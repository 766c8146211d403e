#include "nsnet/bp.hpp"

#include <cmath>
#include <string>

namespace nsnet {

namespace ls = logspace;

void BpConfig::validate() const {
  if (max_iters < 1) throw BpError("max_iters must be >= 1");
  if (!(convergence_eps > 0.0)) throw BpError("convergence_eps must be > 0");
  if (!(damping >= 0.0 && damping < 1.0)) throw BpError("damping must lie in [0, 1)");
  if (factor_enum_cap < 1) throw BpError("factor_enum_cap must be >= 1");
}

double clause_message(std::span<const MessagePair> others, bool satisfying_branch) {
  for (const auto& p : others) {
    if (std::abs(ls::lse2(p.satisfying, p.dissatisfying)) > 1e-9) {
      throw BpError("clause_message: incoming pair is not normalized");
    }
  }
  if (satisfying_branch) return 0.0;
  if (others.empty()) return ls::kLogZero;
  double all_unsat = 0.0;
  for (const auto& p : others) all_unsat += p.dissatisfying;
  if (all_unsat >= 0.0) return ls::kLogZero;
  return ls::saturate(ls::log1mexp(all_unsat));
}

namespace {

double message_delta(double a, double b) {
  if (ls::is_zero(a) && ls::is_zero(b)) return 0.0;
  return std::abs(a - b);
}

}  // namespace

BpState bp_run(const FactorGraph& graph, const BpConfig& config, const BpObserver& observer) {
  config.validate();
  const auto slots = static_cast<std::size_t>(graph.num_slots());
  BpState state;
  state.v2c.assign(slots, std::log(0.5));
  state.c2v.assign(slots, 0.0);

  std::vector<double> next_v2c(slots);
  std::vector<double> next_c2v(slots);
  std::vector<MessagePair> others;
  const double lambda = config.damping;

  for (int it = 1; it <= config.max_iters; ++it) {
    // Variable -> clause: sum of the other clauses' messages, then normalize.
    for (int v = 0; v < graph.num_vars(); ++v) {
      const auto adj = graph.var_incidences(v);
      for (int e : adj) {
        double s0 = 0.0;
        double s1 = 0.0;
        for (int f : adj) {
          if (f == e) continue;
          s0 += state.c2v[static_cast<std::size_t>(2 * f)];
          s1 += state.c2v[static_cast<std::size_t>(2 * f + 1)];
        }
        ls::normalize_pair(s0, s1);
        if (lambda > 0.0) {
          s0 = lambda * state.v2c[static_cast<std::size_t>(2 * e)] + (1.0 - lambda) * s0;
          s1 = lambda * state.v2c[static_cast<std::size_t>(2 * e + 1)] + (1.0 - lambda) * s1;
          ls::normalize_pair(s0, s1);
        }
        next_v2c[static_cast<std::size_t>(2 * e)] = s0;
        next_v2c[static_cast<std::size_t>(2 * e + 1)] = s1;
      }
    }

    // Clause -> variable, from the fresh variable messages.
    for (int a = 0; a < graph.num_clauses(); ++a) {
      const int begin = graph.clause_begin(a);
      const int end = graph.clause_end(a);
      for (int e = begin; e < end; ++e) {
        others.clear();
        for (int j = begin; j < end; ++j) {
          if (j == e) continue;
          const int sv = graph.incidence(j).satisfying_value();
          others.push_back({next_v2c[static_cast<std::size_t>(2 * j + sv)],
                            next_v2c[static_cast<std::size_t>(2 * j + 1 - sv)]});
        }
        const auto& inc = graph.incidence(e);
        for (int x = 0; x < 2; ++x) {
          double msg = clause_message(others, inc.satisfies(x));
          const auto idx = static_cast<std::size_t>(2 * e + x);
          if (lambda > 0.0) msg = ls::saturate(lambda * state.c2v[idx] + (1.0 - lambda) * msg);
          next_c2v[idx] = msg;
        }
      }
    }

    double delta = 0.0;
    for (std::size_t i = 0; i < slots; ++i) {
      delta = std::max(delta, message_delta(next_v2c[i], state.v2c[i]));
      delta = std::max(delta, message_delta(next_c2v[i], state.c2v[i]));
    }
    state.v2c.swap(next_v2c);
    state.c2v.swap(next_c2v);
    state.iterations_run = it;
    if (observer) observer(it, state);
    if (delta < config.convergence_eps) {
      state.converged = true;
      break;
    }
  }
  return state;
}

Marginals bp_marginals(const BpState& state, const FactorGraph& graph) {
  std::vector<double> p1(static_cast<std::size_t>(graph.num_vars()));
  for (int v = 0; v < graph.num_vars(); ++v) {
    double s0 = 0.0;
    double s1 = 0.0;
    for (int e : graph.var_incidences(v)) {
      s0 += state.c2v[static_cast<std::size_t>(2 * e)];
      s1 += state.c2v[static_cast<std::size_t>(2 * e + 1)];
    }
    ls::normalize_pair(s0, s1);
    p1[static_cast<std::size_t>(v)] = ls::safe_exp(s1);
  }
  return Marginals(std::move(p1));
}

double bethe_ln_z(const BpState& state, const FactorGraph& graph, int factor_enum_cap) {
  double factor_term = 0.0;
  std::vector<double> weights;
  for (int a = 0; a < graph.num_clauses(); ++a) {
    const int begin = graph.clause_begin(a);
    const int len = graph.clause_size(a);
    if (len > factor_enum_cap) {
      throw BpError("clause " + std::to_string(a + 1) + " has " + std::to_string(len) +
                    " literals, above the factor enumeration cap of " +
                    std::to_string(factor_enum_cap));
    }
    unsigned all_unsat = 0;
    for (int j = 0; j < len; ++j) {
      if (!graph.incidence(begin + j).positive) all_unsat |= 1u << j;
    }
    weights.clear();
    for (unsigned code = 0; code < (1u << len); ++code) {
      if (code == all_unsat) continue;
      double w = 0.0;
      for (int j = 0; j < len; ++j) {
        const int x = static_cast<int>((code >> j) & 1u);
        w += state.v2c[static_cast<std::size_t>(2 * (begin + j) + x)];
      }
      weights.push_back(w);
    }
    const double z = ls::lse(weights);
    for (double w : weights) factor_term += ls::plogp(ls::saturate(w - z));
  }

  double var_term = 0.0;
  for (int v = 0; v < graph.num_vars(); ++v) {
    double s0 = 0.0;
    double s1 = 0.0;
    for (int e : graph.var_incidences(v)) {
      s0 += state.c2v[static_cast<std::size_t>(2 * e)];
      s1 += state.c2v[static_cast<std::size_t>(2 * e + 1)];
    }
    ls::normalize_pair(s0, s1);
    var_term += (graph.var_degree(v) - 1) * (ls::plogp(s0) + ls::plogp(s1));
  }
  return -factor_term + var_term;
}

}  // namespace nsnet
