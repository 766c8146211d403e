#include "nsnet/nsnet.hpp"

#include <cmath>
#include <type_traits>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "nsnet/logspace.hpp"
#include "nsnet/tape.hpp"

namespace nsnet {

namespace ls = logspace;

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;

inline Eigen::Index row_of(int incidence, int value) {
  return static_cast<Eigen::Index>(2 * incidence + value);
}

template <typename S>
Mat<S> broadcast(const Eigen::VectorXd& h, Eigen::Index rows) {
  return h.cast<S>().transpose().replicate(rows, 1);
}

// Coordinatewise ln(e^a + e^b), symmetric in a and b.
template <typename S>
Arr<S> lse2(const Arr<S>& a, const Arr<S>& b) {
  return a.max(b) + (-(a - b).abs()).exp().log1p();
}

template <typename S>
S log1mexp(S s) {
  return s > S(-0.6931471805599453) ? std::log(-std::expm1(s)) : std::log1p(-std::exp(s));
}

template <typename S>
S saturate(S x) {
  return x < S(ls::kSaturation) ? S(ls::kLogZero) : x;
}

template <typename S>
S plogp(S l) {
  return l < S(ls::kSaturation) ? S(0) : std::exp(l) * l;
}

template <typename S>
void normalize_pair(S& a, S& b) {
  const S hi = std::max(a, b);
  const S ra = a - hi;
  const S rb = b - hi;
  const S z = std::log(std::exp(ra) + std::exp(rb));
  a = saturate(ra - z);
  b = saturate(rb - z);
}

template <typename S>
Mat<S> mlp_apply(const Mlp& mlp, const Mat<S>& x, Mlp::Cache* cache) {
  if constexpr (std::is_same_v<S, double>) {
    return mlp.forward(x, cache);
  } else {
    Mat<S> h = x;
    const auto& layers = mlp.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Mat<S> next = h * layers[l].w.cast<S>().transpose();
      next.rowwise() += layers[l].b.cast<S>().transpose();
      if (l + 1 < layers.size()) next = next.cwiseMax(S(0));
      h = std::move(next);
    }
    return h;
  }
}

// Sum over N(i) \ a of the clause->assignment embeddings, by explicit exclusion.
template <typename S>
Mat<S> exclusion_sum(const FactorGraph& graph, const Mat<S>& c2v) {
  Mat<S> out = Mat<S>::Zero(c2v.rows(), c2v.cols());
  for (int v = 0; v < graph.num_vars(); ++v) {
    const auto adj = graph.var_incidences(v);
    for (int e : adj) {
      for (int f : adj) {
        if (f == e) continue;
        out.row(row_of(e, 0)) += c2v.row(row_of(f, 0));
        out.row(row_of(e, 1)) += c2v.row(row_of(f, 1));
      }
    }
  }
  return out;
}

template <typename S>
Mat<S> pair_rows(const Mat<S>& tilde) {
  const Eigen::Index d = tilde.cols();
  Mat<S> out(tilde.rows(), 2 * d);
  for (Eigen::Index r = 0; r < tilde.rows(); ++r) {
    out.row(r).head(d) = tilde.row(r);
    out.row(r).tail(d) = tilde.row(r ^ 1);
  }
  return out;
}

struct ClausePolicy {
  double empty_floor;
  bool exact;
};

// Dissatisfying branch from the excluded totals, coordinatewise.
template <typename S>
Arr<S> dissatisfying_branch(const Arr<S>& total, const Arr<S>& all_unsat, const ClausePolicy& policy) {
  Arr<S> out(total.size());
  for (Eigen::Index c = 0; c < total.size(); ++c) {
    const S delta = all_unsat[c] - total[c];
    if (policy.exact) {
      out[c] = delta >= S(0) ? S(ls::kLogZero) : saturate<S>(total[c] + log1mexp<S>(delta));
    } else {
      out[c] = total[c] + log1mexp<S>(std::min(delta, S(kDeltaCap)));
    }
  }
  return out;
}

template <typename S>
Mat<S> clause_lse(const FactorGraph& graph, const Mat<S>& v2c, const ClausePolicy& policy) {
  const Eigen::Index d = v2c.cols();
  Mat<S> out(v2c.rows(), d);
  std::vector<Arr<S>> lse_rows;
  std::vector<Arr<S>> unsat_rows;
  for (int a = 0; a < graph.num_clauses(); ++a) {
    const int begin = graph.clause_begin(a);
    const int len = graph.clause_size(a);
    lse_rows.resize(static_cast<std::size_t>(len));
    unsat_rows.resize(static_cast<std::size_t>(len));
    for (int j = 0; j < len; ++j) {
      const int e = begin + j;
      const int unsat = 1 - graph.incidence(e).satisfying_value();
      lse_rows[static_cast<std::size_t>(j)] =
          lse2<S>(v2c.row(row_of(e, 0)).transpose().array(), v2c.row(row_of(e, 1)).transpose().array());
      unsat_rows[static_cast<std::size_t>(j)] = v2c.row(row_of(e, unsat)).transpose().array();
    }
    for (int k = 0; k < len; ++k) {
      const int e = begin + k;
      const int sat = graph.incidence(e).satisfying_value();
      Arr<S> total = Arr<S>::Zero(d);
      Arr<S> all_unsat = Arr<S>::Zero(d);
      for (int j = 0; j < len; ++j) {
        if (j == k) continue;
        total += lse_rows[static_cast<std::size_t>(j)];
        all_unsat += unsat_rows[static_cast<std::size_t>(j)];
      }
      out.row(row_of(e, sat)) = total.transpose();
      if (len == 1) {
        out.row(row_of(e, 1 - sat)).setConstant(S(policy.empty_floor));
      } else {
        out.row(row_of(e, 1 - sat)) = dissatisfying_branch<S>(total, all_unsat, policy).transpose();
      }
    }
  }
  return out;
}

template <typename S>
Mat<S> var_sums(const FactorGraph& graph, const Mat<S>& c2v) {
  Mat<S> out = Mat<S>::Zero(2 * graph.num_vars(), c2v.cols());
  for (int v = 0; v < graph.num_vars(); ++v) {
    for (int e : graph.var_incidences(v)) {
      out.row(2 * v) += c2v.row(row_of(e, 0));
      out.row(2 * v + 1) += c2v.row(row_of(e, 1));
    }
  }
  return out;
}

unsigned all_unsat_code(const FactorGraph& graph, int a) {
  unsigned code = 0;
  for (int j = 0; j < graph.clause_size(a); ++j) {
    if (!graph.incidence(graph.clause_begin(a) + j).positive) code |= 1u << j;
  }
  return code;
}

void check_readout_cap(const FactorGraph& graph, const ForwardOptions& options) {
  for (int a = 0; a < graph.num_clauses(); ++a) {
    if (graph.clause_size(a) > options.factor_enum_cap) {
      throw ModelError("clause " + std::to_string(a + 1) + " has " +
                       std::to_string(graph.clause_size(a)) +
                       " literals, above the factor readout cap of " +
                       std::to_string(options.factor_enum_cap));
    }
  }
}

// Shared forward pass for both the neural and the exact-BP parameterization.
// The tape is recorded only in double precision; `ext` receives the
// log-beliefs and ln Z at the working precision S.
template <typename S>
void run_forward(const FactorGraph& graph, const ModelParams& params,
                 const ForwardOptions& options, const EmbeddingObserver& observer,
                 ForwardTape& tape, bool record, ExtendedOutput* ext) {
  constexpr bool is_double = std::is_same_v<S, double>;
  const bool exact = params.exact_bp;
  if (options.iterations < 0) throw ModelError("iteration count must be >= 0");
  if (options.factor_readout) check_readout_cap(graph, options);
  const ClausePolicy policy{exact ? ls::kLogZero : kEmptyCompletionFloor, exact};
  const Eigen::Index slots = graph.num_slots();

  Mat<S> v2c = broadcast<S>(params.h1, slots);
  Mat<S> c2v = broadcast<S>(params.h2, slots);
  if constexpr (is_double) {
    if (record) {
      tape.v2c0 = v2c;
      tape.c2v0 = c2v;
      tape.iterations.clear();
      tape.iterations.reserve(static_cast<std::size_t>(options.iterations));
    }
  }

  for (int k = 1; k <= options.iterations; ++k) {
    IterationTape step;
    Mat<S> agg = exclusion_sum<S>(graph, c2v);
    Mat<S> tilde = exact ? agg : mlp_apply<S>(params.a1, agg, record ? &step.a1 : nullptr);
    Mat<S> pair = pair_rows<S>(tilde);
    if (exact) {
      for (Eigen::Index r = 0; r < slots; ++r) {
        S a = pair(r, 0);
        S b = pair(r, 1);
        normalize_pair<S>(a, b);
        v2c(r, 0) = a;
      }
    } else {
      v2c = mlp_apply<S>(params.a2, pair, record ? &step.a2 : nullptr);
    }
    Mat<S> lse = clause_lse<S>(graph, v2c, policy);
    if (exact) {
      c2v = lse.unaryExpr([](S x) { return saturate<S>(x); });
    } else {
      c2v = mlp_apply<S>(params.a3, lse, record ? &step.a3 : nullptr);
    }
    if constexpr (is_double) {
      if (observer) observer(k, v2c, c2v);
      if (record) {
        step.agg = std::move(agg);
        step.pair = std::move(pair);
        step.v2c = v2c;
        step.lse = std::move(lse);
        step.c2v = c2v;
        tape.iterations.push_back(std::move(step));
      }
    }
  }

  // Variable beliefs: readout of the summed clause messages, two-way softmax.
  const int n = graph.num_vars();
  Mat<S> var_sum = var_sums<S>(graph, c2v);
  Mat<S> var_logits = exact ? var_sum : mlp_apply<S>(params.r_var, var_sum, record ? &tape.r_var : nullptr);
  std::vector<S> lb(static_cast<std::size_t>(2 * n));
  std::vector<double> p1(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    S l0 = var_logits(2 * v, 0);
    S l1 = var_logits(2 * v + 1, 0);
    const S hi = std::max(l0, l1);
    const S z = std::log(std::exp(l0 - hi) + std::exp(l1 - hi));
    l0 = l0 - hi - z;
    l1 = l1 - hi - z;
    if (exact) {
      l0 = saturate<S>(l0);
      l1 = saturate<S>(l1);
    }
    lb[static_cast<std::size_t>(2 * v)] = l0;
    lb[static_cast<std::size_t>(2 * v + 1)] = l1;
    p1[static_cast<std::size_t>(v)] = ls::safe_exp(static_cast<double>(l1));
  }
  tape.output.marginals = Marginals(std::move(p1));
  if constexpr (is_double) {
    if (record) {
      tape.var_sum = std::move(var_sum);
      tape.var_log_belief = lb;
    }
  }
  if (ext) {
    ext->var_log_belief.assign(lb.begin(), lb.end());
    ext->ln_z.reset();
  }

  tape.has_factor_readout = options.factor_readout;
  tape.output.factor_beliefs.clear();
  tape.output.ln_z.reset();
  if (!options.factor_readout) return;

  // Factor beliefs over satisfying clause configurations.
  std::vector<int> fac_clause;
  std::vector<unsigned> fac_code;
  for (int a = 0; a < graph.num_clauses(); ++a) {
    const unsigned bad = all_unsat_code(graph, a);
    for (unsigned code = 0; code < (1u << graph.clause_size(a)); ++code) {
      if (code == bad) continue;
      fac_clause.push_back(a);
      fac_code.push_back(code);
    }
  }
  const auto rows = static_cast<Eigen::Index>(fac_clause.size());
  Mat<S> fac_sum = Mat<S>::Zero(rows, v2c.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int a = fac_clause[static_cast<std::size_t>(r)];
    const unsigned code = fac_code[static_cast<std::size_t>(r)];
    for (int j = 0; j < graph.clause_size(a); ++j) {
      fac_sum.row(r) += v2c.row(row_of(graph.clause_begin(a) + j, static_cast<int>((code >> j) & 1u)));
    }
  }
  Mat<S> fac_logits = exact ? fac_sum : mlp_apply<S>(params.r_fac, fac_sum, record ? &tape.r_fac : nullptr);

  std::vector<S> lba(static_cast<std::size_t>(rows));
  S factor_term = 0;
  tape.output.factor_beliefs.resize(static_cast<std::size_t>(graph.num_clauses()));
  for (Eigen::Index r = 0; r < rows;) {
    const int a = fac_clause[static_cast<std::size_t>(r)];
    const Eigen::Index count = (Eigen::Index{1} << graph.clause_size(a)) - 1;
    S hi = fac_logits(r, 0);
    for (Eigen::Index i = 1; i < count; ++i) hi = std::max(hi, fac_logits(r + i, 0));
    S sum = 0;
    for (Eigen::Index i = 0; i < count; ++i) sum += std::exp(fac_logits(r + i, 0) - hi);
    const S z = hi + std::log(sum);
    auto& beliefs = tape.output.factor_beliefs[static_cast<std::size_t>(a)];
    beliefs.assign(static_cast<std::size_t>(count + 1), ls::kLogZero);
    for (Eigen::Index i = 0; i < count; ++i) {
      S l = fac_logits(r + i, 0) - z;
      if (exact) l = saturate<S>(l);
      lba[static_cast<std::size_t>(r + i)] = l;
      beliefs[fac_code[static_cast<std::size_t>(r + i)]] = static_cast<double>(l);
      factor_term += plogp<S>(l);
    }
    r += count;
  }

  S var_term = 0;
  for (int v = 0; v < n; ++v) {
    var_term += S(graph.var_degree(v) - 1) *
                (plogp<S>(lb[static_cast<std::size_t>(2 * v)]) + plogp<S>(lb[static_cast<std::size_t>(2 * v + 1)]));
  }
  const S ln_z = -factor_term + var_term;
  tape.output.ln_z = static_cast<double>(ln_z);
  if (ext) ext->ln_z = ln_z;

  if constexpr (is_double) {
    if (record) {
      tape.fac_sum = std::move(fac_sum);
      tape.fac_clause = std::move(fac_clause);
      tape.fac_code = std::move(fac_code);
      tape.fac_log_belief = std::move(lba);
    }
  }
}

// d/dl of e^l * l.
inline double plogp_grad(double l) { return ls::is_zero(l) ? 0.0 : std::exp(l) * (l + 1.0); }

// Scatter-add for the exclusion sum: d c2v[f] = sum over e != f of d agg[e].
RowMatrix exclusion_sum_backward(const FactorGraph& graph, const RowMatrix& d_agg) {
  RowMatrix out = RowMatrix::Zero(d_agg.rows(), d_agg.cols());
  for (int v = 0; v < graph.num_vars(); ++v) {
    const auto adj = graph.var_incidences(v);
    for (int f : adj) {
      for (int e : adj) {
        if (e == f) continue;
        out.row(row_of(f, 0)) += d_agg.row(row_of(e, 0));
        out.row(row_of(f, 1)) += d_agg.row(row_of(e, 1));
      }
    }
  }
  return out;
}

RowMatrix clause_lse_backward(const FactorGraph& graph, const RowMatrix& v2c,
                              const RowMatrix& d_lse) {
  const Eigen::Index d = v2c.cols();
  RowMatrix d_v2c = RowMatrix::Zero(v2c.rows(), d);
  std::vector<Eigen::ArrayXd> lse_rows, unsat_rows, d_lse_acc, d_unsat_acc;
  for (int a = 0; a < graph.num_clauses(); ++a) {
    const int begin = graph.clause_begin(a);
    const int len = graph.clause_size(a);
    const auto L = static_cast<std::size_t>(len);
    lse_rows.resize(L);
    unsat_rows.resize(L);
    d_lse_acc.assign(L, Eigen::ArrayXd::Zero(d));
    d_unsat_acc.assign(L, Eigen::ArrayXd::Zero(d));
    for (int j = 0; j < len; ++j) {
      const int e = begin + j;
      const int unsat = 1 - graph.incidence(e).satisfying_value();
      lse_rows[static_cast<std::size_t>(j)] =
          lse2<double>(v2c.row(row_of(e, 0)).transpose().array(), v2c.row(row_of(e, 1)).transpose().array());
      unsat_rows[static_cast<std::size_t>(j)] = v2c.row(row_of(e, unsat)).transpose().array();
    }
    for (int k = 0; k < len; ++k) {
      const int e = begin + k;
      const int sat = graph.incidence(e).satisfying_value();
      const Eigen::ArrayXd g_sat = d_lse.row(row_of(e, sat)).transpose().array();
      Eigen::ArrayXd d_total = g_sat;
      Eigen::ArrayXd d_all = Eigen::ArrayXd::Zero(d);
      if (len > 1) {
        Eigen::ArrayXd total = Eigen::ArrayXd::Zero(d);
        Eigen::ArrayXd all_unsat = Eigen::ArrayXd::Zero(d);
        for (int j = 0; j < len; ++j) {
          if (j == k) continue;
          total += lse_rows[static_cast<std::size_t>(j)];
          all_unsat += unsat_rows[static_cast<std::size_t>(j)];
        }
        const Eigen::ArrayXd g_unsat = d_lse.row(row_of(e, 1 - sat)).transpose().array();
        for (Eigen::Index c = 0; c < d; ++c) {
          const double delta = all_unsat[c] - total[c];
          // Clamped coordinates pass no gradient through the log ratio.
          const double slope = delta > kDeltaCap ? 0.0 : -1.0 / std::expm1(-delta);
          d_total[c] += g_unsat[c] * (1.0 - slope);
          d_all[c] = g_unsat[c] * slope;
        }
      }
      for (int j = 0; j < len; ++j) {
        if (j == k) continue;
        d_lse_acc[static_cast<std::size_t>(j)] += d_total;
        d_unsat_acc[static_cast<std::size_t>(j)] += d_all;
      }
    }
    for (int j = 0; j < len; ++j) {
      const int e = begin + j;
      const int unsat = 1 - graph.incidence(e).satisfying_value();
      const Eigen::ArrayXd m0 = v2c.row(row_of(e, 0)).transpose().array();
      const Eigen::ArrayXd m1 = v2c.row(row_of(e, 1)).transpose().array();
      const Eigen::ArrayXd& l = lse_rows[static_cast<std::size_t>(j)];
      const Eigen::ArrayXd& g = d_lse_acc[static_cast<std::size_t>(j)];
      d_v2c.row(row_of(e, 0)) += (g * (m0 - l).exp()).matrix().transpose();
      d_v2c.row(row_of(e, 1)) += (g * (m1 - l).exp()).matrix().transpose();
      d_v2c.row(row_of(e, unsat)) += d_unsat_acc[static_cast<std::size_t>(j)].matrix().transpose();
    }
  }
  return d_v2c;
}

}  // namespace

std::vector<ParamBlock> ModelParams::blocks() {
  std::vector<ParamBlock> out;
  out.push_back({"h1", {h1.data(), static_cast<std::size_t>(h1.size())}});
  out.push_back({"h2", {h2.data(), static_cast<std::size_t>(h2.size())}});
  const std::pair<const char*, Mlp*> nets[] = {
      {"A1", &a1}, {"A2", &a2}, {"A3", &a3}, {"R_var", &r_var}, {"R_fac", &r_fac}};
  for (const auto& [name, net] : nets) {
    for (std::size_t l = 0; l < net->layers().size(); ++l) {
      auto& layer = net->layers()[l];
      const std::string prefix = std::string(name) + "." + std::to_string(l);
      out.push_back({prefix + ".w", {layer.w.data(), static_cast<std::size_t>(layer.w.size())}});
      out.push_back({prefix + ".b", {layer.b.data(), static_cast<std::size_t>(layer.b.size())}});
    }
  }
  return out;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t total = 0;
  for (const auto& block : const_cast<ModelParams*>(this)->blocks()) total += block.values.size();
  return total;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& block : out.blocks()) std::fill(block.values.begin(), block.values.end(), 0.0);
  return out;
}

bool ModelParams::operator==(const ModelParams& o) const {
  return d == o.d && hidden == o.hidden && exact_bp == o.exact_bp && h1.size() == o.h1.size() &&
         h2.size() == o.h2.size() && h1 == o.h1 && h2 == o.h2 && a1 == o.a1 && a2 == o.a2 &&
         a3 == o.a3 && r_var == o.r_var && r_fac == o.r_fac;
}

ModelParams init_params(int d, std::uint64_t seed, int hidden) {
  if (d < 1) throw ModelError("embedding width must be >= 1");
  if (hidden < 1) throw ModelError("hidden width must be >= 1");
  Rng rng(seed);
  ModelParams p;
  p.d = d;
  p.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.h1.resize(d);
  p.h2.resize(d);
  for (int i = 0; i < d; ++i) p.h1[i] = rng.uniform(-bound, bound);
  for (int i = 0; i < d; ++i) p.h2[i] = rng.uniform(-bound, bound);
  p.a1 = Mlp::random(d, hidden, d, rng);
  p.a2 = Mlp::random(2 * d, hidden, d, rng);
  p.a3 = Mlp::random(d, hidden, d, rng);
  for (Mlp* mlp : {&p.a1, &p.a2, &p.a3}) {
    DenseLayer& out = mlp->layers().back();
    out.w *= kMessageOutputInitScale;
    out.b *= kMessageOutputInitScale;
  }
  p.r_var = Mlp::random(d, hidden, 1, rng);
  p.r_fac = Mlp::random(d, hidden, 1, rng);
  return p;
}

ModelParams bp_reduction_params() {
  ModelParams p;
  p.d = 1;
  p.hidden = 0;
  p.exact_bp = true;
  p.h1 = Eigen::VectorXd::Constant(1, std::log(0.5));
  p.h2 = Eigen::VectorXd::Zero(1);
  return p;
}

NsnetOutput forward(const FactorGraph& graph, const ModelParams& params,
                    const ForwardOptions& options, const EmbeddingObserver& observer) {
  ForwardTape tape;
  run_forward<double>(graph, params, options, observer, tape, false, nullptr);
  return std::move(tape.output);
}

ForwardTape forward_with_tape(const FactorGraph& graph, const ModelParams& params,
                              const ForwardOptions& options) {
  if (params.exact_bp) throw ModelError("the exact BP parameterization has no gradients");
  ForwardTape tape;
  run_forward<double>(graph, params, options, {}, tape, true, nullptr);
  return tape;
}

ExtendedOutput forward_extended(const FactorGraph& graph, const ModelParams& params,
                                const ForwardOptions& options) {
  ForwardTape tape;
  ExtendedOutput ext;
  run_forward<long double>(graph, params, options, {}, tape, false, &ext);
  return ext;
}

Eigen::RowVectorXd satisfying_completion_lse(std::span<const CompletionInput> others,
                                             bool satisfying_branch) {
  if (others.empty()) {
    throw ModelError("satisfying_completion_lse needs the embedding width; no inputs given");
  }
  const Eigen::Index d = others.front().value0.size();
  Eigen::ArrayXd total = Eigen::ArrayXd::Zero(d);
  Eigen::ArrayXd all_unsat = Eigen::ArrayXd::Zero(d);
  for (const auto& in : others) {
    total += lse2<double>(in.value0.transpose().array(), in.value1.transpose().array());
    all_unsat += (in.satisfying_value == 1 ? in.value0 : in.value1).transpose().array();
  }
  if (satisfying_branch) return total.matrix().transpose();
  return dissatisfying_branch<double>(total, all_unsat, {kEmptyCompletionFloor, false}).matrix().transpose();
}

void backward(const FactorGraph& graph, const ModelParams& params, const ForwardTape& tape,
              const OutputGradient& seed, ModelParams& grads) {
  const int n = graph.num_vars();
  const Eigen::Index d = params.d;
  const Eigen::Index slots = graph.num_slots();

  std::vector<double> d_lb = seed.d_var_log_belief;
  d_lb.resize(static_cast<std::size_t>(2 * n), 0.0);
  RowMatrix d_v2c = RowMatrix::Zero(slots, d);

  if (seed.d_ln_z != 0.0) {
    if (!tape.has_factor_readout) throw ModelError("ln Z gradient requested without factor readout");
    for (int v = 0; v < n; ++v) {
      const double w = seed.d_ln_z * (graph.var_degree(v) - 1);
      for (int x = 0; x < 2; ++x) {
        const auto i = static_cast<std::size_t>(2 * v + x);
        d_lb[i] += w * plogp_grad(tape.var_log_belief[i]);
      }
    }
    // Factor log-beliefs -> logits via the per-clause log-softmax.
    const auto rows = static_cast<Eigen::Index>(tape.fac_clause.size());
    RowMatrix d_fac_logits(rows, 1);
    for (Eigen::Index r = 0; r < rows;) {
      const int a = tape.fac_clause[static_cast<std::size_t>(r)];
      const Eigen::Index count = (Eigen::Index{1} << graph.clause_size(a)) - 1;
      double g_sum = 0.0;
      for (Eigen::Index i = 0; i < count; ++i) {
        const double l = tape.fac_log_belief[static_cast<std::size_t>(r + i)];
        const double g = -seed.d_ln_z * plogp_grad(l);
        d_fac_logits(r + i, 0) = g;
        g_sum += g;
      }
      for (Eigen::Index i = 0; i < count; ++i) {
        d_fac_logits(r + i, 0) -= ls::safe_exp(tape.fac_log_belief[static_cast<std::size_t>(r + i)]) * g_sum;
      }
      r += count;
    }
    RowMatrix d_fac_sum = params.r_fac.backward(d_fac_logits, tape.r_fac, grads.r_fac);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int a = tape.fac_clause[static_cast<std::size_t>(r)];
      const unsigned code = tape.fac_code[static_cast<std::size_t>(r)];
      for (int j = 0; j < graph.clause_size(a); ++j) {
        d_v2c.row(row_of(graph.clause_begin(a) + j, static_cast<int>((code >> j) & 1u))) += d_fac_sum.row(r);
      }
    }
  }

  // Variable log-beliefs -> logits via the two-way log-softmax.
  RowMatrix d_var_logits(2 * n, 1);
  for (int v = 0; v < n; ++v) {
    const auto i0 = static_cast<std::size_t>(2 * v);
    const double g_sum = d_lb[i0] + d_lb[i0 + 1];
    d_var_logits(2 * v, 0) = d_lb[i0] - std::exp(tape.var_log_belief[i0]) * g_sum;
    d_var_logits(2 * v + 1, 0) = d_lb[i0 + 1] - std::exp(tape.var_log_belief[i0 + 1]) * g_sum;
  }
  RowMatrix d_var_sum = params.r_var.backward(d_var_logits, tape.r_var, grads.r_var);
  RowMatrix d_c2v = RowMatrix::Zero(slots, d);
  for (int v = 0; v < n; ++v) {
    for (int e : graph.var_incidences(v)) {
      d_c2v.row(row_of(e, 0)) += d_var_sum.row(2 * v);
      d_c2v.row(row_of(e, 1)) += d_var_sum.row(2 * v + 1);
    }
  }

  for (std::size_t k = tape.iterations.size(); k-- > 0;) {
    const auto& step = tape.iterations[k];
    RowMatrix d_lse = params.a3.backward(d_c2v, step.a3, grads.a3);
    d_v2c += clause_lse_backward(graph, step.v2c, d_lse);
    RowMatrix d_pair = params.a2.backward(d_v2c, step.a2, grads.a2);
    RowMatrix d_tilde = d_pair.leftCols(d);
    for (Eigen::Index r = 0; r < slots; ++r) d_tilde.row(r ^ 1) += d_pair.row(r).tail(d);
    RowMatrix d_agg = params.a1.backward(d_tilde, step.a1, grads.a1);
    d_c2v = exclusion_sum_backward(graph, d_agg);
    d_v2c.setZero();
  }

  grads.h2 += d_c2v.colwise().sum().transpose();
  grads.h1 += d_v2c.colwise().sum().transpose();
}

std::string params_to_json(const ModelParams& params) {
  if (params.exact_bp) throw ModelError("the exact BP parameterization is not serializable");
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto net = [&](const Mlp& mlp) {
    json layers = json::array();
    for (const auto& layer : mlp.layers()) {
      layers.push_back({{"rows", layer.w.rows()},
                        {"cols", layer.w.cols()},
                        {"w", std::vector<double>(layer.w.data(), layer.w.data() + layer.w.size())},
                        {"b", vec(layer.b)}});
    }
    return json{{"layers", layers}};
  };
  json j;
  j["version"] = 1;
  j["d"] = params.d;
  j["hidden"] = params.hidden;
  j["h1"] = vec(params.h1);
  j["h2"] = vec(params.h2);
  j["A1"] = net(params.a1);
  j["A2"] = net(params.a2);
  j["A3"] = net(params.a3);
  j["R_var"] = net(params.r_var);
  j["R_fac"] = net(params.r_fac);
  return j.dump();
}

ModelParams params_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("corrupted weight file: ") + e.what());
  }
  try {
    if (!j.contains("version") || j.at("version").get<int>() != 1) {
      throw ModelError("unsupported weight file version");
    }
    ModelParams p;
    p.d = j.at("d").get<int>();
    p.hidden = j.value("hidden", 64);
    if (p.d < 1 || p.hidden < 1) throw ModelError("shape mismatch: nonpositive width");
    auto vec = [](const json& arr) {
      auto v = arr.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    auto net = [&](const char* name, int in, int out) {
      Mlp mlp(in, p.hidden, out);
      const auto& layers = j.at(name).at("layers");
      if (layers.size() != mlp.layers().size()) {
        throw ModelError(std::string("shape mismatch in ") + name + ": layer count");
      }
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& layer = mlp.layers()[l];
        const auto& src = layers[l];
        const auto w = src.at("w").get<std::vector<double>>();
        const auto b = src.at("b").get<std::vector<double>>();
        if (src.at("rows").get<Eigen::Index>() != layer.w.rows() ||
            src.at("cols").get<Eigen::Index>() != layer.w.cols() ||
            static_cast<Eigen::Index>(w.size()) != layer.w.size() ||
            static_cast<Eigen::Index>(b.size()) != layer.b.size()) {
          throw ModelError(std::string("shape mismatch in ") + name + " layer " + std::to_string(l));
        }
        std::copy(w.begin(), w.end(), layer.w.data());
        std::copy(b.begin(), b.end(), layer.b.data());
      }
      return mlp;
    };
    p.h1 = vec(j.at("h1"));
    p.h2 = vec(j.at("h2"));
    if (p.h1.size() != p.d || p.h2.size() != p.d) throw ModelError("shape mismatch: h1/h2 width");
    p.a1 = net("A1", p.d, p.d);
    p.a2 = net("A2", 2 * p.d, p.d);
    p.a3 = net("A3", p.d, p.d);
    p.r_var = net("R_var", p.d, 1);
    p.r_fac = net("R_fac", p.d, 1);
    for (auto& block : p.blocks()) {
      for (double x : block.values) {
        if (!std::isfinite(x)) throw ModelError("corrupted weight file: non-finite value in " + block.name);
      }
    }
    return p;
  } catch (const json::exception& e) {
    throw ModelError(std::string("corrupted weight file: ") + e.what());
  }
}

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path);
  out << params_to_json(params) << '\n';
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return params_from_json(buf.str());
}

}  // namespace nsnet
