#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsnet/factor_graph.hpp"
#include "nsnet/marginals.hpp"
#include "nsnet/mlp.hpp"

namespace nsnet {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named view of one contiguous parameter tensor.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

/**
 * Learnable state of the edge-embedding network.
 *
 * h1 and h2 seed the assignment->clause and clause->assignment embeddings.
 * a1: d -> d on the aggregated clause messages; a2: 2d -> d on the pair
 * (current value, flipped value); a3: d -> d after the clause LSE; r_var and
 * r_fac: d -> 1 readouts for variable and factor beliefs.
 *
 * With `exact_bp` set the networks are unused: d = 1 and the transforms are
 * the fixed maps under which the scheme reduces to belief propagation.
 */
struct ModelParams {
  int d = 64;
  int hidden = 64;
  bool exact_bp = false;
  Eigen::VectorXd h1;
  Eigen::VectorXd h2;
  Mlp a1, a2, a3, r_var, r_fac;

  /// Every tensor in a fixed order: h1, h2, then each network's layers (w, b).
  std::vector<ParamBlock> blocks();
  std::size_t num_parameters() const;

  /// Same shapes, all zeros.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams& other) const;
};

inline constexpr int kDefaultEmbeddingDim = 64;
inline constexpr int kDefaultIterations = 10;
/// Clause-message value on the dissatisfying branch of a unit clause.
inline constexpr double kEmptyCompletionFloor = -30.0;
/// Upper clamp on the log ratio in the dissatisfying-branch difference.
inline constexpr double kDeltaCap = -1e-12;

/// Scale applied to the output layers of the three message MLPs at initialization.
inline constexpr double kMessageOutputInitScale = 0.1;

/// Deterministic fan-in-scaled uniform initialization. The message MLPs start
/// with their output layers shrunk by kMessageOutputInitScale, so early
/// iterations stay close to the initial embeddings and training starts stable.
ModelParams init_params(int d, std::uint64_t seed, int hidden = 64);

/// d = 1, identity a1/a3/readouts, a2(a, b) = a - ln(e^a + e^b), h1 = ln 0.5, h2 = 0.
ModelParams bp_reduction_params();

struct ForwardOptions {
  int iterations = kDefaultIterations;
  /// Compute factor beliefs and ln Z (requires clause lengths <= cap).
  bool factor_readout = true;
  int factor_enum_cap = 10;
};

struct NsnetOutput {
  Marginals marginals;
  /// Per clause, 2^L log-probabilities indexed by value code (bit j = value of
  /// the j-th literal's variable); the unsatisfying code holds kLogZero.
  std::vector<std::vector<double>> factor_beliefs;
  std::optional<double> ln_z;
};

/// Called after each iteration with the (slots x d) v2c and c2v embeddings.
using EmbeddingObserver =
    std::function<void(int iteration, const RowMatrix& v2c, const RowMatrix& c2v)>;

NsnetOutput forward(const FactorGraph& graph, const ModelParams& params,
                    const ForwardOptions& options = {},
                    const EmbeddingObserver& observer = {});

/**
 * Coordinatewise LSE over the satisfying completions of a clause, for one
 * target incidence and branch. `others` holds (v2c(value 0), v2c(value 1))
 * rows of the other members and their satisfying values.
 *
 * Satisfying branch: sum_j LSE(m_j(0), m_j(1)). Dissatisfying branch: that
 * total minus the all-dissatisfying term, in log space.
 */
struct CompletionInput {
  Eigen::RowVectorXd value0;
  Eigen::RowVectorXd value1;
  int satisfying_value = 1;
};
Eigen::RowVectorXd satisfying_completion_lse(std::span<const CompletionInput> others,
                                             bool satisfying_branch);

/// Versioned JSON weight file; reals are written as shortest round-trip decimals.
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);
std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

}  // namespace nsnet
