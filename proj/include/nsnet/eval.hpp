#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsnet/bp.hpp"
#include "nsnet/labels.hpp"
#include "nsnet/nsnet.hpp"
#include "nsnet/search.hpp"

namespace nsnet {

/// sqrt(mean((p - t)^2)). Throws on empty input or length mismatch.
double rmse(std::span<const double> preds, std::span<const double> truths);

enum class Estimator { bp, model, reduction };
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

enum class InitKind { random, bp, model, file };
std::string to_string(InitKind k);
InitKind parse_init(const std::string& name);

/// Settings shared by the estimators and marginal initializers.
struct InferenceSettings {
  int iterations = kDefaultIterations;
  BpConfig bp;
  std::optional<ModelParams> model;  // required for Estimator::model / InitKind::model
};

/// ln Z estimate for one formula.
double estimate_ln_z(const CnfFormula& formula, Estimator estimator,
                     const InferenceSettings& settings);

/// Marginals from BP or the model (bp/model only).
Marginals estimate_marginals(const CnfFormula& formula, InitKind kind,
                             const InferenceSettings& settings);

struct CountRow {
  std::string id;
  std::optional<double> truth;
  std::optional<double> estimate;
  std::string error;
  double seconds = 0.0;  // wall clock; never serialized
};

struct CountReport {
  std::string estimator;
  std::vector<CountRow> rows;
  int failures = 0;
  std::optional<double> rmse;
  double mean_seconds = 0.0;
};

/// Runs the estimator over a labeled dataset. Rows are in instance-id order.
CountReport eval_count(const std::string& data_dir, const std::string& labels_dir,
                       Estimator estimator, const InferenceSettings& settings, int jobs);

struct SolveRow {
  std::string id;
  bool unsatisfiable = false;  // flagged and excluded from the aggregates
  std::string error;
  std::vector<bool> initial_solved;  // per repeat
  std::vector<bool> solved;          // per repeat
  std::vector<long> flips;           // per repeat
};

struct SolveReport {
  std::string init;
  int repeats = 1;
  std::uint64_t seed = 0;
  std::vector<SolveRow> rows;
  int evaluated = 0;
  int excluded = 0;
  std::vector<double> initial_accuracy;  // per repeat
  std::vector<double> accuracy;          // per repeat
  double initial_accuracy_mean = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  std::optional<double> mean_flips_solved;
};

struct SolveEvalOptions {
  InitKind init = InitKind::random;
  SlsConfig sls;
  int repeats = 1;
  InferenceSettings inference;
  std::string labels_dir;  // InitKind::file, and optional satisfiability flags
  /// DPLL budget for screening unlabeled instances for satisfiability.
  std::uint64_t screen_budget = 1000000;
};

SolveReport eval_solve(const std::string& data_dir, const SolveEvalOptions& options, int jobs);

/// Deterministic JSON (no timing fields).
std::string to_json(const CountReport& report);
std::string to_json(const SolveReport& report);

/// Runs body(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace nsnet
