#include "nsnet/eval.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <thread>

#include "nsnet/oracle.hpp"

namespace nsnet {

double rmse(std::span<const double> preds, std::span<const double> truths) {
  if (preds.size() != truths.size()) throw std::invalid_argument("rmse: length mismatch");
  if (preds.empty()) throw std::invalid_argument("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - truths[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(preds.size()));
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::bp: return "bp";
    case Estimator::model: return "model";
    case Estimator::reduction: return "reduction";
  }
  return "?";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "bp") return Estimator::bp;
  if (name == "model") return Estimator::model;
  if (name == "reduction") return Estimator::reduction;
  throw std::invalid_argument("unknown estimator '" + name + "' (expected bp|model|reduction)");
}

std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::random: return "random";
    case InitKind::bp: return "bp";
    case InitKind::model: return "model";
    case InitKind::file: return "file";
  }
  return "?";
}

InitKind parse_init(const std::string& name) {
  if (name == "random") return InitKind::random;
  if (name == "bp") return InitKind::bp;
  if (name == "model") return InitKind::model;
  if (name == "file") return InitKind::file;
  throw std::invalid_argument("unknown initializer '" + name + "' (expected random|bp|model|file)");
}

double estimate_ln_z(const CnfFormula& formula, Estimator estimator,
                     const InferenceSettings& settings) {
  const FactorGraph graph = FactorGraph::build(formula);
  ForwardOptions options;
  options.iterations = settings.iterations;
  options.factor_enum_cap = settings.bp.factor_enum_cap;
  switch (estimator) {
    case Estimator::bp: {
      BpConfig config = settings.bp;
      config.max_iters = settings.iterations;
      return bethe_ln_z(bp_run(graph, config), graph, config.factor_enum_cap);
    }
    case Estimator::reduction:
      return *forward(graph, bp_reduction_params(), options).ln_z;
    case Estimator::model:
      if (!settings.model) throw std::invalid_argument("the model estimator needs a weights file");
      return *forward(graph, *settings.model, options).ln_z;
  }
  throw std::logic_error("unreachable");
}

Marginals estimate_marginals(const CnfFormula& formula, InitKind kind,
                             const InferenceSettings& settings) {
  const FactorGraph graph = FactorGraph::build(formula);
  if (kind == InitKind::bp) {
    BpConfig config = settings.bp;
    config.max_iters = settings.iterations;
    return bp_marginals(bp_run(graph, config), graph);
  }
  if (kind == InitKind::model) {
    if (!settings.model) throw std::invalid_argument("the model initializer needs a weights file");
    ForwardOptions options;
    options.iterations = settings.iterations;
    options.factor_readout = false;
    return forward(graph, *settings.model, options).marginals;
  }
  throw std::invalid_argument("marginals are only estimated by bp or model");
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(workers, n); ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& th : threads) th.join();
}

CountReport eval_count(const std::string& data_dir, const std::string& labels_dir,
                       Estimator estimator, const InferenceSettings& settings, int jobs) {
  auto entries = load_dataset(data_dir);
  if (entries.empty()) throw std::runtime_error("dataset is empty: " + data_dir);
  if (estimator == Estimator::model && !settings.model) {
    throw std::invalid_argument("the model estimator needs a weights file");
  }
  CountReport report;
  report.estimator = to_string(estimator);
  report.rows.resize(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto& entry = entries[i];
    CountRow& row = report.rows[i];
    row.id = entry.id;
    const InstanceLabel label = read_label_file(label_path(labels_dir, entry.id), entry.formula.num_vars());
    if (!label.ln_count) {
      row.error = label.satisfiable && !*label.satisfiable ? "unsatisfiable instance"
                                                           : "label has no ln_count";
      return;
    }
    row.truth = label.ln_count;
    const auto start = std::chrono::steady_clock::now();
    try {
      const double est = estimate_ln_z(entry.formula, estimator, settings);
      if (!std::isfinite(est)) throw std::runtime_error("non-finite estimate");
      row.estimate = est;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  std::vector<double> preds, truths;
  double total_seconds = 0.0;
  for (const auto& row : report.rows) {
    total_seconds += row.seconds;
    if (row.estimate) {
      preds.push_back(*row.estimate);
      truths.push_back(*row.truth);
    } else {
      ++report.failures;
      spdlog::warn("{}: {}", row.id, row.error);
    }
  }
  if (!preds.empty()) report.rmse = rmse(preds, truths);
  report.mean_seconds = total_seconds / static_cast<double>(report.rows.size());
  spdlog::info("count eval: {} instances, mean {:.6f} s/instance", report.rows.size(),
               report.mean_seconds);
  return report;
}

SolveReport eval_solve(const std::string& data_dir, const SolveEvalOptions& options, int jobs) {
  options.sls.validate();
  if (options.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (options.init == InitKind::model && !options.inference.model) {
    throw std::invalid_argument("the model initializer needs a weights file");
  }
  if (options.init == InitKind::file && options.labels_dir.empty()) {
    throw std::invalid_argument("the file initializer needs --labels");
  }
  auto entries = load_dataset(data_dir);
  if (entries.empty()) throw std::runtime_error("dataset is empty: " + data_dir);

  SolveReport report;
  report.init = to_string(options.init);
  report.repeats = options.repeats;
  report.seed = options.sls.seed;
  report.rows.resize(entries.size());
  const auto repeats = static_cast<std::size_t>(options.repeats);

  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto& entry = entries[i];
    SolveRow& row = report.rows[i];
    row.id = entry.id;
    try {
      std::optional<InstanceLabel> label;
      const std::string lpath = options.labels_dir.empty() ? "" : label_path(options.labels_dir, entry.id);
      if (!lpath.empty() && std::filesystem::exists(lpath)) {
        label = read_label_file(lpath, entry.formula.num_vars());
      }
      bool unsat = false;
      if (label && label->satisfiable) {
        unsat = !*label->satisfiable;
      } else {
        unsat = find_model(entry.formula, options.screen_budget).status == SatStatus::unsat;
      }
      if (unsat || entry.formula.is_unsat_marker()) {
        row.unsatisfiable = true;
        return;
      }
      std::optional<Assignment> guided;
      if (options.init == InitKind::file) {
        if (!label || !label->marginals) throw std::runtime_error("label has no marginals");
        guided = round_marginals(*label->marginals);
      } else if (options.init != InitKind::random) {
        guided = round_marginals(estimate_marginals(entry.formula, options.init, options.inference));
      }
      const InitialSupplier supplier = guided ? guided_initializer(*guided)
                                              : random_initializer(entry.formula.num_vars());
      for (std::size_t r = 0; r < repeats; ++r) {
        SlsConfig sls = options.sls;
        sls.seed = derive_seed(derive_seed(options.sls.seed, r), i);
        Rng first(derive_seed(sls.seed, 0));
        row.initial_solved.push_back(evaluate(entry.formula, supplier(0, first)));
        const SlsResult res = sls_solve(entry.formula, sls, supplier);
        row.solved.push_back(res.solved);
        row.flips.push_back(res.flips_total);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
      row.initial_solved.assign(repeats, false);
      row.solved.assign(repeats, false);
      row.flips.assign(repeats, 0);
    }
  });

  report.initial_accuracy.assign(repeats, 0.0);
  report.accuracy.assign(repeats, 0.0);
  double flips_sum = 0.0;
  long solved_count = 0;
  for (const auto& row : report.rows) {
    if (row.unsatisfiable) {
      ++report.excluded;
      spdlog::warn("{}: unsatisfiable, excluded from accuracy", row.id);
      continue;
    }
    if (!row.error.empty()) spdlog::warn("{}: {}", row.id, row.error);
    ++report.evaluated;
    for (std::size_t r = 0; r < repeats; ++r) {
      if (row.initial_solved[r]) report.initial_accuracy[r] += 1.0;
      if (row.solved[r]) {
        report.accuracy[r] += 1.0;
        flips_sum += static_cast<double>(row.flips[r]);
        ++solved_count;
      }
    }
  }
  if (report.evaluated > 0) {
    for (std::size_t r = 0; r < repeats; ++r) {
      report.initial_accuracy[r] /= report.evaluated;
      report.accuracy[r] /= report.evaluated;
    }
  }
  double sum = 0.0, init_sum = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    sum += report.accuracy[r];
    init_sum += report.initial_accuracy[r];
  }
  report.accuracy_mean = sum / static_cast<double>(repeats);
  report.initial_accuracy_mean = init_sum / static_cast<double>(repeats);
  double var = 0.0;
  for (double a : report.accuracy) var += (a - report.accuracy_mean) * (a - report.accuracy_mean);
  report.accuracy_std = std::sqrt(var / static_cast<double>(repeats));
  if (solved_count > 0) report.mean_flips_solved = flips_sum / static_cast<double>(solved_count);
  return report;
}

std::string to_json(const CountReport& report) {
  nlohmann::ordered_json j;
  j["task"] = "counting";
  j["estimator"] = report.estimator;
  j["instances"] = report.rows.size();
  j["failures"] = report.failures;
  j["rmse"] = report.rmse ? nlohmann::ordered_json(*report.rmse) : nlohmann::ordered_json(nullptr);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["id"] = row.id;
    r["truth"] = row.truth ? nlohmann::ordered_json(*row.truth) : nlohmann::ordered_json(nullptr);
    r["estimate"] = row.estimate ? nlohmann::ordered_json(*row.estimate) : nlohmann::ordered_json(nullptr);
    if (!row.error.empty()) r["error"] = row.error;
    rows.push_back(r);
  }
  j["rows"] = rows;
  return j.dump(2);
}

std::string to_json(const SolveReport& report) {
  nlohmann::ordered_json j;
  j["task"] = "solving";
  j["init"] = report.init;
  j["seed"] = report.seed;
  j["repeats"] = report.repeats;
  j["instances"] = report.rows.size();
  j["evaluated"] = report.evaluated;
  j["excluded_unsatisfiable"] = report.excluded;
  j["initial_accuracy"] = report.initial_accuracy_mean;
  j["accuracy_mean"] = report.accuracy_mean;
  j["accuracy_std"] = report.accuracy_std;
  j["accuracy_per_repeat"] = report.accuracy;
  j["initial_accuracy_per_repeat"] = report.initial_accuracy;
  j["mean_flips_solved"] = report.mean_flips_solved ? nlohmann::ordered_json(*report.mean_flips_solved)
                                                    : nlohmann::ordered_json(nullptr);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["id"] = row.id;
    if (row.unsatisfiable) {
      r["unsatisfiable"] = true;
    } else {
      r["initial_solved"] = row.initial_solved;
      r["solved"] = row.solved;
      r["flips"] = row.flips;
      if (!row.error.empty()) r["error"] = row.error;
    }
    rows.push_back(r);
  }
  j["rows"] = rows;
  return j.dump(2);
}

}  // namespace nsnet
