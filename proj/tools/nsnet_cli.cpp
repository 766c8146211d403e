// Command-line front end: generate, label, run BP / the model, train, solve, count, evaluate.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "nsnet/bp.hpp"
#include "nsnet/cnf.hpp"
#include "nsnet/eval.hpp"
#include "nsnet/factor_graph.hpp"
#include "nsnet/gen.hpp"
#include "nsnet/labels.hpp"
#include "nsnet/nsnet.hpp"
#include "nsnet/oracle.hpp"
#include "nsnet/search.hpp"
#include "nsnet/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace nsnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSat = 10;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("nsnet");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("NSNET_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

/// Prints the document on stdout and, when `out` is set, writes it there too.
void emit(const std::string& text, const std::string& out) {
  std::cout << text << '\n';
  if (!out.empty()) {
    std::ofstream file(out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + out);
    file << text << '\n';
  }
}

CnfFormula read_input(const std::string& path) {
  if (path.empty()) throw UsageError("--input is required");
  ParseResult parsed = read_dimacs_file(path);
  for (const auto& w : parsed.warnings) spdlog::warn("{}: {}", path, w);
  return std::move(parsed.formula);
}

json marginals_json(const Marginals& m) {
  json arr = json::array();
  for (double p : m.p1) arr.push_back(p);
  return arr;
}

struct Options {
  std::string input, data, labels, model, out, init = "random", task, distribution = "3sat";
  std::string estimator = "bp", method = "sls", history;
  int iters = kDefaultIterations;
  double damping = 0.0;
  double eps = 1e-8;
  int d = 16;
  std::uint64_t seed = 0;
  int jobs = 1;
  int tries = 100;
  long max_flips = 0;
  double noise = 0.5;
  int num = 10;
  int n_min = 10;
  int n_max = 40;
  bool sat_only = false;
  int repeats = 1;
  int epochs = 10;
  double lr = 1e-3;
  int batch = 16;
  long max_steps = 0;
  std::string schedule = "constant";
  long warmup = 0;
};

InferenceSettings inference_settings(const Options& o) {
  InferenceSettings s;
  s.iterations = o.iters;
  s.bp.damping = o.damping;
  s.bp.convergence_eps = o.eps;
  if (!o.model.empty()) s.model = load_params(o.model);
  return s;
}

int cmd_gen(const Options& o) {
  if (o.out.empty()) throw UsageError("gen needs --out <directory>");
  GenConfig config;
  config.distribution = parse_distribution(o.distribution);
  config.min_vars = o.n_min;
  config.max_vars = o.n_max;
  config.seed = o.seed;
  config.validate();
  fs::create_directories(o.out);
  const SatChecker checker = oracle_checker(0);
  json files = json::array();
  int written = 0;
  for (std::uint64_t i = 0; written < o.num; ++i) {
    if (i > static_cast<std::uint64_t>(o.num) * 100 + 100) {
      throw std::runtime_error("could not generate enough satisfiable instances");
    }
    CnfFormula f = generate(config, derive_seed(o.seed, i));
    if (o.sat_only && checker(f) != std::optional<bool>(true)) continue;
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%05d.cnf", written);
    write_dimacs_file(f, (fs::path(o.out) / name).string());
    files.push_back(name);
    ++written;
  }
  json j;
  j["distribution"] = to_string(config.distribution);
  j["seed"] = o.seed;
  j["generated"] = written;
  j["files"] = files;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_label(const Options& o) {
  if (o.data.empty() || o.labels.empty()) throw UsageError("label needs --data and --labels");
  LabelKinds kinds = LabelKinds::both;
  if (o.task == "marginals") kinds = LabelKinds::marginals;
  else if (o.task == "counting") kinds = LabelKinds::counting;
  else if (!o.task.empty()) throw UsageError("--task must be marginals or counting");
  auto entries = load_dataset(o.data);
  fs::create_directories(o.labels);
  std::vector<std::string> errors(entries.size());
  std::vector<int> sat(entries.size(), 0);
  parallel_for(entries.size(), o.jobs, [&](std::size_t i) {
    try {
      const InstanceLabel label = compute_label(entries[i].formula, kinds);
      sat[i] = label.satisfiable.value_or(false) ? 1 : 0;
      write_label_file(label, label_path(o.labels, entries[i].id));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  json j;
  j["instances"] = entries.size();
  int n_sat = 0;
  json failed = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    n_sat += sat[i];
    if (!errors[i].empty()) failed.push_back(json{{"id", entries[i].id}, {"error", errors[i]}});
  }
  j["satisfiable"] = n_sat;
  j["failures"] = failed;
  emit(j.dump(2), o.out);
  return failed.empty() ? kExitOk : kExitRuntime;
}

int cmd_bp(const Options& o) {
  const CnfFormula f = read_input(o.input);
  const FactorGraph g = FactorGraph::build(f);
  BpConfig config;
  config.max_iters = o.iters;
  config.damping = o.damping;
  config.convergence_eps = o.eps;
  config.validate();
  const BpState state = bp_run(g, config);
  json j;
  j["converged"] = state.converged;
  j["iterations"] = state.iterations_run;
  j["marginals"] = marginals_json(bp_marginals(state, g));
  j["ln_z"] = bethe_ln_z(state, g, config.factor_enum_cap);
  emit(j.dump(2), o.out);
  return kExitOk;
}

int cmd_infer(const Options& o) {
  const CnfFormula f = read_input(o.input);
  const FactorGraph g = FactorGraph::build(f);
  const ModelParams params = o.model.empty() ? bp_reduction_params() : load_params(o.model);
  ForwardOptions options;
  options.iterations = o.iters;
  options.factor_readout = f.max_clause_length() <= static_cast<std::size_t>(options.factor_enum_cap);
  const NsnetOutput out = forward(g, params, options);
  json j;
  j["model"] = o.model.empty() ? "reduction" : o.model;
  j["marginals"] = marginals_json(out.marginals);
  j["ln_z"] = out.ln_z ? json(*out.ln_z) : json(nullptr);
  emit(j.dump(2), o.out);
  return kExitOk;
}

int cmd_train(const Options& o) {
  if (o.data.empty() || o.labels.empty()) throw UsageError("train needs --data and --labels");
  if (o.out.empty()) throw UsageError("train needs --out <weights.json>");
  TrainConfig config;
  config.task = parse_task(o.task.empty() ? "marginals" : o.task);
  config.learning_rate = o.lr;
  config.batch_size = o.batch;
  config.epochs = o.epochs;
  config.seed = o.seed;
  config.iterations = o.iters;
  config.d = o.d;
  config.max_steps = o.max_steps;
  config.lr_schedule = parse_lr_schedule(o.schedule);
  config.warmup_steps = o.warmup;
  config.validate();
  auto instances = load_labeled(o.data, o.labels, config.task);
  if (instances.empty()) throw std::runtime_error("dataset is empty: " + o.data);
  auto split = split_dataset(std::move(instances), {0.6, 0.2, 0.2}, derive_seed(o.seed, 0));
  std::optional<ModelParams> initial;
  if (!o.model.empty()) initial = load_params(o.model);
  const TrainResult result = train_loop(split.train, split.val, config, initial ? &*initial : nullptr);
  save_params(result.params, o.out);
  if (!o.history.empty()) {
    std::ofstream h(o.history, std::ios::binary);
    if (!h) throw std::runtime_error("cannot write " + o.history);
    h << history_csv(result.history);
  }
  json j;
  j["task"] = to_string(config.task);
  j["train"] = split.train.size();
  j["val"] = split.val.size();
  j["test"] = split.test.size();
  j["steps"] = result.steps;
  j["best_epoch"] = result.best_epoch;
  j["diverged"] = result.diverged;
  json hist = json::array();
  for (const auto& r : result.history) {
    hist.push_back(json{{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", std::isfinite(r.val_loss) ? json(r.val_loss) : json(nullptr)}});
  }
  j["history"] = hist;
  const double test_loss = mean_loss(split.test, result.params, config);
  j["test_loss"] = std::isfinite(test_loss) ? json(test_loss) : json(nullptr);
  std::cout << j.dump(2) << '\n';
  return result.diverged ? kExitRuntime : kExitOk;
}

int cmd_solve(const Options& o) {
  const CnfFormula f = read_input(o.input);
  const InitKind init = parse_init(o.init);
  const InferenceSettings settings = inference_settings(o);
  json j;
  std::optional<Assignment> found;
  if (o.method == "decimate") {
    MarginalProvider provider;
    if (init == InitKind::bp || init == InitKind::model) {
      provider = [&](const CnfFormula& sub) { return estimate_marginals(sub, init, settings); };
    } else {
      provider = [](const CnfFormula& sub) { return exact_marginals(sub); };
    }
    const DecimationResult r = decimate(f, provider);
    if (r.assignment && evaluate(f, *r.assignment)) found = r.assignment;
    j["solved"] = found.has_value();
    if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    j["provider_calls"] = r.provider_calls;
  } else if (o.method == "sls") {
    SlsConfig sls;
    sls.max_tries = o.tries;
    sls.max_flips = o.max_flips;
    sls.noise = o.noise;
    sls.seed = o.seed;
    InitialSupplier supplier;
    if (init == InitKind::random) {
      supplier = random_initializer(f.num_vars());
    } else if (init == InitKind::file) {
      if (o.labels.empty()) throw UsageError("--init file needs --labels <label.json>");
      const InstanceLabel label = read_label_file(o.labels, f.num_vars());
      if (!label.marginals) throw std::runtime_error("label file has no marginals");
      supplier = guided_initializer(round_marginals(*label.marginals));
    } else {
      supplier = guided_initializer(round_marginals(estimate_marginals(f, init, settings)));
    }
    const SlsResult r = sls_solve(f, sls, supplier);
    if (r.solved) found = r.assignment;
    j["solved"] = r.solved;
    j["flips"] = r.flips_total;
    j["tries"] = r.tries_used;
  } else {
    throw UsageError("--method must be sls or decimate");
  }
  json assignment = json::array();
  if (found) {
    for (int v = 1; v <= found->num_vars(); ++v) assignment.push_back(found->value(v) ? v : -v);
  }
  j["assignment"] = assignment;
  emit(j.dump(2), o.out);
  return found ? kExitSat : kExitOk;
}

int cmd_count(const Options& o) {
  const CnfFormula f = read_input(o.input);
  json j;
  j["estimator"] = o.estimator;
  if (o.estimator == "exact") {
    const CountOutcome c = exact_count(f);
    j["model_count"] = c.result.model_count.str();
    j["ln_z"] = c.result.model_count > 0 ? json(c.result.ln_count) : json(nullptr);
  } else {
    j["ln_z"] = estimate_ln_z(f, parse_estimator(o.estimator), inference_settings(o));
  }
  emit(j.dump(2), o.out);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  if (o.data.empty()) throw UsageError("eval needs --data");
  if (o.task == "counting") {
    if (o.labels.empty()) throw UsageError("counting eval needs --labels");
    const CountReport r = eval_count(o.data, o.labels, parse_estimator(o.estimator),
                                     inference_settings(o), o.jobs);
    emit(to_json(r), o.out);
  } else if (o.task == "marginals" || o.task.empty()) {
    SolveEvalOptions options;
    options.init = parse_init(o.init);
    options.sls.max_tries = o.tries;
    options.sls.max_flips = o.max_flips;
    options.sls.noise = o.noise;
    options.sls.seed = o.seed;
    options.repeats = o.repeats;
    options.inference = inference_settings(o);
    options.labels_dir = o.labels;
    const SolveReport r = eval_solve(o.data, options, o.jobs);
    emit(to_json(r), o.out);
  } else {
    throw UsageError("--task must be marginals or counting");
  }
  return kExitOk;
}

int cmd_graph(const Options& o) {
  const CnfFormula f = read_input(o.input);
  const std::string dump = FactorGraph::build(f).dump_edges();
  std::cout << dump;
  if (!o.out.empty()) {
    std::ofstream file(o.out, std::ios::binary);
    file << dump;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  Options o;
  CLI::App app{"Neural belief propagation for SAT: generation, labeling, training, solving, counting"};
  app.require_subcommand(1);

  auto add_input = [&](CLI::App* c) { c->add_option("--input", o.input, "DIMACS CNF file"); };
  auto add_out = [&](CLI::App* c, const std::string& what) { c->add_option("--out", o.out, what); };
  auto add_iters = [&](CLI::App* c) { c->add_option("--iters", o.iters, "message-passing iterations")->check(CLI::NonNegativeNumber); };
  auto add_bp = [&](CLI::App* c) {
    c->add_option("--damping", o.damping, "BP damping in [0,1)");
    c->add_option("--eps", o.eps, "BP convergence threshold");
  };
  auto add_sls = [&](CLI::App* c) {
    c->add_option("--tries", o.tries, "SLS tries")->check(CLI::PositiveNumber);
    c->add_option("--max-flips", o.max_flips, "flips per try (0 = 100 n)")->check(CLI::NonNegativeNumber);
    c->add_option("--noise", o.noise, "WalkSAT noise probability")->check(CLI::Range(0.0, 1.0));
    c->add_option("--init", o.init, "initializer: random|bp|model|file");
  };

  auto* gen = app.add_subcommand("gen", "generate random instances");
  gen->add_option("--distribution", o.distribution, "3sat|sr|ca");
  gen->add_option("--num", o.num, "number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--n-min", o.n_min, "minimum variables");
  gen->add_option("--n-max", o.n_max, "maximum variables");
  gen->add_flag("--sat-only", o.sat_only, "keep only satisfiable instances");
  gen->add_option("--seed", o.seed, "seed");
  add_out(gen, "output directory");

  auto* label = app.add_subcommand("label", "compute exact marginal / count labels");
  label->add_option("--data", o.data, "dataset directory");
  label->add_option("--labels", o.labels, "label output directory");
  label->add_option("--task", o.task, "marginals|counting (default: both)");
  label->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  add_out(label, "summary file");

  auto* bp = app.add_subcommand("bp", "run belief propagation");
  add_input(bp);
  add_iters(bp);
  add_bp(bp);
  add_out(bp, "result file");

  auto* infer = app.add_subcommand("infer", "run the model (or its BP reduction without --model)");
  add_input(infer);
  infer->add_option("--model", o.model, "weights file");
  add_iters(infer);
  add_out(infer, "result file");

  auto* train = app.add_subcommand("train", "train the model");
  train->add_option("--data", o.data, "dataset directory");
  train->add_option("--labels", o.labels, "label directory");
  train->add_option("--task", o.task, "marginals|counting");
  train->add_option("--d", o.d, "embedding width")->check(CLI::PositiveNumber);
  train->add_option("--seed", o.seed, "seed");
  train->add_option("--model", o.model, "initial weights");
  train->add_option("--epochs", o.epochs, "epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--batch", o.batch, "batch size")->check(CLI::PositiveNumber);
  train->add_option("--max-steps", o.max_steps, "optimizer step limit (0 = none)");
  train->add_option("--schedule", o.schedule, "learning-rate schedule: constant|cosine");
  train->add_option("--warmup", o.warmup, "linear warmup steps")->check(CLI::NonNegativeNumber);
  train->add_option("--history", o.history, "per-epoch CSV");
  add_iters(train);
  add_out(train, "weights output file");

  auto* solve = app.add_subcommand("solve", "find a satisfying assignment");
  add_input(solve);
  add_sls(solve);
  add_iters(solve);
  add_bp(solve);
  solve->add_option("--model", o.model, "weights file for --init model");
  solve->add_option("--labels", o.labels, "label file for --init file");
  solve->add_option("--seed", o.seed, "seed");
  solve->add_option("--method", o.method, "sls|decimate");
  add_out(solve, "result file");

  auto* count = app.add_subcommand("count", "estimate ln of the model count");
  add_input(count);
  count->add_option("--estimator", o.estimator, "bp|model|reduction|exact");
  count->add_option("--model", o.model, "weights file");
  add_iters(count);
  add_bp(count);
  add_out(count, "result file");

  auto* eval = app.add_subcommand("eval", "evaluate over a dataset");
  eval->add_option("--data", o.data, "dataset directory");
  eval->add_option("--labels", o.labels, "label directory");
  eval->add_option("--task", o.task, "counting (RMSE) or marginals (solving)");
  eval->add_option("--estimator", o.estimator, "bp|model|reduction");
  eval->add_option("--model", o.model, "weights file");
  eval->add_option("--seed", o.seed, "seed");
  eval->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  eval->add_option("--repeats", o.repeats, "independent SLS runs")->check(CLI::PositiveNumber);
  add_sls(eval);
  add_iters(eval);
  add_bp(eval);
  add_out(eval, "report file");

  auto* graph = app.add_subcommand("graph", "dump the factor-graph slots");
  add_input(graph);
  add_out(graph, "dump file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (label->parsed()) return cmd_label(o);
    if (bp->parsed()) return cmd_bp(o);
    if (infer->parsed()) return cmd_infer(o);
    if (train->parsed()) return cmd_train(o);
    if (solve->parsed()) return cmd_solve(o);
    if (count->parsed()) return cmd_count(o);
    if (eval->parsed()) return cmd_eval(o);
    if (graph->parsed()) return cmd_graph(o);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
