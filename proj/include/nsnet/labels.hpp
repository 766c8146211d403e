#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nsnet/cnf.hpp"
#include "nsnet/marginals.hpp"
#include "nsnet/train.hpp"

namespace nsnet {

/// Supervision for one instance; either part may be absent.
struct InstanceLabel {
  std::optional<bool> satisfiable;
  std::optional<std::string> model_count;  // decimal
  std::optional<double> ln_count;
  std::optional<Marginals> marginals;
};

/// {"satisfiable":..,"model_count":"..","ln_count":..,"marginals":{"1":..}}; absent parts omitted.
std::string label_to_json(const InstanceLabel& label);
/// Throws std::runtime_error on malformed JSON or marginals not covering 1..num_vars.
InstanceLabel label_from_json(const std::string& text, int num_vars);

void write_label_file(const InstanceLabel& label, const std::string& path);
InstanceLabel read_label_file(const std::string& path, int num_vars);

enum class LabelKinds { marginals, counting, both };

/// Runs the exact oracle. Unsatisfiable formulas get satisfiable=false and a zero count only.
InstanceLabel compute_label(const CnfFormula& formula, LabelKinds kinds,
                            std::uint64_t node_budget = 0);

struct DatasetEntry {
  std::string id;  // file name without extension
  std::string path;
  CnfFormula formula;
};

/// Every *.cnf file in `dir`, sorted by id. Throws when the directory is missing.
std::vector<DatasetEntry> load_dataset(const std::string& dir);

std::string label_path(const std::string& labels_dir, const std::string& id);

/// Instances joined with their labels; the task decides which label is required.
std::vector<LabeledInstance> load_labeled(const std::string& data_dir,
                                          const std::string& labels_dir, Task task);

}  // namespace nsnet
