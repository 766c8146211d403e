#include "nsnet/labels.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "nsnet/oracle.hpp"

namespace nsnet {

namespace fs = std::filesystem;

std::string label_to_json(const InstanceLabel& label) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (label.satisfiable) j["satisfiable"] = *label.satisfiable;
  if (label.model_count) j["model_count"] = *label.model_count;
  if (label.ln_count) j["ln_count"] = *label.ln_count;
  if (label.marginals) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (int v = 1; v <= label.marginals->num_vars(); ++v) m[std::to_string(v)] = label.marginals->b1(v);
    j["marginals"] = m;
  }
  return j.dump();
}

InstanceLabel label_from_json(const std::string& text, int num_vars) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed label file: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("malformed label file: expected an object");
  InstanceLabel label;
  try {
    if (j.contains("satisfiable")) label.satisfiable = j.at("satisfiable").get<bool>();
    if (j.contains("model_count")) label.model_count = j.at("model_count").get<std::string>();
    if (j.contains("ln_count")) label.ln_count = j.at("ln_count").get<double>();
    if (j.contains("marginals")) {
      const auto& m = j.at("marginals");
      if (!m.is_object() || static_cast<int>(m.size()) != num_vars) {
        throw std::runtime_error("marginal label does not cover variables 1.." +
                                 std::to_string(num_vars));
      }
      std::vector<double> p1(static_cast<std::size_t>(num_vars));
      for (int v = 1; v <= num_vars; ++v) {
        const double p = m.at(std::to_string(v)).get<double>();
        if (!(p >= 0.0 && p <= 1.0)) throw std::runtime_error("marginal label outside [0,1]");
        p1[static_cast<std::size_t>(v - 1)] = p;
      }
      label.marginals = Marginals(std::move(p1));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed label file: ") + e.what());
  }
  return label;
}

void write_label_file(const InstanceLabel& label, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << label_to_json(label) << '\n';
}

InstanceLabel read_label_file(const std::string& path, int num_vars) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing label file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return label_from_json(buf.str(), num_vars);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

InstanceLabel compute_label(const CnfFormula& formula, LabelKinds kinds,
                            std::uint64_t node_budget) {
  const bool want_marginals = kinds != LabelKinds::counting;
  CountOutcome outcome = exact_count(formula, node_budget, want_marginals);
  if (outcome.status != OracleStatus::ok) {
    throw OracleError("oracle node budget exhausted");
  }
  InstanceLabel label;
  const ExactResult& r = outcome.result;
  label.satisfiable = r.model_count > 0;
  label.model_count = r.model_count.str();
  if (r.model_count == 0) return label;
  if (kinds != LabelKinds::marginals) label.ln_count = r.ln_count;
  if (want_marginals) label.marginals = r.marginals;
  return label;
}

std::vector<DatasetEntry> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  std::vector<DatasetEntry> entries;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file() || item.path().extension() != ".cnf") continue;
    DatasetEntry entry;
    entry.id = item.path().stem().string();
    entry.path = item.path().string();
    entry.formula = read_dimacs_file(entry.path).formula;
    entries.push_back(std::move(entry));
  }
  std::sort(entries.begin(), entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
  return entries;
}

std::string label_path(const std::string& labels_dir, const std::string& id) {
  return (fs::path(labels_dir) / (id + ".json")).string();
}

std::vector<LabeledInstance> load_labeled(const std::string& data_dir,
                                          const std::string& labels_dir, Task task) {
  std::vector<LabeledInstance> out;
  for (auto& entry : load_dataset(data_dir)) {
    InstanceLabel label = read_label_file(label_path(labels_dir, entry.id), entry.formula.num_vars());
    if (task == Task::marginals && !label.marginals) {
      throw std::runtime_error(entry.id + ": label has no marginals");
    }
    if (task == Task::counting && !label.ln_count) {
      throw std::runtime_error(entry.id + ": label has no ln_count");
    }
    out.push_back(LabeledInstance::make(entry.id, std::move(entry.formula), std::move(label.marginals),
                                        label.ln_count));
  }
  return out;
}

}  // namespace nsnet
