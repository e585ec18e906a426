#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "preqmdl/dataset.hpp"
#include "preqmdl/errors.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/scoring.hpp"
#include "preqmdl/search.hpp"

namespace preqmdl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes via a sibling temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(what + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// DAGs
// ---------------------------------------------------------------------------

/// One line `child <- p1,p2` per node with a nonempty parent set.
inline std::string dag_to_text(const Dag& g, const std::vector<std::string>& names) {
  std::string out;
  for (int d = 0; d < g.num_nodes(); ++d) {
    if (!g.parents(d)) continue;
    out += names.at(d) + " <-";
    bool first = true;
    for (int p = 0; p < g.num_nodes(); ++p)
      if (g.parents(d) & node_bit(p)) {
        out += (first ? " " : ",") + names.at(p);
        first = false;
      }
    out += '\n';
  }
  return out;
}

inline Dag dag_from_text(std::string_view text, const std::vector<std::string>& names) {
  const int D = static_cast<int>(names.size());
  auto lookup = [&](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    for (int d = 0; d < D; ++d)
      if (names[d] == s) return d;
    throw DataError("unknown node name '" + std::string(s) + "' in DAG text");
  };
  std::vector<NodeMask> parents(D, 0);
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto arrow = line.find("<-");
    if (arrow == std::string::npos) throw DataError("DAG text line lacks '<-': " + line);
    const int child = lookup(std::string_view(line).substr(0, arrow));
    std::string_view rest = std::string_view(line).substr(arrow + 2);
    for (auto f : detail::split_fields(rest)) parents[child] |= node_bit(lookup(f));
  }
  try {
    return Dag::from_parent_masks(std::move(parents));
  } catch (const InvariantError& e) {
    throw DataError(std::string("DAG text does not describe a DAG: ") + e.what());
  }
}

inline json dag_to_json(const Dag& g) {
  json edges = json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return {{"num_nodes", g.num_nodes()}, {"edges", edges}};
}

inline Dag dag_from_json(const json& j) {
  try {
    const int D = j.at("num_nodes").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    return Dag::from_edges(D, edges);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed DAG JSON: ") + e.what());
  } catch (const InvariantError& e) {
    throw DataError(std::string("DAG JSON does not describe a DAG: ") + e.what());
  }
}

inline json edge_list_json(const Dag& g) {
  json edges = json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return edges;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline json mlp_config_to_json(const MlpCpdConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"hidden_width", c.hidden_width},
          {"dropout_rate", c.dropout_rate},
          {"fourier_features", c.fourier_features},
          {"fourier_scale", c.fourier_scale},
          {"num_bins", c.num_bins},
          {"batch_size", c.batch_size},
          {"candidate_learning_rates", c.candidate_learning_rates},
          {"max_steps", c.max_steps},
          {"theta_steps_per_beta_step", c.theta_steps_per_beta_step},
          {"validation_fraction", c.validation_fraction},
          {"max_validation_rows", c.max_validation_rows},
          {"eval_interval", c.eval_interval},
          {"patience", c.patience},
          {"min_improvement", c.min_improvement},
          {"beta_learning_rate", c.beta_learning_rate}};
}

inline json model_spec_to_json(const ModelSpec& m) {
  json j{{"kind", to_string(m.kind)}};
  if (m.kind == ModelKind::Tabular) {
    j["alpha"] = m.alpha;
    j["cardinalities"] = m.cardinalities;
  } else {
    j["mlp"] = mlp_config_to_json(m.mlp);
  }
  return j;
}

inline json schedule_to_json(const SplitSchedule& s) { return s.points; }

/// Hash of everything besides the data that determines cache contents.
inline std::string config_hash(const SplitSchedule& schedule, const ModelSpec& model, std::uint64_t seed) {
  const json j{{"schedule", schedule_to_json(schedule)}, {"model", model_spec_to_json(model)}, {"seed", seed}};
  return content_hash(j.dump());
}

// ---------------------------------------------------------------------------
// Score tables
// ---------------------------------------------------------------------------

inline json train_report_to_json(const TrainReport& r) {
  return {{"learning_rate", r.learning_rate}, {"steps", r.steps},
          {"validation_loss", r.validation_loss}, {"beta", r.beta},
          {"seed", r.seed}, {"run_seeds", r.run_seeds},
          {"train_rows", r.train_rows}, {"validation_rows", r.validation_rows}};
}

inline TrainReport train_report_from_json(const json& j) {
  TrainReport r;
  r.learning_rate = j.at("learning_rate").get<double>();
  r.steps = j.at("steps").get<int>();
  r.validation_loss = j.at("validation_loss").get<double>();
  r.beta = j.at("beta").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.run_seeds = j.at("run_seeds").get<std::vector<std::uint64_t>>();
  r.train_rows = j.at("train_rows").get<std::size_t>();
  r.validation_rows = j.at("validation_rows").get<std::size_t>();
  return r;
}

inline std::vector<int> mask_to_list(NodeMask m) {
  std::vector<int> out;
  for (int d = 0; d < kMaxNodes; ++d)
    if (m & node_bit(d)) out.push_back(d);
  return out;
}

inline json score_table_to_json(const CpdScoreTable& table) {
  json entries = json::array();
  for (const auto* e : table.entries()) {
    json blocks = json::array();
    for (const auto& b : e->blocks) {
      blocks.push_back({{"s_k", b.start},
                        {"end", b.end},
                        {"scored_rows", b.scored_rows},
                        {"loss", b.loss},
                        {"train_report", b.report ? train_report_to_json(*b.report) : json(nullptr)}});
    }
    json entry{{"node", e->family.child},
               {"parents", mask_to_list(e->family.parents)},
               {"blocks", blocks},
               {"total", e->total}};
    if (!e->trace.empty()) entry["trace"] = e->trace;
    entries.push_back(std::move(entry));
  }
  return {{"dataset_hash", table.dataset_hash},
          {"config_hash", table.config_hash},
          {"names", table.names},
          {"num_nodes", table.num_nodes()},
          {"schedule", schedule_to_json(table.schedule())},
          {"entries", entries}};
}

inline CpdScoreTable score_table_from_json(const json& j) {
  try {
    SplitSchedule schedule{j.at("schedule").get<std::vector<std::size_t>>()};
    CpdScoreTable table(j.at("num_nodes").get<int>(), schedule);
    table.dataset_hash = j.at("dataset_hash").get<std::string>();
    table.config_hash = j.value("config_hash", std::string{});
    table.names = j.value("names", std::vector<std::string>{});
    for (const auto& je : j.at("entries")) {
      CpdScoreEntry e;
      e.family.child = je.at("node").get<int>();
      for (int p : je.at("parents")) e.family.parents |= node_bit(p);
      for (const auto& jb : je.at("blocks")) {
        BlockScore b;
        b.start = jb.at("s_k").get<std::size_t>();
        b.end = jb.at("end").get<std::size_t>();
        b.scored_rows = jb.at("scored_rows").get<std::size_t>();
        b.loss = jb.at("loss").get<double>();
        if (!jb.at("train_report").is_null()) b.report = train_report_from_json(jb.at("train_report"));
        e.blocks.push_back(std::move(b));
      }
      e.total = je.at("total").get<double>();
      if (je.contains("trace")) e.trace = je.at("trace").get<std::vector<double>>();
      table.insert(std::move(e));
    }
    return table;
  } catch (const json::exception& e) {
    throw CacheError(std::string("malformed score cache: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Rankings and curves
// ---------------------------------------------------------------------------

/// SHD and MEC membership are null without a reference DAG.
inline json ranking_to_json(const RankedStructures& r, const std::vector<double>& posterior_weights,
                            const std::optional<Dag>& reference) {
  std::optional<Cpdag> ref_cpdag;
  if (reference) ref_cpdag = to_cpdag(*reference);
  json out = json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    json row{{"dag", edge_list_json(e.dag)},
             {"score_mean", e.score_mean},
             {"score_std", e.score_std},
             {"posterior_weight", i < posterior_weights.size() ? json(posterior_weights[i]) : json(nullptr)},
             {"shd_to_reference", nullptr},
             {"in_reference_mec", nullptr}};
    if (reference) {
      row["shd_to_reference"] = shd(e.dag, *reference);
      row["in_reference_mec"] = to_cpdag(e.dag) == *ref_cpdag;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string excess_curves_to_csv(const std::vector<ExcessCurve>& curves) {
  std::string out = "dag_id,i,excess_nats\n";
  for (std::size_t id = 0; id < curves.size(); ++id)
    for (std::size_t k = 0; k < curves[id].excess.size(); ++k)
      out += std::to_string(id) + ',' + std::to_string(curves[id].index[k]) + ',' +
             format_number(curves[id].excess[k]) + '\n';
  return out;
}

/// Per-row next-step losses of every cached family that kept a trace; `index` is the family's parent-set index.
inline std::string traces_to_csv(const CpdScoreTable& table) {
  std::string out = "index,i,log_loss\n";
  for (const auto* e : table.entries()) {
    const auto id = std::to_string(parent_set_index(table.num_nodes(), e->family));
    for (std::size_t i = 0; i < e->trace.size(); ++i)
      out += id + ',' + std::to_string(i + 1) + ',' + format_number(e->trace[i]) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Debug checkpoints
// ---------------------------------------------------------------------------

/// Layer shapes and parameters; for inspection only.
template <typename S>
json checkpoint_to_json(const MlpParams<S>& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& w = p.weights[l];
    std::vector<double> wv(w.data(), w.data() + w.size());
    std::vector<double> bv(p.biases[l].data(), p.biases[l].data() + p.biases[l].size());
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weights", wv}, {"bias", bv}});
  }
  return {{"layers", layers}, {"log_beta", static_cast<double>(p.log_beta)}};
}

}  // namespace preqmdl
