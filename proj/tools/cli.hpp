#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "preqmdl/preqmdl.hpp"

namespace preqmdl::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitCache = 4;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
  std::string generator;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  int index = 1;           // table4 row
  bool random = false;     // table4 random mode
  int frequency = 1;       // sin-chain5
  int cardinality = 5;     // tabular-chain
  double alpha_star = 1.0; // tabular-chain, cancer
  double p_link = 0.5;     // yu-a, yu-b, table4 --random
  int nodes = 5;           // yu-a, yu-b
  std::optional<std::size_t> intervene_from;
  double intervene_p = 0.5;
  fs::path out = ".";
  std::string name;
};

inline const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"sin-chain3", "star5", "sin-chain5", "table4", "yu-a",
                                              "yu-b",       "tabular-chain", "cancer"};
  return names;
}

struct Generated {
  GeneratedData data;
  json parameters;
};

inline Generated generate(const GenOptions& o) {
  if (o.n < 1) throw ConfigError("--n must be positive");
  const std::uint64_t data_seed = derive_seed(o.seed, {1});
  json params{{"generator", o.generator}, {"n", o.n}, {"seed", o.seed}};
  std::optional<GeneratedData> g;
  if (o.generator == "sin-chain3") {
    g = gen_sin_chain3(o.n, data_seed);
  } else if (o.generator == "star5") {
    g = gen_star5(o.n, data_seed);
  } else if (o.generator == "sin-chain5") {
    params["frequency"] = o.frequency;
    g = gen_sin_chain5(o.frequency, o.n, data_seed);
  } else if (o.generator == "table4") {
    if (o.random) {
      params["random"] = true;
      params["p_link"] = o.p_link;
      g = gen_compound_nonlinear(random_compound_spec(derive_seed(o.seed, {0}), o.p_link), o.n, data_seed);
    } else {
      params["index"] = o.index;
      g = gen_compound_nonlinear(o.index, o.n, data_seed);
    }
  } else if (o.generator == "yu-a" || o.generator == "yu-b") {
    if (o.nodes < 1 || o.nodes > kMaxNodes) throw ConfigError("--nodes out of range");
    auto w = random_weight_matrix(o.nodes, o.p_link, derive_seed(o.seed, {0}));
    params["nodes"] = o.nodes;
    params["p_link"] = o.p_link;
    params["weights"] = w;
    g = gen_yu_mechanism(o.generator == "yu-a" ? YuVariant::A : YuVariant::B, w, o.n, data_seed);
  } else if (o.generator == "tabular-chain") {
    params["cardinality"] = o.cardinality;
    params["alpha_star"] = o.alpha_star;
    g = gen_tabular_chain(o.cardinality, o.alpha_star, o.n, o.seed);
  } else if (o.generator == "cancer") {
    params["alpha_star"] = o.alpha_star;
    g = gen_cancer_network(o.n, o.seed, o.alpha_star);
  } else {
    throw ConfigError("unknown generator '" + o.generator + "'");
  }
  if (o.intervene_from) {
    InterventionPolicy policy{*o.intervene_from, o.n, o.intervene_p};
    apply_interventions(*g, policy, derive_seed(o.seed, {2}));
    params["interventions"] = {{"window_begin", policy.window_begin},
                               {"window_end", policy.window_end},
                               {"probability", policy.probability}};
  }
  json mechanisms = json::array();
  for (const auto& m : g->scm.mechanisms) mechanisms.push_back(m.formula);
  params["mechanisms"] = mechanisms;
  return {std::move(*g), std::move(params)};
}

/// Writes <name>.csv, optional <name>.mask.csv, <name>.truth.json and <name>.manifest.json; returns the manifest.
inline json run_gen(const GenOptions& o) {
  auto [g, params] = generate(o);
  const std::string name = o.name.empty() ? o.generator : o.name;
  const auto csv = dataset_to_csv(g.data);
  const auto truth = dag_to_json(g.truth()).dump(2) + "\n";
  json outputs{{"data", {{"path", name + ".csv"}, {"hash", content_hash(csv)}}},
               {"truth", {{"path", name + ".truth.json"}, {"hash", content_hash(truth)}}}};
  write_file_atomic(o.out / (name + ".csv"), csv);
  write_file_atomic(o.out / (name + ".truth.json"), truth);
  if (g.data.has_mask()) {
    const auto mask = mask_to_csv(g.data);
    write_file_atomic(o.out / (name + ".mask.csv"), mask);
    outputs["mask"] = {{"path", name + ".mask.csv"}, {"hash", content_hash(mask)}};
  }
  json manifest{{"command", "gen"},
                {"version", kVersion},
                {"config", params},
                {"names", g.data.names},
                {"truth_text", dag_to_text(g.truth(), g.data.names)},
                {"outputs", outputs}};
  write_file_atomic(o.out / (name + ".manifest.json"), manifest.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreOptions {
  fs::path data;
  std::optional<fs::path> mask;
  bool no_mask = false;
  std::string model = "tabular";
  double alpha = kDefaultAlpha;
  int blocks = 6;
  std::optional<std::size_t> first_split;
  bool exact_schedule = false;
  int max_parents = -1;  // all parent sets
  std::vector<std::uint64_t> seeds{0};
  int workers = 0;  // 0: default_worker_count()
  bool traces = false;
  MlpCpdConfig mlp;
  fs::path out = ".";
};

struct LoadedData {
  Dataset data;
  json inputs;
};

/// Reads the CSV and its mask: the explicit path, else a sibling `<stem>.mask.csv` when present.
inline LoadedData load_dataset(const fs::path& path, const std::optional<fs::path>& mask, bool no_mask) {
  if (!fs::exists(path)) throw ConfigError("dataset not found: " + path.string());
  const auto text = read_text_file(path);
  LoadedData out{parse_dataset_csv(text), {}};
  out.inputs["data"] = {{"path", path.string()}, {"hash", content_hash(text)}};
  std::optional<fs::path> mask_path = mask;
  if (!mask_path && !no_mask) {
    auto sibling = path.parent_path() / (path.stem().string() + ".mask.csv");
    if (fs::exists(sibling)) mask_path = sibling;
  }
  if (mask_path && !no_mask) {
    if (!fs::exists(*mask_path)) throw ConfigError("mask not found: " + mask_path->string());
    const auto mtext = read_text_file(*mask_path);
    attach_mask_csv(out.data, mtext);
    out.inputs["mask"] = {{"path", mask_path->string()}, {"hash", content_hash(mtext)}};
  }
  return out;
}

inline fs::path cache_path(const fs::path& dir, std::uint64_t seed) {
  return dir / ("cache-" + std::to_string(seed) + ".json");
}

inline ModelSpec model_spec(const ScoreOptions& o) {
  ModelSpec spec;
  if (o.model == "tabular") {
    spec.kind = ModelKind::Tabular;
  } else if (o.model == "neural") {
    spec.kind = ModelKind::Neural;
  } else {
    throw ConfigError("--model must be tabular or neural");
  }
  spec.alpha = o.alpha;
  spec.mlp = o.mlp;
  return spec;
}

/// Fills (or resumes) one cache per seed. Returns the manifest; `log` receives progress lines.
inline json run_score(const ScoreOptions& o, std::ostream& log) {
  if (o.seeds.empty()) throw ConfigError("--seeds must not be empty");
  auto loaded = load_dataset(o.data, o.mask, o.no_mask);
  const Dataset& data = loaded.data;
  const int D = data.num_nodes();
  if (D > kMaxEnumerationNodes && o.max_parents < 0)
    throw ConfigError("set --max-parents for more than " + std::to_string(kMaxEnumerationNodes) + " nodes");
  if (D > kMaxNodes) throw CapacityError("too many nodes");
  const std::size_t n = data.num_rows;
  const SplitSchedule schedule = o.exact_schedule ? make_exact_schedule(n)
                                                  : make_schedule(n, o.blocks, o.first_split.value_or(default_first_split(n)));
  ModelSpec spec = model_spec(o);
  ScoringContext ctx(data, spec);
  if (spec.kind == ModelKind::Tabular) spec.cardinalities = ctx.table().cardinalities;
  const int max_parents = o.max_parents < 0 ? D - 1 : std::min(o.max_parents, D - 1);
  const auto families = enumerate_parent_sets(D, max_parents);
  const std::string dhash = dataset_hash(data);
  const int workers = o.workers > 0 ? o.workers : default_worker_count();

  json outputs = json::array();
  for (std::uint64_t seed : o.seeds) {
    const std::string chash = config_hash(schedule, spec, seed);
    const fs::path path = cache_path(o.out, seed);
    CpdScoreTable table(D, schedule);
    if (fs::exists(path)) {
      table = score_table_from_json(parse_json(read_text_file(path), path.string()));
      if (table.dataset_hash != dhash)
        throw CacheError("cache " + path.string() + " was built from different data (dataset hash " +
                         table.dataset_hash + ", expected " + dhash + "); remove it or choose another --out");
      if (table.config_hash != chash)
        throw CacheError("cache " + path.string() +
                         " was built with a different schedule or model configuration; remove it or choose another --out");
    }
    table.dataset_hash = dhash;
    table.config_hash = chash;
    table.names = data.names;
    const std::size_t missing = table.missing(families).size();
    log << "seed " << seed << ": " << (families.size() - missing) << " cached, " << missing << " to score\n";
    auto last_save = std::chrono::steady_clock::now();
    fill_score_table(ctx, families, table, seed, workers, o.traces,
                     [&](const CpdScoreTable& t, const CpdScoreEntry& e) {
                       log << "  " << t.describe(e.family) << " total " << format_number(e.total) << "\n";
                       // neural entries are expensive, so checkpoint periodically
                       if (std::chrono::steady_clock::now() - last_save > std::chrono::seconds(5)) {
                         write_file_atomic(path, score_table_to_json(t).dump() + "\n");
                         last_save = std::chrono::steady_clock::now();
                       }
                     });
    const auto text = score_table_to_json(table).dump() + "\n";
    write_file_atomic(path, text);
    outputs.push_back({{"seed", seed}, {"path", path.filename().string()}, {"hash", content_hash(text)}});
    if (o.traces) write_file_atomic(o.out / ("traces-" + std::to_string(seed) + ".csv"), traces_to_csv(table));
  }

  json config{{"model", model_spec_to_json(spec)},
              {"schedule", schedule_to_json(schedule)},
              {"blocks", o.blocks},
              {"exact_schedule", o.exact_schedule},
              {"max_parents", max_parents},
              {"seeds", o.seeds},
              {"traces", o.traces}};
  json manifest{{"command", "score"},     {"version", kVersion},     {"config", config},
                {"inputs", loaded.inputs}, {"dataset_hash", dhash}, {"outputs", outputs}};
  write_file_atomic(o.out / "score.manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

struct SearchOptions {
  std::vector<fs::path> caches;
  std::optional<fs::path> scores_dir;
  std::string search = "exhaustive";
  int max_parents = 4;
  int restarts = 3;
  std::uint64_t seed = 0;
  std::optional<fs::path> ground_truth;
  int curve_dags = 25;  // 0: every ranked DAG
  fs::path out = ".";
};

inline std::vector<fs::path> resolve_caches(const SearchOptions& o) {
  auto paths = o.caches;
  if (o.scores_dir) {
    if (!fs::is_directory(*o.scores_dir)) throw ConfigError("not a directory: " + o.scores_dir->string());
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(*o.scores_dir)) {
      const auto f = e.path().filename().string();
      if (f.starts_with("cache-") && f.ends_with(".json")) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  if (paths.empty()) throw ConfigError("no score caches given (use --cache or --scores)");
  return paths;
}

inline json run_search(const SearchOptions& o, std::ostream& log) {
  const auto paths = resolve_caches(o);
  std::vector<CpdScoreTable> tables;
  json inputs = json::array();
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw ConfigError("cache not found: " + p.string());
    const auto text = read_text_file(p);
    tables.push_back(score_table_from_json(parse_json(text, p.string())));
    inputs.push_back({{"path", p.string()}, {"hash", content_hash(text)}});
  }
  const int D = tables.front().num_nodes();
  for (const auto& t : tables) {
    if (t.num_nodes() != D || t.dataset_hash != tables.front().dataset_hash)
      throw CacheError("score caches come from different datasets");
  }
  const auto& names = tables.front().names.empty() ? default_node_names(D) : tables.front().names;

  std::optional<Dag> truth;
  if (o.ground_truth) {
    if (!fs::exists(*o.ground_truth)) throw ConfigError("ground truth not found: " + o.ground_truth->string());
    truth = dag_from_json(parse_json(read_text_file(*o.ground_truth), o.ground_truth->string()));
    if (truth->num_nodes() != D) throw ConfigError("ground-truth DAG has a different node count than the caches");
  }

  const bool exhaustive = o.search == "exhaustive";
  if (!exhaustive && o.search != "hillclimb") throw ConfigError("--search must be exhaustive or hillclimb");
  const int max_parents = exhaustive ? D - 1 : std::min(o.max_parents, D - 1);
  const auto families = enumerate_parent_sets(D, max_parents);
  for (std::size_t r = 0; r < tables.size(); ++r) {
    const auto missing = tables[r].missing(families);
    if (!missing.empty())
      throw CacheError("cache " + paths[r].string() + " is incomplete: " + std::to_string(missing.size()) +
                       " parent sets missing, first " + tables[r].describe(missing.front()) + "; rerun score");
  }

  RankedStructures ranking;
  json metrics = nullptr;
  if (exhaustive) {
    ranking = exhaustive_search(std::span<const CpdScoreTable>(tables));
  } else {
    auto scorer = [&](int child, NodeMask parents) {
      double s = 0.0;
      for (const auto& t : tables) s -= t.total(child, parents);
      return s / static_cast<double>(tables.size());
    };
    auto hc = hill_climb(scorer, D, max_parents, o.restarts, o.seed);
    for (const auto& g : hc.visited) ranking.entries.push_back(rank_entry(g, tables));
    sort_ranking(ranking);
  }
  const auto post = make_posterior(ranking);
  if (!exhaustive) {
    metrics = {{"expected_links", 0.0}, {"pwa_shd", nullptr}, {"visited", ranking.entries.size()}};
    if (truth) {
      const auto m = posterior_metrics(post, *truth);
      metrics["pwa_shd"] = m.pwa_shd;
      metrics["expected_links"] = m.expected_links;
    } else {
      double links = 0.0;
      for (std::size_t i = 0; i < post.support.size(); ++i) links += post.weights[i] * post.support[i].num_edges();
      metrics["expected_links"] = links;
    }
  }

  const auto ranking_text = ranking_to_json(ranking, post.weights, truth).dump(2) + "\n";
  write_file_atomic(o.out / "ranking.json", ranking_text);

  std::vector<Dag> curve_dags;
  const std::size_t ncurves =
      o.curve_dags <= 0 ? ranking.entries.size() : std::min<std::size_t>(o.curve_dags, ranking.entries.size());
  for (std::size_t i = 0; i < ncurves; ++i) curve_dags.push_back(ranking.entries[i].dag);
  const auto& first = tables.front();
  const bool per_step = !first.entries().empty() && !first.entries().front()->trace.empty();
  const auto curves = excess_loss_curves(first, curve_dags, ranking.top().dag,
                                         per_step ? CurveResolution::PerStep : CurveResolution::PerBlock);
  const auto curves_text = excess_curves_to_csv(curves);
  write_file_atomic(o.out / "excess.csv", curves_text);

  const auto& top = ranking.top();
  json summary{{"top_dag", dag_to_json(top.dag)},
               {"top_dag_text", dag_to_text(top.dag, names)},
               {"top_score_mean", top.score_mean},
               {"num_ranked", ranking.entries.size()},
               {"curve_resolution", per_step ? "per-step" : "per-block"}};
  if (truth) {
    const auto rank = ranking.rank_of(*truth);
    summary["reference_rank"] = rank ? json(*rank) : json(nullptr);
    summary["top_in_reference_mec"] = same_mec(top.dag, *truth);
    summary["top_shd_to_reference"] = shd(top.dag, *truth);
  }
  json config{{"search", o.search}, {"max_parents", max_parents}, {"restarts", o.restarts},
              {"seed", o.seed},     {"curve_dags", o.curve_dags}};
  if (o.ground_truth) inputs.push_back({{"path", o.ground_truth->string()}, {"role", "ground_truth"}});
  json manifest{{"command", "search"},
                {"version", kVersion},
                {"config", config},
                {"inputs", inputs},
                {"summary", summary},
                {"posterior_metrics", metrics},
                {"outputs",
                 {{"ranking", {{"path", "ranking.json"}, {"hash", content_hash(ranking_text)}}},
                  {"curves", {{"path", "excess.csv"}, {"hash", content_hash(curves_text)}}}}}};
  write_file_atomic(o.out / "search.manifest.json", manifest.dump(2) + "\n");
  log << "top DAG (" << format_number(top.score_mean) << " nats):\n" << dag_to_text(top.dag, names);
  return manifest;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CapacityError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const CacheError*>(&e)) return kExitCache;
  return kExitOther;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Prequential MDL structure learning for Bayesian networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset with its ground-truth DAG");
  g->add_option("generator", gen.generator, "Generator name")
      ->required()
      ->check(CLI::IsMember(generator_names()));
  g->add_option("--n", gen.n, "Number of rows");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--index", gen.index, "table4 row (1-20)");
  g->add_flag("--random", gen.random, "table4: random structure and mechanisms");
  g->add_option("--frequency", gen.frequency, "sin-chain5 frequency (1 or 4)");
  g->add_option("--cardinality", gen.cardinality, "tabular-chain category count");
  g->add_option("--alpha-star", gen.alpha_star, "Dirichlet concentration of generated CPTs");
  g->add_option("--p-link", gen.p_link, "Edge probability for random structures");
  g->add_option("--nodes", gen.nodes, "Node count for yu-a / yu-b");
  g->add_option("--intervene-from", gen.intervene_from, "First row (0-based) of the intervention window");
  g->add_option("--intervene-p", gen.intervene_p, "Per-row intervention probability");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--name", gen.name, "Output file stem (default: generator name)");

  ScoreOptions score;
  std::vector<double> lrs;
  auto* s = app.add_subcommand("score", "Fill the per-family score cache");
  s->add_option("--data", score.data, "Dataset CSV")->required();
  s->add_option("--mask", score.mask, "Intervention mask CSV");
  s->add_flag("--no-mask", score.no_mask, "Ignore any mask");
  s->add_option("--model", score.model, "tabular or neural")->check(CLI::IsMember({"tabular", "neural"}));
  s->add_option("--alpha", score.alpha, "Dirichlet smoothing of the tabular estimator");
  s->add_option("--blocks", score.blocks, "Number of split points K");
  s->add_option("--first-split", score.first_split, "First split point s1");
  s->add_flag("--exact", score.exact_schedule, "Use every row as a split point");
  s->add_option("--max-parents", score.max_parents, "Largest parent set to score");
  s->add_option("--seeds", score.seeds, "Replicate seeds")->delimiter(',');
  s->add_option("--workers", score.workers, "Worker threads (default: PREQMDL_WORKERS or logical cores)");
  s->add_flag("--traces", score.traces, "Keep per-row losses and write traces CSV");
  s->add_option("--out", score.out, "Output directory");
  s->add_option("--hidden-layers", score.mlp.hidden_layers);
  s->add_option("--hidden-width", score.mlp.hidden_width);
  s->add_option("--dropout", score.mlp.dropout_rate);
  s->add_option("--fourier-features", score.mlp.fourier_features);
  s->add_option("--fourier-scale", score.mlp.fourier_scale);
  s->add_option("--bins", score.mlp.num_bins);
  s->add_option("--batch-size", score.mlp.batch_size);
  s->add_option("--learning-rates", lrs, "Candidate learning rates")->delimiter(',');
  s->add_option("--max-steps", score.mlp.max_steps);
  s->add_option("--patience", score.mlp.patience);

  SearchOptions search;
  auto* r = app.add_subcommand("search", "Rank structures from complete score caches");
  r->add_option("--cache", search.caches, "Score cache JSON (repeatable)");
  r->add_option("--scores", search.scores_dir, "Directory of cache-*.json files from score");
  r->add_option("--search", search.search, "exhaustive or hillclimb")
      ->check(CLI::IsMember({"exhaustive", "hillclimb"}));
  r->add_option("--max-parents", search.max_parents, "In-degree cap for hill climbing");
  r->add_option("--restarts", search.restarts, "Hill-climbing restarts");
  r->add_option("--seed", search.seed, "Seed for restart start graphs");
  r->add_option("--ground-truth", search.ground_truth, "Reference DAG JSON");
  r->add_option("--curve-dags", search.curve_dags, "Excess-loss curves for the top N DAGs (0: all)");
  r->add_option("--out", search.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    if (!lrs.empty()) score.mlp.candidate_learning_rates = lrs;
    if (*g) {
      const auto m = run_gen(gen);
      out << "wrote " << m["outputs"]["data"]["path"].get<std::string>() << " to " << gen.out.string() << "\n";
    } else if (*s) {
      run_score(score, out);
    } else if (*r) {
      run_search(search, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}

}  // namespace preqmdl::cli
