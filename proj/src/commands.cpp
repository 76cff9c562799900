#include "akgan/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "akgan/synthetic.hpp"

namespace akgan {

namespace fs = std::filesystem;

Dataset load_dataset(const RunConfig& cfg) {
  for (const fs::path& p : {cfg.kg(), cfg.train_file(), cfg.test_file()})
    if (!fs::exists(p)) throw LoadError("missing file: " + p.string());
  InteractionSet data = load_interactions(cfg.train_file(), cfg.test_file(), cfg.item_count);
  const std::vector<Triple> triples = read_triples(cfg.kg());
  std::size_t entities = data.item_count;
  std::size_t relations = 0;
  for (const Triple& t : triples) {
    entities = std::max<std::size_t>({entities, t.head + 1ull, t.tail + 1ull});
    relations = std::max<std::size_t>(relations, t.relation + 1ull);
  }
  KnowledgeGraph g = KnowledgeGraph::from_canonical(triples, entities, relations);
  check_items_prefix(g, data);
  return {std::move(g), std::move(data)};
}

std::map<RelationId, std::string> read_relation_names(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open relation names " + path.string());
  std::map<RelationId, std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    RelationId id = 0;
    try {
      if (tab == std::string::npos) throw std::invalid_argument("tab");
      id = static_cast<RelationId>(std::stoul(line.substr(0, tab)));
    } catch (const std::exception&) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": expected relation_id<TAB>name");
    }
    names[id] = line.substr(tab + 1);
  }
  return names;
}

std::string relation_label(const std::map<RelationId, std::string>& names, RelationId r) {
  const auto it = names.find(r);
  return it != names.end() ? it->second : "r" + std::to_string(r);
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr)
    throw ConfigError("output directory " + dir.string() + " is locked by another run (" +
                      path_.string() + ")");
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string layout_string(const std::vector<int>& dims, std::uint64_t entities, std::uint64_t users,
                          std::uint64_t user_width) {
  std::ostringstream o;
  o << "|E|=" << entities << " |U|=" << users << " user_width=" << user_width << " dims=[";
  for (std::size_t m = 0; m < dims.size(); ++m) o << (m ? "," : "") << dims[m];
  o << "]";
  return o.str();
}

// Loads a checkpoint after checking it against the layout the config implies.
ParameterStore load_compatible(const fs::path& path, const ModelSpec& spec, const Dataset& ds) {
  const CheckpointHeader h = read_checkpoint_header(path);
  const std::vector<int>& dims = spec.layout.dims();
  if (h.dims != dims || h.entity_count != ds.graph.entity_count() ||
      h.user_count != ds.data.user_count || h.user_width != spec.width())
    throw LoadError("checkpoint layout does not match the dataset/config\n  checkpoint: " +
                    layout_string(h.dims, h.entity_count, h.user_count, h.user_width) +
                    "\n  expected:   " +
                    layout_string(dims, ds.graph.entity_count(), ds.data.user_count, spec.width()));
  return load_checkpoint(path);
}

ModelSpec spec_for(const RunConfig& cfg, const KnowledgeGraph& g) {
  return make_model_spec(cfg.train.variant, g, cfg.train.schedule, cfg.train.temperature,
                         cfg.train.layers);
}

void write_epochs(const fs::path& path, const std::vector<EpochLog>& log, std::size_t k) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "epoch\tloss\trecall@" << k << "\tndcg@" << k << "\tseconds\n";
  for (const EpochLog& e : log)
    out << e.epoch << '\t' << g17(e.mean_loss) << '\t' << g17(e.recall) << '\t' << g17(e.ndcg)
        << '\t' << g17(e.seconds) << '\n';
}

void print_metrics(std::ostream& out, const RankingResult& r) {
  out << "recall@" << r.k << "\t" << g17(r.recall) << "\n"
      << "ndcg@" << r.k << "\t" << g17(r.ndcg) << "\n"
      << "users\t" << r.users.size() << "\n";
}

int cmd_train(RunConfig cfg, bool resume, bool quiet, std::ostream& out) {
  if (cfg.out_dir.empty()) throw ConfigError("train: --out is required");
  OutputLock lock(cfg.out_dir);
  const Dataset ds = load_dataset(cfg);
  cfg.item_count = ds.data.item_count;
  Trainer trainer(cfg.train, ds.graph, ds.data);
  const fs::path state = cfg.out_dir / "train_state.bin";
  if (resume) {
    if (!fs::exists(state)) throw LoadError("--resume: no training state at " + state.string());
    trainer.load_state(state);
    if (!quiet) out << "resumed at epoch " << trainer.epoch() << "\n";
  }
  write_manifest(cfg.out_dir / "manifest.toml", cfg);
  if (!quiet)
    out << "entities " << ds.graph.entity_count() << ", relations " << ds.graph.relation_count()
        << ", users " << ds.data.user_count << ", items " << ds.data.item_count
        << ", width " << trainer.spec().width() << "\n";
  const std::size_t k = cfg.train.eval_k;
  while (!trainer.finished()) {
    const EpochLog e = trainer.run_epoch();
    write_epochs(cfg.out_dir / "epochs.tsv", trainer.log(), k);
    trainer.save_state(state);
    if (!quiet) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %4d  loss %.6f  recall@%zu %.4f  ndcg@%zu %.4f  %.2fs\n",
                    e.epoch, e.mean_loss, k, e.recall, k, e.ndcg, e.seconds);
      out << line;
    }
  }
  save_checkpoint(cfg.out_dir / "checkpoint.bin", trainer.best_params());
  const RankingResult best = evaluate(trainer.spec(), trainer.best_params(), ds.graph, ds.data, k);
  write_metrics_tsv(cfg.out_dir / "metrics.tsv", best);
  if (!quiet) {
    out << "best epoch " << trainer.best_epoch() << "\n";
    print_metrics(out, best);
  }
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& checkpoint, std::size_t k,
                 const fs::path& out_dir, bool per_user, std::ostream& out) {
  const Dataset ds = load_dataset(cfg);
  const ModelSpec spec = spec_for(cfg, ds.graph);
  const ParameterStore params = load_compatible(checkpoint, spec, ds);
  const RankingResult r = evaluate(spec, params, ds.graph, ds.data, k);
  print_metrics(out, r);
  if (!out_dir.empty()) {
    OutputLock lock(out_dir);
    write_metrics_tsv(out_dir / "metrics.tsv", r);
    if (per_user) write_per_user_tsv(out_dir / "per_user.tsv", r);
  }
  return 0;
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

int cmd_explain(const RunConfig& cfg, const fs::path& checkpoint, const std::vector<long long>& users,
                const fs::path& names_path, const fs::path& out_dir, std::ostream& out,
                std::ostream& err) {
  const Dataset ds = load_dataset(cfg);
  const ModelSpec spec = spec_for(cfg, ds.graph);
  if (!spec.attention)
    throw ConfigError(std::string("explain: variant '") + to_string(cfg.train.variant) +
                      "' has no interest scores");
  const ParameterStore params = load_compatible(checkpoint, spec, ds);
  const std::map<RelationId, std::string> names =
      names_path.empty() ? std::map<RelationId, std::string>{} : read_relation_names(names_path);
  const ForwardPass pass = forward_pass(spec, params, ds.graph, ds.data.item_count);

  std::vector<std::string> records;
  std::size_t failures = 0;
  for (long long id : users) {
    if (id < 0 || static_cast<std::size_t>(id) >= ds.data.user_count) {
      err << "explain: unknown user " << id << " (|U| = " << ds.data.user_count << "), skipped\n";
      ++failures;
      continue;
    }
    const auto u = static_cast<UserId>(id);
    const InterestProfile p =
        compute_profile(u, params, ds.data, pass.items, pass.means, spec.layout, spec.temperature);
    std::vector<RelationId> order(p.scores.size());
    for (RelationId r = 0; r < order.size(); ++r) order[r] = r;
    std::stable_sort(order.begin(), order.end(), [&](RelationId a, RelationId b) {
      return p.logits[a] > p.logits[b];
    });
    nlohmann::ordered_json rec;
    rec["user"] = u;
    rec["cold"] = p.cold;
    rec["temperature"] = p.temperature;
    rec["scores"] = nlohmann::json::array();
    for (RelationId r : order)
      rec["scores"].push_back(
          nlohmann::ordered_json{{"relation", r}, {"name", relation_label(names, r)}, {"score", round4(p.scores[r])}});
    records.push_back(rec.dump());
    char head[96];
    std::snprintf(head, sizeof head, "user %u%s\n", u, p.cold ? " (cold: no interactions)" : "");
    out << head;
    for (std::size_t n = 0; n < order.size() && n < 10; ++n) {
      char line[256];
      std::snprintf(line, sizeof line, "  %-24s %.4f\n", relation_label(names, order[n]).c_str(),
                    p.scores[order[n]]);
      out << line;
    }
  }
  if (!out_dir.empty()) {
    OutputLock lock(out_dir);
    std::ofstream f(out_dir / "explain.jsonl", std::ios::binary | std::ios::trunc);
    if (!f) throw LoadError("cannot write " + (out_dir / "explain.jsonl").string());
    for (const auto& r : records) f << r << '\n';
  }
  return failures == users.size() && !users.empty() ? 2 : 0;
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& dir, std::ostream& out) {
  const SyntheticWorld w = generate_world(spec);
  OutputLock lock(dir);
  write_world(w, dir);
  out << "wrote " << dir.string() << ": " << w.entity_count << " entities, "
      << w.canonical_relations << " relations, " << w.triples.size() << " triples, "
      << spec.users << " users\n";
  return 0;
}

// Flags shared by every command that reads a dataset and a model config.
struct ConfigFlags {
  std::string config, preset, data, kg, train, test, ablation;
  std::size_t items = 0;
  double lr = 0, l2 = 0, tau = 0, dropout = 0, validation = 0;
  int layers = 0, patience = 0, epochs = 0, d_min = 0, d_max = 0, c = 0;
  std::size_t batch = 0, k = 0, max_batches = 0;
  std::uint64_t seed = 0;
  bool full_l2 = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "config file (key = value with [sections])");
    app->add_option("--preset", preset, "hyperparameter preset: amazon-book|last-fm|alibaba-ifashion");
    app->add_option("--data", data, "directory with kg_final.txt, train.txt, test.txt");
    app->add_option("--kg", kg, "knowledge graph triples");
    app->add_option("--train", train, "train interactions");
    app->add_option("--test", test, "test interactions");
    app->add_option("--items", items, "item count (default: inferred)");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--l2", l2, "L2 coefficient");
    app->add_option("--tau", tau, "interest temperature");
    app->add_option("--layers", layers, "propagation layers");
    app->add_option("--batch-size", batch, "batch size");
    app->add_option("--dropout", dropout, "node dropout ratio");
    app->add_option("--patience", patience, "early stopping patience (epochs)");
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--ablation", ablation, "none|noatt|mean|sum");
    app->add_option("--d-min", d_min, "minimum block width");
    app->add_option("--d-max", d_max, "maximum block width");
    app->add_option("--c", c, "edge count reaching d-max");
    app->add_option("--validation-fraction", validation, "held-out share of train items for early stopping");
    app->add_option("--max-batches", max_batches, "cap on batches per epoch");
    app->add_flag("--full-l2", full_l2, "regularize every parameter each step");
  }

  ConfigValues overrides(const CLI::App* app) const {
    ConfigValues v;
    auto set = [&](const char* flag, const char* key, const std::string& value) {
      if (app->count(flag) > 0) v[key] = value;
    };
    set("--preset", "run.preset", preset);
    set("--data", "data.dir", data);
    set("--kg", "data.kg", kg);
    set("--train", "data.train", train);
    set("--test", "data.test", test);
    set("--items", "data.item_count", std::to_string(items));
    set("--lr", "train.learning_rate", g17(lr));
    set("--l2", "train.l2", g17(l2));
    set("--tau", "train.temperature", g17(tau));
    set("--layers", "train.layers", std::to_string(layers));
    set("--batch-size", "train.batch_size", std::to_string(batch));
    set("--dropout", "train.node_dropout", g17(dropout));
    set("--patience", "train.patience", std::to_string(patience));
    set("--epochs", "train.max_epochs", std::to_string(epochs));
    set("--seed", "train.seed", std::to_string(seed));
    set("--ablation", "train.ablation", ablation);
    set("--d-min", "schedule.d_min", std::to_string(d_min));
    set("--d-max", "schedule.d_max", std::to_string(d_max));
    set("--c", "schedule.c", std::to_string(c));
    set("--validation-fraction", "train.validation_fraction", g17(validation));
    set("--max-batches", "train.max_batches_per_epoch", std::to_string(max_batches));
    if (full_l2) v["train.full_regularization"] = "true";
    return v;
  }
};

// Where evaluate/explain find their config and checkpoint.
struct RunFlags {
  std::string run, checkpoint;

  void add(CLI::App* app) {
    app->add_option("--run", run, "training output directory (manifest.toml, checkpoint.bin)");
    app->add_option("--checkpoint", checkpoint, "checkpoint file (default: RUN/checkpoint.bin)");
  }
  RunConfig resolve(const ConfigFlags& flags, const CLI::App* app) const {
    fs::path config = flags.config;
    if (config.empty() && !run.empty()) config = fs::path(run) / "manifest.toml";
    if (config.empty()) throw ConfigError("need --run or --config");
    return resolve_config(config, flags.overrides(app));
  }
  fs::path checkpoint_path() const {
    if (!checkpoint.empty()) return checkpoint;
    if (run.empty()) throw ConfigError("need --checkpoint or --run");
    return fs::path(run) / "checkpoint.bin";
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribute-aware knowledge graph recommender"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  std::string train_out;
  bool resume = false, quiet = false;
  CLI::App* train = app.add_subcommand("train", "train a model and write its run directory");
  train_flags.add(train);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_flag("--resume", resume, "continue from OUT/train_state.bin");
  train->add_flag("--quiet", quiet, "no per-epoch output");

  ConfigFlags eval_flags;
  RunFlags eval_run;
  std::size_t eval_k = 0;
  std::string eval_out;
  bool per_user = false;
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Recall@K and NDCG@K of a checkpoint");
  eval_flags.add(evaluate_cmd);
  eval_run.add(evaluate_cmd);
  evaluate_cmd->add_option("--k", eval_k, "cutoff (default: the run's eval_k)");
  evaluate_cmd->add_option("--out", eval_out, "write metrics.tsv here");
  evaluate_cmd->add_flag("--per-user", per_user, "also write per_user.tsv");

  ConfigFlags explain_flags;
  RunFlags explain_run;
  std::vector<long long> users;
  std::string names, explain_out;
  CLI::App* explain = app.add_subcommand("explain", "per-relation interest scores of users");
  explain_flags.add(explain);
  explain_run.add(explain);
  explain->add_option("--users", users, "user ids")->required()->delimiter(',');
  explain->add_option("--names", names, "relation_id<TAB>name file");
  explain->add_option("--out", explain_out, "write explain.jsonl here");

  SyntheticSpec synth_spec;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a planted-preference dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", synth_spec.users, "user count");
  synth->add_option("--items", synth_spec.items, "item count");
  synth->add_option("--relations", synth_spec.relations, "planted relation count");
  synth->add_option("--pool", synth_spec.attributes_per_relation, "attribute entities per relation");
  synth->add_option("--sparsity", synth_spec.sparsity, "fraction of relations each user prefers");
  synth->add_option("--interactions", synth_spec.interactions_per_user, "interactions per user");
  synth->add_option("--test-fraction", synth_spec.test_fraction, "share of each user's interactions held out");
  synth->add_flag("--bridge", synth_spec.bridge, "add a second-hop relation between attribute entities and hubs");
  synth->add_option("--hubs", synth_spec.bridge_hubs, "hub entities for --bridge");
  synth->add_option("--seed", synth_spec.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*train) {
      fs::path config = train_flags.config;
      if (config.empty() && resume) config = fs::path(train_out) / "manifest.toml";
      ConfigValues overrides = train_flags.overrides(train);
      overrides["run.out"] = train_out;
      RunConfig cfg = resolve_config(config, overrides);
      for (fs::path* p : {&cfg.data_dir, &cfg.kg_path, &cfg.train_path, &cfg.test_path, &cfg.out_dir})
        if (!p->empty()) *p = fs::absolute(*p);
      return cmd_train(cfg, resume, quiet, out);
    }
    if (*evaluate_cmd) {
      const RunConfig cfg = eval_run.resolve(eval_flags, evaluate_cmd);
      const std::size_t k = evaluate_cmd->count("--k") > 0 ? eval_k : cfg.train.eval_k;
      if (k == 0) throw ConfigError("--k must be >= 1");
      return cmd_evaluate(cfg, eval_run.checkpoint_path(), k, eval_out, per_user, out);
    }
    if (*explain) {
      const RunConfig cfg = explain_run.resolve(explain_flags, explain);
      return cmd_explain(cfg, explain_run.checkpoint_path(), users, names, explain_out, out, err);
    }
    if (*synth) return cmd_synth(synth_spec, synth_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const LoadError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ContractViolation& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace akgan
