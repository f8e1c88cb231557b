// isonet: dataset generation, training, evaluation and self-checks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "isonet/dataset.hpp"
#include "isonet/diagnostics.hpp"
#include "isonet/metrics.hpp"
#include "isonet/model.hpp"
#include "isonet/params.hpp"
#include "isonet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace isonet;

namespace {

// Raised for bad paths and missing inputs; reported with exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string variant, schedule, interaction, edge_reading;
  int rounds = 0, layers = 0, sinkhorn_iters = 0;
  double tau = 0.0;
  bool noise = false;
  CLI::Option *o_variant, *o_schedule, *o_interaction, *o_edge_reading, *o_rounds, *o_layers,
      *o_iters, *o_tau, *o_noise;
};

struct TrainFlags {
  int epochs = 0, patience = 0, batch = 0, triples = 0;
  double lr = 0.0, wd = 0.0, margin = 0.0, tolerance = 0.0;
  CLI::Option *o_epochs, *o_patience, *o_batch, *o_triples, *o_lr, *o_wd, *o_margin, *o_tol;
};

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON file with model/train/sampling sections")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads; 1 is bitwise reproducible")
      ->capture_default_str();
}

void add_model_flags(CLI::App* app, ModelFlags& f) {
  f.o_variant = app->add_option("--variant", f.variant, "node or edge");
  f.o_schedule = app->add_option("--schedule", f.schedule, "lazy or eager");
  f.o_interaction = app->add_option("--interaction", f.interaction, "npp, post, uonly or monly");
  f.o_edge_reading = app->add_option("--edge-reading", f.edge_reading, "equation or prose");
  f.o_rounds = app->add_option("-T,--rounds", f.rounds, "Lazy rounds (default 3)");
  f.o_layers = app->add_option("-K,--layers", f.layers, "Message-passing layers (default 5)");
  f.o_iters = app->add_option("--sinkhorn-iters", f.sinkhorn_iters, "Sinkhorn iterations");
  f.o_tau = app->add_option("--tau", f.tau, "Sinkhorn temperature");
  f.o_noise = app->add_flag("--noise", f.noise, "Gumbel noise during training");
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  f.o_epochs = app->add_option("--epochs", f.epochs, "Maximum epochs");
  f.o_patience = app->add_option("--patience", f.patience, "Early-stopping patience");
  f.o_batch = app->add_option("--batch-size", f.batch, "Triples per batch");
  f.o_triples = app->add_option("--triples-per-query", f.triples, "Triple cap per query, 0 = all");
  f.o_lr = app->add_option("--lr", f.lr, "Adam learning rate");
  f.o_wd = app->add_option("--weight-decay", f.wd, "Weight decay");
  f.o_margin = app->add_option("--margin", f.margin, "Hinge margin");
  f.o_tol = app->add_option("--tolerance", f.tolerance, "Minimum validation gain");
}

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config", "top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config", e.what());
  }
}

json section(const json& j, const char* name) {
  if (!j.contains(name)) return json::object();
  if (!j.at(name).is_object()) throw ConfigError(name, "must be an object");
  return j.at(name);
}

// flag > config file > checkpoint meta > defaults
ModelConfig resolve_model(const ModelFlags& f, const json& file, const json* checkpoint_meta) {
  json merged = ModelConfig{}.to_json();
  if (checkpoint_meta && checkpoint_meta->contains("model")) {
    merged.update(checkpoint_meta->at("model"));
  }
  merged.update(section(file, "model"));
  ModelConfig c = ModelConfig::from_json(merged);
  if (*f.o_variant) c.variant = parse_variant(f.variant);
  if (*f.o_schedule) c.schedule = parse_schedule(f.schedule);
  if (*f.o_interaction) c.interaction = parse_interaction(f.interaction);
  if (*f.o_edge_reading) c.edge_reading = parse_edge_reading(f.edge_reading);
  if (*f.o_rounds) c.rounds = f.rounds;
  if (*f.o_layers) c.layers = f.layers;
  if (*f.o_iters) c.sinkhorn.iterations = f.sinkhorn_iters;
  if (*f.o_tau) c.sinkhorn.tau = f.tau;
  if (*f.o_noise) c.gumbel_noise = f.noise;
  c.validate();
  return c;
}

TrainConfig resolve_train(const TrainFlags& f, const json& file, const Common& common) {
  TrainConfig c = TrainConfig::from_json(section(file, "train"));
  if (*f.o_epochs) c.max_epochs = f.epochs;
  if (*f.o_patience) c.patience = f.patience;
  if (*f.o_batch) c.batch_size = f.batch;
  if (*f.o_triples) c.triples_per_query = f.triples;
  if (*f.o_lr) c.learning_rate = f.lr;
  if (*f.o_wd) c.weight_decay = f.wd;
  if (*f.o_margin) c.margin = f.margin;
  if (*f.o_tol) c.tolerance = f.tolerance;
  c.seed = common.seed + 1;
  c.threads = common.threads;
  c.validate();
  return c;
}

void check_threads(int threads) {
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("split", "expected train, val or test, got '" + s + "'");
}

Dataset open_dataset(const std::string& path) {
  if (path.empty()) throw UsageError("--dataset is required");
  if (!fs::exists(path)) throw UsageError("dataset not found: " + path);
  return load_dataset(path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

struct Loaded {
  ModelConfig model;
  ad::ParamStore params;
  bool trained = false;
};

// Checkpoint parameters, or fresh ones from --seed when no checkpoint is given.
Loaded load_model(const std::string& checkpoint, const ModelFlags& flags, const json& file,
                  std::uint64_t seed) {
  Loaded out;
  if (checkpoint.empty()) {
    out.model = resolve_model(flags, file, nullptr);
    out.params = init_params(out.model, seed);
    return out;
  }
  if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
  ad::Checkpoint ck = ad::load_checkpoint(checkpoint);
  out.model = resolve_model(flags, file, &ck.meta);
  ad::validate_shapes(ck.params, init_params(out.model, 0));
  out.params = std::move(ck.params);
  out.trained = true;
  return out;
}

void print_summary(const std::string& label, const MetricsSummary& m) {
  std::cout << label << " MAP " << format_double(m.map) << " HITS@20 " << format_double(m.hits20)
            << " MRR " << format_double(m.mrr) << " P@20 " << format_double(m.p20) << " ("
            << m.per_query.size() << " queries";
  if (m.skipped) std::cout << ", " << m.skipped << " without positives skipped";
  std::cout << ")\n";
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& out, int queries, int corpus,
                 const std::string& seed_graphs_path, CLI::Option* o_queries,
                 CLI::Option* o_corpus) {
  check_threads(c.threads);
  if (out.empty()) throw UsageError("--out is required");
  const json file = read_json_file(c.config_path);
  json sampling = SamplingConfig{}.to_json();
  sampling.update(section(file, "sampling"));
  SamplingConfig sc = SamplingConfig::from_json(sampling);
  if (*o_queries) sc.num_queries = queries;
  if (*o_corpus) sc.num_corpus = corpus;
  sc.validate();

  std::vector<Graph> seeds;
  if (!seed_graphs_path.empty()) {
    seeds = load_edge_lists(seed_graphs_path);
  } else {
    SeedGraphConfig sg;
    const json sj = section(file, "seed_graphs");
    if (sj.contains("count")) sg.count = sj.at("count").get<int>();
    if (sj.contains("min_nodes")) sg.min_nodes = sj.at("min_nodes").get<int>();
    if (sj.contains("max_nodes")) sg.max_nodes = sj.at("max_nodes").get<int>();
    if (sj.contains("max_degree")) sg.max_degree = sj.at("max_degree").get<int>();
    if (sj.contains("ring_probability")) sg.ring_probability = sj.at("ring_probability").get<double>();
    if (sj.contains("fused_probability")) sg.fused_probability = sj.at("fused_probability").get<double>();
    std::mt19937_64 rng(c.seed);
    seeds = synthetic_seed_graphs(sg, rng);
  }
  const Dataset d = generate_dataset(seeds, sc, c.seed, c.threads);
  if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) ensure_dir(parent);
  save_dataset(d, out);
  std::cout << "wrote " << out << ": " << d.queries.size() << " queries, " << d.corpus.size()
            << " corpus graphs, positive fraction " << format_double(d.positive_fraction())
            << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& out,
              const ModelFlags& mf, const TrainFlags& tf) {
  check_threads(c.threads);
  if (out.empty()) throw UsageError("--out is required");
  const json file = read_json_file(c.config_path);
  const ModelConfig model = resolve_model(mf, file, nullptr);
  const TrainConfig tc = resolve_train(tf, file, c);
  const Dataset data = open_dataset(dataset);
  ensure_dir(out);

  const fs::path dir(out);
  TrainResult res = train(data, model, tc, init_params(model, c.seed), [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << format_double(r.train_loss) << " val MAP "
              << format_double(r.val_map) << "\n";
    return true;
  });

  const json meta = {{"model", model.to_json()},
                     {"train", tc.to_json()},
                     {"init_seed", c.seed},
                     {"dataset_seed", data.seed},
                     {"best_epoch", res.best_epoch},
                     {"best_val_map", res.best_val_map},
                     {"initial_val_map", res.initial_val_map}};
  ad::save_checkpoint(dir / "checkpoint.bin", res.best_params, meta);
  write_history_csv(dir / "history.csv", res.history, /*with_wall_ms=*/true);
  ModelConfig eval_model = model;
  eval_model.gumbel_noise = false;
  const MetricsSummary test =
      evaluate_queries(res.best_params, eval_model, data, data.queries_in(Split::test), c.threads);
  write_metrics_csv(dir / "metrics.csv", test);
  std::cout << "best epoch " << res.best_epoch << " of " << res.history.size() << ", val MAP "
            << format_double(res.best_val_map) << " (initial "
            << format_double(res.initial_val_map) << ")\n";
  print_summary("test", test);
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& dataset, const std::string& checkpoint,
                 const std::string& split, const std::string& out, const ModelFlags& mf) {
  check_threads(c.threads);
  const json file = read_json_file(c.config_path);
  Loaded m = load_model(checkpoint, mf, file, c.seed);
  m.model.gumbel_noise = false;
  const Split s = parse_split(split);
  const Dataset data = open_dataset(dataset);
  const MetricsSummary sum = evaluate_queries(m.params, m.model, data, data.queries_in(s), c.threads);
  if (!out.empty()) {
    if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) ensure_dir(parent);
    write_metrics_csv(out, sum);
  }
  print_summary(std::string(to_string(s)) + (m.trained ? "" : " (untrained)"), sum);
  std::cout << "positive fraction " << format_double(data.positive_fraction()) << "\n";
  return 0;
}

int cmd_rank(const Common& c, const std::string& dataset, const std::string& checkpoint,
             const std::string& split, std::optional<int> query, const std::string& out,
             const ModelFlags& mf) {
  check_threads(c.threads);
  const json file = read_json_file(c.config_path);
  Loaded m = load_model(checkpoint, mf, file, c.seed);
  m.model.gumbel_noise = false;
  const Dataset data = open_dataset(dataset);
  std::vector<int> ids;
  if (query) {
    if (*query < 0 || *query >= static_cast<int>(data.queries.size())) {
      throw UsageError("--query out of range: " + std::to_string(*query));
    }
    ids.push_back(*query);
  } else {
    ids = data.queries_in(parse_split(split));
  }

  std::ofstream file_out;
  if (!out.empty()) {
    if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) ensure_dir(parent);
    file_out.open(out);
    if (!file_out) throw UsageError("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file_out;
  os << "query_id,rank,corpus_id,distance,relevant\n";
  for (int q : ids) {
    const RankedList list =
        rank_corpus(m.params, m.model, data.queries[q], data.corpus, data.relevance[q], c.threads);
    for (std::size_t r = 0; r < list.size(); ++r) {
      os << q << ',' << r + 1 << ',' << list[r].corpus_id << ',' << format_double(list[r].distance)
         << ',' << (list[r].relevant ? 1 : 0) << '\n';
    }
  }
  if (!out.empty()) std::cout << "wrote " << out << " (" << ids.size() << " queries)\n";
  return 0;
}

int cmd_analyze(const Common& c, const std::string& dataset, const std::string& checkpoint,
                const std::string& split, const std::string& out, std::size_t gold_limit,
                const ModelFlags& mf) {
  check_threads(c.threads);
  if (out.empty()) throw UsageError("--out is required");
  const json file = read_json_file(c.config_path);
  Loaded m = load_model(checkpoint, mf, file, c.seed);
  m.model.gumbel_noise = false;
  const Dataset data = open_dataset(dataset);
  ensure_dir(out);

  std::vector<AlignmentQualityRecord> records;
  for (int q : data.queries_in(parse_split(split))) {
    for (std::size_t cid = 0; cid < data.corpus.size(); ++cid) {
      if (!data.relevance[q][cid]) continue;
      const GraphPair pair = pad_pair(data.queries[q], data.corpus[cid], true, gold_limit);
      const ForwardTrace tr = evaluate_pair(m.params, pair, m.model);
      if (auto rec = alignment_quality(tr, pair, m.model.variant)) {
        rec->query_id = q;
        rec->corpus_id = static_cast<int>(cid);
        records.push_back(std::move(*rec));
      }
    }
  }
  if (records.empty()) throw UsageError("no positive pairs in the selected split");
  const HistogramSummary h = histogram_and_summary(records);
  const fs::path dir(out);
  write_traces_csv(dir / "traces.csv", records);
  write_histogram_csv(dir / "histogram.csv", h);
  write_stage_means_csv(dir / "stage_means.csv", h);
  std::cout << records.size() << " positive pairs; mean normalized trace per stage:";
  for (const StageMean& s : h.means) std::cout << ' ' << format_double(s.mean);
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(const Common& c, const ModelFlags& mf, double threshold) {
  const json file = read_json_file(c.config_path);
  std::vector<ModelConfig> configs;
  if (*mf.o_variant || *mf.o_schedule || !section(file, "model").empty()) {
    configs.push_back(resolve_model(mf, file, nullptr));
  } else {
    for (Variant v : {Variant::node, Variant::edge}) {
      for (Schedule s : {Schedule::lazy, Schedule::eager}) {
        ModelConfig base = resolve_model(mf, file, nullptr);
        base.variant = v;
        base.schedule = s;
        base.interaction = v == Variant::edge ? Interaction::node_pair_partner : base.interaction;
        if (!*mf.o_rounds) base.rounds = 2;
        if (!*mf.o_layers) base.layers = 2;
        base.validate();
        configs.push_back(base);
      }
    }
  }
  bool ok = true;
  for (const ModelConfig& cfg : configs) {
    const ModelGradCheck g = model_grad_check(cfg, c.seed);
    const bool pass = g.scaled.max_rel_error < threshold;
    ok = ok && pass;
    std::cout << to_string(cfg.variant) << '/' << to_string(cfg.schedule) << " T=" << cfg.rounds
              << " K=" << cfg.layers << " params=" << g.scaled.coordinates
              << " max_rel_err=" << format_double(g.scaled.max_rel_error) << " ("
              << g.scaled.worst_param << '[' << g.scaled.worst_index << "]) floor="
              << format_double(g.floor) << " literal_floor_err="
              << format_double(g.literal.max_rel_error)
              << " max_abs_err=" << format_double(g.scaled.max_abs_error)
              << (pass ? " ok" : " FAIL") << "\n";
  }
  if (!ok) std::cerr << "error: gradient check above " << format_double(threshold) << "\n";
  return ok ? 0 : 1;
}

int cmd_qap_bench(const Common& c, int instances, int nodes, int steps, double tau,
                  const std::string& out) {
  if (instances < 1) throw ConfigError("instances", "must be >= 1");
  if (nodes < 1) throw ConfigError("nodes", "must be >= 1");
  if (steps < 1) throw ConfigError("steps", "must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau", "must be > 0");
  const QapBenchReport rep = qap_bench(instances, nodes, steps, tau, c.seed);

  std::ofstream file_out;
  if (!out.empty()) {
    if (const fs::path parent = fs::path(out).parent_path(); !parent.empty()) ensure_dir(parent);
    file_out.open(out);
    if (!file_out) throw UsageError("cannot write " + out);
  }
  std::ostream& os = out.empty() ? std::cout : file_out;
  os << "instance,step,cost,rounded_cost\n";
  for (const QapBenchInstance& inst : rep.instances) {
    for (const PgdStep& s : inst.trajectory.steps) {
      os << inst.index << ',' << s.step << ',' << format_double(s.cost) << ','
         << format_double(s.rounded_cost) << '\n';
    }
  }
  std::cerr << "recovered " << rep.recovered << "/" << instances << " (rounded cost 0); "
            << "brute force vs VF2 agree on " << rep.oracle_agreements << "/" << instances << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isonet: subgraph retrieval with iteratively refined alignments"};
  app.require_subcommand(0, 1);

  Common common;
  ModelFlags mf;
  TrainFlags tf;
  std::string dataset, out, checkpoint, split = "test", seed_graphs;
  int queries = 0, corpus = 0;
  std::optional<int> query;
  std::size_t gold_limit = 10000;
  double threshold = 1e-4;
  int instances = 50, nodes = 4, steps = 30;
  double bench_tau = 0.05;

  CLI::App* gen = app.add_subcommand("gen-data", "Sample a labelled query/corpus dataset");
  add_common(gen, common);
  gen->add_option("--out", out, "Dataset file to write");
  CLI::Option* o_queries = gen->add_option("--queries", queries, "Number of queries (300)");
  CLI::Option* o_corpus = gen->add_option("--corpus", corpus, "Number of corpus graphs (800)");
  gen->add_option("--seed-graphs", seed_graphs, "Edge-list file of source graphs")
      ->check(CLI::ExistingFile);

  CLI::App* tr = app.add_subcommand("train", "Train a model; writes checkpoint and CSVs");
  add_common(tr, common);
  tr->add_option("--dataset", dataset, "Dataset file");
  tr->add_option("--out", out, "Output directory");
  add_model_flags(tr, mf);
  add_train_flags(tr, tf);

  ModelFlags mf_eval, mf_rank, mf_an, mf_gc;
  CLI::App* ev = app.add_subcommand("evaluate", "MAP, HITS@20, MRR and P@20 on a split");
  add_common(ev, common);
  ev->add_option("--dataset", dataset, "Dataset file");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint; omitted = untrained from --seed");
  ev->add_option("--split", split, "train, val or test")->capture_default_str();
  ev->add_option("--out", out, "Metrics CSV to write");
  add_model_flags(ev, mf_eval);

  CLI::App* rk = app.add_subcommand("rank", "Ranked corpus list per query");
  add_common(rk, common);
  rk->add_option("--dataset", dataset, "Dataset file");
  rk->add_option("--checkpoint", checkpoint, "Checkpoint; omitted = untrained from --seed");
  rk->add_option("--split", split, "train, val or test")->capture_default_str();
  rk->add_option("--query", query, "Single query id");
  rk->add_option("--out", out, "CSV to write (default stdout)");
  add_model_flags(rk, mf_rank);

  CLI::App* an = app.add_subcommand("analyze-alignment", "Alignment traces against gold");
  add_common(an, common);
  an->add_option("--dataset", dataset, "Dataset file");
  an->add_option("--checkpoint", checkpoint, "Checkpoint; omitted = untrained from --seed");
  an->add_option("--split", split, "train, val or test")->capture_default_str();
  an->add_option("--out", out, "Output directory");
  an->add_option("--gold-limit", gold_limit, "Maximum gold mappings per pair")
      ->capture_default_str();
  add_model_flags(an, mf_an);

  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  add_common(gc, common);
  add_model_flags(gc, mf_gc);
  gc->add_option("--threshold", threshold, "Failure threshold")->capture_default_str();

  CLI::App* qb = app.add_subcommand("qap-bench", "PGD on random isomorphic pairs");
  qb->alias("bench");
  add_common(qb, common);
  qb->add_option("--instances", instances, "Number of pairs")->capture_default_str();
  qb->add_option("--nodes", nodes, "Nodes per graph")->capture_default_str();
  qb->add_option("--steps", steps, "PGD steps")->capture_default_str();
  qb->add_option("--tau", bench_tau, "Entropic temperature")->capture_default_str();
  qb->add_option("--out", out, "Trajectory CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(common, out, queries, corpus, seed_graphs, o_queries, o_corpus);
    }
    if (tr->parsed()) return cmd_train(common, dataset, out, mf, tf);
    if (ev->parsed()) return cmd_evaluate(common, dataset, checkpoint, split, out, mf_eval);
    if (rk->parsed()) return cmd_rank(common, dataset, checkpoint, split, query, out, mf_rank);
    if (an->parsed()) {
      return cmd_analyze(common, dataset, checkpoint, split, out, gold_limit, mf_an);
    }
    if (gc->parsed()) return cmd_gradcheck(common, mf_gc, threshold);
    if (qb->parsed()) return cmd_qap_bench(common, instances, nodes, steps, bench_tau, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
