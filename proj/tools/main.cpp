// sidalign command-line front end.
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

#include "sidalign/alignment.hpp"
#include "sidalign/experiment.hpp"
#include "sidalign/io.hpp"
#include "sidalign/parallel.hpp"
#include "sidalign/quantizer.hpp"
#include "sidalign/retriever.hpp"
#include "sidalign/simulate.hpp"
#include "sidalign/temporal.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sidalign;

namespace {

using Settings = std::vector<std::pair<std::string, std::string>>;

std::string settings_text(const Settings& settings) {
  std::ostringstream out;
  for (const auto& [key, value] : settings) out << key << " = " << value << "\n";
  return out.str();
}

// Echoes the resolved settings on stderr and keeps a copy next to the outputs.
void record(const std::string& command, const Settings& settings, const fs::path& sidecar) {
  const std::string text = "[" + command + "]\n" + settings_text(settings);
  std::cerr << "# resolved config\n" << text << std::flush;
  if (!sidecar.empty()) io::write_file(sidecar, text);
}

void record_experiment(const ExperimentConfig& config, const fs::path& sidecar) {
  const std::string text = config.to_text();
  std::cerr << "# resolved config\n" << text << std::flush;
  if (!sidecar.empty()) io::write_file(sidecar, text);
}

fs::path sidecar_for(const fs::path& output) { return fs::path(output.string() + ".config.toml"); }

std::string block_name(const char* prefix, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.%s", prefix, k, ext);
  return buf;
}

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigEntries entries;
  if (!path.empty()) entries = load_config_file(path);
  apply_overrides(entries, overrides);
  return ExperimentConfig::from_entries(entries);
}

// Per-user item sequences in timestamp order (ties keep file order).
UserHistories sequences_from(std::vector<InteractionEvent> events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) { return a.timestamp < b.timestamp; });
  UserHistories out;
  for (auto& e : events) out[e.user].push_back(std::move(e.item));
  return out;
}

void drop_unknown(UserHistories& sequences, const SidAssignment& a) {
  for (auto& [user, items] : sequences)
    std::erase_if(items, [&](const ItemId& item) { return !a.contains(item); });
}

void write_window_files(const SimulatedWorld& world, std::size_t num_blocks, bool five_core, const fs::path& dir) {
  const auto log = five_core ? five_core_filter(world.events()) : world.events();
  const TemporalBlocks blocks = chronological_blocks(log, num_blocks);
  for (std::size_t k = 1; k <= num_blocks; ++k)
    io::save_embeddings(dir / block_name("window", k, "bin"), window_table(world, blocks, k));
}

struct Options {
  // simulate
  std::string preset = "benchmark-default";
  std::uint64_t seed = 1;
  std::string out_dir;
  std::size_t blocks = 10;
  bool five_core = false;
  bool no_five_core = false;
  std::vector<std::string> overrides;
  // split
  std::string events;
  // tokenize
  std::string embeddings;
  std::string spec = "2,32,8";
  int iters = 15;
  int restarts = 32;
  std::string out;
  // align
  std::string old_path;
  std::string new_path;
  std::string solver = "hungarian";
  std::string out_mapping;
  std::string out_aligned;
  // train
  std::vector<std::string> event_files;
  std::string assignment;
  std::string init_model;
  std::size_t order = 4;
  double alpha = 0.1;
  double backoff_ratio = 0.6;
  double decay = 1.0;
  double passes = 1.0;
  bool skip_unknown = false;
  // decode
  std::string model;
  std::string history;
  std::size_t beam = 50;
  std::size_t k = 50;
  std::size_t context_len = 20;
  // eval / pipeline
  std::string config;
  std::string csv;
  std::string pipeline_dir = "pipeline_out";
};

int cmd_simulate(const Options& o) {
  ConfigEntries entries{{"simulation.preset", o.preset}};
  apply_overrides(entries, o.overrides);
  ExperimentConfig config = ExperimentConfig::from_entries(entries);
  SimulationParams params = config.simulation;
  params.seed = o.seed;
  const bool five_core = !o.no_five_core;

  fs::create_directories(o.out_dir);
  config.seeds = {o.seed};
  config.num_blocks = o.blocks;
  config.five_core = five_core;
  record_experiment(config, fs::path(o.out_dir) / "config.toml");

  const SimulatedWorld world(params);
  io::save_events(fs::path(o.out_dir) / "events.tsv", world.events());
  write_window_files(world, o.blocks, five_core, o.out_dir);
  std::cerr << "seed " << o.seed << ": " << world.events().size() << " events written to " << o.out_dir << "\n";
  return 0;
}

int cmd_split(const Options& o) {
  fs::create_directories(o.out_dir);
  record("split", {{"events", o.events}, {"blocks", std::to_string(o.blocks)},
                   {"five_core", o.five_core ? "true" : "false"}, {"out_dir", o.out_dir}},
         fs::path(o.out_dir) / "split.config.toml");
  auto log = io::load_events(o.events);
  const std::size_t raw = log.size();
  if (o.five_core) log = five_core_filter(log);
  const TemporalBlocks blocks = chronological_blocks(std::move(log), o.blocks);
  for (std::size_t k = 1; k <= blocks.size(); ++k)
    io::save_events(fs::path(o.out_dir) / block_name("block", k, "tsv"), blocks.block(k));
  std::size_t kept = 0;
  for (std::size_t k = 1; k <= blocks.size(); ++k) kept += blocks.block(k).size();
  std::cerr << raw << " events, " << kept << " kept, " << blocks.size() << " blocks\n";
  return 0;
}

int cmd_tokenize(const Options& o) {
  const CodebookSpec spec = CodebookSpec::parse(o.spec);
  if (o.iters < 1) throw ValidationError("--iters must be >= 1");
  if (o.restarts < 1) throw ValidationError("--restarts must be >= 1");
  record("tokenize",
         {{"embeddings", o.embeddings}, {"spec", spec.to_string()}, {"iters", std::to_string(o.iters)},
          {"restarts", std::to_string(o.restarts)}, {"seed", std::to_string(o.seed)}, {"out", o.out}},
         sidecar_for(o.out));
  const ItemEmbeddingTable table = io::load_embeddings(o.embeddings);
  const SidAssignment a = tokenize(table, spec, o.iters, o.seed, o.restarts);
  io::save_assignment(o.out, a);
  return 0;
}

int cmd_align(const Options& o) {
  const Solver solver = parse_solver(o.solver);
  Settings settings{{"old", o.old_path}, {"new", o.new_path}, {"solver", to_string(solver)},
                    {"out_mapping", o.out_mapping}, {"out_aligned", o.out_aligned}};
  record("align", settings, o.out_mapping.empty() ? fs::path{} : sidecar_for(o.out_mapping));
  const SidAssignment old_a = io::load_assignment(o.old_path);
  const SidAssignment new_a = io::load_assignment(o.new_path);
  const TokenMapping mapping = align(old_a, new_a, solver);
  const SidAssignment aligned = rewrite(new_a, mapping);
  if (!o.out_mapping.empty()) io::save_mapping(o.out_mapping, mapping);
  if (!o.out_aligned.empty()) io::save_assignment(o.out_aligned, aligned);
  std::size_t kept = 0;
  for (const auto& [item, sid] : aligned.entries) {
    const auto it = old_a.entries.find(item);
    if (it != old_a.entries.end() && it->second == sid) ++kept;
  }
  std::cerr << kept << " of " << aligned.entries.size() << " items keep their old SID\n";
  return 0;
}

int cmd_train(const Options& o) {
  Settings settings{{"assignment", o.assignment}, {"out", o.out}, {"skip_unknown", o.skip_unknown ? "true" : "false"}};
  for (const auto& f : o.event_files) settings.emplace_back("events", f);
  if (o.init_model.empty()) {
    settings.insert(settings.end(), {{"order", std::to_string(o.order)},
                                     {"alpha", std::to_string(o.alpha)},
                                     {"backoff_ratio", std::to_string(o.backoff_ratio)}});
  } else {
    settings.insert(settings.end(), {{"init", o.init_model},
                                     {"decay", std::to_string(o.decay)},
                                     {"passes", std::to_string(o.passes)}});
  }
  record("train", settings, sidecar_for(o.out));

  const SidAssignment a = io::load_assignment(o.assignment);
  std::vector<InteractionEvent> events;
  for (const auto& f : o.event_files) {
    auto part = io::load_events(f);
    events.insert(events.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  UserHistories sequences = sequences_from(std::move(events));
  if (o.skip_unknown) drop_unknown(sequences, a);

  NGramSidModel model;
  if (o.init_model.empty()) {
    model = train(sequences, a, o.order, o.alpha, NGramSidModel::geometric_weights(o.order, o.backoff_ratio));
  } else {
    model = warm_update(load_model(o.init_model), sequences, a, o.decay, o.passes);
  }
  save_model(o.out, model);
  std::cerr << model.table().size() << " contexts\n";
  return 0;
}

int cmd_decode(const Options& o) {
  record("decode",
         {{"model", o.model}, {"assignment", o.assignment}, {"history", o.history}, {"beam", std::to_string(o.beam)},
          {"k", std::to_string(o.k)}, {"context_len", std::to_string(o.context_len)}, {"out", o.out}},
         sidecar_for(o.out));
  if (o.beam == 0 || o.k == 0) throw ValidationError("--beam and --k must be >= 1");
  const NGramSidModel model = load_model(o.model);
  const SidAssignment a = io::load_assignment(o.assignment);
  if (a.spec != model.spec()) throw ValidationError("incompatible codebook specs");
  const SidTrie trie = build_trie(a);
  const UserHistories histories = sequences_from(io::load_events(o.history));

  std::vector<const UserId*> users;
  std::vector<std::vector<ItemId>> contexts;
  for (const auto& [user, items] : histories) {
    users.push_back(&user);
    const std::size_t n = std::min(o.context_len, items.size());
    contexts.emplace_back(items.end() - static_cast<std::ptrdiff_t>(n), items.end());
  }
  std::vector<std::vector<ScoredItem>> ranked(users.size());
  parallel_for(0, users.size(),
               [&](std::size_t u) { ranked[u] = beam_decode(model, contexts[u], a, trie, o.beam, o.k); });

  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw IoError("cannot open '" + o.out + "' for writing");
  out << "user\trank\titem\tscore\n";
  char score[32];
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (std::size_t r = 0; r < ranked[u].size(); ++r) {
      std::snprintf(score, sizeof score, "%.17g", ranked[u][r].score);
      out << *users[u] << '\t' << r + 1 << '\t' << ranked[u][r].item << '\t' << score << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + o.out + "'");
  return 0;
}

void write_report(const EvalReport& report, const fs::path& out, const std::string& csv) {
  io::write_file(out, report.to_json().dump(2) + "\n");
  if (!csv.empty()) io::write_file(csv, report.rolling_csv());
}

void print_summary(const EvalReport& report, const ExperimentConfig& config) {
  for (Policy p : config.policies) {
    std::cout << to_string(p);
    for (std::size_t k : config.eval.ks) std::cout << "\trecall@" << k << "=" << report.mean_recall(p, k);
    std::cout << "\n";
  }
}

int cmd_eval(const Options& o) {
  const ExperimentConfig config = resolve_config(o.config, o.overrides);
  record_experiment(config, sidecar_for(o.out));
  const EvalReport report = run_experiment(config, [](const std::string& m) { std::cerr << m << "\n"; });
  write_report(report, o.out, o.csv);
  print_summary(report, config);
  return 0;
}

// Runs the stage chain once for the first seed, keeping every artifact, then
// the full multi-seed report.
int cmd_pipeline(const Options& o) {
  const ExperimentConfig config = resolve_config(o.config, o.overrides);
  const fs::path dir = o.pipeline_dir;
  fs::create_directories(dir);
  record_experiment(config, dir / "config.toml");

  const std::uint64_t seed = config.seeds.front();
  ExperimentData data;
  if (config.events_path.empty()) {
    SimulationParams params = config.simulation;
    params.seed = seed;
    const SimulatedWorld world(params);
    io::save_events(dir / "events.tsv", world.events());
    data = simulated_data(params, config.num_blocks, config.five_core);
  } else {
    data = file_data(config.events_path, config.embeddings_dir, config.num_blocks, config.five_core);
  }
  for (std::size_t k = 1; k <= data.blocks.size(); ++k)
    io::save_events(dir / block_name("block", k, "tsv"), data.blocks.block(k));

  const PolicyConfig& pc = config.eval;
  const StackConfig& stack = pc.stack;
  const auto tokenize_at = [&](std::size_t last) {
    return tokenize(data.embeddings(last), stack.spec, stack.kmeans_iters, seed, stack.kmeans_restarts);
  };
  const SidAssignment old_a = tokenize_at(pc.base_last_block);
  const SidAssignment new_a = tokenize_at(pc.finetune_block);
  const TokenMapping mapping = align(old_a, new_a, Solver::Greedy);
  const SidAssignment aligned = rewrite(new_a, mapping);
  io::save_assignment(dir / "sids_old.jsonl", old_a);
  io::save_assignment(dir / "sids_new.jsonl", new_a);
  io::save_mapping(dir / "mapping.json", mapping);
  io::save_assignment(dir / "sids_aligned.jsonl", aligned);

  const auto sequences = [&](std::size_t first, std::size_t last, const SidAssignment& a) {
    std::vector<InteractionEvent> events;
    for (std::size_t k = first; k <= last; ++k) events.insert(events.end(), data.blocks.block(k).begin(), data.blocks.block(k).end());
    UserHistories s = sequences_from(std::move(events));
    drop_unknown(s, a);
    return s;
  };
  const NGramSidModel base = train(sequences(1, pc.base_last_block, old_a), old_a, stack.order, stack.alpha,
                                   NGramSidModel::geometric_weights(stack.order, stack.backoff_ratio));
  save_model(dir / "model_base.bin", base);
  const NGramSidModel ours =
      warm_update(base, sequences(pc.finetune_block, pc.finetune_block, aligned), aligned, pc.decay, stack.passes);
  save_model(dir / "model_ft_ours.bin", ours);

  const EvalSet eval = build_eval_set(data.blocks, pc.finetune_block, pc.eval_block, pc.context_len, old_a);
  const SidTrie trie = build_trie(aligned);
  std::vector<std::vector<ScoredItem>> ranked(eval.users.size());
  parallel_for(0, eval.users.size(), [&](std::size_t u) {
    ranked[u] = beam_decode(ours, eval.contexts[u], aligned, trie, pc.beam, pc.ks.back());
  });
  {
    std::ofstream out(dir / "decode_ft_ours.tsv", std::ios::binary);
    if (!out) throw IoError("cannot write decode output in '" + dir.string() + "'");
    out << "user\trank\titem\n";
    for (std::size_t u = 0; u < eval.users.size(); ++u)
      for (std::size_t r = 0; r < ranked[u].size(); ++r) out << eval.users[u] << '\t' << r + 1 << '\t' << ranked[u][r].item << '\n';
  }

  const EvalReport report = run_experiment(config, [](const std::string& m) { std::cerr << m << "\n"; });
  write_report(report, dir / "report.json", o.csv.empty() ? "" : (dir / o.csv).string());
  print_summary(report, config);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-ID refresh with checkpoint-compatible token alignment"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker cap (0 = all cores); results do not depend on it");

  Options o;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic drifting interaction log");
  simulate->add_option("--preset", o.preset, "Parameter preset")->capture_default_str();
  simulate->add_option("--seed", o.seed, "Seed")->capture_default_str();
  simulate->add_option("--out-dir", o.out_dir, "Output directory")->required();
  simulate->add_option("--blocks", o.blocks, "Number of embedding windows")->capture_default_str();
  simulate->add_flag("--no-five-core", o.no_five_core, "Cut windows on the raw log");
  simulate->add_option("--set", o.overrides, "section.key=value override");

  auto* split = app.add_subcommand("split", "Cut an event log into chronological blocks");
  split->add_option("--events", o.events, "Event TSV")->required();
  split->add_option("--blocks", o.blocks, "Number of blocks")->capture_default_str();
  split->add_flag("--five-core", o.five_core, "Apply 5-core filtering first");
  split->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* tok = app.add_subcommand("tokenize", "Residual k-means tokenization of an embedding table");
  tok->add_option("--embeddings", o.embeddings, "Binary embedding table")->required();
  tok->add_option("--spec", o.spec, "L,V0,...,V(L-1)")->capture_default_str();
  tok->add_option("--iters", o.iters, "Lloyd iterations per level")->capture_default_str();
  tok->add_option("--restarts", o.restarts, "Seedings per level")->capture_default_str();
  tok->add_option("--seed", o.seed, "Seed")->capture_default_str();
  tok->add_option("--out", o.out, "Assignment JSONL")->required();

  auto* al = app.add_subcommand("align", "Map a rebuilt tokenization into an old token space");
  al->add_option("--old", o.old_path, "Old assignment JSONL")->required();
  al->add_option("--new", o.new_path, "New assignment JSONL")->required();
  al->add_option("--solver", o.solver, "greedy|hungarian")->capture_default_str();
  al->add_option("--out-mapping", o.out_mapping, "Mapping JSON");
  al->add_option("--out-aligned", o.out_aligned, "Aligned assignment JSONL");

  auto* tr = app.add_subcommand("train", "Train or warm-update the n-gram SID model");
  tr->add_option("--events", o.event_files, "Event TSV(s); sequences are per user in timestamp order")->required();
  tr->add_option("--assignment", o.assignment, "Assignment JSONL")->required();
  tr->add_option("--out", o.out, "Model file")->required();
  tr->add_option("--order", o.order, "Context length in tokens")->capture_default_str();
  tr->add_option("--alpha", o.alpha, "Add-alpha smoothing")->capture_default_str();
  tr->add_option("--backoff-ratio", o.backoff_ratio, "Interpolation weight ratio per shorter context")
      ->capture_default_str();
  tr->add_option("--init", o.init_model, "Warm-start from this model");
  tr->add_option("--decay", o.decay, "Scale on existing counts when warm-starting")->capture_default_str();
  tr->add_option("--passes", o.passes, "Weight of the new counts when warm-starting")->capture_default_str();
  tr->add_flag("--skip-unknown", o.skip_unknown, "Drop items without a SID instead of failing");

  auto* dec = app.add_subcommand("decode", "Constrained beam search per user history");
  dec->add_option("--model", o.model, "Model file")->required();
  dec->add_option("--assignment", o.assignment, "Assignment JSONL")->required();
  dec->add_option("--history", o.history, "Event TSV with user histories")->required();
  dec->add_option("--beam", o.beam, "Beam width")->capture_default_str();
  dec->add_option("--k", o.k, "Items per user")->capture_default_str();
  dec->add_option("--context-len", o.context_len, "Last N items used as context")->capture_default_str();
  dec->add_option("--out", o.out, "Ranked output TSV")->required();

  auto* ev = app.add_subcommand("eval", "Run the policy comparison described by a config");
  ev->add_option("--config", o.config, "TOML/INI or JSON config");
  ev->add_option("--set", o.overrides, "section.key=value override");
  ev->add_option("--out", o.out, "Report JSON")->required();
  ev->add_option("--csv", o.csv, "Rolling series CSV");

  auto* pipe = app.add_subcommand("pipeline", "End-to-end run with every intermediate artifact");
  pipe->add_option("--config", o.config, "TOML/INI or JSON config")->required();
  pipe->add_option("--set", o.overrides, "section.key=value override");
  pipe->add_option("--out-dir", o.pipeline_dir, "Output directory")->capture_default_str();
  pipe->add_option("--csv", o.csv, "Rolling series CSV name inside the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    set_num_threads(threads);
    if (simulate->parsed()) return cmd_simulate(o);
    if (split->parsed()) return cmd_split(o);
    if (tok->parsed()) return cmd_tokenize(o);
    if (al->parsed()) return cmd_align(o);
    if (tr->parsed()) return cmd_train(o);
    if (dec->parsed()) return cmd_decode(o);
    if (ev->parsed()) return cmd_eval(o);
    if (pipe->parsed()) return cmd_pipeline(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
