#include "sidalign/experiment.hpp"

#include "sidalign/io.hpp"
#include "sidalign/temporal.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_set>

namespace sidalign {

namespace {

// Drops a trailing "# ..." or "; ..." comment that sits outside quotes.
std::string strip_comment(const std::string& value) {
  char quote = 0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const char ch = value[i];
    if (quote) {
      if (ch == quote) quote = 0;
    } else if (ch == '"' || ch == '\'') {
      quote = ch;
    } else if (ch == '#' || ch == ';') {
      return value.substr(0, i);
    }
  }
  return value;
}

std::string unquote(std::string value) {
  boost::algorithm::trim(value);
  if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
    return value.substr(1, value.size() - 2);
  if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
    std::vector<std::string> parts;
    const std::string inner = value.substr(1, value.size() - 2);
    boost::algorithm::split(parts, inner, boost::is_any_of(","));
    std::string out;
    for (auto& part : parts) {
      part = unquote(part);
      if (part.empty()) continue;
      if (!out.empty()) out += ',';
      out += part;
    }
    return out;
  }
  return value;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  if (value.empty()) return parts;
  boost::algorithm::split(parts, value, boost::is_any_of(","));
  for (auto& p : parts) boost::algorithm::trim(p);
  return parts;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = parse_number<std::uint64_t>(key, boost::algorithm::trim_copy(text.substr(0, dots)));
    const auto hi = parse_number<std::uint64_t>(key, boost::algorithm::trim_copy(text.substr(dots + 2)));
    if (hi < lo) throw ValidationError("config key '" + key + "': empty seed range");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    for (const auto& part : split_list(text)) seeds.push_back(parse_number<std::uint64_t>(key, part));
  }
  if (seeds.empty()) throw ValidationError("config key '" + key + "': no seeds");
  return seeds;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& part : split_list(text)) out.push_back(parse_number<std::size_t>(key, part));
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split_list(text)) out.push_back(parse_number<double>(key, part));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += v;
    } else if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

std::string list_text(const std::string& joined) { return "[" + boost::algorithm::replace_all_copy(joined, ",", ", ") + "]"; }

}  // namespace

ConfigEntries parse_config_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  ConfigEntries out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ValidationError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) out[section + "." + key] = unquote(strip_comment(value.data()));
  }
  return out;
}

ConfigEntries parse_config_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config: top level must be an object of sections");
  const auto scalar = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  ConfigEntries out;
  for (const auto& [section, body] : doc.items()) {
    if (!body.is_object()) throw ValidationError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      std::string text;
      if (value.is_array()) {
        for (const auto& v : value) text += (text.empty() ? "" : ",") + scalar(v);
      } else {
        text = scalar(value);
      }
      out[section + "." + key] = text;
    }
  }
  return out;
}

ConfigEntries load_config_file(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  return path.extension() == ".json" ? parse_config_json(text) : parse_config_text(text);
}

void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0 || o.find('.') > eq)
      throw ValidationError("override '" + o + "' must look like section.key=value");
    entries[boost::algorithm::trim_copy(o.substr(0, eq))] = unquote(o.substr(eq + 1));
  }
}

ExperimentConfig ExperimentConfig::from_entries(const ConfigEntries& entries) {
  ExperimentConfig c;
  // The preset goes first so explicit simulation keys refine it.
  if (auto it = entries.find("simulation.preset"); it != entries.end()) {
    c.preset = it->second;
    c.simulation = simulation_preset(c.preset);
  }
  SimulationParams& s = c.simulation;
  PolicyConfig& e = c.eval;
  for (const auto& [key, v] : entries) {
    if (key == "simulation.preset") continue;
    else if (key == "simulation.users") s.n_users = parse_number<std::size_t>(key, v);
    else if (key == "simulation.items") s.n_items = parse_number<std::size_t>(key, v);
    else if (key == "simulation.events") s.n_events = parse_number<std::size_t>(key, v);
    else if (key == "simulation.dim") s.dim = parse_number<std::size_t>(key, v);
    else if (key == "simulation.drift") s.drift = parse_number<double>(key, v);
    else if (key == "simulation.popularity_skew") s.popularity_skew = parse_number<double>(key, v);
    else if (key == "simulation.popularity_blend") s.popularity_blend = parse_number<double>(key, v);
    else if (key == "simulation.popularity_shift") s.popularity_shift = parse_number<double>(key, v);
    else if (key == "simulation.sharpness") s.sharpness = parse_number<double>(key, v);
    else if (key == "simulation.new_item_fraction") s.new_item_fraction = parse_number<double>(key, v);
    else if (key == "simulation.time_slices") s.time_slices = parse_number<std::size_t>(key, v);
    else if (key == "simulation.clusters") s.clusters = parse_number<std::size_t>(key, v);
    else if (key == "simulation.cluster_depth") s.cluster_depth = parse_number<std::size_t>(key, v);
    else if (key == "simulation.cluster_decay") s.cluster_decay = parse_number<double>(key, v);
    else if (key == "simulation.item_noise") s.item_noise = parse_number<double>(key, v);
    else if (key == "simulation.user_noise") s.user_noise = parse_number<double>(key, v);
    else if (key == "simulation.subclusters") s.subclusters = parse_number<std::size_t>(key, v);
    else if (key == "simulation.partner_weight") s.partner_weight = parse_number<double>(key, v);
    else if (key == "simulation.sub_weight") s.sub_weight = parse_number<double>(key, v);
    else if (key == "simulation.speed_spread") s.speed_spread = parse_number<double>(key, v);
    else if (key == "simulation.migration_rate") s.migration_rate = parse_number<double>(key, v);
    else if (key == "simulation.embedding_recency") s.embedding_recency = parse_number<double>(key, v);
    else if (key == "simulation.embedding_noise") s.embedding_noise = parse_number<double>(key, v);
    else if (key == "data.events") c.events_path = v;
    else if (key == "data.embeddings_dir") c.embeddings_dir = v;
    else if (key == "data.blocks") c.num_blocks = parse_number<std::size_t>(key, v);
    else if (key == "data.five_core") c.five_core = parse_bool(key, v);
    else if (key == "tokenizer.spec") e.stack.spec = CodebookSpec::parse(v);
    else if (key == "tokenizer.kmeans_iters") e.stack.kmeans_iters = parse_number<int>(key, v);
    else if (key == "tokenizer.kmeans_restarts") e.stack.kmeans_restarts = parse_number<int>(key, v);
    else if (key == "model.order") e.stack.order = parse_number<std::size_t>(key, v);
    else if (key == "model.alpha") e.stack.alpha = parse_number<double>(key, v);
    else if (key == "model.backoff_ratio") e.stack.backoff_ratio = parse_number<double>(key, v);
    else if (key == "finetune.decay") e.decay = parse_number<double>(key, v);
    else if (key == "finetune.passes") e.stack.passes = parse_number<double>(key, v);
    else if (key == "finetune.pilot") c.pilot = parse_bool(key, v);
    else if (key == "finetune.pilot_passes") c.pilot_passes = parse_doubles(key, v);
    else if (key == "eval.policies") {
      c.policies.clear();
      for (const auto& name : split_list(v)) c.policies.push_back(parse_policy(name));
      if (c.policies.empty()) throw ValidationError("config key 'eval.policies' is empty");
    }
    else if (key == "eval.base_last_block") e.base_last_block = parse_number<std::size_t>(key, v);
    else if (key == "eval.finetune_block") e.finetune_block = parse_number<std::size_t>(key, v);
    else if (key == "eval.eval_block") e.eval_block = parse_number<std::size_t>(key, v);
    else if (key == "eval.context_len") e.context_len = parse_number<std::size_t>(key, v);
    else if (key == "eval.beam") e.beam = parse_number<std::size_t>(key, v);
    else if (key == "eval.ks") e.ks = parse_sizes(key, v);
    else if (key == "rolling.enabled") c.rolling = parse_bool(key, v);
    else if (key == "rolling.t_start") c.rolling_options.t_start = parse_number<std::size_t>(key, v);
    else if (key == "rolling.steps") c.rolling_options.steps = parse_sizes(key, v);
    else if (key == "run.seeds") c.seeds = parse_seeds(key, v);
    else throw ValidationError("unknown config key '" + key + "'");
  }
  e.validate();
  if (c.num_blocks < e.eval_block) throw ValidationError("data.blocks must be >= eval.eval_block");
  if (c.rolling && (c.rolling_options.steps.empty() || c.rolling_options.steps.back() + 1 > c.num_blocks))
    throw ValidationError("rolling steps need blocks up to the last step + 1");
  if (c.pilot && c.pilot_passes.empty()) throw ValidationError("finetune.pilot_passes is empty");
  if (!c.events_path.empty() && c.embeddings_dir.empty())
    throw ValidationError("data.events requires data.embeddings_dir");
  return c;
}

ConfigEntries ExperimentConfig::to_entries() const {
  ConfigEntries out;
  if (events_path.empty()) {
    const SimulationParams& s = simulation;
    out["simulation.preset"] = preset;
    out["simulation.users"] = std::to_string(s.n_users);
    out["simulation.items"] = std::to_string(s.n_items);
    out["simulation.events"] = std::to_string(s.n_events);
    out["simulation.dim"] = std::to_string(s.dim);
    out["simulation.drift"] = format_double(s.drift);
    out["simulation.popularity_skew"] = format_double(s.popularity_skew);
    out["simulation.popularity_blend"] = format_double(s.popularity_blend);
    out["simulation.popularity_shift"] = format_double(s.popularity_shift);
    out["simulation.sharpness"] = format_double(s.sharpness);
    out["simulation.new_item_fraction"] = format_double(s.new_item_fraction);
    out["simulation.time_slices"] = std::to_string(s.time_slices);
    out["simulation.clusters"] = std::to_string(s.clusters);
    out["simulation.cluster_depth"] = std::to_string(s.cluster_depth);
    out["simulation.cluster_decay"] = format_double(s.cluster_decay);
    out["simulation.item_noise"] = format_double(s.item_noise);
    out["simulation.user_noise"] = format_double(s.user_noise);
    out["simulation.subclusters"] = std::to_string(s.subclusters);
    out["simulation.partner_weight"] = format_double(s.partner_weight);
    out["simulation.sub_weight"] = format_double(s.sub_weight);
    out["simulation.speed_spread"] = format_double(s.speed_spread);
    out["simulation.migration_rate"] = format_double(s.migration_rate);
    out["simulation.embedding_recency"] = format_double(s.embedding_recency);
    out["simulation.embedding_noise"] = format_double(s.embedding_noise);
  } else {
    out["data.events"] = events_path;
    out["data.embeddings_dir"] = embeddings_dir;
  }
  out["data.blocks"] = std::to_string(num_blocks);
  out["data.five_core"] = five_core ? "true" : "false";
  out["tokenizer.spec"] = eval.stack.spec.to_string();
  out["tokenizer.kmeans_iters"] = std::to_string(eval.stack.kmeans_iters);
  out["tokenizer.kmeans_restarts"] = std::to_string(eval.stack.kmeans_restarts);
  out["model.order"] = std::to_string(eval.stack.order);
  out["model.alpha"] = format_double(eval.stack.alpha);
  out["model.backoff_ratio"] = format_double(eval.stack.backoff_ratio);
  out["finetune.decay"] = format_double(eval.decay);
  out["finetune.passes"] = format_double(eval.stack.passes);
  out["finetune.pilot"] = pilot ? "true" : "false";
  out["finetune.pilot_passes"] = join(pilot_passes);
  std::vector<std::string> names;
  for (Policy p : policies) names.push_back(to_string(p));
  out["eval.policies"] = join(names);
  out["eval.base_last_block"] = std::to_string(eval.base_last_block);
  out["eval.finetune_block"] = std::to_string(eval.finetune_block);
  out["eval.eval_block"] = std::to_string(eval.eval_block);
  out["eval.context_len"] = std::to_string(eval.context_len);
  out["eval.beam"] = std::to_string(eval.beam);
  out["eval.ks"] = join(eval.ks);
  out["rolling.enabled"] = rolling ? "true" : "false";
  out["rolling.t_start"] = std::to_string(rolling_options.t_start);
  out["rolling.steps"] = join(rolling_options.steps);
  out["run.seeds"] = join(seeds);
  return out;
}

std::string ExperimentConfig::to_text() const {
  static const std::set<std::string> lists{"eval.policies", "eval.ks", "rolling.steps", "run.seeds",
                                           "finetune.pilot_passes"};
  static const std::set<std::string> strings{"simulation.preset", "data.events", "data.embeddings_dir",
                                             "tokenizer.spec"};
  const ConfigEntries entries = to_entries();
  // Sections in pipeline order rather than alphabetical.
  static const std::vector<std::string> sections{"simulation", "data", "tokenizer", "model",
                                                 "finetune",   "eval", "rolling",   "run"};
  std::ostringstream out;
  for (const auto& section : sections) {
    bool header = false;
    for (const auto& [key, value] : entries) {
      if (key.compare(0, section.size() + 1, section + ".") != 0) continue;
      if (!header) {
        out << (out.tellp() > 0 ? "\n" : "") << '[' << section << "]\n";
        header = true;
      }
      std::string shown = value;
      if (lists.count(key)) {
        shown = key == "eval.policies" ? "[\"" + boost::algorithm::replace_all_copy(value, ",", "\", \"") + "\"]"
                                       : list_text(value);
      } else if (strings.count(key)) {
        shown = '"' + value + '"';
      }
      out << key.substr(section.size() + 1) << " = " << shown << '\n';
    }
  }
  return out.str();
}

ItemEmbeddingTable window_table(const SimulatedWorld& world, const TemporalBlocks& blocks, std::size_t last_block) {
  if (last_block < 1 || last_block > blocks.size()) throw ValidationError("window block out of range");
  std::unordered_set<ItemId> present;
  std::int64_t last_ts = -1;
  for (std::size_t k = 1; k <= last_block; ++k) {
    for (const auto& e : blocks.block(k)) {
      present.insert(e.item);
      last_ts = std::max(last_ts, e.timestamp);
    }
  }
  const ItemEmbeddingTable full = world.window_embeddings(last_ts);
  std::vector<ItemId> ids;
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < full.size(); ++r) {
    if (present.count(full.ids()[r])) {
      ids.push_back(full.ids()[r]);
      rows.push_back(static_cast<Eigen::Index>(r));
    }
  }
  ItemEmbeddingTable::Matrix vectors(static_cast<Eigen::Index>(rows.size()), full.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) vectors.row(static_cast<Eigen::Index>(r)) = full.vectors().row(rows[r]);
  return ItemEmbeddingTable(std::move(ids), std::move(vectors));
}

ExperimentData simulated_data(const SimulationParams& params, std::size_t num_blocks, bool five_core) {
  auto world = std::make_shared<const SimulatedWorld>(params);
  auto events = five_core ? five_core_filter(world->events()) : world->events();
  ExperimentData data;
  data.blocks = chronological_blocks(std::move(events), num_blocks);
  auto blocks = std::make_shared<const TemporalBlocks>(data.blocks);
  data.embeddings = [world, blocks](std::size_t last_block) { return window_table(*world, *blocks, last_block); };
  return data;
}

ExperimentData file_data(const std::filesystem::path& events, const std::filesystem::path& embeddings_dir,
                         std::size_t num_blocks, bool five_core) {
  auto log = io::load_events(events);
  if (five_core) log = five_core_filter(log);
  ExperimentData data;
  data.blocks = chronological_blocks(std::move(log), num_blocks);
  data.embeddings = [embeddings_dir](std::size_t last_block) {
    char name[32];
    std::snprintf(name, sizeof name, "window_%02zu.bin", last_block);
    return io::load_embeddings(embeddings_dir / name);
  };
  return data;
}

EvalReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  EvalReport report;
  for (std::uint64_t seed : config.seeds) {
    ExperimentData data;
    if (config.events_path.empty()) {
      SimulationParams params = config.simulation;
      params.seed = seed;
      data = simulated_data(params, config.num_blocks, config.five_core);
    } else {
      data = file_data(config.events_path, config.embeddings_dir, config.num_blocks, config.five_core);
    }
    PolicyConfig pc = config.eval;
    pc.seed = seed;
    if (config.pilot) {
      pc.stack.passes = select_passes(pc, data, config.pilot_passes);
      if (progress) progress("seed " + std::to_string(seed) + " pilot passes " + std::to_string(pc.stack.passes));
    }
    auto rows = run_policies(config.policies, pc, data);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    if (config.rolling) {
      auto rolling = run_rolling(config.policies, pc, data, config.rolling_options);
      report.rolling_rows.insert(report.rolling_rows.end(), rolling.begin(), rolling.end());
    }
    if (progress) progress("seed " + std::to_string(seed) + " done");
  }
  return report;
}

}  // namespace sidalign
