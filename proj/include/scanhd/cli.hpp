#pragma once

// Command-line front end. Every subcommand resolves one RunConfig document
// (built-in defaults < SCANHD_SEED < --config file < flags), runs the module
// operation and writes its outputs plus a "<file>.manifest.json" beside each.
//
// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 validation error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scanhd/baselines.hpp"
#include "scanhd/experiment.hpp"
#include "scanhd/flywheel.hpp"
#include "scanhd/model_io.hpp"
#include "scanhd/synth.hpp"

namespace scanhd::cli {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int { ok = 0, runtime_error = 1, usage_error = 2, validation_error = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

// The schema is the defaults document itself: keys, nesting and value types.
inline Json default_config() {
  return Json{
      {"seed", 1},
      {"hyper_dim", kDefaultHyperDim},
      {"observation_dim", 512},
      {"instruction_dim", 512},
      {"fusion", "hyperbind"},
      {"modalities", "both"},
      {"normalize_inputs", true},
      {"eta", 0.05},
      {"refine_epochs", 20},
      {"early_stop_patience", 5},
      {"algorithm", "adaptive"},
      {"data", "data"},
      {"embeddings", ""},
      {"model", "model.json"},
      {"out", ""},
      {"records", ""},
      {"csv", ""},
      {"split", "row_random:0.8"},
      {"train_split", "row_random:0.8"},
      {"predictor", "scanhd"},
      {"protocol", "single"},
      {"seeds", {1, 2, 3, 4, 5}},
      {"fractions", {0.2, 0.4, 0.6, 0.8, 1.0}},
      {"cross_splits", {"lighting:dark", "position:2", "rotation:2"}},
      {"knn", true},
      {"knn_k", 5},
      {"synth", {{"objects", 16}, {"keys", 4}, {"noise_sigma", 0.1}}},
      {"flywheel", {{"rounds", 3}, {"strict", false}, {"corrupt_rate", 0.0}, {"agent_command", ""}}},
      {"latency", {{"queries", 1000}, {"warmup", 20}}},
  };
}

namespace detail {

inline bool same_kind(const Json& value, const Json& schema) {
  if (schema.is_boolean()) return value.is_boolean();
  if (schema.is_number_unsigned() || schema.is_number_integer()) {
    return value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  }
  if (schema.is_number()) return value.is_number();
  if (schema.is_string()) return value.is_string();
  if (schema.is_array()) return value.is_array();
  if (schema.is_object()) return value.is_object();
  return false;
}

inline void check_against(const Json& value, const Json& schema, const std::string& path) {
  if (!same_kind(value, schema)) {
    throw ConfigError("config key '" + path + "' has the wrong type (expected like " + schema.dump() + ")");
  }
  if (schema.is_object()) {
    for (const auto& [key, v] : value.items()) {
      if (!schema.contains(key)) throw ConfigError("unknown config key '" + (path.empty() ? "" : path + ".") + key + "'");
      check_against(v, schema.at(key), path.empty() ? key : path + "." + key);
    }
  } else if (schema.is_array() && !schema.empty()) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      check_against(value[i], schema[0], path + "[" + std::to_string(i) + "]");
    }
  }
}

inline const Json& schema_at(const Json& schema, const std::string& dotted) {
  const Json* node = &schema;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    node = &node->at(dotted.substr(start, dot - start));
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

inline Json& node_at(Json& doc, const std::string& dotted) {
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    node = &(*node)[dotted.substr(start, dot - start)];
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Converts a flag's text to the JSON type of its schema entry.
inline Json flag_value(const std::string& flag, const std::string& text, const Json& schema) {
  auto bad = [&] { return UsageError("invalid value '" + text + "' for --" + flag); };
  auto as_unsigned = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) throw bad();
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw bad();
    }
  };
  auto as_double = [&](const std::string& s) -> double {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw bad();
      return v;
    } catch (const std::invalid_argument&) {
      throw bad();
    } catch (const std::out_of_range&) {
      throw bad();
    }
  };
  if (schema.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw bad();
  }
  if (schema.is_number_unsigned() || schema.is_number_integer()) return as_unsigned(text);
  if (schema.is_number()) return as_double(text);
  if (schema.is_string()) return text;
  if (schema.is_array()) {
    Json arr = Json::array();
    for (const auto& item : split_list(text)) {
      if (schema.at(0).is_number_unsigned() || schema.at(0).is_number_integer()) {
        arr.push_back(as_unsigned(item));
      } else if (schema.at(0).is_number()) {
        arr.push_back(as_double(item));
      } else {
        arr.push_back(item);
      }
    }
    return arr;
  }
  throw bad();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << content;
  require(out.good(), ErrorCode::io, "write failed for " + path);
}

}  // namespace detail

// The resolved document plus the keys that were set explicitly.
struct RunConfig {
  Json doc = default_config();
  std::set<std::string> explicit_keys;

  [[nodiscard]] const Json& at(const std::string& dotted) const { return detail::schema_at(doc, dotted); }
  template <class T>
  [[nodiscard]] T get(const std::string& dotted) const {
    return at(dotted).get<T>();
  }
  [[nodiscard]] bool is_explicit(const std::string& key) const { return explicit_keys.contains(key); }

  // Throws ConfigError on unknown keys, wrong types or bad values.
  void validate() const {
    detail::check_against(doc, default_config(), "");
    auto positive = [&](const char* key) {
      if (get<std::uint64_t>(key) == 0) throw ConfigError(std::string("config key '") + key + "' must be positive");
    };
    for (const char* key : {"hyper_dim", "observation_dim", "instruction_dim", "knn_k", "synth.objects", "synth.keys"}) {
      positive(key);
    }
    try {
      (void)fusion_strategy_from_string(get<std::string>("fusion"));
      (void)modality_mode_from_string(get<std::string>("modalities"));
      (void)algorithm_from_string(get<std::string>("algorithm"));
      (void)protocol_from_string(get<std::string>("protocol"));
      (void)SplitSpec::parse(get<std::string>("split"));
      if (get<std::string>("train_split") != "all") (void)SplitSpec::parse(get<std::string>("train_split"));
      for (const auto& s : at("cross_splits")) (void)SplitSpec::parse(s.get<std::string>());
    } catch (const Error& ex) {
      throw ConfigError(ex.what());
    }
    if (!(get<double>("eta") > 0.0)) throw ConfigError("config key 'eta' must be positive");
    const auto predictor = get<std::string>("predictor");
    if (predictor != "scanhd" && predictor != "knn" && predictor != "rule") {
      throw ConfigError("config key 'predictor' must be scanhd, knn or rule");
    }
    if (at("seeds").empty()) throw ConfigError("config key 'seeds' must not be empty");
    for (const auto& f : at("fractions")) {
      if (!(f.get<double>() > 0.0 && f.get<double>() <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
    }
    const double rate = get<double>("flywheel.corrupt_rate");
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("flywheel.corrupt_rate must lie in [0, 1]");
    if (!(get<double>("synth.noise_sigma") >= 0.0)) throw ConfigError("synth.noise_sigma must be non-negative");
  }

  [[nodiscard]] FusionConfig fusion() const {
    FusionConfig f;
    f.strategy = fusion_strategy_from_string(get<std::string>("fusion"));
    f.modalities = modality_mode_from_string(get<std::string>("modalities"));
    f.normalize_inputs = get<bool>("normalize_inputs");
    f.hyper_dim = get<std::size_t>("hyper_dim");
    f.observation_dim = get<std::size_t>("observation_dim");
    f.instruction_dim = get<std::size_t>("instruction_dim");
    return f;
  }

  [[nodiscard]] TrainingConfig training() const {
    TrainingConfig t;
    t.eta = get<double>("eta");
    t.refine_epochs = get<std::size_t>("refine_epochs");
    t.early_stop_patience = get<std::size_t>("early_stop_patience");
    t.shuffle_seed = get<std::uint64_t>("seed");
    return t;
  }

  [[nodiscard]] SynthConfig synth() const {
    SynthConfig s;
    s.objects = get<std::size_t>("synth.objects");
    s.keys_per_object = get<std::size_t>("synth.keys");
    s.noise_sigma = get<double>("synth.noise_sigma");
    s.seed = get<std::uint64_t>("seed");
    s.observation_dim = get<std::size_t>("observation_dim");
    s.instruction_dim = get<std::size_t>("instruction_dim");
    return s;
  }
};

inline RunConfig resolve_config(const std::string& config_path, const std::map<std::string, Json>& flags,
                                const char* env_seed) {
  RunConfig rc;
  if (env_seed && *env_seed) {
    const std::string s(env_seed);
    if (s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("SCANHD_SEED='" + s + "' is not a non-negative integer");
    }
    rc.doc["seed"] = std::stoull(s);
  }
  if (!config_path.empty()) {
    Json file;
    try {
      file = Json::parse(detail::read_file(config_path));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("config " + config_path + " is not valid JSON: " + ex.what());
    }
    if (!file.is_object()) throw ConfigError("config " + config_path + " must hold a JSON object");
    detail::check_against(file, default_config(), "");
    for (const auto& [key, value] : file.items()) {
      if (value.is_object()) {
        for (const auto& [sub, v] : value.items()) {
          rc.doc[key][sub] = v;
          rc.explicit_keys.insert(key + "." + sub);
        }
      } else {
        rc.doc[key] = value;
      }
      rc.explicit_keys.insert(key);
    }
  }
  for (const auto& [key, value] : flags) {
    detail::node_at(rc.doc, key) = value;
    rc.explicit_keys.insert(key);
  }
  rc.validate();
  return rc;
}

// ---------------------------------------------------------------------------
// Inputs and outputs

struct DataPaths {
  std::string dataset;
  std::string embeddings;
};

inline DataPaths data_paths(const RunConfig& rc, const std::string& data_override = "") {
  const std::string data = data_override.empty() ? rc.get<std::string>("data") : data_override;
  DataPaths p;
  if (std::filesystem::is_directory(data)) {
    p.dataset = (std::filesystem::path(data) / "dataset.jsonl").string();
    p.embeddings = (std::filesystem::path(data) / "embeddings.jsonl").string();
  } else {
    p.dataset = data;
    p.embeddings = (std::filesystem::path(data).parent_path() / "embeddings.jsonl").string();
  }
  if (!rc.get<std::string>("embeddings").empty()) p.embeddings = rc.get<std::string>("embeddings");
  return p;
}

inline Json file_entry(const std::string& path) {
  return {{"path", path}, {"fnv1a64", hex64(fnv1a64(detail::read_file(path)))}};
}

class Outputs {
 public:
  Outputs(std::string command, const RunConfig& rc) : command_(std::move(command)), rc_(&rc) {}

  void input(const std::string& path) { inputs_.push_back(file_entry(path)); }

  // Writes `content` to `path` and its manifest beside it.
  void write(const std::string& path, const std::string& content, Json extra = Json::object()) {
    detail::write_file(path, content);
    Json m;
    m["tool"] = "scanhd";
    m["version"] = kVersion;
    m["model_format_version"] = kModelFormatVersion;
    m["command"] = command_;
    m["config"] = rc_->doc;
    m["inputs"] = inputs_;
    m["output"] = {{"path", path}, {"fnv1a64", hex64(fnv1a64(content))}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    detail::write_file(path + ".manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  const RunConfig* rc_;
  Json inputs_ = Json::array();
};

inline std::string out_path(const RunConfig& rc, const std::string& fallback) {
  const auto out = rc.get<std::string>("out");
  return out.empty() ? fallback : out;
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

template <class Writer>
std::string to_text(Writer&& w) {
  std::ostringstream s;
  w(s);
  return s.str();
}

// "file#id" or a bare id looked up in `fallback`.
inline Embedding resolve_embedding(const std::string& ref, const EmbeddingStore* fallback) {
  const auto hash = ref.rfind('#');
  if (hash == std::string::npos) {
    require(fallback != nullptr, ErrorCode::invalid_argument,
            "embedding reference '" + ref + "' needs the form file#id when no data is available");
    return fallback->at(ref);
  }
  const auto store = EmbeddingStore::load(ref.substr(0, hash));
  return store.at(ref.substr(hash + 1));
}

// ---------------------------------------------------------------------------
// Subcommands

struct Context {
  RunConfig rc;
  std::size_t jobs = 1;
  std::map<std::string, std::string> local;  // command-specific arguments
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;

  [[nodiscard]] std::string arg(const std::string& key) const {
    auto it = local.find(key);
    return it == local.end() ? std::string() : it->second;
  }
};

inline int cmd_gen(Context& ctx) {
  const auto cfg = ctx.rc.synth();
  const auto data = synth_generate(cfg, ctx.jobs);
  const auto dir = out_path(ctx.rc, "data");
  Outputs outs("gen", ctx.rc);
  const Json extra = {{"rows", data.dataset.size()}, {"dataset_fingerprint", hex64(data.dataset.fingerprint())}};
  outs.write(join(dir, "dataset.jsonl"), to_text([&](std::ostream& s) { data.dataset.write(s); }), extra);
  outs.write(join(dir, "embeddings.jsonl"), to_text([&](std::ostream& s) { data.embeddings.write(s); }),
             {{"records", data.embeddings.size()}});
  *ctx.out << "generated " << data.dataset.size() << " rows and " << data.embeddings.size() << " embeddings in "
           << dir << "\n";
  return ok;
}

inline int cmd_train(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto paths = data_paths(rc);
  const auto data = Dataset::load(paths.dataset);
  const auto store = EmbeddingStore::load(paths.embeddings);
  const auto seed = rc.get<std::uint64_t>("seed");

  std::vector<Instance> rows = data.instances();
  std::string split_descriptor = "all";
  if (rc.get<std::string>("train_split") != "all") {
    auto parts = split(data, SplitSpec::parse(rc.get<std::string>("train_split")), seed);
    rows = std::move(parts.train);
    split_descriptor = parts.descriptor;
  }
  const auto fusion = rc.fusion();
  const EncoderSet encoders(fusion);
  const auto encoded = encode_rows(rows, fusion, encoders, store, ctx.jobs);
  auto result = train_on(rows, encoded, fusion, rc.training(), algorithm_from_string(rc.get<std::string>("algorithm")));
  result.model.meta().split = split_descriptor;
  result.model.meta().data_path = rc.get<std::string>("data");

  const auto path = out_path(rc, "model.json");
  Outputs outs("train", rc);
  outs.input(paths.dataset);
  outs.input(paths.embeddings);
  outs.write(path, model_to_string(result.model), {{"split", split_descriptor}, {"train_rows", rows.size()}});

  const auto& m = result.model.meta();
  *ctx.out << "trained on " << rows.size() << " rows (" << split_descriptor << "), " << m.epochs_run
           << " refinement epochs, errors per epoch:";
  for (auto e : m.refine_errors) *ctx.out << ' ' << e;
  *ctx.out << "\n";
  for (const auto& c : untrained_classes(result.model)) *ctx.err << "warning: class " << c << " has no training rows\n";
  *ctx.out << "model written to " << path << "\n";
  return ok;
}

inline int cmd_eval(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto model_path = rc.get<std::string>("model");
  const auto model = load_model(model_path);
  const std::string data_arg =
      rc.is_explicit("data") || model.meta().data_path.empty() ? std::string() : model.meta().data_path;
  const auto paths = data_paths(rc, data_arg);
  const auto data = Dataset::load(paths.dataset);
  const auto store = EmbeddingStore::load(paths.embeddings);

  // Evaluate on the model's own held-out part unless a split is requested.
  SplitSpec spec = SplitSpec::parse(rc.get<std::string>("split"));
  std::uint64_t seed = rc.get<std::uint64_t>("seed");
  const auto& trained_split = model.meta().split;
  const auto at = trained_split.rfind('@');
  if (!rc.is_explicit("split") && at != std::string::npos) {
    spec = SplitSpec::parse(trained_split.substr(0, at));
    if (!rc.is_explicit("seed")) seed = std::stoull(trained_split.substr(at + 1));
  }
  const auto parts = split(data, spec, seed);

  std::vector<PredictionRecord> records;
  EvalReport rep;
  const auto predictor = rc.get<std::string>("predictor");
  if (predictor == "scanhd") {
    rep = evaluate(ModelPredictor(model, store), parts.test, parts.descriptor, &records, ctx.jobs);
    rep.config_fingerprint = hex64(fnv1a64(model_to_string(model)));
    for (const auto& c : untrained_classes(model)) rep.warnings.push_back("class " + c + " has no training signal");
    if (trained_split == "all") rep.warnings.push_back("model was trained on every row; test rows were seen in training");
  } else if (predictor == "knn") {
    const KnnBaseline knn(parts.train, store, rc.get<std::size_t>("knn_k"), knn_space_for(model.fusion().modalities));
    rep = evaluate(knn, parts.test, parts.descriptor, &records, ctx.jobs);
  } else {
    const RuleLookupBaseline rule(parts.train);
    rep = evaluate(rule, parts.test, parts.descriptor, &records, ctx.jobs);
  }

  Outputs outs("eval", rc);
  outs.input(model_path);
  outs.input(paths.dataset);
  outs.input(paths.embeddings);
  const auto path = out_path(rc, "report.json");
  outs.write(path, to_json(rep).dump(2) + "\n");
  if (!rc.get<std::string>("records").empty()) {
    outs.write(rc.get<std::string>("records"), to_text([&](std::ostream& s) { write_records(s, records); }));
  }
  if (!rc.get<std::string>("csv").empty()) {
    outs.write(rc.get<std::string>("csv"), to_text([&](std::ostream& s) { write_csv(s, rep); }));
  }
  render_table(*ctx.out, rep);
  for (const auto& w : rep.warnings) *ctx.err << "warning: " << w << "\n";
  return ok;
}

inline int cmd_sweep(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto paths = data_paths(rc);
  const auto data = Dataset::load(paths.dataset);
  const auto store = EmbeddingStore::load(paths.embeddings);

  SweepConfig cfg;
  cfg.protocol = protocol_from_string(rc.get<std::string>("protocol"));
  cfg.seeds = rc.get<std::vector<std::uint64_t>>("seeds");
  cfg.fractions = rc.get<std::vector<double>>("fractions");
  cfg.cross_splits = rc.get<std::vector<std::string>>("cross_splits");
  cfg.base_split = rc.get<std::string>("split");
  cfg.fusion = rc.fusion();
  cfg.training = rc.training();
  cfg.algorithm = algorithm_from_string(rc.get<std::string>("algorithm"));
  cfg.knn = rc.get<bool>("knn");
  cfg.knn_k = rc.get<std::size_t>("knn_k");
  cfg.jobs = ctx.jobs;
  const auto result = sweep(data, store, cfg);

  Outputs outs("sweep", rc);
  outs.input(paths.dataset);
  outs.input(paths.embeddings);
  const auto path = out_path(rc, "sweep.json");
  outs.write(path, to_json(result).dump(2) + "\n");
  const auto summary = summarize(result.runs);
  render_summary(*ctx.out, summary);
  return ok;
}

inline int cmd_flywheel(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto synth_cfg = rc.synth();
  const auto specs = synth_key_specs(synth_cfg);
  const CheckerConfig checker{rc.get<bool>("flywheel.strict")};

  AgentSet agents = default_agents(ParameterSpace::standard(), checker);
  const double rate = rc.get<double>("flywheel.corrupt_rate");
  std::size_t corrupted = 0;
  if (rate > 0.0) {
    auto gen = CorruptingGenerator::exact(specs, rate, rc.get<std::uint64_t>("seed"));
    for (const auto& s : specs) corrupted += gen.corrupts(s.slot, s.object_id, s.template_seed) ? 1 : 0;
    agents.generator = gen;
  }
  std::shared_ptr<SubprocessAgent> remote;
  const auto command = rc.get<std::string>("flywheel.agent_command");
  if (!command.empty()) {
    remote = std::make_shared<SubprocessAgent>(command);
    agents = subprocess_agents(remote, agents.generator);
  }
  FlywheelConfig fcfg;
  fcfg.max_rounds = rc.get<std::size_t>("flywheel.rounds");
  fcfg.jobs = command.empty() ? ctx.jobs : 1;
  const auto result = run_flywheel(specs, agents, fcfg);
  remote.reset();

  const auto dir = out_path(rc, "flywheel");
  Outputs outs("flywheel", rc);
  const Json counts = {{"generated", result.generated},
                       {"canon", result.canon},
                       {"initial_fail", result.initial_fail},
                       {"rounds", result.rounds.size()},
                       {"distilled", result.distilled.size()},
                       {"residual_fail", result.residual_fail.size()},
                       {"corrupted_keys", corrupted}};
  outs.write(join(dir, "dataset.jsonl"), to_text([&](std::ostream& s) { result.distilled.write(s); }), counts);
  const auto store = synth_generate(synth_cfg, ctx.jobs).embeddings;
  outs.write(join(dir, "embeddings.jsonl"), to_text([&](std::ostream& s) { store.write(s); }));
  outs.write(join(dir, "audit.jsonl"), to_text([&](std::ostream& s) { result.audit.write(s); }));

  *ctx.out << "generated " << result.generated << " candidates from " << specs.size() << " keys ("
           << corrupted << " corrupted)\n"
           << "round 0: " << result.canon << " passed, " << result.initial_fail << " failed\n";
  for (const auto& r : result.rounds) {
    *ctx.out << "round " << r.round << ": " << r.refined << " refined, " << r.passed << " passed, " << r.failed
             << " failed\n";
  }
  *ctx.out << "distilled " << result.distilled.size() << " rows, " << result.residual_fail.size()
           << " left failing; written to " << dir << "\n";
  return ok;
}

inline Json recommendation_json(const Recommendation& r, const ParameterSpace& space) {
  Json params = Json::array();
  for (std::size_t k = 0; k < kParamCount; ++k) {
    Json conf = Json::object();
    for (std::size_t v = 0; v < kValuesPerParam; ++v) conf[space[k].values[v]] = r.confidences[k][v];
    params.push_back({{"parameter", space[k].name}, {"value", r.config[k]}, {"confidences", conf}});
  }
  return params;
}

inline int cmd_recommend(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto model_path = rc.get<std::string>("model");
  const auto model = load_model(model_path);
  const auto mode = model.fusion().modalities;

  std::optional<EmbeddingStore> store;
  std::optional<Dataset> data;
  std::string data_dir = rc.is_explicit("data") ? rc.get<std::string>("data") : model.meta().data_path;
  if (!data_dir.empty() && std::filesystem::exists(data_dir)) {
    const auto paths = data_paths(rc, data_dir);
    if (std::filesystem::exists(paths.embeddings)) store = EmbeddingStore::load(paths.embeddings);
    if (std::filesystem::exists(paths.dataset)) data = Dataset::load(paths.dataset);
  }

  Json request = Json::object();
  std::optional<Embedding> observation;
  std::optional<Embedding> instruction;
  if (mode != ModalityMode::instruction_only) {
    const auto ref = ctx.arg("observation_embedding");
    if (ref.empty()) throw UsageError("this model needs --observation-embedding");
    observation = resolve_embedding(ref, store ? &*store : nullptr);
    request["observation_embedding"] = ref;
  }
  if (mode != ModalityMode::observation_only) {
    const auto ref = ctx.arg("instruction_embedding");
    const auto text = ctx.arg("instruction");
    if (!ref.empty()) {
      instruction = resolve_embedding(ref, store ? &*store : nullptr);
      request["instruction_embedding"] = ref;
    } else if (!text.empty()) {
      request["instruction"] = text;
      // A known instruction reuses its stored embedding; otherwise the text is
      // parsed to a slot and embedded with the generator's slot encoder.
      if (data && store) {
        const auto norm = normalize_instruction(text);
        for (const auto& x : data->instances()) {
          if (normalize_instruction(x.instruction_text) == norm) {
            instruction = store->at(x.instruction_embedding_id);
            request["instruction_source"] = "dataset:" + x.instruction_embedding_id;
            break;
          }
        }
      }
      if (!instruction) {
        const auto slot = parse_instruction(text);
        require(slot.has_value(), ErrorCode::invalid_argument,
                "instruction '" + text + "' names no known inspection target and granularity");
        SynthConfig sc = rc.synth();
        sc.instruction_dim = model.fusion().instruction_dim;
        const auto manifest_path = data_paths(rc, data_dir).dataset + ".manifest.json";
        if (std::filesystem::exists(manifest_path)) {
          const auto m = Json::parse(detail::read_file(manifest_path));
          if (m.contains("config") && m["config"].contains("seed")) sc.seed = m["config"]["seed"].get<std::uint64_t>();
        }
        instruction = Embedding{Modality::instruction, l2_normalized(slot_embedding(*slot, sc)), "slot"};
        request["instruction_source"] = "slot:" + std::string(to_string(slot->task)) + "/" + slot->target;
      }
    } else {
      throw UsageError("this model needs --instruction or --instruction-embedding");
    }
  }

  const auto r = recommend(model, observation, instruction, PredictPolicy::skip_untrained);
  Json doc;
  doc["request"] = request;
  doc["parameters"] = recommendation_json(r, model.space());
  const auto text = doc.dump(2) + "\n";
  *ctx.out << text;
  const auto path = rc.get<std::string>("out");
  if (!path.empty()) {
    Outputs outs("recommend", rc);
    outs.input(model_path);
    outs.write(path, text);
  }
  return ok;
}

inline int cmd_latency(Context& ctx) {
  const auto& rc = ctx.rc;
  const auto model_path = rc.get<std::string>("model");
  const auto model = load_model(model_path);
  const std::string data_arg =
      rc.is_explicit("data") || model.meta().data_path.empty() ? std::string() : model.meta().data_path;
  const auto paths = data_paths(rc, data_arg);
  const auto data = Dataset::load(paths.dataset);
  const auto store = EmbeddingStore::load(paths.embeddings);
  require(!data.empty(), ErrorCode::empty_input, "latency needs a nonempty dataset");

  std::vector<QueryPair> queries;
  for (const auto& x : data.instances()) {
    queries.push_back({&store.at(x.observation_embedding_id), &store.at(x.instruction_embedding_id)});
  }
  const auto stats = latency_probe(model, queries, rc.get<std::size_t>("latency.queries"),
                                   rc.get<std::size_t>("latency.warmup"));
  Outputs outs("latency", rc);
  outs.input(model_path);
  const auto path = out_path(rc, "latency.json");
  outs.write(path, to_json(stats).dump(2) + "\n", {{"hyper_dim", model.hyper_dim()}});
  *ctx.out << "recommend() over " << stats.n << " queries: p50 " << scanhd::detail::fixed(stats.p50_us, 1) << " us, p90 "
           << scanhd::detail::fixed(stats.p90_us, 1) << " us, p99 " << scanhd::detail::fixed(stats.p99_us, 1) << " us\n";
  return ok;
}

// ---------------------------------------------------------------------------

struct FlagSpec {
  std::string flag;  // without leading dashes
  std::string key;   // config key, or "" for a command-local argument
  std::string help;
};

inline const std::map<std::string, std::vector<FlagSpec>>& command_flags() {
  static const std::vector<FlagSpec> model_opts = {
      {"fusion", "fusion", "fusion strategy: hyperbind or concat-project"},
      {"modalities", "modalities", "modalities used: both, observation or instruction"},
      {"normalize", "normalize_inputs", "L2-normalize embeddings before projection (true/false)"},
      {"hyper-dim", "hyper_dim", "hypervector dimension"},
      {"eta", "eta", "learning rate"},
      {"epochs", "refine_epochs", "maximum refinement epochs"},
      {"patience", "early_stop_patience", "epochs without improvement before stopping (0 = off)"},
      {"algorithm", "algorithm", "adaptive or naive"},
  };
  static const std::vector<FlagSpec> data_opts = {
      {"data", "data", "dataset directory or dataset JSONL file"},
      {"embeddings", "embeddings", "embedding store JSONL (default: beside the dataset)"},
  };
  static const std::vector<FlagSpec> synth_opts = {
      {"objects", "synth.objects", "number of objects"},
      {"keys", "synth.keys", "instruction keys per object"},
      {"sigma", "synth.noise_sigma", "embedding noise level"},
      {"obs-dim", "observation_dim", "observation embedding dimension"},
      {"ins-dim", "instruction_dim", "instruction embedding dimension"},
  };
  auto cat = [](std::initializer_list<std::vector<FlagSpec>> parts) {
    std::vector<FlagSpec> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  static const std::map<std::string, std::vector<FlagSpec>> table = {
      {"gen", cat({synth_opts, {{"out", "out", "output directory (default data)"}}})},
      {"train", cat({data_opts,
                     model_opts,
                     {{"split", "train_split", "mode:value split whose training part is used, or all"},
                      {"out", "out", "model file (default model.json)"}}})},
      {"eval", cat({data_opts,
                    {{"model", "model", "model file"},
                     {"split", "split", "mode:value split to evaluate on"},
                     {"predictor", "predictor", "scanhd, knn or rule"},
                     {"knn-k", "knn_k", "neighbors for the KNN predictor"},
                     {"out", "out", "report JSON (default report.json)"},
                     {"records", "records", "per-instance predictions JSONL"},
                     {"csv", "csv", "per-parameter CSV"}}})},
      {"sweep", cat({data_opts,
                     model_opts,
                     {{"protocol", "protocol", "single, fractions, ablations or cross_splits"},
                      {"seeds", "seeds", "comma-separated seeds"},
                      {"fractions", "fractions", "comma-separated training fractions"},
                      {"cross-splits", "cross_splits", "comma-separated mode:value holdouts"},
                      {"split", "split", "base split for single, fractions and ablations"},
                      {"knn", "knn", "also run the KNN baseline (true/false)"},
                      {"knn-k", "knn_k", "neighbors for the KNN baseline"},
                      {"out", "out", "sweep JSON (default sweep.json)"}}})},
      {"flywheel", cat({synth_opts,
                        {{"rounds", "flywheel.rounds", "maximum refinement rounds"},
                         {"corrupt-rate", "flywheel.corrupt_rate", "fraction of keys generated with a wrong intent"},
                         {"agent", "flywheel.agent_command", "shell command serving check/refine over JSON lines"},
                         {"out", "out", "output directory (default flywheel)"}}})},
      {"recommend", cat({data_opts,
                         {{"model", "model", "model file"},
                          {"instruction", "", "instruction text"},
                          {"instruction-embedding", "", "instruction embedding as file#id"},
                          {"observation-embedding", "", "observation embedding as file#id or id"},
                          {"out", "out", "also write the JSON here"}}})},
      {"latency", cat({data_opts,
                       {{"model", "model", "model file"},
                        {"queries", "latency.queries", "timed recommend() calls"},
                        {"warmup", "latency.warmup", "untimed warm-up calls"},
                        {"out", "out", "latency JSON (default latency.json)"}}})},
  };
  return table;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               const char* env_seed = std::getenv("SCANHD_SEED")) {
  CLI::App app{"scanhd: instruction- and observation-conditioned scanner parameter recommendation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  std::string seed_text;
  std::size_t jobs = 1;
  bool strict = false;
  std::map<std::string, std::string> raw;  // flag name -> text
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> about = {
      {"gen", "generate the synthetic benchmark dataset and embeddings"},
      {"train", "encode, train and refine a model"},
      {"eval", "evaluate a model or baseline on a split"},
      {"sweep", "run a seeded experiment protocol"},
      {"flywheel", "generate, check and refine a distilled dataset"},
      {"recommend", "recommend the five scanner parameters for one query"},
      {"latency", "time recommend() over dataset queries"},
  };
  for (const auto& [name, flags] : command_flags()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "RunConfig JSON file");
    sub->add_option("--seed", seed_text, "master seed (default: SCANHD_SEED, then 1)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    for (const auto& f : flags) sub->add_option("--" + f.flag, raw[name + "/" + f.flag], f.help);
    if (name == "flywheel") sub->add_flag("--strict", strict, "enable the strict calibration pass");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage_error;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  CLI::App* sub = subs.at(command);

  Context ctx;
  ctx.jobs = jobs;
  ctx.out = &out;
  ctx.err = &err;
  try {
    std::map<std::string, Json> flags;
    const auto schema = default_config();
    if (sub->count("--seed")) flags["seed"] = detail::flag_value("seed", seed_text, schema.at("seed"));
    for (const auto& f : command_flags().at(command)) {
      if (!sub->count("--" + f.flag)) continue;
      const auto& text = raw[command + "/" + f.flag];
      if (f.key.empty()) {
        std::string key = f.flag;
        std::replace(key.begin(), key.end(), '-', '_');
        ctx.local[key] = text;
      } else {
        flags[f.key] = detail::flag_value(f.flag, text, detail::schema_at(schema, f.key));
      }
    }
    if (strict) flags["flywheel.strict"] = true;
    ctx.rc = resolve_config(config_path, flags, env_seed);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return usage_error;
  } catch (const ConfigError& e) {
    err << "validation error: " << e.what() << "\n";
    return validation_error;
  } catch (const Error& e) {
    err << "validation error: " << e.what() << "\n";
    return e.code() == ErrorCode::io ? runtime_error : validation_error;
  }

  static const std::map<std::string, std::function<int(Context&)>> handlers = {
      {"gen", cmd_gen},           {"train", cmd_train},         {"eval", cmd_eval},
      {"sweep", cmd_sweep},       {"flywheel", cmd_flywheel},   {"recommend", cmd_recommend},
      {"latency", cmd_latency},
  };
  try {
    return handlers.at(command)(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return usage_error;
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::invalid_argument:
      case ErrorCode::invalid_label:
      case ErrorCode::parse:
      case ErrorCode::malformed_document:
      case ErrorCode::version_mismatch:
      case ErrorCode::length_mismatch:
        err << "validation error: " << e.what() << "\n";
        return validation_error;
      default:
        err << "error: " << e.what() << "\n";
        return runtime_error;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return runtime_error;
  }
}

}  // namespace scanhd::cli
