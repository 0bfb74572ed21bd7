#pragma once

// Instance schema, JSONL persistence and train/test splitting.
//
// Dataset JSONL record:
//   {"id", "object_id", "instruction_text",
//    "slot": {"task","coverage","target","detail"},
//    "condition": {"position","rotation","lighting"},
//    "observation_embedding_id", "instruction_embedding_id",
//    "labels": {param: value, x5}, "latent": {"reflectivity","brightness"}?}

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "scanhd/error.hpp"
#include "scanhd/parameter_space.hpp"
#include "scanhd/random.hpp"
#include "scanhd/vocabulary.hpp"

namespace scanhd {

struct SlotTuple {
  Task task = Task::global_outline;
  Coverage coverage = Coverage::global;
  std::string target = "full_body";
  Detail detail = Detail::outline;

  static SlotTuple for_task(Task task, std::string target) {
    return SlotTuple{task, coverage_of(task), std::move(target), detail_of(task)};
  }

  [[nodiscard]] bool consistent() const {
    return coverage == coverage_of(task) && detail == detail_of(task) && token_index(kTargets, target).has_value();
  }

  void validate() const {
    require(token_index(kTargets, target).has_value(), ErrorCode::invalid_argument,
            "slot.target '" + target + "' is not in the target vocabulary");
    require(coverage == coverage_of(task), ErrorCode::invalid_argument,
            "slot.coverage '" + std::string(to_string(coverage)) + "' inconsistent with task " +
                std::string(to_string(task)));
    require(detail == detail_of(task), ErrorCode::invalid_argument,
            "slot.detail '" + std::string(to_string(detail)) + "' inconsistent with task " +
                std::string(to_string(task)));
  }

  friend bool operator==(const SlotTuple&, const SlotTuple&) = default;
  friend auto operator<=>(const SlotTuple&, const SlotTuple&) = default;
};

struct AppearanceCondition {
  int position = 0;  // 0..2
  int rotation = 0;  // 0..2
  Lighting lighting = Lighting::full;

  [[nodiscard]] int index() const noexcept { return position * 9 + rotation * 3 + static_cast<int>(lighting); }

  static AppearanceCondition from_index(int i) {
    return {i / 9, (i / 3) % 3, static_cast<Lighting>(i % 3)};
  }

  void validate() const {
    require(position >= 0 && position < 3, ErrorCode::invalid_argument, "condition.position must be 0, 1 or 2");
    require(rotation >= 0 && rotation < 3, ErrorCode::invalid_argument, "condition.rotation must be 0, 1 or 2");
  }

  friend bool operator==(const AppearanceCondition&, const AppearanceCondition&) = default;
  friend auto operator<=>(const AppearanceCondition&, const AppearanceCondition&) = default;
};

inline constexpr int kConditionsPerKey = 27;

// Generator-only ground truth about the object's appearance.
struct Latent {
  double reflectivity = 0.5;
  double brightness = 0.5;

  friend bool operator==(const Latent&, const Latent&) = default;
};

struct Instance {
  std::string id;
  std::string object_id;
  std::string instruction_text;
  SlotTuple slot;
  AppearanceCondition condition;
  std::string observation_embedding_id;
  std::string instruction_embedding_id;
  ParameterConfig labels;
  std::optional<Latent> latent;

  friend bool operator==(const Instance&, const Instance&) = default;
};

// Instances that share object, slot and instruction form one key's view group.
struct GroupKey {
  std::string object_id;
  SlotTuple slot;
  std::string instruction_text;

  static GroupKey of(const Instance& x) { return {x.object_id, x.slot, x.instruction_text}; }
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
  friend bool operator==(const GroupKey&, const GroupKey&) = default;
};

inline nlohmann::ordered_json to_json(const Instance& x, const ParameterSpace& space = ParameterSpace::standard()) {
  nlohmann::ordered_json j;
  j["id"] = x.id;
  j["object_id"] = x.object_id;
  j["instruction_text"] = x.instruction_text;
  j["slot"] = {{"task", to_string(x.slot.task)},
               {"coverage", to_string(x.slot.coverage)},
               {"target", x.slot.target},
               {"detail", to_string(x.slot.detail)}};
  j["condition"] = {{"position", x.condition.position},
                    {"rotation", x.condition.rotation},
                    {"lighting", to_string(x.condition.lighting)}};
  j["observation_embedding_id"] = x.observation_embedding_id;
  j["instruction_embedding_id"] = x.instruction_embedding_id;
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < kParamCount; ++k) labels[space[k].name] = x.labels[k];
  j["labels"] = labels;
  if (x.latent) j["latent"] = {{"reflectivity", x.latent->reflectivity}, {"brightness", x.latent->brightness}};
  return j;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::parse, "missing field '" + where + (where.empty() ? "" : ".") + key + "'");
  }
  return j.at(key);
}

}  // namespace detail

// Parses without vocabulary validation of labels (flywheel candidates may
// carry invalid values); structural problems still throw parse errors.
inline Instance instance_from_json(const nlohmann::json& j, const ParameterSpace& space = ParameterSpace::standard()) {
  using detail::field;
  Instance x;
  try {
    x.id = field(j, "id", "").get<std::string>();
    x.object_id = field(j, "object_id", "").get<std::string>();
    x.instruction_text = field(j, "instruction_text", "").get<std::string>();
    const auto& slot = field(j, "slot", "");
    x.slot.task = task_from_string(field(slot, "task", "slot").get<std::string>());
    x.slot.coverage = coverage_from_string(field(slot, "coverage", "slot").get<std::string>());
    x.slot.target = field(slot, "target", "slot").get<std::string>();
    x.slot.detail = detail_from_string(field(slot, "detail", "slot").get<std::string>());
    const auto& cond = field(j, "condition", "");
    x.condition.position = field(cond, "position", "condition").get<int>();
    x.condition.rotation = field(cond, "rotation", "condition").get<int>();
    x.condition.lighting = lighting_from_string(field(cond, "lighting", "condition").get<std::string>());
    x.observation_embedding_id = field(j, "observation_embedding_id", "").get<std::string>();
    x.instruction_embedding_id = field(j, "instruction_embedding_id", "").get<std::string>();
    const auto& labels = field(j, "labels", "");
    for (std::size_t k = 0; k < kParamCount; ++k) {
      x.labels[k] = field(labels, space[k].name.c_str(), "labels").get<std::string>();
    }
    require(labels.size() == kParamCount, ErrorCode::parse, "labels must hold exactly the five parameters");
    if (j.contains("latent") && !j.at("latent").is_null()) {
      const auto& lat = j.at("latent");
      x.latent = Latent{field(lat, "reflectivity", "latent").get<double>(),
                        field(lat, "brightness", "latent").get<double>()};
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse, ex.what());
  }
  return x;
}

// Full invariant check for a dataset row.
inline void validate_instance(const Instance& x, const ParameterSpace& space = ParameterSpace::standard()) {
  require(!x.id.empty(), ErrorCode::invalid_argument, "instance id is empty");
  require(token_index(kObjects, x.object_id).has_value(), ErrorCode::invalid_argument,
          "object_id '" + x.object_id + "' is not a known object");
  x.slot.validate();
  x.condition.validate();
  for (std::size_t k = 0; k < kParamCount; ++k) (void)space.ord_or_throw(k, x.labels[k]);
  if (x.latent) {
    require(x.latent->reflectivity >= 0.0 && x.latent->reflectivity <= 1.0 && x.latent->brightness >= 0.0 &&
                x.latent->brightness <= 1.0,
            ErrorCode::invalid_argument, "latent values must lie in [0, 1]");
  }
}

class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Instance> instances, const ParameterSpace& space = ParameterSpace::standard())
      : instances_(std::move(instances)) {
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      const auto& x = instances_[i];
      validate_instance(x, space);
      require(!by_id_.contains(x.id), ErrorCode::invalid_argument, "duplicate instance id '" + x.id + "'");
      by_id_.emplace(x.id, i);
      by_object_[x.object_id].push_back(i);
      by_condition_[x.condition.index()].push_back(i);
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return instances_.size(); }
  [[nodiscard]] bool empty() const noexcept { return instances_.empty(); }
  [[nodiscard]] const std::vector<Instance>& instances() const noexcept { return instances_; }
  [[nodiscard]] const Instance& operator[](std::size_t i) const { return instances_.at(i); }

  [[nodiscard]] const Instance* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &instances_[it->second];
  }

  [[nodiscard]] std::vector<std::size_t> indices_of_object(const std::string& object_id) const {
    auto it = by_object_.find(object_id);
    return it == by_object_.end() ? std::vector<std::size_t>{} : it->second;
  }

  [[nodiscard]] std::vector<std::size_t> indices_of_condition(const AppearanceCondition& c) const {
    auto it = by_condition_.find(c.index());
    return it == by_condition_.end() ? std::vector<std::size_t>{} : it->second;
  }

  void write(std::ostream& out) const {
    for (const auto& x : instances_) out << to_json(x).dump() << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    write(out);
  }

  static Dataset read(std::istream& in) {
    std::vector<Instance> rows;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
          throw Error(ErrorCode::parse, ex.what());
        }
        Instance x = instance_from_json(j);
        validate_instance(x);
        if (const auto it = seen.find(x.id); it != seen.end()) {
          throw Error(ErrorCode::invalid_argument,
                      "duplicate instance id '" + x.id + "' (first on line " + std::to_string(it->second) + ")");
        }
        seen.emplace(x.id, line_no);
        rows.push_back(std::move(x));
      } catch (const Error& ex) {
        throw Error(ex.code(), "line " + std::to_string(line_no) + ": " + ex.what());
      }
    }
    return Dataset(std::move(rows));
  }

  static Dataset load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read " + path);
    return read(in);
  }

  // Hash of the canonical serialization.
  [[nodiscard]] std::uint64_t fingerprint() const {
    std::ostringstream out;
    write(out);
    return fnv1a64(out.str());
  }

 private:
  std::vector<Instance> instances_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> by_object_;
  std::map<int, std::vector<std::size_t>> by_condition_;
};

inline std::uint64_t fingerprint(std::span<const Instance> rows) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& x : rows) h = fnv1a64(to_json(x).dump() + "\n", h);
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { row_random, position, rotation, lighting, object };

inline std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::row_random: return "row_random";
    case SplitMode::position: return "position";
    case SplitMode::rotation: return "rotation";
    case SplitMode::lighting: return "lighting";
    case SplitMode::object: return "object";
  }
  return "";
}

inline SplitMode split_mode_from_string(const std::string& s) {
  for (auto m : {SplitMode::row_random, SplitMode::position, SplitMode::rotation, SplitMode::lighting,
                 SplitMode::object}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::invalid_argument, "unknown split mode '" + s + "'");
}

struct SplitSpec {
  SplitMode mode = SplitMode::row_random;
  std::string held_out = "0.8";  // train ratio for row_random, factor value otherwise

  // "mode:value", e.g. "row_random:0.8" or "lighting:dark".
  static SplitSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    require(colon != std::string::npos, ErrorCode::invalid_argument,
            "split must look like mode:value (got '" + text + "')");
    return {split_mode_from_string(text.substr(0, colon)), text.substr(colon + 1)};
  }

  [[nodiscard]] std::string str() const { return to_string(mode) + ":" + held_out; }
};

struct Split {
  std::vector<Instance> train;
  std::vector<Instance> test;
  std::string descriptor;
};

// Disjoint cover of the dataset. row_random keeps floor(ratio * n) rows for
// training; the factor modes move every row carrying the held-out value to test.
inline Split split(const Dataset& data, const SplitSpec& spec, std::uint64_t seed) {
  Split out;
  out.descriptor = spec.str() + "@" + std::to_string(seed);
  const auto& rows = data.instances();
  if (spec.mode == SplitMode::row_random) {
    double ratio = 0.0;
    try {
      std::size_t used = 0;
      ratio = std::stod(spec.held_out, &used);
      require(used == spec.held_out.size(), ErrorCode::invalid_argument, "");
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "row_random ratio '" + spec.held_out + "' is not a number");
    }
    require(ratio > 0.0 && ratio < 1.0, ErrorCode::invalid_argument, "row_random ratio must lie in (0, 1)");
    const auto order = shuffled_indices(rows.size(), substream_seed(seed, "split/row_random"));
    const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(rows.size())));
    std::vector<bool> in_train(rows.size(), false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
    for (std::size_t i = 0; i < rows.size(); ++i) (in_train[i] ? out.train : out.test).push_back(rows[i]);
    return out;
  }

  auto held = [&](const Instance& x) -> bool {
    switch (spec.mode) {
      case SplitMode::position: return std::to_string(x.condition.position) == spec.held_out;
      case SplitMode::rotation: return std::to_string(x.condition.rotation) == spec.held_out;
      case SplitMode::lighting: return to_string(x.condition.lighting) == spec.held_out;
      case SplitMode::object: return x.object_id == spec.held_out;
      case SplitMode::row_random: break;
    }
    return false;
  };
  for (const auto& x : rows) (held(x) ? out.test : out.train).push_back(x);
  require(!out.test.empty(), ErrorCode::invalid_argument,
          "held-out value '" + spec.held_out + "' does not occur for split mode " + to_string(spec.mode));
  return out;
}

}  // namespace scanhd
