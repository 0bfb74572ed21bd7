#pragma once

// Candidate pooling, consistency checking, canon/fail partition and the
// refinement loop that distills a dataset. Agents are plain callables so
// rule-based, scripted and subprocess implementations plug in the same way.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "scanhd/dataset.hpp"
#include "scanhd/instruction.hpp"
#include "scanhd/label_oracle.hpp"
#include "scanhd/parallel.hpp"
#include "scanhd/synth.hpp"

namespace scanhd {

enum class Violation { intent_mismatch, appearance_incompatible, cross_view_unstable, physically_invalid };

inline constexpr std::array<Violation, 4> kViolations = {Violation::intent_mismatch, Violation::appearance_incompatible,
                                                         Violation::cross_view_unstable, Violation::physically_invalid};

constexpr std::string_view to_string(Violation v) noexcept {
  switch (v) {
    case Violation::intent_mismatch: return "intent_mismatch";
    case Violation::appearance_incompatible: return "appearance_incompatible";
    case Violation::cross_view_unstable: return "cross_view_unstable";
    case Violation::physically_invalid: return "physically_invalid";
  }
  return "?";
}

inline Violation violation_from_string(std::string_view s) { return enum_from_string(s, kViolations, "violation"); }

struct Feedback {
  std::set<Violation> codes;
  std::string detail;

  [[nodiscard]] bool has(Violation v) const { return codes.contains(v); }
  friend bool operator==(const Feedback&, const Feedback&) = default;
};

enum class CandidateStatus { unchecked, passed, failed, refined };

constexpr std::string_view to_string(CandidateStatus s) noexcept {
  switch (s) {
    case CandidateStatus::unchecked: return "unchecked";
    case CandidateStatus::passed: return "passed";
    case CandidateStatus::failed: return "failed";
    case CandidateStatus::refined: return "refined";
  }
  return "?";
}

inline CandidateStatus candidate_status_from_string(std::string_view s) {
  return enum_from_string(s,
                          std::array{CandidateStatus::unchecked, CandidateStatus::passed, CandidateStatus::failed,
                                     CandidateStatus::refined},
                          "candidate status");
}

struct Candidate {
  Instance instance;
  CandidateStatus status = CandidateStatus::unchecked;
  std::optional<Feedback> feedback;
  std::size_t generation = 0;
  std::optional<std::string> parent_id;
  std::uint64_t template_seed = 0;

  // Revision-qualified id: "<instance id>#<generation>".
  [[nodiscard]] std::string id() const { return instance.id + "#" + std::to_string(generation); }
};

struct Verdict {
  bool pass = false;
  std::optional<Feedback> feedback;
};

// Refiner output. A refiner may echo a slot back; it must equal the input's.
struct Revision {
  std::string instruction_text;
  ParameterConfig labels;
  std::optional<SlotTuple> slot;
};

// Instances currently in the pool with the candidate's group key, the
// candidate itself included.
using Siblings = std::vector<const Instance*>;

using GeneratorFn = std::function<std::string(const SlotTuple&, const std::string& object_id, std::uint64_t seed)>;
using CheckerFn = std::function<Verdict(const Candidate&, const Siblings&)>;
using RefinerFn = std::function<Revision(const Candidate&, const Feedback&)>;

struct AgentSet {
  GeneratorFn generator;
  CheckerFn checker;
  RefinerFn refiner;

  void validate() const {
    require(generator && checker && refiner, ErrorCode::invalid_argument,
            "agent set needs a generator, a checker and a refiner");
  }
};

struct CheckerConfig {
  bool strict = false;  // second, calibration pass
};

// ---------------------------------------------------------------------------
// Rule checker

inline Verdict check_consistency(const Candidate& c, const Siblings& siblings,
                                 const ParameterSpace& space = ParameterSpace::standard(),
                                 const CheckerConfig& cfg = {}) {
  const Instance& x = c.instance;
  Feedback fb;
  std::vector<std::string> notes;
  auto flag = [&](Violation v, std::string note) {
    fb.codes.insert(v);
    notes.push_back(std::move(note));
  };

  // (iv) physical validity
  for (std::size_t k = 0; k < kParamCount; ++k) {
    if (!space.ord(k, x.labels[k])) {
      flag(Violation::physically_invalid,
           space[k].name + "='" + x.labels[k] + "' outside " + space.vocabulary_string(k));
    }
  }
  if (!x.slot.consistent()) flag(Violation::physically_invalid, "slot fields are inconsistent");

  // (i) instruction maps back to the slot
  const auto parsed = parse_instruction(x.instruction_text);
  if (!parsed) {
    flag(Violation::intent_mismatch, "instruction does not parse to any slot");
  } else if (*parsed != x.slot) {
    flag(Violation::intent_mismatch,
         "instruction reads as " + std::string(to_string(parsed->task)) + "/" + parsed->target + ", slot is " +
             std::string(to_string(x.slot.task)) + "/" + x.slot.target);
  }

  // (ii) labels agree with the oracle
  if (!x.latent) {
    flag(Violation::appearance_incompatible, "no latents to check labels against");
  } else if (x.slot.consistent()) {
    const auto expected = label_oracle(x);
    for (std::size_t k = 0; k < kParamCount; ++k) {
      if (x.labels[k] == expected[k]) continue;
      flag(space.intent_driven(k) ? Violation::intent_mismatch : Violation::appearance_incompatible,
           space[k].name + "='" + x.labels[k] + "', expected '" + expected[k] + "'");
    }
  }

  // (iii) cross-view stability
  std::set<int> conditions;
  bool agree = true;
  for (const Instance* s : siblings) {
    conditions.insert(s->condition.index());
    for (std::size_t k = 0; k < kParamCount; ++k) {
      if (space.intent_driven(k) && s->labels[k] != x.labels[k]) agree = false;
    }
  }
  if (siblings.size() != static_cast<std::size_t>(kConditionsPerKey) ||
      conditions.size() != static_cast<std::size_t>(kConditionsPerKey)) {
    flag(Violation::cross_view_unstable, "group holds " + std::to_string(siblings.size()) + " rows over " +
                                             std::to_string(conditions.size()) + " conditions, expected 27");
  }
  if (!agree) flag(Violation::cross_view_unstable, "intent-driven labels differ within the group");

  if (cfg.strict) {
    if (leaks_parameter_value(x.instruction_text, space)) {
      flag(Violation::intent_mismatch, "instruction names a parameter value");
    }
  }

  if (fb.codes.empty()) return {true, std::nullopt};
  for (std::size_t i = 0; i < notes.size(); ++i) fb.detail += (i ? "; " : "") + notes[i];
  return {false, std::move(fb)};
}

// ---------------------------------------------------------------------------
// Shipped agents

inline GeneratorFn template_generator() {
  return [](const SlotTuple& slot, const std::string& object_id, std::uint64_t seed) {
    return realize_instruction(slot, object_id, seed);
  };
}

// The task read by a corrupted instruction: same target, other granularity.
constexpr Task confused_task(Task t) noexcept {
  switch (t) {
    case Task::global_outline: return Task::global_detail;
    case Task::global_detail: return Task::global_outline;
    case Task::local_outline: return Task::local_detail;
    case Task::local_detail: return Task::local_outline;
    case Task::metrology: return Task::registration;
    case Task::registration: return Task::metrology;
  }
  return t;
}

// Template generator that realizes some keys for the wrong task. Either each
// key is corrupted independently with probability `rate`, or (exact) a fixed
// set of keys chosen up front is.
class CorruptingGenerator {
 public:
  CorruptingGenerator(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
    require(rate >= 0.0 && rate <= 1.0, ErrorCode::invalid_argument, "corruption rate must lie in [0, 1]");
  }

  // Corrupts exactly round(rate * |specs|) keys.
  static CorruptingGenerator exact(std::span<const KeySpec> specs, double rate, std::uint64_t seed) {
    CorruptingGenerator g(rate, seed);
    const auto n = static_cast<std::size_t>(std::llround(rate * static_cast<double>(specs.size())));
    const auto order = shuffled_indices(specs.size(), substream_seed(seed, "flywheel/corrupt"));
    g.chosen_.emplace();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = specs[order[i]];
      g.chosen_->insert(key_of(s.slot, s.object_id, s.template_seed));
    }
    return g;
  }

  [[nodiscard]] bool corrupts(const SlotTuple& slot, const std::string& object_id, std::uint64_t seed) const {
    const auto key = key_of(slot, object_id, seed);
    if (chosen_) return chosen_->contains(key);
    Rng rng(seed_, key);
    return rng.uniform() < rate_;
  }

  std::string operator()(const SlotTuple& slot, const std::string& object_id, std::uint64_t seed) const {
    if (!corrupts(slot, object_id, seed)) return realize_instruction(slot, object_id, seed);
    return realize_instruction(SlotTuple::for_task(confused_task(slot.task), slot.target), object_id, seed);
  }

 private:
  static std::string key_of(const SlotTuple& slot, const std::string& object_id, std::uint64_t seed) {
    return object_id + "/" + std::string(to_string(slot.task)) + "/" + slot.target + "/" + std::to_string(seed);
  }

  double rate_;
  std::uint64_t seed_;
  std::optional<std::set<std::string>> chosen_;
};

inline CheckerFn rule_checker(const ParameterSpace& space = ParameterSpace::standard(), CheckerConfig cfg = {}) {
  return [space, cfg](const Candidate& c, const Siblings& s) { return check_consistency(c, s, space, cfg); };
}

// Repairs exactly the fields named by the feedback, from the template and the
// oracle; everything else is returned untouched.
inline RefinerFn field_repair_refiner(const ParameterSpace& space = ParameterSpace::standard()) {
  return [space](const Candidate& c, const Feedback& fb) {
    const Instance& x = c.instance;
    Revision r{x.instruction_text, x.labels, x.slot};
    const bool parses_back = parse_instruction(x.instruction_text) == std::optional<SlotTuple>(x.slot);
    if (fb.has(Violation::intent_mismatch) && (!parses_back || leaks_parameter_value(x.instruction_text, space))) {
      r.instruction_text = realize_instruction(x.slot, x.object_id, c.template_seed);
    }
    if (!x.latent || !x.slot.consistent()) return r;
    const auto expected = label_oracle(x);
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const bool invalid = !space.ord(k, x.labels[k]);
      const bool intent = space.intent_driven(k);
      if ((invalid && fb.has(Violation::physically_invalid)) ||
          (intent && (fb.has(Violation::intent_mismatch) || fb.has(Violation::cross_view_unstable))) ||
          (!intent && fb.has(Violation::appearance_incompatible))) {
        r.labels[k] = expected[k];
      }
    }
    return r;
  };
}

inline RefinerFn identity_refiner() {
  return [](const Candidate& c, const Feedback&) {
    return Revision{c.instance.instruction_text, c.instance.labels, c.instance.slot};
  };
}

inline AgentSet default_agents(const ParameterSpace& space = ParameterSpace::standard(), CheckerConfig cfg = {}) {
  return {template_generator(), rule_checker(space, cfg), field_repair_refiner(space)};
}

// ---------------------------------------------------------------------------
// JSON forms shared by the audit log and the subprocess protocol

inline nlohmann::ordered_json to_json(const Feedback& fb) {
  nlohmann::ordered_json codes = nlohmann::ordered_json::array();
  for (auto v : fb.codes) codes.push_back(to_string(v));
  return {{"codes", codes}, {"detail", fb.detail}};
}

inline Feedback feedback_from_json(const nlohmann::json& j) {
  Feedback fb;
  for (const auto& c : j.at("codes")) fb.codes.insert(violation_from_string(c.get<std::string>()));
  if (j.contains("detail")) fb.detail = j.at("detail").get<std::string>();
  return fb;
}

inline nlohmann::ordered_json to_json(const Candidate& c, const ParameterSpace& space = ParameterSpace::standard()) {
  nlohmann::ordered_json j;
  j["id"] = c.id();
  j["instance"] = to_json(c.instance, space);
  j["status"] = to_string(c.status);
  j["generation"] = c.generation;
  j["parent_id"] = c.parent_id ? nlohmann::ordered_json(*c.parent_id) : nlohmann::ordered_json(nullptr);
  j["template_seed"] = c.template_seed;
  j["feedback"] = c.feedback ? to_json(*c.feedback) : nlohmann::ordered_json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Set algebra

struct Partition {
  std::vector<Candidate> canon;
  std::vector<Candidate> fail;
};

inline Partition partition(std::vector<Candidate> pool) {
  Partition p;
  for (auto& c : pool) {
    switch (c.status) {
      case CandidateStatus::passed: p.canon.push_back(std::move(c)); break;
      case CandidateStatus::failed: p.fail.push_back(std::move(c)); break;
      default:
        throw Error(ErrorCode::invalid_state,
                    "candidate " + c.id() + " is " + std::string(to_string(c.status)) + ", not checked");
    }
  }
  return p;
}

class AuditLog {
 public:
  void append(nlohmann::ordered_json record) { records_.push_back(std::move(record)); }
  [[nodiscard]] const std::vector<nlohmann::ordered_json>& records() const noexcept { return records_; }

  void write(std::ostream& out) const {
    for (const auto& r : records_) out << r.dump() << '\n';
  }

 private:
  std::vector<nlohmann::ordered_json> records_;
};

namespace detail {

// Checks every candidate against the group context formed by `context`
// plus the candidates themselves.
inline void check_all(std::vector<Candidate>& candidates, std::span<const Candidate> context, const CheckerFn& checker,
                      std::size_t jobs) {
  std::map<GroupKey, Siblings> groups;
  for (const auto& c : context) groups[GroupKey::of(c.instance)].push_back(&c.instance);
  for (const auto& c : candidates) groups[GroupKey::of(c.instance)].push_back(&c.instance);
  std::vector<Verdict> verdicts(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    verdicts[i] = checker(candidates[i], groups.at(GroupKey::of(candidates[i].instance)));
  });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    if (verdicts[i].pass) {
      c.status = CandidateStatus::passed;
      c.feedback.reset();
    } else {
      c.status = CandidateStatus::failed;
      c.feedback = verdicts[i].feedback.value_or(Feedback{});
      require(!c.feedback->codes.empty(), ErrorCode::contract_violation,
              "checker failed candidate " + c.id() + " without violation codes");
    }
  }
}

inline void audit_checks(AuditLog& log, std::size_t round, std::vector<Candidate> checked) {
  std::sort(checked.begin(), checked.end(), [](const Candidate& a, const Candidate& b) { return a.id() < b.id(); });
  for (const auto& c : checked) {
    nlohmann::ordered_json j;
    j["stage"] = "check";
    j["round"] = round;
    j["id"] = c.id();
    j["parent_id"] = c.parent_id ? nlohmann::ordered_json(*c.parent_id) : nlohmann::ordered_json(nullptr);
    j["status"] = to_string(c.status);
    if (c.feedback) j["feedback"] = to_json(*c.feedback);
    log.append(std::move(j));
  }
}

}  // namespace detail

struct RoundCounts {
  std::size_t round = 0;
  std::size_t refined = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
};

struct RefineOutcome {
  std::vector<std::vector<Candidate>> passes;  // one set per executed round
  std::vector<Candidate> residual_fail;
  std::vector<RoundCounts> rounds;
};

// Refine every failing candidate, re-check against `context` (the accepted
// pool so far) and split, for at most max_rounds rounds.
inline RefineOutcome refine_iterate(std::vector<Candidate> fail, const AgentSet& agents, std::size_t max_rounds,
                                    std::span<const Candidate> context = {}, AuditLog* audit = nullptr,
                                    std::size_t jobs = 1) {
  require(agents.checker && agents.refiner, ErrorCode::invalid_argument, "refinement needs a checker and a refiner");
  for (const auto& c : fail) {
    require(c.status == CandidateStatus::failed && c.feedback.has_value(), ErrorCode::invalid_state,
            "candidate " + c.id() + " entered refinement without failing feedback");
  }
  RefineOutcome out;
  std::vector<Candidate> accepted(context.begin(), context.end());

  for (std::size_t round = 1; round <= max_rounds && !fail.empty(); ++round) {
    std::vector<Revision> revisions(fail.size());
    parallel_for(fail.size(), jobs, [&](std::size_t i) { revisions[i] = agents.refiner(fail[i], *fail[i].feedback); });

    std::vector<Candidate> refined;
    refined.reserve(fail.size());
    for (std::size_t i = 0; i < fail.size(); ++i) {
      const auto& parent = fail[i];
      if (revisions[i].slot && *revisions[i].slot != parent.instance.slot) {
        if (audit) {
          audit->append({{"stage", "refine"},
                         {"round", round},
                         {"id", parent.id()},
                         {"error", to_string(ErrorCode::contract_violation)},
                         {"detail", "refiner changed the slot"}});
        }
        throw Error(ErrorCode::contract_violation, "refiner changed the slot of " + parent.id());
      }
      Candidate c;
      c.instance = parent.instance;
      c.instance.instruction_text = revisions[i].instruction_text;
      c.instance.labels = revisions[i].labels;
      c.status = CandidateStatus::refined;
      c.generation = parent.generation + 1;
      c.parent_id = parent.id();
      c.template_seed = parent.template_seed;
      refined.push_back(std::move(c));
    }

    detail::check_all(refined, accepted, agents.checker, jobs);
    if (audit) detail::audit_checks(*audit, round, refined);
    auto split = partition(std::move(refined));
    out.rounds.push_back({round, fail.size(), split.canon.size(), split.fail.size()});
    if (audit) {
      audit->append({{"stage", "partition"},
                     {"round", round},
                     {"refined", fail.size()},
                     {"passed", split.canon.size()},
                     {"failed", split.fail.size()}});
    }
    accepted.insert(accepted.end(), split.canon.begin(), split.canon.end());
    out.passes.push_back(std::move(split.canon));
    fail = std::move(split.fail);
  }
  out.residual_fail = std::move(fail);
  return out;
}

struct FlywheelConfig {
  std::size_t max_rounds = 3;
  std::size_t jobs = 1;
};

struct FlywheelResult {
  Dataset distilled;
  std::vector<Candidate> accepted;  // generation order
  std::size_t generated = 0;
  std::size_t canon = 0;
  std::size_t initial_fail = 0;
  std::vector<RoundCounts> rounds;
  std::vector<Candidate> residual_fail;
  AuditLog audit;
};

// Generates 27 candidates per key spec, checks, partitions, refines and
// returns the union of the canonical set and every round's passes.
inline FlywheelResult run_flywheel(std::span<const KeySpec> specs, const AgentSet& agents,
                                   const FlywheelConfig& cfg = {}) {
  agents.validate();
  FlywheelResult result;

  std::vector<Candidate> pool;
  pool.reserve(specs.size() * kConditionsPerKey);
  std::vector<std::string> texts(specs.size());
  parallel_for(specs.size(), cfg.jobs, [&](std::size_t s) {
    texts[s] = agents.generator(specs[s].slot, specs[s].object_id, specs[s].template_seed);
  });
  for (std::size_t s = 0; s < specs.size(); ++s) {
    for (int c = 0; c < kConditionsPerKey; ++c) {
      Candidate cand;
      cand.instance = make_instance(specs[s], texts[s], AppearanceCondition::from_index(c));
      cand.template_seed = specs[s].template_seed;
      pool.push_back(std::move(cand));
    }
  }
  result.generated = pool.size();
  result.audit.append({{"stage", "generate"}, {"round", 0}, {"specs", specs.size()}, {"candidates", pool.size()}});

  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    require(order.emplace(pool[i].instance.id, i).second, ErrorCode::invalid_argument,
            "duplicate candidate id " + pool[i].instance.id);
  }

  detail::check_all(pool, {}, agents.checker, cfg.jobs);
  detail::audit_checks(result.audit, 0, pool);
  auto split = partition(std::move(pool));
  result.canon = split.canon.size();
  result.initial_fail = split.fail.size();
  result.audit.append(
      {{"stage", "partition"}, {"round", 0}, {"passed", split.canon.size()}, {"failed", split.fail.size()}});

  auto refined = refine_iterate(std::move(split.fail), agents, cfg.max_rounds, split.canon, &result.audit, cfg.jobs);
  result.rounds = refined.rounds;
  result.residual_fail = std::move(refined.residual_fail);

  result.accepted = std::move(split.canon);
  for (auto& pass : refined.passes) {
    for (auto& c : pass) result.accepted.push_back(std::move(c));
  }
  std::sort(result.accepted.begin(), result.accepted.end(), [&](const Candidate& a, const Candidate& b) {
    return order.at(a.instance.id) < order.at(b.instance.id);
  });
  std::vector<Instance> rows;
  rows.reserve(result.accepted.size());
  for (const auto& c : result.accepted) rows.push_back(c.instance);
  result.distilled = Dataset(std::move(rows));
  result.audit.append({{"stage", "distill"},
                       {"size", result.distilled.size()},
                       {"canon", result.canon},
                       {"refined_passes", result.distilled.size() - result.canon},
                       {"residual_fail", result.residual_fail.size()}});
  return result;
}

// ---------------------------------------------------------------------------
// Subprocess agent: one JSON request per line on the child's stdin, one JSON
// response per line on its stdout.
//
//   {"op":"check","candidate":{...},"group":[{"condition":i,"labels":{...}},...]}
//       -> {"pass":bool,"feedback":{"codes":[...],"detail":"..."}}
//   {"op":"refine","candidate":{...}}               -> {"instruction":"...","labels":{...},"slot":{...}?}
//
// An optional opaque knowledge document is sent first as
// {"op":"configure","knowledge":{...}} and must be acknowledged with any line.

class SubprocessAgent {
 public:
  explicit SubprocessAgent(const std::string& command, const nlohmann::json& knowledge = nullptr,
                           const ParameterSpace& space = ParameterSpace::standard())
      : space_(space), command_(command) {
    // A child that exits early must surface as an io error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    require(::pipe(to_child) == 0 && ::pipe(from_child) == 0, ErrorCode::io, "cannot create agent pipes");
    pid_ = ::fork();
    require(pid_ >= 0, ErrorCode::io, "cannot fork agent process");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_ = to_child[1];
    out_ = ::fdopen(from_child[0], "r");
    require(out_ != nullptr, ErrorCode::io, "cannot open agent output");
    if (!knowledge.is_null()) (void)round_trip({{"op", "configure"}, {"knowledge", knowledge}});
  }

  SubprocessAgent(const SubprocessAgent&) = delete;
  SubprocessAgent& operator=(const SubprocessAgent&) = delete;

  ~SubprocessAgent() {
    if (in_ >= 0) ::close(in_);
    if (out_) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  Verdict check(const Candidate& c, const Siblings& siblings) {
    nlohmann::ordered_json group = nlohmann::ordered_json::array();
    for (const Instance* s : siblings) {
      nlohmann::ordered_json labels = nlohmann::ordered_json::object();
      for (std::size_t k = 0; k < kParamCount; ++k) labels[space_[k].name] = s->labels[k];
      group.push_back({{"condition", s->condition.index()}, {"labels", labels}});
    }
    const auto reply = round_trip({{"op", "check"}, {"candidate", to_json(c, space_)}, {"group", group}});
    try {
      Verdict v;
      v.pass = reply.at("pass").get<bool>();
      if (!v.pass) {
        v.feedback = reply.contains("feedback") ? feedback_from_json(reply.at("feedback")) : Feedback{};
      }
      return v;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse, "agent '" + command_ + "' check reply: " + ex.what());
    }
  }

  Revision refine(const Candidate& c, const Feedback& fb) {
    Candidate with = c;
    with.feedback = fb;
    const auto reply = round_trip({{"op", "refine"}, {"candidate", to_json(with, space_)}});
    try {
      Revision r;
      r.instruction_text = reply.at("instruction").get<std::string>();
      const auto& labels = reply.at("labels");
      for (std::size_t k = 0; k < kParamCount; ++k) r.labels[k] = labels.at(space_[k].name).get<std::string>();
      if (reply.contains("slot") && !reply.at("slot").is_null()) {
        const auto& s = reply.at("slot");
        SlotTuple slot;
        slot.task = task_from_string(s.at("task").get<std::string>());
        slot.coverage = coverage_from_string(s.at("coverage").get<std::string>());
        slot.target = s.at("target").get<std::string>();
        slot.detail = detail_from_string(s.at("detail").get<std::string>());
        r.slot = slot;
      }
      return r;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse, "agent '" + command_ + "' refine reply: " + ex.what());
    }
  }

 private:
  nlohmann::json round_trip(const nlohmann::ordered_json& request) {
    std::lock_guard lock(mutex_);
    const std::string line = request.dump() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::write(in_, line.data() + sent, line.size() - sent);
      if (n < 0 && errno == EINTR) continue;
      require(n > 0, ErrorCode::io, "agent '" + command_ + "' closed its input");
      sent += static_cast<std::size_t>(n);
    }
    std::string reply;
    int ch;
    while ((ch = std::fgetc(out_)) != EOF && ch != '\n') reply.push_back(static_cast<char>(ch));
    require(ch == '\n' || !reply.empty(), ErrorCode::io, "agent '" + command_ + "' exited without replying");
    try {
      return nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse, "agent '" + command_ + "' replied with invalid JSON: " + ex.what());
    }
  }

  ParameterSpace space_;
  std::string command_;
  pid_t pid_ = -1;
  int in_ = -1;
  std::FILE* out_ = nullptr;
  std::mutex mutex_;
};

// Checker and refiner served by one subprocess; generation stays local.
inline AgentSet subprocess_agents(std::shared_ptr<SubprocessAgent> agent, GeneratorFn generator = template_generator()) {
  return {std::move(generator),
          [agent](const Candidate& c, const Siblings& s) { return agent->check(c, s); },
          [agent](const Candidate& c, const Feedback& fb) { return agent->refine(c, fb); }};
}

// Serves check/refine requests from `in` to `out` using in-process agents.
// The counterpart of SubprocessAgent, used by agent executables.
inline void serve_agent(std::istream& in, std::ostream& out, const AgentSet& agents,
                        const ParameterSpace& space = ParameterSpace::standard()) {
  std::string line;
  while (std::getline(in, line)) {
    const auto req = nlohmann::json::parse(line);
    const auto op = req.at("op").get<std::string>();
    nlohmann::ordered_json reply;
    if (op == "configure") {
      reply = {{"ok", true}};
    } else {
      Candidate c;
      const auto& cj = req.at("candidate");
      c.instance = instance_from_json(cj.at("instance"), space);
      c.generation = cj.at("generation").get<std::size_t>();
      c.template_seed = cj.at("template_seed").get<std::uint64_t>();
      if (op == "check") {
        std::vector<Instance> group;
        for (const auto& g : req.at("group")) {
          Instance s = c.instance;
          s.condition = AppearanceCondition::from_index(g.at("condition").get<int>());
          for (std::size_t k = 0; k < kParamCount; ++k) s.labels[k] = g.at("labels").at(space[k].name).get<std::string>();
          group.push_back(std::move(s));
        }
        Siblings sib;
        for (const auto& s : group) sib.push_back(&s);
        const auto v = agents.checker(c, sib);
        reply["pass"] = v.pass;
        if (v.feedback) reply["feedback"] = to_json(*v.feedback);
      } else if (op == "refine") {
        const auto fb = feedback_from_json(cj.at("feedback"));
        const auto r = agents.refiner(c, fb);
        nlohmann::ordered_json labels = nlohmann::ordered_json::object();
        for (std::size_t k = 0; k < kParamCount; ++k) labels[space[k].name] = r.labels[k];
        reply["instruction"] = r.instruction_text;
        reply["labels"] = labels;
        if (r.slot) {
          reply["slot"] = {{"task", to_string(r.slot->task)},
                           {"coverage", to_string(r.slot->coverage)},
                           {"target", r.slot->target},
                           {"detail", to_string(r.slot->detail)}};
        }
      } else {
        reply = {{"error", "unknown op '" + op + "'"}};
      }
    }
    out << reply.dump() << '\n' << std::flush;
  }
}

}  // namespace scanhd
