#include <gtest/gtest.h>

#include <map>
#include <set>

#include "scanhd/scanhd.hpp"

using namespace scanhd;

namespace {

SynthConfig config(std::size_t objects, std::size_t keys) {
  SynthConfig sc;
  sc.objects = objects;
  sc.keys_per_object = keys;
  return sc;
}

// All 27 rows of one key, as checked-ready candidates.
std::vector<Candidate> key_candidates(const KeySpec& spec) {
  std::vector<Candidate> out;
  const auto text = realize_instruction(spec.slot, spec.object_id, spec.template_seed);
  for (int c = 0; c < kConditionsPerKey; ++c) {
    Candidate cand;
    cand.instance = make_instance(spec, text, AppearanceCondition::from_index(c));
    cand.template_seed = spec.template_seed;
    out.push_back(std::move(cand));
  }
  return out;
}

Siblings siblings_of(const std::vector<Candidate>& group) {
  Siblings s;
  for (const auto& c : group) s.push_back(&c.instance);
  return s;
}

const KeySpec& detail_spec(const std::vector<KeySpec>& specs) {
  for (const auto& s : specs) {
    if (s.slot.detail == Detail::detail) return s;
  }
  throw std::runtime_error("no detail key in specs");
}

std::vector<Candidate> failed_candidates(const std::vector<KeySpec>& specs, std::size_t n) {
  std::vector<Candidate> fail;
  for (std::size_t i = 0; i < n; ++i) {
    auto group = key_candidates(specs[i]);
    group[0].instance.labels[kExposureTime] = "90us";
    const auto v = check_consistency(group[0], siblings_of(group));
    group[0].status = CandidateStatus::failed;
    group[0].feedback = v.feedback;
    fail.push_back(group[0]);
  }
  return fail;
}

}  // namespace

TEST(Checker, CleanKeyPasses) {
  const auto specs = synth_key_specs(config(3, 2));
  for (const auto& spec : specs) {
    const auto group = key_candidates(spec);
    const auto sib = siblings_of(group);
    for (const auto& c : group) {
      const auto v = check_consistency(c, sib);
      ASSERT_TRUE(v.pass) << (v.feedback ? v.feedback->detail : "");
    }
  }
}

TEST(Checker, MutatedFrequencyIsIntentMismatch) {
  const auto specs = synth_key_specs(config(4, 4));
  auto group = key_candidates(detail_spec(specs));
  ASSERT_EQ(group[5].instance.labels[kSamplingFrequency], "1kHz");
  group[5].instance.labels[kSamplingFrequency] = "100Hz";
  const auto v = check_consistency(group[5], siblings_of(group));
  ASSERT_FALSE(v.pass);
  EXPECT_TRUE(v.feedback->has(Violation::intent_mismatch));
  EXPECT_FALSE(v.feedback->has(Violation::physically_invalid));
  EXPECT_NE(v.feedback->detail.find("sampling_frequency"), std::string::npos);
}

TEST(Checker, OutOfVocabularyIsPhysicallyInvalid) {
  const auto specs = synth_key_specs(config(1, 1));
  auto group = key_candidates(specs[0]);
  group[0].instance.labels[kExposureTime] = "90us";
  const auto v = check_consistency(group[0], siblings_of(group));
  ASSERT_FALSE(v.pass);
  EXPECT_TRUE(v.feedback->has(Violation::physically_invalid));
}

TEST(Checker, ObservationLabelIsAppearanceIncompatible) {
  const auto specs = synth_key_specs(config(1, 1));
  auto group = key_candidates(specs[0]);
  auto& labels = group[0].instance.labels;
  labels[kCmosDynamicRange] = labels[kCmosDynamicRange] == "1" ? "9" : "1";
  const auto v = check_consistency(group[0], siblings_of(group));
  ASSERT_FALSE(v.pass);
  EXPECT_EQ(v.feedback->codes, std::set<Violation>{Violation::appearance_incompatible});
}

TEST(Checker, IncompleteGroupIsUnstable) {
  const auto specs = synth_key_specs(config(1, 1));
  auto group = key_candidates(specs[0]);
  group.pop_back();
  const auto v = check_consistency(group[0], siblings_of(group));
  ASSERT_FALSE(v.pass);
  EXPECT_TRUE(v.feedback->has(Violation::cross_view_unstable));
}

TEST(Checker, StrictModeCatchesLeakedValues) {
  const auto specs = synth_key_specs(config(1, 1));
  auto group = key_candidates(specs[0]);
  group[0].instance.instruction_text += " Use 240us.";
  EXPECT_TRUE(check_consistency(group[0], siblings_of(group)).pass);
  const auto v = check_consistency(group[0], siblings_of(group), ParameterSpace::standard(), {true});
  ASSERT_FALSE(v.pass);
  EXPECT_TRUE(v.feedback->has(Violation::intent_mismatch));
}

TEST(Flywheel, CleanRunReproducesGenerator) {
  const auto cfg = config(4, 3);
  const auto specs = synth_key_specs(cfg);
  const auto res = run_flywheel(specs, default_agents());
  EXPECT_EQ(res.generated, 4U * 3U * 27U);
  EXPECT_EQ(res.initial_fail, 0U);
  EXPECT_TRUE(res.rounds.empty());
  EXPECT_TRUE(res.residual_fail.empty());
  EXPECT_EQ(res.distilled.instances(), synth_generate(cfg).dataset.instances());
}

TEST(Flywheel, InjectedCorruptionIsCaughtExactly) {
  const auto specs = synth_key_specs(config(5, 2));
  ASSERT_EQ(specs.size(), 10U);
  const auto gen = CorruptingGenerator::exact(specs, 0.3, 11);
  std::set<std::string> corrupted;
  for (const auto& s : specs) {
    if (gen.corrupts(s.slot, s.object_id, s.template_seed)) corrupted.insert(instruction_embedding_id(s.object_id, s.key));
  }
  ASSERT_EQ(corrupted.size(), 3U);
  const AgentSet agents{gen, rule_checker(), identity_refiner()};
  const auto res = run_flywheel(specs, agents, {0, 1});
  EXPECT_EQ(res.initial_fail, 3U * 27U);
  std::set<std::string> failed_keys;
  for (const auto& c : res.residual_fail) {
    failed_keys.insert(c.instance.instruction_embedding_id);
    EXPECT_TRUE(c.feedback->has(Violation::intent_mismatch));
  }
  EXPECT_EQ(failed_keys, corrupted);
}

TEST(Flywheel, RepairRefinerClearsCorruption) {
  const auto cfg = config(16, 4);
  const auto specs = synth_key_specs(cfg);
  const auto gen = CorruptingGenerator::exact(specs, 0.1, 3);
  const AgentSet agents{gen, rule_checker(), field_repair_refiner()};
  const auto res = run_flywheel(specs, agents, {3, 2});
  EXPECT_EQ(res.initial_fail, 6U * 27U);
  EXPECT_TRUE(res.residual_fail.empty());
  ASSERT_EQ(res.distilled.size(), res.generated);

  // Every accepted row passes a fresh check against its own group.
  std::map<GroupKey, std::vector<Candidate>> groups;
  for (const auto& c : res.accepted) groups[GroupKey::of(c.instance)].push_back(c);
  std::size_t rechecked = 0;
  for (const auto& [key, group] : groups) {
    const auto sib = siblings_of(group);
    for (const auto& c : group) {
      EXPECT_TRUE(check_consistency(c, sib).pass) << c.id();
      ++rechecked;
    }
  }
  EXPECT_EQ(rechecked, res.distilled.size());

  // Slots never move and ids are stable.
  const auto clean = synth_generate(cfg).dataset;
  for (const auto& x : res.distilled.instances()) {
    const auto* ref = clean.find(x.id);
    ASSERT_NE(ref, nullptr);
    EXPECT_EQ(x.slot, ref->slot);
  }
  EXPECT_EQ(res.distilled.instances(), clean.instances());
  for (const auto& c : res.accepted) {
    if (c.generation > 0) {
      EXPECT_EQ(c.parent_id, std::optional<std::string>(c.instance.id + "#0"));
    }
  }
}

TEST(Flywheel, PartitionIsDisjointAndExhaustive) {
  const auto specs = synth_key_specs(config(6, 3));
  const auto gen = CorruptingGenerator::exact(specs, 0.25, 5);
  const AgentSet agents{gen, rule_checker(), identity_refiner()};
  const auto res = run_flywheel(specs, agents, {2, 1});
  EXPECT_EQ(res.canon + res.initial_fail, res.generated);
  std::multiset<std::string> ids;
  for (const auto& c : res.accepted) ids.insert(c.instance.id);
  for (const auto& c : res.residual_fail) ids.insert(c.instance.id);
  EXPECT_EQ(ids.size(), res.generated);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), res.generated);
}

TEST(Refine, IdentityRefinerIsFixpoint) {
  const auto specs = synth_key_specs(config(2, 2));
  const auto fail = failed_candidates(specs, 4);
  const AgentSet agents{template_generator(), rule_checker(), identity_refiner()};
  const auto out = refine_iterate(fail, agents, 3);
  ASSERT_EQ(out.rounds.size(), 3U);
  for (const auto& p : out.passes) EXPECT_TRUE(p.empty());
  ASSERT_EQ(out.residual_fail.size(), fail.size());
  for (std::size_t i = 0; i < fail.size(); ++i) {
    EXPECT_EQ(out.residual_fail[i].instance, fail[i].instance);
    EXPECT_EQ(out.residual_fail[i].generation, 3U);
  }
}

TEST(Refine, EmptyFailRunsNoRounds) {
  const auto out = refine_iterate({}, default_agents(), 5);
  EXPECT_TRUE(out.rounds.empty());
  EXPECT_TRUE(out.passes.empty());
  EXPECT_TRUE(out.residual_fail.empty());
}

TEST(Refine, SlotChangeIsContractViolation) {
  const auto specs = synth_key_specs(config(1, 1));
  const auto fail = failed_candidates(specs, 1);
  const RefinerFn moving = [](const Candidate& c, const Feedback&) {
    Revision r{c.instance.instruction_text, c.instance.labels, c.instance.slot};
    r.slot->task = confused_task(r.slot->task);
    r.slot->coverage = coverage_of(r.slot->task);
    r.slot->detail = detail_of(r.slot->task);
    return r;
  };
  const AgentSet agents{template_generator(), rule_checker(), moving};
  AuditLog log;
  try {
    (void)refine_iterate(fail, agents, 2, {}, &log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract_violation);
  }
  ASSERT_FALSE(log.records().empty());
  EXPECT_EQ(log.records().back()["error"], to_string(ErrorCode::contract_violation));
}

TEST(Refine, UncheckedInputRejected) {
  const auto specs = synth_key_specs(config(1, 1));
  auto group = key_candidates(specs[0]);
  try {
    (void)partition({group[0]});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_state);
  }
  EXPECT_THROW((void)refine_iterate({group[0]}, default_agents(), 1), Error);
}

TEST(Subprocess, RuleAgentMatchesInProcess) {
  const auto specs = synth_key_specs(config(6, 2));
  const auto gen = CorruptingGenerator::exact(specs, 0.25, 8);
  const AgentSet local{gen, rule_checker(), field_repair_refiner()};
  const auto expected = run_flywheel(specs, local, {3, 1});

  auto agent = std::make_shared<SubprocessAgent>(SCANHD_RULE_AGENT, nlohmann::json{{"note", "test"}});
  const auto remote = run_flywheel(specs, subprocess_agents(agent, gen), {3, 2});
  EXPECT_GT(remote.initial_fail, 0U);
  EXPECT_EQ(remote.initial_fail, expected.initial_fail);
  EXPECT_EQ(remote.distilled.instances(), expected.distilled.instances());
  std::ostringstream a, b;
  expected.audit.write(a);
  remote.audit.write(b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Subprocess, MissingAgentFails) {
  auto agent = std::make_shared<SubprocessAgent>("exit 0");
  const auto specs = synth_key_specs(config(1, 1));
  EXPECT_THROW((void)run_flywheel(specs, subprocess_agents(agent)), Error);
}
