#include <gtest/gtest.h>

#include "scanhd/scanhd.hpp"

using namespace scanhd;

namespace {

Instance row(const std::string& id, const std::string& text, const std::array<std::size_t, kParamCount>& labels,
             int position = 0) {
  Instance x;
  x.id = id;
  x.object_id = "pcb";
  x.instruction_text = text;
  x.slot = SlotTuple::for_task(Task::local_outline, "edges");
  x.condition.position = position;
  x.observation_embedding_id = "obs:" + id;
  x.instruction_embedding_id = "ins:" + id;
  for (std::size_t k = 0; k < kParamCount; ++k) x.labels[k] = ParameterSpace::standard()[k].values[labels[k]];
  return x;
}

void add(EmbeddingStore& store, const std::string& id, std::vector<double> obs, std::vector<double> ins) {
  store.add({Modality::observation, std::move(obs), "obs:" + id});
  store.add({Modality::instruction, std::move(ins), "ins:" + id});
}

}  // namespace

TEST(RuleLookup, SeenTextIsPerfectWhenConsistent) {
  SynthConfig sc;
  sc.objects = 4;
  sc.keys_per_object = 3;
  const auto data = synth_generate(sc);
  // Lighting changes exposure within a group, so seen text is exact on the
  // intent-driven parameters.
  const RuleLookupBaseline rule(data.dataset.instances());
  const auto rep = evaluate(rule, data.dataset.instances(), "train");
  EXPECT_DOUBLE_EQ(rep.params[kSamplingFrequency].exact, 1.0);
  EXPECT_DOUBLE_EQ(rep.params[kMeasurementRangeX].exact, 1.0);
  EXPECT_DOUBLE_EQ(rep.params[kCmosDynamicRange].exact, 1.0);
  EXPECT_DOUBLE_EQ(rep.params[kLightIntensityRange].exact, 1.0);
  EXPECT_EQ(rep.predictor, "rule_lookup");
}

TEST(RuleLookup, ExactOnTextsWithOneConfig) {
  const std::vector<Instance> train = {
      row("a", "Outline the edges on the PCB.", {0, 1, 2, 0, 1}),
      row("b", "outline the EDGES on the pcb", {0, 1, 2, 0, 1}, 1),
      row("c", "Measure the width of the cavity on the gear.", {1, 1, 1, 1, 1}),
  };
  const RuleLookupBaseline rule(train);
  for (const auto& x : train) EXPECT_EQ(rule.predict(x).config, x.labels);
  EXPECT_TRUE(rule.seen("Outline the edges, on the PCB!"));
  EXPECT_FALSE(rule.seen("Outline the bezel on the PCB."));
}

TEST(RuleLookup, UnseenTextGetsGlobalMode) {
  const std::vector<Instance> train = {
      row("a", "t1", {2, 0, 0, 0, 0}),
      row("b", "t2", {2, 1, 0, 1, 0}),
      row("c", "t3", {1, 1, 2, 2, 0}),
  };
  const RuleLookupBaseline rule(train);
  const auto r = rule.predict_text("never seen");
  ParameterConfig expected;
  expected.values = {"1kHz", "1/2", "60us", "1", "Low"};
  EXPECT_EQ(r.config, expected);
  EXPECT_EQ(rule.global_mode(), expected);
  EXPECT_NEAR(r.confidences[kSamplingFrequency][2], 2.0 / 3.0, 1e-15);
}

TEST(RuleLookup, TiesGoToVocabularyOrder) {
  const std::vector<Instance> train = {
      row("a", "same", {2, 2, 2, 2, 2}),
      row("b", "same", {1, 1, 1, 1, 1}, 1),
  };
  const RuleLookupBaseline rule(train);
  const auto r = rule.predict_text("same");
  for (std::size_t k = 0; k < kParamCount; ++k) EXPECT_EQ(r.config[k], ParameterSpace::standard()[k].values[1]);
}

TEST(RuleLookup, EmptyTrainRejected) {
  EXPECT_THROW(RuleLookupBaseline(std::span<const Instance>()), Error);
}

TEST(Knn, NearestNeighborOnExactMatch) {
  std::vector<Instance> train;
  EmbeddingStore store;
  for (int i = 0; i < 3; ++i) {
    const auto id = "n" + std::to_string(i);
    const std::size_t v = static_cast<std::size_t>(i);
    train.push_back(row(id, "x", {v, v, v, v, v}));
    std::vector<double> e(3, 0.0);
    e[static_cast<std::size_t>(i)] = 1.0;
    add(store, id, e, e);
  }
  const KnnBaseline knn(train, store, 1);
  for (const auto& x : train) EXPECT_EQ(knn.predict(x).config, x.labels);
  EXPECT_EQ(knn.name(), "knn");
}

TEST(Knn, MajorityVote) {
  std::vector<Instance> train = {row("a", "x", {0, 0, 0, 0, 0}), row("b", "x", {0, 0, 0, 0, 0}),
                                 row("c", "x", {2, 2, 2, 2, 2}), row("far", "x", {1, 1, 1, 1, 1})};
  EmbeddingStore store;
  add(store, "a", {1.0, 0.2}, {1.0});
  add(store, "b", {1.0, -0.2}, {1.0});
  add(store, "c", {1.0, 0.0}, {1.0});
  add(store, "far", {-1.0, 0.0}, {1.0});
  const KnnBaseline knn(train, store, 3, KnnSpace::observation);
  const auto r = knn.predict_features(l2_normalized(std::vector<double>{1.0, 0.01}));
  for (std::size_t k = 0; k < kParamCount; ++k) {
    EXPECT_EQ(r.config[k], ParameterSpace::standard()[k].values[0]);
    EXPECT_NEAR(r.confidences[k][0], 2.0 / 3.0, 1e-15);
  }
}

TEST(Knn, KLargerThanTrainRejected) {
  std::vector<Instance> train = {row("a", "x", {0, 0, 0, 0, 0})};
  EmbeddingStore store;
  add(store, "a", {1.0}, {1.0});
  try {
    KnnBaseline(train, store, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
  EXPECT_THROW(KnnBaseline(train, store, 0), Error);
}

TEST(Knn, FeatureSpaces) {
  std::vector<Instance> train = {row("a", "x", {0, 0, 0, 0, 0})};
  EmbeddingStore store;
  add(store, "a", {3.0, 4.0}, {0.0, 0.0, 2.0});
  EXPECT_EQ(KnnBaseline(train, store, 1, KnnSpace::observation).features(train[0]).size(), 2U);
  EXPECT_EQ(KnnBaseline(train, store, 1, KnnSpace::instruction).features(train[0]).size(), 3U);
  const auto both = KnnBaseline(train, store, 1, KnnSpace::concatenated).features(train[0]);
  ASSERT_EQ(both.size(), 5U);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(both[0], 0.6 * r, 1e-15);
  EXPECT_NEAR(both[4], r, 1e-15);
  EXPECT_EQ(knn_space_from_string("both"), KnnSpace::concatenated);
  EXPECT_THROW(knn_space_from_string("audio"), Error);
}

TEST(Knn, NoiselessSplitNearlyPerfect) {
  SynthConfig sc;
  sc.objects = 6;
  sc.keys_per_object = 4;
  sc.noise_sigma = 0.0;
  const auto data = synth_generate(sc);
  const auto s = split(data.dataset, SplitSpec::parse("row_random:0.8"), 1);
  const KnnBaseline knn(s.train, data.embeddings, 5);
  const auto rep = evaluate(knn, s.test, s.descriptor);
  EXPECT_GE(rep.average_exact, 0.99);
}
