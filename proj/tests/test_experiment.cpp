#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "scanhd/scanhd.hpp"

using namespace scanhd;

namespace {

SynthData tiny() {
  SynthConfig sc;
  sc.objects = 4;
  sc.keys_per_object = 2;
  return synth_generate(sc);
}

SweepConfig tiny_sweep(Protocol p) {
  SweepConfig cfg;
  cfg.protocol = p;
  cfg.fusion.hyper_dim = 2000;
  cfg.training.refine_epochs = 3;
  return cfg;
}

}  // namespace

TEST(Stats, MeanStd) {
  const std::vector<double> xs = {2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(xs);
  EXPECT_DOUBLE_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.std, std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{3.0}).std, 0.0);
  EXPECT_EQ(mean_std(std::vector<double>{}).mean, 0.0);
}

TEST(Stats, Spearman) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_NEAR(*spearman(x, std::vector<double>{10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, std::vector<double>{1, 1, 2, 2}), 4.0 / std::sqrt(20.0), 1e-15);
  EXPECT_EQ(spearman(x, std::vector<double>{5, 5, 5, 5}), std::nullopt);
  EXPECT_EQ(spearman(std::vector<double>{1}, std::vector<double>{1}), std::nullopt);
  EXPECT_THROW((void)spearman(x, std::vector<double>{1, 2}), Error);
}

TEST(Stats, Percentile) {
  const std::vector<double> xs = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(percentile(xs, 0.5), 5.0);
  EXPECT_EQ(percentile(xs, 0.9), 9.0);
  EXPECT_EQ(percentile(xs, 0.99), 10.0);
  EXPECT_EQ(percentile(std::vector<double>{}, 0.5), 0.0);
}

TEST(Fraction, StratifiedByJointLabel) {
  const auto data = tiny();
  const auto& rows = data.dataset.instances();
  std::map<std::string, std::size_t> full;
  for (const auto& x : rows) ++full[joint_label_key(x)];
  for (double f : {0.2, 0.5, 1.0}) {
    const auto sub = stratified_fraction(rows, f, 3);
    std::map<std::string, std::size_t> got;
    for (const auto& x : sub) ++got[joint_label_key(x)];
    ASSERT_EQ(got.size(), full.size());
    for (const auto& [key, n] : full) {
      const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
      EXPECT_EQ(got[key], std::min(want, n)) << key;
    }
    // Input order is kept.
    std::size_t pos = 0;
    for (const auto& x : sub) {
      while (pos < rows.size() && rows[pos].id != x.id) ++pos;
      ASSERT_LT(pos, rows.size());
    }
  }
  EXPECT_EQ(stratified_fraction(rows, 1.0, 1).size(), rows.size());
  EXPECT_EQ(stratified_fraction(rows, 0.3, 9), stratified_fraction(rows, 0.3, 9));
  EXPECT_THROW((void)stratified_fraction(rows, 0.0, 1), Error);
  EXPECT_THROW((void)stratified_fraction(rows, 1.5, 1), Error);
}

TEST(Sweep, FractionRunCount) {
  const auto data = tiny();
  auto cfg = tiny_sweep(Protocol::fractions);
  const auto res = sweep(data.dataset, data.embeddings, cfg);
  std::size_t hd = 0;
  for (const auto& r : res.runs) hd += r.predictor == "scanhd" ? 1 : 0;
  EXPECT_EQ(hd, 25U);
  EXPECT_EQ(res.runs.size(), 50U);
  const auto summary = summarize(res.runs);
  ASSERT_EQ(summary.size(), 10U);
  for (const auto& s : summary) EXPECT_EQ(s.runs, 5U);
  EXPECT_EQ(summary.front().cell, "fraction=0.20");
}

TEST(Sweep, AblationThreeCellsPerSeed) {
  const auto data = tiny();
  auto cfg = tiny_sweep(Protocol::ablations);
  cfg.seeds = {7};
  cfg.knn = false;
  const auto res = sweep(data.dataset, data.embeddings, cfg);
  ASSERT_EQ(res.runs.size(), 3U);
  EXPECT_EQ(res.runs[0].cell, "modality=observation");
  EXPECT_EQ(res.runs[1].cell, "modality=instruction");
  EXPECT_EQ(res.runs[2].cell, "modality=both");
  // Instructions alone fix the intent-driven parameters on seen keys.
  EXPECT_DOUBLE_EQ(res.runs[1].report.params[kSamplingFrequency].exact, 1.0);
}

TEST(Sweep, CrossSplitsHoldOutTheFactor) {
  const auto data = tiny();
  auto cfg = tiny_sweep(Protocol::cross_splits);
  cfg.seeds = {1};
  cfg.knn = false;
  const auto res = sweep(data.dataset, data.embeddings, cfg);
  ASSERT_EQ(res.runs.size(), 3U);
  EXPECT_EQ(res.runs[0].cell, "split=lighting:dark");
  EXPECT_EQ(res.runs[0].report.count, data.dataset.size() / 3);
}

TEST(Sweep, IndependentOfJobCount) {
  const auto data = tiny();
  auto cfg = tiny_sweep(Protocol::single);
  cfg.seeds = {1, 2, 3};
  const auto a = sweep(data.dataset, data.embeddings, cfg);
  cfg.jobs = 4;
  const auto b = sweep(data.dataset, data.embeddings, cfg);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Sweep, RejectsBadConfig) {
  const auto data = tiny();
  auto cfg = tiny_sweep(Protocol::fractions);
  cfg.fractions = {0.0};
  EXPECT_THROW((void)sweep(data.dataset, data.embeddings, cfg), Error);
  cfg = tiny_sweep(Protocol::single);
  cfg.seeds.clear();
  EXPECT_THROW((void)sweep(data.dataset, data.embeddings, cfg), Error);
  EXPECT_THROW((void)protocol_from_string("bogus"), Error);
}

TEST(Pipeline, TrainOnRecordsFingerprint) {
  const auto data = tiny();
  FusionConfig f;
  f.hyper_dim = 2000;
  const EncoderSet enc(f);
  const auto encoded = encode_rows(data.dataset.instances(), f, enc, data.embeddings);
  TrainingConfig tc;
  tc.refine_epochs = 2;
  const auto s = split(data.dataset, SplitSpec::parse("row_random:0.8"), 1);
  const auto trained = train_on(s.train, encoded, f, tc);
  EXPECT_EQ(trained.model.meta().data_fingerprint, hex64(fingerprint(s.train)));
  EXPECT_EQ(trained.model.meta().algorithm, "adaptive");
  EXPECT_TRUE(untrained_classes(trained.model).size() < kParamCount * kValuesPerParam);
  EXPECT_THROW((void)train_on(std::span<const Instance>(), encoded, f, tc), Error);
}

TEST(Latency, ZeroQueriesGiveEmptyStats) {
  FusionConfig f;
  f.hyper_dim = 500;
  const ScanModel model(f);
  const auto st = latency_probe(model, std::span<const QueryPair>(), 0);
  EXPECT_EQ(st.n, 0U);
  EXPECT_EQ(st.p50_us, 0.0);
  EXPECT_EQ(st.max_us, 0.0);
}

TEST(Latency, OrderedPercentiles) {
  SynthConfig sc;
  sc.objects = 16;
  sc.keys_per_object = 1;
  const auto data = synth_generate(sc);
  FusionConfig f;
  f.hyper_dim = 2000;
  const EncoderSet enc(f);
  const auto encoded = encode_rows(data.dataset.instances(), f, enc, data.embeddings);
  TrainingConfig tc;
  tc.refine_epochs = 1;
  const auto trained = train_on(data.dataset.instances(), encoded, f, tc);
  ASSERT_TRUE(untrained_classes(trained.model).empty());
  std::vector<QueryPair> qs;
  for (const auto& x : data.dataset.instances()) {
    qs.push_back({&data.embeddings.at(x.observation_embedding_id), &data.embeddings.at(x.instruction_embedding_id)});
  }
  const auto st = latency_probe(trained.model, qs, 50, 5);
  EXPECT_EQ(st.n, 50U);
  EXPECT_LE(st.min_us, st.p50_us);
  EXPECT_LE(st.p50_us, st.p90_us);
  EXPECT_LE(st.p90_us, st.p99_us);
  EXPECT_LE(st.p99_us, st.max_us);
  EXPECT_THROW((void)latency_probe(trained.model, std::span<const QueryPair>(), 5), Error);
}
