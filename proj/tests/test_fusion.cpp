#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "scanhd/scanhd.hpp"

using namespace scanhd;

namespace {

Embedding make_embedding(Modality kind, std::size_t dim, std::uint64_t seed, std::string id) {
  Rng rng(seed, "test/embedding");
  Embedding e;
  e.kind = kind;
  e.source_id = std::move(id);
  e.values.resize(dim);
  for (auto& v : e.values) v = rng.normal();
  return e;
}

FusionConfig fusion(FusionStrategy s, std::size_t dim = 2000) {
  FusionConfig f;
  f.strategy = s;
  f.hyper_dim = dim;
  return f;
}

template <class Fn>
void expect_error(ErrorCode code, Fn&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Fuse, SingleModalityIsPlainEncoding) {
  for (auto s : {FusionStrategy::hyperbind, FusionStrategy::concat_project}) {
    const auto f = fusion(s);
    const EncoderSet enc(f);
    const auto eo = make_embedding(Modality::observation, 512, 1, "o");
    const auto et = make_embedding(Modality::instruction, 512, 2, "t");
    EXPECT_EQ(fuse(&eo, nullptr, f, enc), enc.observation().encode(l2_normalized(eo.values)));
    EXPECT_EQ(fuse(nullptr, &et, f, enc), enc.instruction().encode(l2_normalized(et.values)));
  }
}

TEST(Fuse, HyperbindIsBoundSigns) {
  const auto f = fusion(FusionStrategy::hyperbind);
  const EncoderSet enc(f);
  const auto eo = make_embedding(Modality::observation, 512, 3, "o");
  const auto et = make_embedding(Modality::instruction, 512, 4, "t");
  const auto h = fuse(&eo, &et, f, enc);
  EXPECT_EQ(h, bind(enc.observation().encode(l2_normalized(eo.values)),
                    enc.instruction().encode(l2_normalized(et.values))));
  EXPECT_EQ(h, fuse(&eo, &et, f, enc));
}

TEST(Fuse, ConcatProjectUsesJointMatrix) {
  const auto f = fusion(FusionStrategy::concat_project);
  const EncoderSet enc(f);
  const auto eo = make_embedding(Modality::observation, 512, 5, "o");
  const auto et = make_embedding(Modality::instruction, 512, 6, "t");
  auto z = l2_normalized(eo.values);
  const auto t = l2_normalized(et.values);
  z.insert(z.end(), t.begin(), t.end());
  EXPECT_EQ(fuse(&eo, &et, f, enc), enc.joint().encode(z));
  EXPECT_EQ(enc.joint().input_dim(), 1024U);
}

TEST(Fuse, Errors) {
  const auto f = fusion(FusionStrategy::hyperbind);
  const EncoderSet enc(f);
  expect_error(ErrorCode::invalid_argument, [&] { (void)fuse(nullptr, nullptr, f, enc); });
  const auto wrong = make_embedding(Modality::observation, 100, 1, "short");
  expect_error(ErrorCode::invalid_argument, [&] { (void)fuse(&wrong, nullptr, f, enc); });
  expect_error(ErrorCode::invalid_argument, [&] { (void)EncoderSet(f).joint(); });
}

TEST(Fuse, RawInputsWhenNormalizationOff) {
  auto f = fusion(FusionStrategy::hyperbind);
  f.normalize_inputs = false;
  const EncoderSet enc(f);
  auto eo = make_embedding(Modality::observation, 512, 7, "o");
  EXPECT_EQ(fuse(&eo, nullptr, f, enc), enc.observation().encode(eo.values));
}

TEST(BatchEncode, GroupSharesInstructionComponent) {
  SynthConfig sc;
  sc.objects = 1;
  sc.keys_per_object = 1;
  const auto data = synth_generate(sc);
  ASSERT_EQ(data.dataset.size(), 27U);
  const auto f = fusion(FusionStrategy::hyperbind);
  const EncoderSet enc(f);
  const auto out = batch_encode(data.dataset.instances(), f, enc, data.embeddings);
  ASSERT_EQ(out.size(), 27U);
  const auto ht = enc.instruction().encode(l2_normalized(data.embeddings.at(data.dataset[0].instruction_embedding_id).values));
  std::set<std::vector<std::int8_t>> distinct;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& x = data.dataset[i];
    EXPECT_EQ(out[i].instance_id, x.id);
    const auto ho = enc.observation().encode(l2_normalized(data.embeddings.at(x.observation_embedding_id).values));
    EXPECT_EQ(bind(out[i].hv, ht), ho);
    distinct.emplace(out[i].hv.values().begin(), out[i].hv.values().end());
  }
  EXPECT_EQ(distinct.size(), 27U);
}

TEST(BatchEncode, EmptyPermutedAndParallel) {
  SynthConfig sc;
  sc.objects = 2;
  sc.keys_per_object = 1;
  const auto data = synth_generate(sc);
  const auto f = fusion(FusionStrategy::hyperbind, 1000);
  const EncoderSet enc(f);
  EXPECT_TRUE(batch_encode(std::span<const Instance>(), f, enc, data.embeddings).empty());

  const auto& rows = data.dataset.instances();
  const auto forward = batch_encode(rows, f, enc, data.embeddings);
  std::vector<Instance> reversed(rows.rbegin(), rows.rend());
  const auto backward = batch_encode(reversed, f, enc, data.embeddings, 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(forward[i].hv, backward[rows.size() - 1 - i].hv);
  }
}

TEST(BatchEncode, MissingEmbeddingNamed) {
  SynthConfig sc;
  sc.objects = 1;
  sc.keys_per_object = 1;
  auto data = synth_generate(sc);
  auto rows = data.dataset.instances();
  rows[3].observation_embedding_id = "obs:nowhere";
  const auto f = fusion(FusionStrategy::hyperbind, 500);
  try {
    (void)batch_encode(rows, f, EncoderSet(f), data.embeddings);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::lookup);
    EXPECT_NE(std::string(e.what()).find("obs:nowhere"), std::string::npos);
  }
}

TEST(EmbeddingStore, RoundTrip) {
  EmbeddingStore store;
  store.add(make_embedding(Modality::observation, 8, 1, "a"));
  store.add(make_embedding(Modality::instruction, 4, 2, "b"));
  std::stringstream buf;
  store.write(buf);
  const auto text = buf.str();
  auto loaded = EmbeddingStore::read(buf);
  ASSERT_EQ(loaded.size(), 2U);
  EXPECT_EQ(loaded.at("a").values, store.at("a").values);
  EXPECT_EQ(loaded.at("b").kind, Modality::instruction);
  std::stringstream again;
  loaded.write(again);
  EXPECT_EQ(again.str(), text);
}

TEST(EmbeddingStore, Errors) {
  EmbeddingStore store;
  store.add(make_embedding(Modality::observation, 8, 1, "a"));
  expect_error(ErrorCode::invalid_argument, [&] { store.add(make_embedding(Modality::observation, 8, 1, "a")); });
  expect_error(ErrorCode::lookup, [&] { (void)store.at("zzz"); });
  std::stringstream bad_dim(R"({"id":"x","kind":"observation","dim":3,"values":[1,2]})");
  expect_error(ErrorCode::parse, [&] { (void)EmbeddingStore::read(bad_dim); });
  std::stringstream bad_kind(R"({"id":"x","kind":"audio","dim":1,"values":[1]})");
  expect_error(ErrorCode::invalid_argument, [&] { (void)EmbeddingStore::read(bad_kind); });
  std::stringstream junk("{");
  expect_error(ErrorCode::parse, [&] { (void)EmbeddingStore::read(junk); });
}
