#pragma once

// Synthetic benchmark generator with a full 3x3x3 appearance factorial per
// instruction key.
//
// Observation embedding: normalize(object + position + rotation + lighting
//                                  + reflectivity * material + noise)
// Instruction embedding: normalize(task + coverage + target + detail + noise / 2)
//
// All prototypes are unit vectors. Noise vectors have i.i.d. components with
// standard deviation sigma / sqrt(dim), so their expected norm is sigma and
// sigma is directly comparable to a prototype's unit length.

#include <string>
#include <utility>
#include <vector>

#include "scanhd/dataset.hpp"
#include "scanhd/embedding.hpp"
#include "scanhd/instruction.hpp"
#include "scanhd/label_oracle.hpp"
#include "scanhd/parallel.hpp"
#include "scanhd/random.hpp"

namespace scanhd {

struct SynthConfig {
  std::size_t objects = 16;
  std::size_t keys_per_object = 4;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
  std::size_t observation_dim = 512;
  std::size_t instruction_dim = 512;

  void validate() const {
    require(objects >= 1 && objects <= kObjects.size(), ErrorCode::invalid_argument,
            "objects must lie in [1, " + std::to_string(kObjects.size()) + "]");
    require(keys_per_object >= 1 && keys_per_object <= kTasks.size() * kTargets.size(), ErrorCode::invalid_argument,
            "keys_per_object must lie in [1, 72]");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorCode::invalid_argument,
            "noise_sigma must be finite and non-negative");
    require(observation_dim >= 1 && instruction_dim >= 1, ErrorCode::invalid_argument,
            "embedding dimensions must be positive");
  }
};

struct SynthData {
  Dataset dataset;
  EmbeddingStore embeddings;
};

namespace detail {

inline std::vector<double> unit_gaussian(std::size_t dim, std::uint64_t seed, std::string_view name,
                                         std::uint64_t index) {
  Rng rng(seed, name, index);
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return l2_normalized(v);
}

inline void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double scale = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

inline void add_noise(std::vector<double>& acc, double sigma, std::uint64_t seed, std::string_view name,
                      std::uint64_t index) {
  if (sigma <= 0.0) return;
  Rng rng(seed, name, index);
  const double sd = sigma / std::sqrt(static_cast<double>(acc.size()));
  for (auto& x : acc) x += sd * rng.normal();
}

}  // namespace detail

// Instruction embedding of a slot without paraphrase noise.
inline std::vector<double> slot_embedding(const SlotTuple& slot, const SynthConfig& cfg) {
  using detail::add_scaled;
  using detail::unit_gaussian;
  std::vector<double> v(cfg.instruction_dim, 0.0);
  add_scaled(v, unit_gaussian(cfg.instruction_dim, cfg.seed, "proto/task", static_cast<std::uint64_t>(slot.task)));
  add_scaled(v, unit_gaussian(cfg.instruction_dim, cfg.seed, "proto/coverage",
                              static_cast<std::uint64_t>(slot.coverage)));
  add_scaled(v, unit_gaussian(cfg.instruction_dim, cfg.seed, "proto/target", *token_index(kTargets, slot.target)));
  add_scaled(v, unit_gaussian(cfg.instruction_dim, cfg.seed, "proto/detail", static_cast<std::uint64_t>(slot.detail)));
  return v;
}

inline std::string instance_id(std::string_view object_id, std::size_t key, const AppearanceCondition& c) {
  return std::string(object_id) + "/k" + std::to_string(key) + "/p" + std::to_string(c.position) + "r" +
         std::to_string(c.rotation) + "-" + std::string(to_string(c.lighting));
}

inline std::string instruction_embedding_id(std::string_view object_id, std::size_t key) {
  return "ins:" + std::string(object_id) + "/k" + std::to_string(key);
}

// One instruction key of one object: everything needed to realize its 27 rows.
struct KeySpec {
  std::string object_id;
  std::size_t object_index = 0;
  std::size_t key = 0;
  SlotTuple slot;
  Latent latent;
  std::uint64_t template_seed = 0;
};

inline std::vector<KeySpec> synth_key_specs(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<KeySpec> specs;
  for (std::size_t o = 0; o < cfg.objects; ++o) {
    Rng latent_rng(cfg.seed, "latent/object", o);
    const Latent latent{latent_rng.uniform(), latent_rng.uniform()};
    // Distinct (task, target) slots per object keep every key's group unique.
    std::vector<std::size_t> slot_ids(kTasks.size() * kTargets.size());
    for (std::size_t i = 0; i < slot_ids.size(); ++i) slot_ids[i] = i;
    Rng key_rng(cfg.seed, "keys/object", o);
    key_rng.shuffle(slot_ids);
    for (std::size_t k = 0; k < cfg.keys_per_object; ++k) {
      const Task task = kTasks[slot_ids[k] / kTargets.size()];
      KeySpec spec;
      spec.object_id = std::string(kObjects[o].id);
      spec.object_index = o;
      spec.key = k;
      spec.slot = SlotTuple::for_task(task, std::string(kTargets[slot_ids[k] % kTargets.size()].id));
      spec.latent = latent;
      spec.template_seed = key_rng.next() >> 48;
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

// The row of a key under one appearance condition, labeled by the oracle.
inline Instance make_instance(const KeySpec& spec, std::string instruction_text, const AppearanceCondition& cond) {
  Instance x;
  x.id = instance_id(spec.object_id, spec.key, cond);
  x.object_id = spec.object_id;
  x.instruction_text = std::move(instruction_text);
  x.slot = spec.slot;
  x.condition = cond;
  x.observation_embedding_id = "obs:" + x.id;
  x.instruction_embedding_id = instruction_embedding_id(spec.object_id, spec.key);
  x.latent = spec.latent;
  x.labels = label_oracle(x);
  return x;
}

inline SynthData synth_generate(const SynthConfig& cfg, std::size_t jobs = 1) {
  using detail::add_noise;
  using detail::add_scaled;
  using detail::unit_gaussian;

  const auto specs = synth_key_specs(cfg);
  const std::size_t d_o = cfg.observation_dim;
  std::vector<std::vector<double>> positions, rotations, lightings;
  for (std::uint64_t i = 0; i < 3; ++i) {
    positions.push_back(unit_gaussian(d_o, cfg.seed, "proto/position", i));
    rotations.push_back(unit_gaussian(d_o, cfg.seed, "proto/rotation", i));
    lightings.push_back(unit_gaussian(d_o, cfg.seed, "proto/lighting", i));
  }
  const auto material = unit_gaussian(d_o, cfg.seed, "proto/material", 0);

  struct ObjectOutput {
    std::vector<Instance> rows;
    std::vector<Embedding> embeddings;
  };
  std::vector<ObjectOutput> per_object(cfg.objects);

  parallel_for(cfg.objects, jobs, [&](std::size_t o) {
    const auto object_proto = unit_gaussian(d_o, cfg.seed, "proto/object", o);
    auto& out = per_object[o];
    for (std::size_t k = 0; k < cfg.keys_per_object; ++k) {
      const auto& spec = specs[o * cfg.keys_per_object + k];
      const std::string text = realize_instruction(spec.slot, spec.object_id, spec.template_seed);
      const std::uint64_t key_index = o * 1000 + k;

      auto instruction = slot_embedding(spec.slot, cfg);
      add_noise(instruction, cfg.noise_sigma / 2.0, cfg.seed, "noise/instruction", key_index);
      out.embeddings.push_back(
          {Modality::instruction, l2_normalized(instruction), instruction_embedding_id(spec.object_id, k)});

      for (int c = 0; c < kConditionsPerKey; ++c) {
        const auto cond = AppearanceCondition::from_index(c);
        std::vector<double> obs(d_o, 0.0);
        add_scaled(obs, object_proto);
        add_scaled(obs, positions[static_cast<std::size_t>(cond.position)]);
        add_scaled(obs, rotations[static_cast<std::size_t>(cond.rotation)]);
        add_scaled(obs, lightings[static_cast<std::size_t>(cond.lighting)]);
        add_scaled(obs, material, spec.latent.reflectivity);
        add_noise(obs, cfg.noise_sigma, cfg.seed, "noise/observation", key_index * 32 + static_cast<std::uint64_t>(c));

        Instance x = make_instance(spec, text, cond);
        out.embeddings.push_back({Modality::observation, l2_normalized(obs), x.observation_embedding_id});
        out.rows.push_back(std::move(x));
      }
    }
  });

  std::vector<Instance> rows;
  EmbeddingStore store;
  for (auto& part : per_object) {
    for (auto& x : part.rows) rows.push_back(std::move(x));
    for (auto& e : part.embeddings) store.add(std::move(e));
  }
  return {Dataset(std::move(rows)), std::move(store)};
}

}  // namespace scanhd
