#pragma once

// Observation + instruction embeddings -> one task-aware hypervector.
//
// concat-project: h = sgn(E_joint [ê_o ; ê_t])
// hyperbind:      h = sgn(E_o ê_o) ⊙ sgn(E_t ê_t)
// single modality (ablations): h = sgn(E_m ê_m), whatever the strategy.

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scanhd/embedding.hpp"
#include "scanhd/hdc.hpp"
#include "scanhd/parallel.hpp"

namespace scanhd {

enum class FusionStrategy { concat_project, hyperbind };

// Which inputs a model consumes.
enum class ModalityMode { both, observation_only, instruction_only };

inline std::string to_string(FusionStrategy s) {
  return s == FusionStrategy::concat_project ? "concat-project" : "hyperbind";
}

inline FusionStrategy fusion_strategy_from_string(const std::string& s) {
  if (s == "concat-project") return FusionStrategy::concat_project;
  if (s == "hyperbind") return FusionStrategy::hyperbind;
  throw Error(ErrorCode::invalid_argument, "unknown fusion strategy '" + s + "'");
}

inline std::string to_string(ModalityMode m) {
  switch (m) {
    case ModalityMode::both: return "both";
    case ModalityMode::observation_only: return "observation";
    case ModalityMode::instruction_only: return "instruction";
  }
  return "both";
}

inline ModalityMode modality_mode_from_string(const std::string& s) {
  if (s == "both") return ModalityMode::both;
  if (s == "observation") return ModalityMode::observation_only;
  if (s == "instruction") return ModalityMode::instruction_only;
  throw Error(ErrorCode::invalid_argument, "unknown modality mode '" + s + "'");
}

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::hyperbind;
  ModalityMode modalities = ModalityMode::both;
  bool normalize_inputs = true;
  std::uint64_t observation_seed = 0x5eed0b5ULL;
  std::uint64_t instruction_seed = 0x5eed1a5ULL;
  std::size_t hyper_dim = kDefaultHyperDim;
  std::size_t observation_dim = 512;
  std::size_t instruction_dim = 512;

  // The joint (concat-project) matrix is keyed by both modality seeds.
  [[nodiscard]] std::uint64_t joint_seed() const noexcept {
    return hash_combine(observation_seed, instruction_seed);
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Projection encoders for one FusionConfig. Copies share the matrices.
class EncoderSet {
 public:
  explicit EncoderSet(const FusionConfig& cfg)
      : cfg_(cfg),
        observation_(std::make_shared<const ProjectionEncoder>(cfg.observation_dim, cfg.hyper_dim,
                                                               cfg.observation_seed)),
        instruction_(std::make_shared<const ProjectionEncoder>(cfg.instruction_dim, cfg.hyper_dim,
                                                               cfg.instruction_seed)) {
    if (cfg.strategy == FusionStrategy::concat_project && cfg.modalities == ModalityMode::both) {
      joint_ = std::make_shared<const ProjectionEncoder>(cfg.observation_dim + cfg.instruction_dim, cfg.hyper_dim,
                                                         cfg.joint_seed());
    }
  }

  [[nodiscard]] const FusionConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const ProjectionEncoder& observation() const { return *observation_; }
  [[nodiscard]] const ProjectionEncoder& instruction() const { return *instruction_; }
  [[nodiscard]] const ProjectionEncoder& joint() const {
    require(joint_ != nullptr, ErrorCode::invalid_argument, "no joint encoder for this fusion configuration");
    return *joint_;
  }

 private:
  FusionConfig cfg_;
  std::shared_ptr<const ProjectionEncoder> observation_;
  std::shared_ptr<const ProjectionEncoder> instruction_;
  std::shared_ptr<const ProjectionEncoder> joint_;
};

namespace detail {

inline std::vector<double> prepare(const Embedding& e, std::size_t expected_dim, bool normalize) {
  e.validate();
  require(e.dim() == expected_dim, ErrorCode::invalid_argument,
          to_string(e.kind) + " embedding '" + e.source_id + "' has dim " + std::to_string(e.dim()) +
              ", encoder expects " + std::to_string(expected_dim));
  return normalize ? l2_normalized(e.values) : e.values;
}

}  // namespace detail

inline Hypervector fuse(const Embedding* observation, const Embedding* instruction, const FusionConfig& cfg,
                        const EncoderSet& encoders) {
  require(observation != nullptr || instruction != nullptr, ErrorCode::invalid_argument,
          "fuse needs at least one embedding");
  if (observation && instruction) {
    const auto eo = detail::prepare(*observation, cfg.observation_dim, cfg.normalize_inputs);
    const auto et = detail::prepare(*instruction, cfg.instruction_dim, cfg.normalize_inputs);
    if (cfg.strategy == FusionStrategy::hyperbind) {
      return bind(encoders.observation().encode(eo), encoders.instruction().encode(et));
    }
    std::vector<double> z;
    z.reserve(eo.size() + et.size());
    z.insert(z.end(), eo.begin(), eo.end());
    z.insert(z.end(), et.begin(), et.end());
    return encoders.joint().encode(z);
  }
  if (observation) {
    return encoders.observation().encode(detail::prepare(*observation, cfg.observation_dim, cfg.normalize_inputs));
  }
  return encoders.instruction().encode(detail::prepare(*instruction, cfg.instruction_dim, cfg.normalize_inputs));
}

inline Hypervector fuse(const std::optional<Embedding>& observation, const std::optional<Embedding>& instruction,
                        const FusionConfig& cfg, const EncoderSet& encoders) {
  return fuse(observation ? &*observation : nullptr, instruction ? &*instruction : nullptr, cfg, encoders);
}

// Anything that names its embeddings by id (dataset instances do).
template <class T>
concept EmbeddingRefs = requires(const T& t) {
  { t.id } -> std::convertible_to<std::string>;
  { t.observation_embedding_id } -> std::convertible_to<std::string>;
  { t.instruction_embedding_id } -> std::convertible_to<std::string>;
};

struct EncodedInstance {
  std::string instance_id;
  Hypervector hv;
};

// Resolves the embeddings required by cfg.modalities and fuses each instance.
template <EmbeddingRefs Instance>
std::vector<EncodedInstance> batch_encode(std::span<const Instance> instances, const FusionConfig& cfg,
                                          const EncoderSet& encoders, const EmbeddingStore& store,
                                          std::size_t jobs = 1) {
  std::vector<EncodedInstance> out(instances.size());
  parallel_for(instances.size(), jobs, [&](std::size_t i) {
    const auto& inst = instances[i];
    const Embedding* eo = nullptr;
    const Embedding* et = nullptr;
    if (cfg.modalities != ModalityMode::instruction_only) eo = &store.at(inst.observation_embedding_id);
    if (cfg.modalities != ModalityMode::observation_only) et = &store.at(inst.instruction_embedding_id);
    out[i] = EncodedInstance{inst.id, fuse(eo, et, cfg, encoders)};
  });
  return out;
}

template <EmbeddingRefs Instance>
std::vector<EncodedInstance> batch_encode(const std::vector<Instance>& instances, const FusionConfig& cfg,
                                          const EncoderSet& encoders, const EmbeddingStore& store,
                                          std::size_t jobs = 1) {
  return batch_encode(std::span<const Instance>(instances), cfg, encoders, store, jobs);
}

}  // namespace scanhd
