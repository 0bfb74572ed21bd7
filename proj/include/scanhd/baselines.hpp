#pragma once

// Predictors for evaluate(): the trained HDC model and two baselines.

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scanhd/dataset.hpp"
#include "scanhd/embedding.hpp"
#include "scanhd/instruction.hpp"
#include "scanhd/memory.hpp"
#include "scanhd/metrics.hpp"

namespace scanhd {

class ModelPredictor {
 public:
  ModelPredictor(const ScanModel& model, const EmbeddingStore& store,
                 PredictPolicy policy = PredictPolicy::skip_untrained)
      : model_(&model), store_(&store), policy_(policy) {}

  [[nodiscard]] std::string name() const { return "scanhd"; }

  [[nodiscard]] Recommendation predict(const Instance& x) const {
    const auto mode = model_->fusion().modalities;
    const Embedding* eo = mode == ModalityMode::instruction_only ? nullptr : &store_->at(x.observation_embedding_id);
    const Embedding* et = mode == ModalityMode::observation_only ? nullptr : &store_->at(x.instruction_embedding_id);
    return recommend(*model_, eo, et, policy_);
  }

 private:
  const ScanModel* model_;
  const EmbeddingStore* store_;
  PredictPolicy policy_;
};

// Precomputed hypervectors keyed by instance id; used by sweeps that encode
// the dataset once and train many models.
class EncodedPredictor {
 public:
  EncodedPredictor(const ScanModel& model, const std::map<std::string, const Hypervector*>& encoded)
      : model_(&model), encoded_(&encoded) {}

  [[nodiscard]] std::string name() const { return "scanhd"; }

  [[nodiscard]] Recommendation predict(const Instance& x) const {
    const auto it = encoded_->find(x.id);
    require(it != encoded_->end(), ErrorCode::lookup, "no encoded hypervector for instance '" + x.id + "'");
    return recommend_hv(*model_, *it->second, PredictPolicy::skip_untrained);
  }

 private:
  const ScanModel* model_;
  const std::map<std::string, const Hypervector*>* encoded_;
};

namespace detail {

using Counts = std::array<std::size_t, kValuesPerParam>;

inline std::size_t mode_of(const Counts& c) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < c.size(); ++v) {
    if (c[v] > c[best]) best = v;
  }
  return best;
}

inline Scores frequencies(const Counts& c) {
  std::size_t total = 0;
  for (auto n : c) total += n;
  Scores s{};
  for (std::size_t v = 0; v < c.size(); ++v) {
    s[v] = total ? static_cast<double>(c[v]) / static_cast<double>(total) : 0.0;
  }
  return s;
}

}  // namespace detail

// Per normalized instruction text, the modal value of every parameter.
// Unseen text falls back to the global per-parameter mode. Ties go to the
// first value in vocabulary order.
class RuleLookupBaseline {
 public:
  explicit RuleLookupBaseline(std::span<const Instance> train, const ParameterSpace& space = ParameterSpace::standard())
      : space_(space) {
    require(!train.empty(), ErrorCode::empty_input, "rule lookup needs a nonempty training set");
    for (const auto& x : train) {
      auto& per_text = table_[normalize_instruction(x.instruction_text)];
      for (std::size_t k = 0; k < kParamCount; ++k) {
        const auto v = space_.ord_or_throw(k, x.labels[k]);
        ++per_text[k][v];
        ++global_[k][v];
      }
    }
  }

  [[nodiscard]] std::string name() const { return "rule_lookup"; }

  [[nodiscard]] bool seen(std::string_view text) const {
    return table_.contains(normalize_instruction(text));
  }

  [[nodiscard]] Recommendation predict_text(std::string_view text) const {
    const auto it = table_.find(normalize_instruction(text));
    const auto& counts = it == table_.end() ? global_ : it->second;
    Recommendation r;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      r.config[k] = space_[k].values[detail::mode_of(counts[k])];
      r.confidences[k] = detail::frequencies(counts[k]);
    }
    return r;
  }

  [[nodiscard]] Recommendation predict(const Instance& x) const { return predict_text(x.instruction_text); }

  [[nodiscard]] ParameterConfig global_mode() const {
    ParameterConfig c;
    for (std::size_t k = 0; k < kParamCount; ++k) c[k] = space_[k].values[detail::mode_of(global_[k])];
    return c;
  }

 private:
  ParameterSpace space_;
  std::map<std::string, std::array<detail::Counts, kParamCount>> table_;
  std::array<detail::Counts, kParamCount> global_{};
};

enum class KnnSpace { observation, instruction, concatenated };

inline std::string to_string(KnnSpace s) {
  switch (s) {
    case KnnSpace::observation: return "observation";
    case KnnSpace::instruction: return "instruction";
    case KnnSpace::concatenated: return "concatenated";
  }
  return "?";
}

inline KnnSpace knn_space_from_string(const std::string& s) {
  if (s == "observation") return KnnSpace::observation;
  if (s == "instruction") return KnnSpace::instruction;
  if (s == "concatenated" || s == "both") return KnnSpace::concatenated;
  throw Error(ErrorCode::invalid_argument, "unknown KNN space '" + s + "' (observation, instruction, concatenated)");
}

inline KnnSpace knn_space_for(ModalityMode m) {
  switch (m) {
    case ModalityMode::observation_only: return KnnSpace::observation;
    case ModalityMode::instruction_only: return KnnSpace::instruction;
    case ModalityMode::both: return KnnSpace::concatenated;
  }
  return KnnSpace::concatenated;
}

// Cosine-distance KNN with a per-parameter majority vote. Vote ties go to the
// tied label held by the nearest neighbor. Distance ties go to the earlier
// training row.
class KnnBaseline {
 public:
  KnnBaseline(std::span<const Instance> train, const EmbeddingStore& store, std::size_t k = 5,
              KnnSpace space = KnnSpace::concatenated, const ParameterSpace& params = ParameterSpace::standard())
      : store_(&store), k_(k), space_(space), params_(params) {
    require(k >= 1, ErrorCode::invalid_argument, "k must be at least 1");
    require(k <= train.size(), ErrorCode::invalid_argument,
            "k=" + std::to_string(k) + " exceeds the training set size " + std::to_string(train.size()));
    vectors_.reserve(train.size());
    labels_.reserve(train.size());
    for (const auto& x : train) {
      vectors_.push_back(features(x));
      labels_.push_back(ordinals(params_, x.labels));
    }
  }

  [[nodiscard]] std::string name() const { return "knn"; }
  [[nodiscard]] std::size_t k() const noexcept { return k_; }

  // Unit-norm feature vector; each modality is normalized before concatenation.
  [[nodiscard]] std::vector<double> features(const Instance& x) const {
    std::vector<double> v;
    auto append = [&v](const Embedding& e) {
      const auto u = l2_normalized(e.values);
      v.insert(v.end(), u.begin(), u.end());
    };
    if (space_ != KnnSpace::instruction) append(store_->at(x.observation_embedding_id));
    if (space_ != KnnSpace::observation) append(store_->at(x.instruction_embedding_id));
    return l2_normalized(v);
  }

  [[nodiscard]] std::vector<std::size_t> neighbors(std::span<const double> query) const {
    std::vector<std::pair<double, std::size_t>> dist(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
      require(vectors_[i].size() == query.size(), ErrorCode::invalid_argument, "query feature length mismatch");
      dist[i] = {1.0 - dot(std::span<const double>(vectors_[i]), query), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    std::vector<std::size_t> out(k_);
    for (std::size_t j = 0; j < k_; ++j) out[j] = dist[j].second;
    return out;
  }

  [[nodiscard]] Recommendation predict_features(std::span<const double> query) const {
    const auto nn = neighbors(query);
    Recommendation r;
    for (std::size_t p = 0; p < kParamCount; ++p) {
      detail::Counts votes{};
      for (auto i : nn) ++votes[labels_[i][p]];
      const auto top = *std::max_element(votes.begin(), votes.end());
      std::size_t chosen = labels_[nn.front()][p];
      for (auto i : nn) {
        if (votes[labels_[i][p]] == top) {
          chosen = labels_[i][p];
          break;
        }
      }
      r.config[p] = params_[p].values[chosen];
      for (std::size_t v = 0; v < kValuesPerParam; ++v) {
        r.confidences[p][v] = static_cast<double>(votes[v]) / static_cast<double>(k_);
      }
    }
    return r;
  }

  [[nodiscard]] Recommendation predict(const Instance& x) const {
    const auto q = features(x);
    return predict_features(q);
  }

 private:
  const EmbeddingStore* store_;
  std::size_t k_;
  KnnSpace space_;
  ParameterSpace params_;
  std::vector<std::vector<double>> vectors_;
  std::vector<std::array<std::size_t, kParamCount>> labels_;
};

}  // namespace scanhd
