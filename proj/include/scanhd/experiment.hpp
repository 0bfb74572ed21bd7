#pragma once

// Train/evaluate pipelines and the sweep protocols: data fractions, modality
// ablations, and cross-condition splits. Reports are merged by cell key so
// results do not depend on the job count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scanhd/baselines.hpp"
#include "scanhd/dataset.hpp"
#include "scanhd/memory.hpp"
#include "scanhd/metrics.hpp"

namespace scanhd {

struct EncodedDataset {
  std::vector<Hypervector> hvs;  // parallel to the encoded rows
  std::map<std::string, const Hypervector*> by_id;
};

inline EncodedDataset encode_rows(std::span<const Instance> rows, const FusionConfig& fusion,
                                  const EncoderSet& encoders, const EmbeddingStore& store, std::size_t jobs = 1) {
  auto encoded = batch_encode(rows, fusion, encoders, store, jobs);
  EncodedDataset out;
  out.hvs.reserve(encoded.size());
  for (auto& e : encoded) out.hvs.push_back(std::move(e.hv));
  for (std::size_t i = 0; i < rows.size(); ++i) out.by_id.emplace(rows[i].id, &out.hvs[i]);
  return out;
}

enum class Algorithm { adaptive, naive };

inline std::string to_string(Algorithm a) { return a == Algorithm::adaptive ? "adaptive" : "naive"; }

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "adaptive") return Algorithm::adaptive;
  if (s == "naive") return Algorithm::naive;
  throw Error(ErrorCode::invalid_argument, "unknown training algorithm '" + s + "' (adaptive, naive)");
}

inline RefineResult train_on(std::span<const Instance> train, const EncodedDataset& encoded, const FusionConfig& fusion,
                             const TrainingConfig& cfg, Algorithm algorithm = Algorithm::adaptive) {
  require(!train.empty(), ErrorCode::empty_input, "training set is empty");
  std::vector<LabeledHypervector> samples;
  samples.reserve(train.size());
  for (const auto& x : train) {
    const auto it = encoded.by_id.find(x.id);
    require(it != encoded.by_id.end(), ErrorCode::lookup, "no encoded hypervector for instance '" + x.id + "'");
    samples.push_back({*it->second, x.labels});
  }
  ScanModel model(fusion, ParameterSpace::standard());
  auto result = algorithm == Algorithm::adaptive ? train_adaptive(std::move(model), samples, cfg)
                                                 : train_naive(std::move(model), samples, cfg);
  result.model.meta().data_fingerprint = hex64(fingerprint(train));
  return result;
}

// Classes with an all-zero prototype after training, as "parameter=value".
inline std::vector<std::string> untrained_classes(const ScanModel& model) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    for (std::size_t v = 0; v < kValuesPerParam; ++v) {
      if (model.memory(k).squared_norm(v) <= 0.0) out.push_back(model.space()[k].name + "=" + model.space()[k].values[v]);
    }
  }
  return out;
}

// Label values that occur in `full` but not in `subset`.
inline std::vector<std::string> missing_classes(std::span<const Instance> full, std::span<const Instance> subset) {
  const auto& space = ParameterSpace::standard();
  std::array<std::array<bool, kValuesPerParam>, kParamCount> in_full{}, in_sub{};
  for (const auto& x : full) {
    for (std::size_t k = 0; k < kParamCount; ++k) in_full[k][space.ord_or_throw(k, x.labels[k])] = true;
  }
  for (const auto& x : subset) {
    for (std::size_t k = 0; k < kParamCount; ++k) in_sub[k][space.ord_or_throw(k, x.labels[k])] = true;
  }
  std::vector<std::string> out;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    for (std::size_t v = 0; v < kValuesPerParam; ++v) {
      if (in_full[k][v] && !in_sub[k][v]) out.push_back(space[k].name + "=" + space[k].values[v]);
    }
  }
  return out;
}

inline std::string joint_label_key(const Instance& x) {
  std::string key;
  for (const auto& v : x.labels.values) {
    key += v;
    key += '|';
  }
  return key;
}

// Keeps max(1, round(fraction * n)) rows of every joint-label group, chosen by
// a seeded shuffle; the result preserves input order.
inline std::vector<Instance> stratified_fraction(std::span<const Instance> rows, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::invalid_argument, "fraction must lie in (0, 1]");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[joint_label_key(rows[i])].push_back(i);
  std::vector<std::size_t> keep;
  std::uint64_t g = 0;
  for (auto& [key, idx] : groups) {
    Rng rng(seed, "fraction/" + key, g++);
    rng.shuffle(idx);
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size()))));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, idx.size())));
  }
  std::sort(keep.begin(), keep.end());
  std::vector<Instance> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(rows[i]);
  return out;
}

// ---- statistics ----

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation with average ranks for ties; nullopt when either
// series is constant.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::invalid_argument, "spearman needs equal-length series");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const auto mx = mean_std(rx).mean;
  const auto my = mean_std(ry).mean;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// ---- sweeps ----

enum class Protocol { single, fractions, ablations, cross_splits };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::single: return "single";
    case Protocol::fractions: return "fractions";
    case Protocol::ablations: return "ablations";
    case Protocol::cross_splits: return "cross_splits";
  }
  return "?";
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "single") return Protocol::single;
  if (s == "fractions") return Protocol::fractions;
  if (s == "ablations") return Protocol::ablations;
  if (s == "cross_splits") return Protocol::cross_splits;
  throw Error(ErrorCode::invalid_argument,
              "unknown protocol '" + s + "' (single, fractions, ablations, cross_splits)");
}

struct SweepConfig {
  Protocol protocol = Protocol::single;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> fractions = {0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> cross_splits = {"lighting:dark", "position:2", "rotation:2"};
  std::string base_split = "row_random:0.8";
  FusionConfig fusion;
  TrainingConfig training;
  Algorithm algorithm = Algorithm::adaptive;
  bool knn = true;
  std::size_t knn_k = 5;
  std::size_t jobs = 1;
};

struct SweepRun {
  std::string cell;  // e.g. "fraction=0.2", "modality=both", "split=lighting:dark"
  std::string predictor;
  std::uint64_t seed = 0;
  bool degenerate = false;
  EvalReport report;
};

struct SweepResult {
  Protocol protocol = Protocol::single;
  std::vector<SweepRun> runs;  // ordered by (cell, seed, predictor)
};

namespace detail {

inline std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", f);
  return buf;
}

struct CellPlan {
  std::string cell;
  SplitSpec split;
  std::optional<double> fraction;
  ModalityMode modality = ModalityMode::both;
};

inline std::vector<CellPlan> plan_cells(const SweepConfig& cfg) {
  std::vector<CellPlan> cells;
  const auto base = SplitSpec::parse(cfg.base_split);
  switch (cfg.protocol) {
    case Protocol::single:
      cells.push_back({"split=" + base.str(), base, std::nullopt, cfg.fusion.modalities});
      break;
    case Protocol::fractions:
      for (double f : cfg.fractions) {
        require(f > 0.0 && f <= 1.0, ErrorCode::invalid_argument, "fractions must lie in (0, 1]");
        cells.push_back({"fraction=" + fraction_label(f), base, f, cfg.fusion.modalities});
      }
      break;
    case Protocol::ablations:
      for (auto m : {ModalityMode::observation_only, ModalityMode::instruction_only, ModalityMode::both}) {
        cells.push_back({"modality=" + to_string(m), base, std::nullopt, m});
      }
      break;
    case Protocol::cross_splits:
      for (const auto& s : cfg.cross_splits) {
        const auto spec = SplitSpec::parse(s);
        cells.push_back({"split=" + spec.str(), spec, std::nullopt, cfg.fusion.modalities});
      }
      break;
  }
  return cells;
}

}  // namespace detail

inline SweepResult sweep(const Dataset& data, const EmbeddingStore& store, const SweepConfig& cfg) {
  require(!cfg.seeds.empty(), ErrorCode::invalid_argument, "sweep needs at least one seed");
  cfg.training.validate();
  const auto cells = detail::plan_cells(cfg);

  // One encoding per modality mode, shared by every cell and seed.
  std::map<ModalityMode, std::pair<FusionConfig, EncodedDataset>> encodings;
  for (const auto& c : cells) {
    if (encodings.contains(c.modality)) continue;
    FusionConfig f = cfg.fusion;
    f.modalities = c.modality;
    const EncoderSet encoders(f);
    encodings.emplace(c.modality, std::make_pair(f, encode_rows(data.instances(), f, encoders, store, cfg.jobs)));
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto s : cfg.seeds) jobs.push_back({c, s});
  }
  std::vector<std::vector<SweepRun>> outputs(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    const auto& plan = cells[jobs[j].cell];
    const auto seed = jobs[j].seed;
    const auto& [fusion, encoded] = encodings.at(plan.modality);
    auto parts = split(data, plan.split, seed);
    std::vector<std::string> warnings;
    bool degenerate = false;
    if (plan.fraction) {
      auto subset = stratified_fraction(parts.train, *plan.fraction, seed);
      for (const auto& m : missing_classes(parts.train, subset)) {
        warnings.push_back("class " + m + " absent from the fraction sample");
        degenerate = true;
      }
      parts.train = std::move(subset);
    }
    TrainingConfig tc = cfg.training;
    tc.shuffle_seed = seed;
    auto trained = train_on(parts.train, encoded, fusion, tc, cfg.algorithm);
    const auto test_classes = missing_classes(parts.test, std::span<const Instance>());
    for (const auto& m : untrained_classes(trained.model)) {
      if (std::find(test_classes.begin(), test_classes.end(), m) == test_classes.end()) continue;
      warnings.push_back("test class " + m + " has no training signal and is never predicted");
      degenerate = true;
    }
    const EncodedPredictor hd(trained.model, encoded.by_id);
    const std::string descriptor = parts.descriptor + (plan.fraction ? " fraction=" + detail::fraction_label(*plan.fraction) : "");
    auto rep = evaluate(hd, parts.test, descriptor);
    rep.warnings = warnings;
    outputs[j].push_back({plan.cell, rep.predictor, seed, degenerate, std::move(rep)});
    if (cfg.knn && cfg.knn_k <= parts.train.size()) {
      const KnnBaseline knn(parts.train, store, cfg.knn_k, knn_space_for(plan.modality));
      auto krep = evaluate(knn, parts.test, descriptor);
      outputs[j].push_back({plan.cell, krep.predictor, seed, false, std::move(krep)});
    }
  });

  SweepResult result;
  result.protocol = cfg.protocol;
  for (auto& o : outputs) {
    for (auto& r : o) result.runs.push_back(std::move(r));
  }
  return result;
}

struct CellSummary {
  std::string cell;
  std::string predictor;
  std::size_t runs = 0;
  bool degenerate = false;
  std::array<MeanStd, kParamCount> exact{};
  std::array<std::optional<MeanStd>, kParamCount> win1{};
  std::array<MeanStd, kParamCount> macro_f1{};
  MeanStd average_exact;
  MeanStd system_exact;
  MeanStd system_win1_range_exact;
};

// Mean and sample std per (cell, predictor), in first-appearance order.
inline std::vector<CellSummary> summarize(std::span<const SweepRun> runs) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const SweepRun*>> groups;
  for (const auto& r : runs) {
    const auto key = std::make_pair(r.cell, r.predictor);
    if (!groups.contains(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    CellSummary s;
    s.cell = key.first;
    s.predictor = key.second;
    s.runs = g.size();
    auto collect = [&](auto getter) {
      std::vector<double> xs;
      for (const auto* r : g) xs.push_back(getter(*r));
      return mean_std(xs);
    };
    for (const auto* r : g) s.degenerate = s.degenerate || r->degenerate;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      s.exact[k] = collect([k](const SweepRun& r) { return r.report.params[k].exact; });
      s.macro_f1[k] = collect([k](const SweepRun& r) { return r.report.params[k].macro_f1; });
      if (g.front()->report.params[k].win1) {
        s.win1[k] = collect([k](const SweepRun& r) { return r.report.params[k].win1.value_or(0.0); });
      }
    }
    s.average_exact = collect([](const SweepRun& r) { return r.report.average_exact; });
    s.system_exact = collect([](const SweepRun& r) { return r.report.system_exact; });
    s.system_win1_range_exact = collect([](const SweepRun& r) { return r.report.system_win1_range_exact; });
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::ordered_json to_json(const CellSummary& s, const ParameterSpace& space = ParameterSpace::standard()) {
  using nlohmann::ordered_json;
  ordered_json params = ordered_json::array();
  for (std::size_t k = 0; k < kParamCount; ++k) {
    params.push_back({{"parameter", space[k].name},
                      {"exact", to_json(s.exact[k])},
                      {"win1", s.win1[k] ? to_json(*s.win1[k]) : ordered_json("N/A")},
                      {"macro_f1", to_json(s.macro_f1[k])}});
  }
  return {{"cell", s.cell},
          {"predictor", s.predictor},
          {"runs", s.runs},
          {"degenerate", s.degenerate},
          {"parameters", params},
          {"average_exact", to_json(s.average_exact)},
          {"system", {{"all_exact", to_json(s.system_exact)},
                      {"all_win1_range_exact", to_json(s.system_win1_range_exact)}}}};
}

inline nlohmann::ordered_json to_json(const SweepResult& r) {
  using nlohmann::ordered_json;
  ordered_json runs = ordered_json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"cell", run.cell},
                    {"predictor", run.predictor},
                    {"seed", run.seed},
                    {"degenerate", run.degenerate},
                    {"report", to_json(run.report)}});
  }
  ordered_json summary = ordered_json::array();
  for (const auto& s : summarize(r.runs)) summary.push_back(to_json(s));
  return {{"protocol", to_string(r.protocol)}, {"runs", runs}, {"summary", summary}};
}

inline void render_summary(std::ostream& out, std::span<const CellSummary> cells,
                           const ParameterSpace& space = ParameterSpace::standard()) {
  auto pm = [](const MeanStd& m) { return detail::fixed(100.0 * m.mean, 1) + "±" + detail::fixed(100.0 * m.std, 1); };
  for (const auto& s : cells) {
    out << s.cell << "  " << s.predictor << "  (" << s.runs << " runs" << (s.degenerate ? ", degenerate" : "")
        << ")\n";
    for (std::size_t k = 0; k < kParamCount; ++k) {
      out << "  " << std::left << std::setw(24) << space[k].name << std::right << " exact " << std::setw(11)
          << pm(s.exact[k]) << "  win1 " << std::setw(11) << (s.win1[k] ? pm(*s.win1[k]) : "N/A") << "  f1 "
          << std::setw(11) << pm(s.macro_f1[k]) << '\n';
    }
    out << "  average exact " << pm(s.average_exact) << ", system all-exact " << pm(s.system_exact) << '\n';
  }
}

// ---- latency ----

struct LatencyStats {
  std::size_t n = 0;
  double p50_us = 0.0;
  double p90_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
};

struct QueryPair {
  const Embedding* observation = nullptr;
  const Embedding* instruction = nullptr;
};

// Nearest-rank percentile of sorted samples.
inline double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

// Times recommend() over n queries cycling through `queries`, after `warmup`
// untimed calls. Embeddings are prepared by the caller.
inline LatencyStats latency_probe(const ScanModel& model, std::span<const QueryPair> queries, std::size_t n,
                                  std::size_t warmup = 20, PredictPolicy policy = PredictPolicy::skip_untrained) {
  LatencyStats st;
  if (n == 0) return st;
  require(!queries.empty(), ErrorCode::empty_input, "latency probe needs at least one query");
  using clock = std::chrono::steady_clock;
  std::size_t sink = 0;
  for (std::size_t i = 0; i < warmup; ++i) {
    const auto& q = queries[i % queries.size()];
    sink += recommend(model, q.observation, q.instruction, policy).config[0].size();
  }
  std::vector<double> us(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = queries[i % queries.size()];
    const auto t0 = clock::now();
    const auto r = recommend(model, q.observation, q.instruction, policy);
    const auto t1 = clock::now();
    sink += r.config[0].size();
    us[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  if (sink == 0) us.push_back(0.0);  // keeps the calls observable
  us.resize(n);
  st.n = n;
  st.mean_us = mean_std(us).mean;
  std::sort(us.begin(), us.end());
  st.min_us = us.front();
  st.max_us = us.back();
  st.p50_us = percentile(us, 0.50);
  st.p90_us = percentile(us, 0.90);
  st.p99_us = percentile(us, 0.99);
  return st;
}

inline nlohmann::ordered_json to_json(const LatencyStats& s) {
  return {{"n", s.n},           {"p50_us", s.p50_us}, {"p90_us", s.p90_us}, {"p99_us", s.p99_us},
          {"mean_us", s.mean_us}, {"min_us", s.min_us}, {"max_us", s.max_us}};
}

}  // namespace scanhd
