// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "scanhd/model_io.hpp"
#include "scanhd/scanhd.hpp"

using namespace scanhd;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& s) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string pct(double v) { return detail::fixed(100.0 * v, 1); }

std::string pm(const MeanStd& m) { return pct(m.mean) + "±" + pct(m.std); }

const ParameterSpace& space() { return ParameterSpace::standard(); }

const CellSummary& find_cell(const std::vector<CellSummary>& cells, const std::string& cell, const std::string& pred) {
  for (const auto& c : cells) {
    if (c.cell == cell && c.predictor == pred) return c;
  }
  throw Error(ErrorCode::lookup, "no summary for " + cell + "/" + pred);
}

SweepConfig base_sweep(Protocol p, std::size_t jobs) {
  SweepConfig cfg;
  cfg.protocol = p;
  cfg.jobs = jobs;
  return cfg;
}

constexpr std::array<std::uint64_t, 5> kSeeds = {1, 2, 3, 4, 5};

// Every seed gets its own synthetic dataset; runs from all seeds are pooled.
std::vector<SweepRun> seeded_runs(SweepConfig cfg) {
  std::vector<SweepRun> runs;
  for (auto seed : kSeeds) {
    SynthConfig sc;
    sc.seed = seed;
    const auto data = synth_generate(sc, cfg.jobs);
    cfg.seeds = {seed};
    auto res = sweep(data.dataset, data.embeddings, cfg);
    for (auto& r : res.runs) runs.push_back(std::move(r));
  }
  return runs;
}

Outcome hdc_laws() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr std::size_t D = 10000;
  const double target = 1.0 / std::sqrt(3.0);
  double worst_bundle = 0.0, worst_bind = 0.0, bind_sum = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = random_hypervector(D, 3 * s);
    const auto b = random_hypervector(D, 3 * s + 1);
    const auto c = random_hypervector(D, 3 * s + 2);
    if (bind(bind(a, b), b) != a || bind(a, a) != Hypervector::ones(D)) o.fail("unbinding not exact at seed " + std::to_string(s));
    const auto sum = bundle({a, b, c});
    for (const auto* h : {&a, &b, &c}) worst_bundle = std::max(worst_bundle, std::abs(cosine(sum, *h) - target));
    const double d = cosine(bind(a, b), a);
    worst_bind = std::max(worst_bind, std::abs(d));
    bind_sum += d;
    const double ab = cosine(a, b);
    if (ab != cosine(b, a) || ab < -1.0 || ab > 1.0) o.fail("cosine symmetry/bounds");
    if (cosine(a, a) != 1.0 || cosine(a, -a) != -1.0) o.fail("cosine self/negation");
  }
  const double mean_bind = bind_sum / 100.0;
  const double secs = seconds_since(t0);
  if (worst_bundle > 0.03) o.fail("bundle deviation " + detail::fixed(worst_bundle, 4));
  if (worst_bind >= 0.1) o.fail("bind |delta| " + detail::fixed(worst_bind, 4));
  if (std::abs(mean_bind) >= 0.01) o.fail("bind mean " + detail::fixed(mean_bind, 4));
  if (secs >= 30.0) o.fail("runtime " + detail::fixed(secs, 1) + "s");
  o.note("max|bundle-1/sqrt3|=" + detail::fixed(worst_bundle, 4) + " max|bind|=" + detail::fixed(worst_bind, 4) +
         " mean bind=" + detail::fixed(mean_bind, 5) + " " + detail::fixed(secs, 1) + "s");
  return o;
}

ParameterConfig config_of(std::size_t ordinal) {
  ParameterConfig c;
  for (std::size_t k = 0; k < kParamCount; ++k) c[k] = space()[k].values[ordinal];
  return c;
}

std::vector<double> as_double(const Hypervector& h) { return {h.values().begin(), h.values().end()}; }

Outcome update_rules() {
  Outcome o;
  FusionConfig f;
  f.hyper_dim = 2000;

  // Zero-initialized memory, unit rate, one sample.
  const auto h = random_hypervector(f.hyper_dim, 5);
  TrainingConfig unit;
  unit.eta = 1.0;
  const std::vector<LabeledHypervector> one = {{h, config_of(1)}};
  const auto copied = train_single_pass(ScanModel(f), one, unit);
  for (std::size_t k = 0; k < kParamCount; ++k) {
    if (copied.memory(k).prototype(1) != as_double(h)) o.fail("prototype != sample for " + space()[k].name);
  }

  // A misclassified sample pulls its true prototype closer and pushes the winner away.
  ScanModel model(f);
  std::array<Hypervector, 3> protos = {random_hypervector(f.hyper_dim, 10), random_hypervector(f.hyper_dim, 11),
                                       random_hypervector(f.hyper_dim, 12)};
  for (std::size_t k = 0; k < kParamCount; ++k) {
    for (std::size_t v = 0; v < 3; ++v) model.memory(k).set_prototype(v, as_double(protos[v]));
  }
  Rng rng(2, "acceptance/flip");
  std::vector<std::int8_t> flipped(protos[0].values().begin(), protos[0].values().end());
  for (auto& x : flipped) {
    if (rng.uniform() < 0.3) x = static_cast<std::int8_t>(-x);
  }
  const Hypervector q(std::move(flipped));
  TrainingConfig once;
  once.refine_epochs = 1;
  const std::vector<LabeledHypervector> wrong = {{q, config_of(1)}};
  const auto refined = refine(model, wrong, once).model;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto before = model.memory(k).similarities(q);
    const auto after = refined.memory(k).similarities(q);
    if (argmax(before) != 0) o.fail("setup: sample not misclassified");
    if (!(after[1] > before[1])) o.fail("true prototype did not move closer for " + space()[k].name);
    if (!(after[0] < before[0])) o.fail("wrong prototype did not move away for " + space()[k].name);
  }

  // An epoch without errors is a no-op.
  ScanModel clean(f);
  std::vector<LabeledHypervector> samples;
  for (std::size_t v = 0; v < 3; ++v) {
    samples.push_back({protos[v], config_of(v)});
    for (std::size_t k = 0; k < kParamCount; ++k) clean.memory(k).set_prototype(v, as_double(protos[v]));
  }
  const auto same = refine(clean, samples, TrainingConfig{});
  if (!same.model.same_memories(clean)) o.fail("error-free epoch changed the model");
  if (model_to_json(same.model)["memories"].dump() != model_to_json(clean)["memories"].dump()) {
    o.fail("error-free epoch changed serialized memories");
  }
  o.note("copy, refine direction and no-op epoch hold on all " + std::to_string(kParamCount) + " parameters");
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto runs = seeded_runs(base_sweep(Protocol::single, 1));
  const double secs = seconds_since(t0);
  const auto cells = summarize(runs);
  const auto& hd = find_cell(cells, cells.front().cell, "scanhd");
  const auto& knn = find_cell(cells, cells.front().cell, "knn");
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto& name = space()[k].name;
    if (hd.exact[k].mean < 0.95) o.fail(name + " exact " + pct(hd.exact[k].mean) + " < 95");
    if (hd.exact[k].mean < knn.exact[k].mean - 0.05) {
      o.fail(name + " exact " + pct(hd.exact[k].mean) + " vs knn " + pct(knn.exact[k].mean));
    }
  }
  for (const auto& r : runs) {
    if (r.predictor != "scanhd") continue;
    double lowest = 1.0;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const auto& m = r.report.params[k];
      lowest = std::min(lowest, m.exact);
      if (m.win1 && *m.win1 < m.exact) o.fail("win@1 < exact for " + m.parameter + " seed " + std::to_string(r.seed));
    }
    if (r.report.system_exact > lowest) o.fail("system exact above a per-parameter exact, seed " + std::to_string(r.seed));
  }
  if (secs >= 300.0) o.fail("runtime " + detail::fixed(secs, 1) + "s");
  std::string line = "exact";
  for (std::size_t k = 0; k < kParamCount; ++k) line += " " + space()[k].name + "=" + pm(hd.exact[k]);
  line += " (knn avg " + pm(knn.average_exact) + ") " + detail::fixed(secs, 1) + "s on one thread";
  o.note(line);
  return o;
}

Outcome cross_split(std::size_t jobs) {
  Outcome o;
  const auto cells = summarize(seeded_runs(base_sweep(Protocol::cross_splits, jobs)));
  std::string line;
  for (const auto& split : {"lighting:dark", "position:2", "rotation:2"}) {
    const std::string cell = std::string("split=") + split;
    const auto& hd = find_cell(cells, cell, "scanhd");
    const auto& knn = find_cell(cells, cell, "knn");
    double worst = 1.0;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const double gap = hd.exact[k].mean - knn.exact[k].mean;
      worst = std::min(worst, gap);
      if (gap < -0.05) {
        o.fail(std::string(split) + " " + space()[k].name + " " + pct(hd.exact[k].mean) + " vs knn " +
               pct(knn.exact[k].mean));
      }
    }
    line += (line.empty() ? "" : " ") + std::string(split) + " avg " + pm(hd.average_exact) + " (knn " +
            pm(knn.average_exact) + ", worst gap " + detail::fixed(100.0 * worst, 1) + ")";
  }
  o.note(line);
  return o;
}

Outcome ablation(std::size_t jobs) {
  Outcome o;
  auto cfg = base_sweep(Protocol::ablations, jobs);
  cfg.knn = false;
  const auto cells = summarize(seeded_runs(cfg));
  const auto& obs = find_cell(cells, "modality=observation", "scanhd");
  const auto& ins = find_cell(cells, "modality=instruction", "scanhd");
  const auto& both = find_cell(cells, "modality=both", "scanhd");
  auto ge = [&](const CellSummary& a, const CellSummary& b, std::size_t k, const char* an, const char* bn) {
    if (a.exact[k].mean < b.exact[k].mean) {
      o.fail(space()[k].name + " " + an + " " + pct(a.exact[k].mean) + " < " + bn + " " + pct(b.exact[k].mean));
    }
  };
  for (auto k : {kSamplingFrequency, kMeasurementRangeX}) {
    ge(both, ins, k, "both", "instruction");
    ge(ins, obs, k, "instruction", "observation");
  }
  for (auto k : {kExposureTime, kCmosDynamicRange}) ge(both, ins, k, "both", "instruction");
  std::string line;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    line += (k ? " " : "") + space()[k].name + " o/i/b=" + pct(obs.exact[k].mean) + "/" + pct(ins.exact[k].mean) +
            "/" + pct(both.exact[k].mean);
  }
  o.note(line);
  return o;
}

Outcome data_efficiency(std::size_t jobs) {
  Outcome o;
  auto cfg = base_sweep(Protocol::fractions, jobs);
  cfg.knn = false;
  const auto cells = summarize(seeded_runs(cfg));
  std::string line;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    std::vector<double> xs, ys;
    for (double f : cfg.fractions) {
      xs.push_back(f);
      ys.push_back(find_cell(cells, "fraction=" + detail::fraction_label(f), "scanhd").exact[k].mean);
    }
    const auto rho = spearman(xs, ys);
    std::string series;
    for (double y : ys) series += (series.empty() ? "" : ",") + pct(y);
    if (rho) {
      if (*rho < 0.8) o.fail(space()[k].name + " rho " + detail::fixed(*rho, 2) + " [" + series + "]");
      line += (k ? " " : "") + space()[k].name + " rho=" + detail::fixed(*rho, 2);
    } else {
      // A flat curve has no rank order; it is counted as trend-consistent.
      line += (k ? " " : "") + space()[k].name + " flat[" + series + "]";
    }
  }
  o.note(line);
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, "acceptance/records");
    const std::size_t n = 30 + rng.below(70);
    std::vector<PredictionRecord> rs;
    std::array<std::array<std::array<std::size_t, 3>, 3>, kParamCount> cm{};
    for (std::size_t i = 0; i < n; ++i) {
      PredictionRecord r;
      r.instance_id = "r" + std::to_string(i);
      for (std::size_t k = 0; k < kParamCount; ++k) {
        const auto t = rng.below(3);
        const auto p = rng.below(2) == 0 ? t : rng.below(3);
        r.params[k] = {space()[k].values[t], space()[k].values[p], std::nullopt};
        ++cm[k][t][p];
      }
      rs.push_back(std::move(r));
    }
    const auto rep = report_from_records(rs);
    for (std::size_t k = 0; k < kParamCount; ++k) {
      std::size_t diag = 0, near = 0;
      for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t p = 0; p < 3; ++p) {
          if (t == p) diag += cm[k][t][p];
          if ((t > p ? t - p : p - t) <= 1) near += cm[k][t][p];
        }
      }
      double f1 = 0.0;
      int classes = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < 3; ++j) {
          row += cm[k][c][j];
          col += cm[k][j][c];
        }
        if (row + col == 0) continue;
        ++classes;
        const double tp = static_cast<double>(cm[k][c][c]);
        if (tp == 0.0) continue;
        const double precision = tp / static_cast<double>(col);
        const double recall = tp / static_cast<double>(row);
        f1 += 2.0 * precision * recall / (precision + recall);
      }
      f1 /= classes;
      const auto& m = rep.params[k];
      const std::string at = space()[k].name + " seed " + std::to_string(seed);
      if (m.exact != static_cast<double>(diag) / static_cast<double>(n)) o.fail("exact mismatch " + at);
      if (space()[k].win1_eligible) {
        if (!m.win1 || *m.win1 != static_cast<double>(near) / static_cast<double>(n)) o.fail("win@1 mismatch " + at);
      } else if (m.win1) {
        o.fail("win@1 reported for " + at);
      }
      if (std::abs(m.macro_f1 - f1) > 1e-12) o.fail("macro-F1 mismatch " + at);
    }
  }
  o.note("20 random sets, exact and win@1 bitwise equal, macro-F1 within 1e-12, range win@1 n/a");
  return o;
}

Outcome rule_lookup() {
  Outcome o;
  SynthConfig sc;
  sc.noise_sigma = 0.0;
  const auto data = synth_generate(sc);
  // Fixed lighting makes every text map to one configuration.
  std::vector<Instance> lit;
  for (const auto& x : data.dataset.instances()) {
    if (x.condition.lighting == Lighting::full) lit.push_back(x);
  }
  const auto parts = split(Dataset(lit), SplitSpec::parse("row_random:0.8"), 1);
  std::map<std::string, std::set<ParameterConfig>> seen;
  for (const auto& x : parts.train) seen[normalize_instruction(x.instruction_text)].insert(x.labels);
  for (const auto& x : parts.test) {
    const auto it = seen.find(normalize_instruction(x.instruction_text));
    if (it == seen.end() || it->second.size() != 1) {
      o.fail("premise broken for " + x.id);
      return o;
    }
  }
  const RuleLookupBaseline rule(parts.train);
  const auto rep = evaluate(rule, parts.test, parts.descriptor);
  for (const auto& m : rep.params) {
    if (m.exact != 1.0) o.fail(m.parameter + " exact " + pct(m.exact));
  }
  const auto fallback = rule.predict_text("Describe the weather on Mars.");
  if (fallback.config != rule.global_mode()) o.fail("unseen text did not get the global mode");
  std::string mode;
  for (std::size_t k = 0; k < kParamCount; ++k) mode += (k ? "," : "") + rule.global_mode()[k];
  o.note(std::to_string(rep.count) + " test rows all exact; unseen text -> (" + mode + ")");
  return o;
}

Outcome flywheel_soundness(std::size_t jobs) {
  Outcome o;
  SynthConfig sc;
  const auto specs = synth_key_specs(sc);
  const auto gen = CorruptingGenerator::exact(specs, 0.1, 3);
  const AgentSet agents{gen, rule_checker(), field_repair_refiner()};
  const auto res = run_flywheel(specs, agents, {3, jobs});

  if (res.canon + res.initial_fail != res.generated) o.fail("round 0 partition does not cover the pool");
  for (const auto& r : res.rounds) {
    if (r.passed + r.failed != r.refined) o.fail("round " + std::to_string(r.round) + " partition does not cover");
  }
  std::multiset<std::string> ids;
  for (const auto& c : res.accepted) ids.insert(c.instance.id);
  for (const auto& c : res.residual_fail) ids.insert(c.instance.id);
  if (ids.size() != res.generated || std::set<std::string>(ids.begin(), ids.end()).size() != res.generated) {
    o.fail("accepted and residual sets overlap or miss candidates");
  }

  std::map<GroupKey, std::vector<const Candidate*>> groups;
  for (const auto& c : res.accepted) groups[GroupKey::of(c.instance)].push_back(&c);
  std::size_t rechecked = 0, passed = 0;
  for (const auto& [key, group] : groups) {
    Siblings sib;
    for (const auto* c : group) sib.push_back(&c->instance);
    for (const auto* c : group) {
      ++rechecked;
      passed += check_consistency(*c, sib).pass ? 1 : 0;
    }
  }
  if (passed != rechecked) o.fail(std::to_string(rechecked - passed) + " distilled rows fail a re-check");
  if (rechecked != res.distilled.size()) o.fail("re-check count differs from distilled size");

  const auto clean = synth_generate(sc).dataset;
  std::size_t slot_ok = 0;
  for (const auto& x : res.distilled.instances()) {
    const auto* ref = clean.find(x.id);
    slot_ok += ref && ref->slot == x.slot ? 1 : 0;
  }
  if (slot_ok != res.distilled.size()) o.fail("slot changed on " + std::to_string(res.distilled.size() - slot_ok) + " rows");
  o.note("generated " + std::to_string(res.generated) + ", initial fail " + std::to_string(res.initial_fail) + ", " +
         std::to_string(res.rounds.size()) + " round(s), re-check " + std::to_string(passed) + "/" +
         std::to_string(rechecked) + ", residual " + std::to_string(res.residual_fail.size()));
  return o;
}

struct Trained {
  FusionConfig fusion;
  ScanModel model;
};

Trained train_default(const SynthData& data, const std::string& split_spec, std::uint64_t seed, std::size_t jobs) {
  FusionConfig f;
  const EncoderSet enc(f);
  const auto encoded = encode_rows(data.dataset.instances(), f, enc, data.embeddings, jobs);
  const auto parts = split(data.dataset, SplitSpec::parse(split_spec), seed);
  TrainingConfig tc;
  tc.shuffle_seed = seed;
  return {f, train_on(parts.train, encoded, f, tc).model};
}

Outcome latency(const SynthData& data, std::size_t jobs) {
  Outcome o;
  const auto trained = train_default(data, "row_random:0.8", 1, jobs);
  std::vector<QueryPair> qs;
  for (const auto& x : data.dataset.instances()) {
    qs.push_back({&data.embeddings.at(x.observation_embedding_id), &data.embeddings.at(x.instruction_embedding_id)});
  }
  const auto st = latency_probe(trained.model, qs, 1000, 50);
  if (st.p50_us >= 1000.0) o.fail("p50 " + detail::fixed(st.p50_us, 1) + "us");
  o.note("D_h=" + std::to_string(trained.model.hyper_dim()) + " p50=" + detail::fixed(st.p50_us, 1) +
         "us p90=" + detail::fixed(st.p90_us, 1) + "us p99=" + detail::fixed(st.p99_us, 1) + "us");
  return o;
}

std::string dataset_bytes(const SynthData& d) {
  std::ostringstream a, b;
  d.dataset.write(a);
  d.embeddings.write(b);
  return a.str() + b.str();
}

Outcome determinism(std::size_t jobs) {
  Outcome o;
  jobs = std::max<std::size_t>(jobs, 2);
  SynthConfig sc;
  const auto a = synth_generate(sc, 1);
  const auto b = synth_generate(sc, jobs);
  if (dataset_bytes(a) != dataset_bytes(b)) o.fail("dataset bytes differ");

  const auto ma = train_default(a, "row_random:0.8", 4, 1);
  const auto mb = train_default(b, "row_random:0.8", 4, jobs);
  const auto sa = model_to_string(ma.model);
  if (sa != model_to_string(mb.model)) o.fail("model bytes differ");
  if (model_to_string(load_model_from_string(sa)) != sa) o.fail("model save/load/save differs");

  const auto parts = split(a.dataset, SplitSpec::parse("row_random:0.8"), 4);
  const auto ra = evaluate(ModelPredictor(ma.model, a.embeddings), parts.test, parts.descriptor);
  const auto rb = evaluate(ModelPredictor(mb.model, b.embeddings), parts.test, parts.descriptor);
  if (to_json(ra).dump() != to_json(rb).dump()) o.fail("report bytes differ");

  SynthConfig small;
  small.objects = 6;
  small.keys_per_object = 2;
  const auto sd = synth_generate(small);
  auto cfg = base_sweep(Protocol::single, 1);
  cfg.seeds = {1, 2, 3};
  cfg.fusion.hyper_dim = 4000;
  const auto s1 = to_json(sweep(sd.dataset, sd.embeddings, cfg)).dump();
  cfg.jobs = jobs;
  if (s1 != to_json(sweep(sd.dataset, sd.embeddings, cfg)).dump()) o.fail("sweep bytes depend on job count");
  o.note("dataset, embeddings, model, report and sweep bytes identical across reruns (1 vs " + std::to_string(jobs) +
         " jobs)");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scanhd acceptance run"};
  std::size_t jobs = std::max(1U, std::thread::hardware_concurrency());
  app.add_option("--jobs", jobs, "worker threads for the sweeps")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::cout << "synthetic benchmark: 16 objects x 4 keys, sigma 0.1, data seed = run seed 1..5" << std::endl;
  const auto data = synth_generate(SynthConfig{}, jobs);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"hdc-algebra-laws", hdc_laws},
      {"update-rule-algebra", update_rules},
      {"synthetic-end-to-end", end_to_end},
      {"cross-split-robustness", [&] { return cross_split(jobs); }},
      {"ablation-ordering", [&] { return ablation(jobs); }},
      {"data-efficiency-trend", [&] { return data_efficiency(jobs); }},
      {"metric-oracles", metric_oracle},
      {"rule-lookup-baseline", rule_lookup},
      {"flywheel-soundness", [&] { return flywheel_soundness(jobs); }},
      {"latency", [&] { return latency(data, jobs); }},
      {"determinism", [&] { return determinism(jobs); }},
  };

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("error: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1 < 10 ? " " : "") << i + 1 << " " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
