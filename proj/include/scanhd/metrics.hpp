#pragma once

// Per-parameter and system-level metrics over prediction records.

#include <algorithm>
#include <array>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scanhd/dataset.hpp"
#include "scanhd/memory.hpp"
#include "scanhd/parameter_space.hpp"

namespace scanhd {

struct ParamOutcome {
  std::string truth;
  std::string prediction;
  std::optional<Scores> scores;
};

struct PredictionRecord {
  std::string instance_id;
  std::array<ParamOutcome, kParamCount> params;
};

inline int exact(const ParameterSpace& space, std::size_t k, std::string_view y, std::string_view y_hat) {
  const auto a = space.ord(k, y);
  const auto b = space.ord(k, y_hat);
  require(a && b, ErrorCode::invalid_argument,
          "value outside the " + space[k].name + " vocabulary " + space.vocabulary_string(k) + ": '" +
              std::string(a ? y_hat : y) + "'");
  return *a == *b ? 1 : 0;
}

// nullopt for parameters that are not Win@1 eligible.
inline std::optional<int> win_at_1(const ParameterSpace& space, std::size_t k, std::string_view y,
                                   std::string_view y_hat) {
  const auto a = space.ord(k, y);
  const auto b = space.ord(k, y_hat);
  require(a && b, ErrorCode::invalid_argument,
          "value outside the " + space[k].name + " vocabulary " + space.vocabulary_string(k) + ": '" +
              std::string(a ? y_hat : y) + "'");
  if (!space[k].win1_eligible) return std::nullopt;
  const auto gap = *a > *b ? *a - *b : *b - *a;
  return gap <= 1 ? 1 : 0;
}

// Unweighted mean of per-class F1 = 2TP / (2TP + FP + FN). Classes absent
// from both truth and prediction are left out of the mean.
inline double macro_f1(std::span<const PredictionRecord> records, std::size_t k,
                       const ParameterSpace& space = ParameterSpace::standard()) {
  require(!records.empty(), ErrorCode::empty_input, "macro_f1 needs at least one record");
  std::array<std::size_t, kValuesPerParam> tp{}, fp{}, fn{};
  for (const auto& r : records) {
    const auto y = space.ord_or_throw(k, r.params[k].truth);
    const auto p = space.ord_or_throw(k, r.params[k].prediction);
    if (y == p) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t v = 0; v < kValuesPerParam; ++v) {
    const auto denom = 2 * tp[v] + fp[v] + fn[v];
    if (denom == 0) continue;
    sum += 2.0 * static_cast<double>(tp[v]) / static_cast<double>(denom);
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

struct ParamMetrics {
  std::string parameter;
  double exact = 0.0;
  std::optional<double> win1;
  double macro_f1 = 0.0;
};

struct EvalReport {
  std::string predictor;
  std::string split;
  std::string config_fingerprint;
  std::size_t count = 0;
  std::array<ParamMetrics, kParamCount> params;
  double average_exact = 0.0;
  double average_win1 = 0.0;  // over Win@1-eligible parameters
  double average_f1 = 0.0;
  double system_exact = 0.0;
  double system_win1_range_exact = 0.0;  // eligible params within one level, ineligible ones exact
  std::vector<std::string> warnings;
};

inline EvalReport report_from_records(std::span<const PredictionRecord> records,
                                      const ParameterSpace& space = ParameterSpace::standard()) {
  require(!records.empty(), ErrorCode::empty_input, "cannot evaluate an empty test set");
  EvalReport rep;
  rep.count = records.size();
  const double n = static_cast<double>(records.size());
  std::array<std::size_t, kParamCount> exact_hits{}, win_hits{};
  std::size_t all_exact = 0, all_win = 0;
  for (const auto& r : records) {
    bool every_exact = true, every_win = true;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const int e = exact(space, k, r.params[k].truth, r.params[k].prediction);
      const auto w = win_at_1(space, k, r.params[k].truth, r.params[k].prediction);
      exact_hits[k] += static_cast<std::size_t>(e);
      every_exact = every_exact && e == 1;
      if (w) {
        win_hits[k] += static_cast<std::size_t>(*w);
        every_win = every_win && *w == 1;
      } else {
        every_win = every_win && e == 1;
      }
    }
    all_exact += every_exact ? 1 : 0;
    all_win += every_win ? 1 : 0;
  }
  std::size_t eligible = 0;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    auto& m = rep.params[k];
    m.parameter = space[k].name;
    m.exact = static_cast<double>(exact_hits[k]) / n;
    if (space[k].win1_eligible) {
      m.win1 = static_cast<double>(win_hits[k]) / n;
      rep.average_win1 += *m.win1;
      ++eligible;
    }
    m.macro_f1 = macro_f1(records, k, space);
    rep.average_exact += m.exact;
    rep.average_f1 += m.macro_f1;
  }
  rep.average_exact /= static_cast<double>(kParamCount);
  rep.average_f1 /= static_cast<double>(kParamCount);
  if (eligible > 0) rep.average_win1 /= static_cast<double>(eligible);
  rep.system_exact = static_cast<double>(all_exact) / n;
  rep.system_win1_range_exact = static_cast<double>(all_win) / n;
  return rep;
}

// Anything that maps a dataset row to a full recommendation.
template <class P>
concept Predictor = requires(const P& p, const Instance& x) {
  { p.predict(x) } -> std::same_as<Recommendation>;
  { p.name() } -> std::convertible_to<std::string>;
};

template <Predictor P>
std::vector<PredictionRecord> predict_all(const P& predictor, std::span<const Instance> test, std::size_t jobs = 1) {
  std::vector<PredictionRecord> records(test.size());
  parallel_for(test.size(), jobs, [&](std::size_t i) {
    const auto& x = test[i];
    const auto rec = predictor.predict(x);
    auto& out = records[i];
    out.instance_id = x.id;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      out.params[k] = {x.labels[k], rec.config[k], rec.confidences[k]};
    }
  });
  return records;
}

template <Predictor P>
EvalReport evaluate(const P& predictor, std::span<const Instance> test, const std::string& split_descriptor,
                    std::vector<PredictionRecord>* records_out = nullptr, std::size_t jobs = 1) {
  require(!test.empty(), ErrorCode::empty_input, "cannot evaluate an empty test set");
  auto records = predict_all(predictor, test, jobs);
  auto rep = report_from_records(records);
  rep.predictor = predictor.name();
  rep.split = split_descriptor;
  if (records_out) *records_out = std::move(records);
  return rep;
}

// ---- serialization ----

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json params = ordered_json::array();
  for (const auto& m : r.params) {
    params.push_back({{"parameter", m.parameter},
                      {"exact", m.exact},
                      {"win1", m.win1 ? ordered_json(*m.win1) : ordered_json("N/A")},
                      {"macro_f1", m.macro_f1}});
  }
  return {{"predictor", r.predictor},
          {"split", r.split},
          {"config_fingerprint", r.config_fingerprint},
          {"count", r.count},
          {"parameters", params},
          {"average", {{"exact", r.average_exact}, {"win1", r.average_win1}, {"macro_f1", r.average_f1}}},
          {"system", {{"all_exact", r.system_exact}, {"all_win1_range_exact", r.system_win1_range_exact}}},
          {"warnings", r.warnings}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.predictor = j.at("predictor").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.count = j.at("count").get<std::size_t>();
    const auto& ps = j.at("parameters");
    require(ps.is_array() && ps.size() == kParamCount, ErrorCode::malformed_document,
            "report must list five parameters");
    for (std::size_t k = 0; k < kParamCount; ++k) {
      auto& m = r.params[k];
      m.parameter = ps[k].at("parameter").get<std::string>();
      m.exact = ps[k].at("exact").get<double>();
      if (ps[k].at("win1").is_number()) m.win1 = ps[k].at("win1").get<double>();
      m.macro_f1 = ps[k].at("macro_f1").get<double>();
    }
    r.average_exact = j.at("average").at("exact").get<double>();
    r.average_win1 = j.at("average").at("win1").get<double>();
    r.average_f1 = j.at("average").at("macro_f1").get<double>();
    r.system_exact = j.at("system").at("all_exact").get<double>();
    r.system_win1_range_exact = j.at("system").at("all_win1_range_exact").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::malformed_document, ex.what());
  }
  return r;
}

inline nlohmann::ordered_json to_json(const PredictionRecord& r, const ParameterSpace& space = ParameterSpace::standard()) {
  using nlohmann::ordered_json;
  ordered_json params = ordered_json::object();
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const auto& p = r.params[k];
    ordered_json entry = {{"truth", p.truth}, {"prediction", p.prediction}};
    if (p.scores) {
      ordered_json scores = ordered_json::object();
      for (std::size_t v = 0; v < kValuesPerParam; ++v) scores[space[k].values[v]] = (*p.scores)[v];
      entry["scores"] = scores;
    }
    params[space[k].name] = entry;
  }
  return {{"instance_id", r.instance_id}, {"params", params}};
}

inline PredictionRecord record_from_json(const nlohmann::json& j, const ParameterSpace& space = ParameterSpace::standard()) {
  PredictionRecord r;
  try {
    r.instance_id = j.at("instance_id").get<std::string>();
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const auto& e = j.at("params").at(space[k].name);
      r.params[k].truth = e.at("truth").get<std::string>();
      r.params[k].prediction = e.at("prediction").get<std::string>();
      if (e.contains("scores")) {
        Scores s{};
        for (std::size_t v = 0; v < kValuesPerParam; ++v) s[v] = e.at("scores").at(space[k].values[v]).get<double>();
        r.params[k].scores = s;
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::malformed_document, ex.what());
  }
  return r;
}

inline void write_records(std::ostream& out, std::span<const PredictionRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<PredictionRecord> read_records(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ex.code(), "line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// Columns: parameter, exact, win1, f1.
inline void write_csv(std::ostream& out, const EvalReport& r) {
  out << "parameter,exact,win1,f1\n";
  for (const auto& m : r.params) {
    out << m.parameter << ',' << detail::fixed(m.exact) << ',' << (m.win1 ? detail::fixed(*m.win1) : "N/A") << ','
        << detail::fixed(m.macro_f1) << '\n';
  }
  out << "average," << detail::fixed(r.average_exact) << ',' << detail::fixed(r.average_win1) << ','
      << detail::fixed(r.average_f1) << '\n';
}

inline void render_table(std::ostream& out, const EvalReport& r) {
  auto pct = [](double v) { return detail::fixed(100.0 * v, 1); };
  out << r.predictor << " on " << r.split << " (" << r.count << " rows)\n";
  out << std::left << std::setw(24) << "parameter" << std::right << std::setw(8) << "exact" << std::setw(8) << "win1"
      << std::setw(8) << "f1" << '\n';
  for (const auto& m : r.params) {
    out << std::left << std::setw(24) << m.parameter << std::right << std::setw(8) << pct(m.exact) << std::setw(8)
        << (m.win1 ? pct(*m.win1) : "N/A") << std::setw(8) << pct(m.macro_f1) << '\n';
  }
  out << std::left << std::setw(24) << "average" << std::right << std::setw(8) << pct(r.average_exact) << std::setw(8)
      << pct(r.average_win1) << std::setw(8) << pct(r.average_f1) << '\n';
  out << "system all-exact " << pct(r.system_exact) << ", all-win1 with exact range "
      << pct(r.system_win1_range_exact) << '\n';
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

}  // namespace scanhd
