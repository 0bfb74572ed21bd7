#pragma once

// Model file: one versioned JSON document. Projection matrices are not
// stored, only the (input_dim, hyper_dim, seed) triple that regenerates them.

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "scanhd/memory.hpp"

namespace scanhd {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::ordered_json encoder_json(std::size_t input_dim, std::size_t hyper_dim, std::uint64_t seed) {
  return {{"input_dim", input_dim}, {"hyper_dim", hyper_dim}, {"seed", seed}};
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const ScanModel& model) {
  using nlohmann::ordered_json;
  const auto& f = model.fusion();
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["fusion"] = {{"strategy", to_string(f.strategy)},
                 {"modalities", to_string(f.modalities)},
                 {"normalize_inputs", f.normalize_inputs},
                 {"hyper_dim", f.hyper_dim}};
  ordered_json enc;
  enc["observation"] = detail::encoder_json(f.observation_dim, f.hyper_dim, f.observation_seed);
  enc["instruction"] = detail::encoder_json(f.instruction_dim, f.hyper_dim, f.instruction_seed);
  if (f.strategy == FusionStrategy::concat_project && f.modalities == ModalityMode::both) {
    enc["joint"] = detail::encoder_json(f.observation_dim + f.instruction_dim, f.hyper_dim, f.joint_seed());
  }
  j["encoders"] = enc;

  ordered_json params = ordered_json::array();
  for (const auto& p : model.space().params()) {
    params.push_back({{"name", p.name}, {"values", p.values}, {"win1_eligible", p.win1_eligible}});
  }
  j["parameter_space"] = params;

  ordered_json memories = ordered_json::array();
  for (std::size_t k = 0; k < kParamCount; ++k) {
    ordered_json protos = ordered_json::object();
    for (std::size_t v = 0; v < kValuesPerParam; ++v) {
      protos[model.space()[k].values[v]] = model.memory(k).prototype(v);
    }
    memories.push_back({{"parameter", model.space()[k].name}, {"prototypes", protos}});
  }
  j["memories"] = memories;

  const auto& m = model.meta();
  j["training_meta"] = {{"algorithm", m.algorithm},
                        {"eta", m.eta},
                        {"epochs_run", m.epochs_run},
                        {"sample_count", m.sample_count},
                        {"data_fingerprint", m.data_fingerprint},
                        {"split", m.split},
                        {"data_path", m.data_path},
                        {"refine_errors", m.refine_errors}};
  return j;
}

inline ScanModel model_from_json(const nlohmann::json& j) {
  auto malformed = [](const std::string& what) { return Error(ErrorCode::malformed_document, what); };
  if (!j.is_object()) throw malformed("model document is not a JSON object");
  if (!j.contains("format_version")) throw malformed("missing format_version");
  if (!j.at("format_version").is_number_integer() || j.at("format_version").get<int>() != kModelFormatVersion) {
    throw Error(ErrorCode::version_mismatch, "unsupported model format_version " + j.at("format_version").dump() +
                                                 " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  try {
    const auto& fj = j.at("fusion");
    const auto& ej = j.at("encoders");
    FusionConfig f;
    f.strategy = fusion_strategy_from_string(fj.at("strategy").get<std::string>());
    f.modalities = modality_mode_from_string(fj.at("modalities").get<std::string>());
    f.normalize_inputs = fj.at("normalize_inputs").get<bool>();
    f.hyper_dim = fj.at("hyper_dim").get<std::size_t>();
    f.observation_dim = ej.at("observation").at("input_dim").get<std::size_t>();
    f.observation_seed = ej.at("observation").at("seed").get<std::uint64_t>();
    f.instruction_dim = ej.at("instruction").at("input_dim").get<std::size_t>();
    f.instruction_seed = ej.at("instruction").at("seed").get<std::uint64_t>();
    for (const char* name : {"observation", "instruction", "joint"}) {
      if (ej.contains(name) && ej.at(name).at("hyper_dim").get<std::size_t>() != f.hyper_dim) {
        throw malformed(std::string("encoder '") + name + "' hyper_dim disagrees with fusion.hyper_dim");
      }
    }

    const auto& pj = j.at("parameter_space");
    if (!pj.is_array() || pj.size() != kParamCount) throw malformed("parameter_space must list five parameters");
    std::array<ParameterDescriptor, kParamCount> descriptors;
    for (std::size_t k = 0; k < kParamCount; ++k) {
      descriptors[k] = ParameterSpace::standard()[k];
      descriptors[k].name = pj[k].at("name").get<std::string>();
      descriptors[k].values = pj[k].at("values").get<std::array<std::string, kValuesPerParam>>();
      descriptors[k].win1_eligible = pj[k].at("win1_eligible").get<bool>();
    }
    const ParameterSpace space(descriptors);
    if (!(space == ParameterSpace::standard())) throw malformed("parameter_space differs from the scanner vocabulary");

    ScanModel model(f, space);
    const auto& mj = j.at("memories");
    if (!mj.is_array() || mj.size() != kParamCount) throw malformed("memories must cover the five parameters");
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const auto& name = space[k].name;
      if (mj[k].at("parameter").get<std::string>() != name) {
        throw malformed("memory " + std::to_string(k) + " is not for parameter " + name);
      }
      const auto& protos = mj[k].at("prototypes");
      if (!protos.is_object() || protos.size() != kValuesPerParam) {
        throw malformed("memory for " + name + " must hold one prototype per vocabulary value");
      }
      for (std::size_t v = 0; v < kValuesPerParam; ++v) {
        const auto& value = space[k].values[v];
        if (!protos.contains(value)) throw malformed("memory for " + name + " lacks prototype '" + value + "'");
        auto acc = protos.at(value).get<std::vector<double>>();
        if (acc.size() != f.hyper_dim) {
          throw Error(ErrorCode::length_mismatch, "prototype " + name + "=" + value + " has length " +
                                                      std::to_string(acc.size()) + ", expected " +
                                                      std::to_string(f.hyper_dim));
        }
        model.memory(k).set_prototype(v, std::move(acc));
      }
    }

    const auto& tj = j.at("training_meta");
    auto& m = model.meta();
    m.algorithm = tj.at("algorithm").get<std::string>();
    m.eta = tj.at("eta").get<double>();
    m.epochs_run = tj.at("epochs_run").get<std::size_t>();
    m.sample_count = tj.at("sample_count").get<std::size_t>();
    m.data_fingerprint = tj.at("data_fingerprint").get<std::string>();
    m.split = tj.at("split").get<std::string>();
    m.data_path = tj.at("data_path").get<std::string>();
    m.refine_errors = tj.at("refine_errors").get<std::vector<std::size_t>>();
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw malformed(ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::invalid_argument) throw malformed(ex.what());
    throw;
  }
}

inline std::string model_to_string(const ScanModel& model) { return model_to_json(model).dump() + "\n"; }

inline void save_model(const ScanModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << model_to_string(model);
}

inline ScanModel load_model_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::malformed_document, ex.what());
  }
  return model_from_json(j);
}

inline ScanModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model_from_string(buf.str());
}

}  // namespace scanhd
