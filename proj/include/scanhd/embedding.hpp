#pragma once

// Named real-valued embeddings and the JSON Lines store that holds them:
//   {"id": string, "kind": "observation"|"instruction", "dim": int, "values": [float, ...]}

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scanhd/error.hpp"

namespace scanhd {

enum class Modality { observation, instruction };

inline std::string to_string(Modality m) { return m == Modality::observation ? "observation" : "instruction"; }

inline Modality modality_from_string(const std::string& s) {
  if (s == "observation") return Modality::observation;
  if (s == "instruction") return Modality::instruction;
  throw Error(ErrorCode::invalid_argument, "unknown embedding kind '" + s + "'");
}

struct Embedding {
  Modality kind = Modality::observation;
  std::vector<double> values;
  std::string source_id;

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }

  void validate() const {
    require(!values.empty(), ErrorCode::invalid_argument, "embedding '" + source_id + "' is empty");
    for (double v : values) {
      require(std::isfinite(v), ErrorCode::invalid_argument, "embedding '" + source_id + "' has a non-finite entry");
    }
  }
};

inline std::vector<double> l2_normalized(std::span<const double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  std::vector<double> out(v.begin(), v.end());
  if (n2 > 0.0) {
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : out) x *= inv;
  }
  return out;
}

class EmbeddingStore {
 public:
  // Insertion keeps the first-seen order for serialization.
  void add(Embedding e) {
    e.validate();
    require(!index_.contains(e.source_id), ErrorCode::invalid_argument, "duplicate embedding id '" + e.source_id + "'");
    index_.emplace(e.source_id, records_.size());
    records_.push_back(std::move(e));
  }

  [[nodiscard]] const Embedding* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  [[nodiscard]] const Embedding& at(const std::string& id) const {
    const Embedding* e = find(id);
    if (!e) throw Error(ErrorCode::lookup, "embedding id '" + id + "' not found");
    return *e;
  }

  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] const std::vector<Embedding>& records() const noexcept { return records_; }

  static nlohmann::ordered_json to_json(const Embedding& e) {
    nlohmann::ordered_json j;
    j["id"] = e.source_id;
    j["kind"] = to_string(e.kind);
    j["dim"] = e.values.size();
    j["values"] = e.values;
    return j;
  }

  static Embedding from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorCode::parse, "embedding record is not an object");
    for (const char* key : {"id", "kind", "dim", "values"}) {
      require(j.contains(key), ErrorCode::parse, std::string("embedding record missing '") + key + "'");
    }
    Embedding e;
    e.source_id = j.at("id").get<std::string>();
    e.kind = modality_from_string(j.at("kind").get<std::string>());
    e.values = j.at("values").get<std::vector<double>>();
    const auto dim = j.at("dim").get<std::size_t>();
    require(dim == e.values.size(), ErrorCode::parse,
            "embedding '" + e.source_id + "' declares dim " + std::to_string(dim) + " but has " +
                std::to_string(e.values.size()) + " values");
    return e;
  }

  void write(std::ostream& out) const {
    for (const auto& e : records_) out << to_json(e).dump() << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    write(out);
  }

  static EmbeddingStore read(std::istream& in) {
    EmbeddingStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        store.add(from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + ex.what());
      } catch (const Error& ex) {
        throw Error(ex.code(), "line " + std::to_string(line_no) + ": " + ex.what());
      }
    }
    return store;
  }

  static EmbeddingStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read " + path);
    return read(in);
  }

 private:
  std::vector<Embedding> records_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace scanhd
