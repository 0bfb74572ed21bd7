#pragma once

// Finite vocabularies for inspection intents, objects and appearance
// conditions.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "scanhd/error.hpp"

namespace scanhd {

enum class Task { global_outline, local_outline, global_detail, local_detail, metrology, registration };
enum class Coverage { global, local };
enum class Detail { outline, detail, metrology };
enum class Lighting { full, side, dark };

inline constexpr std::array<Task, 6> kTasks = {Task::global_outline, Task::local_outline, Task::global_detail,
                                               Task::local_detail,   Task::metrology,     Task::registration};
inline constexpr std::array<Lighting, 3> kLightings = {Lighting::full, Lighting::side, Lighting::dark};

struct Token {
  std::string_view id;
  std::string_view display;
};

inline constexpr std::array<Token, 12> kTargets = {{
    {"solder_joints", "solder joints"},
    {"edges", "edges"},
    {"cavity", "cavity"},
    {"surface", "surface"},
    {"connector", "connector"},
    {"label_area", "label area"},
    {"heatsink", "heatsink"},
    {"screws", "screws"},
    {"ports", "ports"},
    {"traces", "traces"},
    {"bezel", "bezel"},
    {"full_body", "whole body"},
}};

inline constexpr std::array<Token, 16> kObjects = {{
    {"pcb", "PCB"},
    {"gpu_module", "GPU module"},
    {"ic_module", "IC module"},
    {"smartphone", "smartphone"},
    {"hard_drive", "hard drive"},
    {"router_board", "router board"},
    {"power_supply", "power supply"},
    {"keyboard", "keyboard"},
    {"wrench", "wrench"},
    {"pliers", "pliers"},
    {"screwdriver", "screwdriver"},
    {"caliper", "caliper"},
    {"calibration_block", "calibration block"},
    {"gauge_block", "gauge block"},
    {"aluminum_bracket", "aluminum bracket"},
    {"gear", "gear"},
}};

constexpr std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::global_outline: return "global_outline";
    case Task::local_outline: return "local_outline";
    case Task::global_detail: return "global_detail";
    case Task::local_detail: return "local_detail";
    case Task::metrology: return "metrology";
    case Task::registration: return "registration";
  }
  return "";
}

constexpr std::string_view to_string(Coverage c) noexcept { return c == Coverage::global ? "global" : "local"; }

constexpr std::string_view to_string(Detail d) noexcept {
  switch (d) {
    case Detail::outline: return "outline";
    case Detail::detail: return "detail";
    case Detail::metrology: return "metrology";
  }
  return "";
}

constexpr std::string_view to_string(Lighting l) noexcept {
  switch (l) {
    case Lighting::full: return "full";
    case Lighting::side: return "side";
    case Lighting::dark: return "dark";
  }
  return "";
}

template <class E, std::size_t N>
E enum_from_string(std::string_view s, const std::array<E, N>& all, std::string_view what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::invalid_argument, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

inline Task task_from_string(std::string_view s) { return enum_from_string(s, kTasks, "task"); }
inline Coverage coverage_from_string(std::string_view s) {
  return enum_from_string(s, std::array{Coverage::global, Coverage::local}, "coverage");
}
inline Detail detail_from_string(std::string_view s) {
  return enum_from_string(s, std::array{Detail::outline, Detail::detail, Detail::metrology}, "detail");
}
inline Lighting lighting_from_string(std::string_view s) { return enum_from_string(s, kLightings, "lighting"); }

// Coverage and granularity implied by a task category. Metrology measures a
// local feature; registration aligns the whole part.
constexpr Coverage coverage_of(Task t) noexcept {
  switch (t) {
    case Task::global_outline:
    case Task::global_detail:
    case Task::registration: return Coverage::global;
    default: return Coverage::local;
  }
}

constexpr Detail detail_of(Task t) noexcept {
  switch (t) {
    case Task::global_outline:
    case Task::local_outline: return Detail::outline;
    case Task::global_detail:
    case Task::local_detail: return Detail::detail;
    default: return Detail::metrology;
  }
}

template <std::size_t N>
std::optional<std::size_t> token_index(const std::array<Token, N>& vocab, std::string_view id) noexcept {
  for (std::size_t i = 0; i < N; ++i) {
    if (vocab[i].id == id) return i;
  }
  return std::nullopt;
}

inline std::string_view display_name(std::string_view object_id) {
  if (auto i = token_index(kObjects, object_id)) return kObjects[*i].display;
  return object_id;
}

}  // namespace scanhd
