#pragma once

// Template realization of inspection intents, the keyword inverse used by the
// consistency checker, and instruction normalization for lookup baselines.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "scanhd/dataset.hpp"
#include "scanhd/parameter_space.hpp"

namespace scanhd {

inline constexpr std::size_t kTemplatesPerTask = 5;

namespace detail {

// {t} = target display name, {o} = object display name.
inline const std::array<std::array<std::string_view, kTemplatesPerTask>, 6>& instruction_templates() {
  static const std::array<std::array<std::string_view, kTemplatesPerTask>, 6> templates = {{
      {{
          "Capture the overall outline of the {o}, including its {t}.",
          "Scan the entire {o} to record the contour around its {t}.",
          "Record the complete silhouette of the {o} with its {t}.",
          "Trace the whole {o} and its {t} to obtain the outer shape.",
          "Get the overall profile of the {o} covering the {t}.",
      }},
      {{
          "Outline the {t} on the {o}.",
          "Capture the contour of the {t} on the {o}.",
          "Record the shape of the {t} of the {o}.",
          "Scan the {t} region of the {o} to get its profile.",
          "Trace the silhouette of the {t} on the {o}.",
      }},
      {{
          "Inspect the entire {o} in detail, including the {t}.",
          "Scan the whole {o} at fine resolution, paying attention to the {t}.",
          "Examine the complete {o} closely for subtle defects around the {t}.",
          "Check the overall {o} for detailed flaws near the {t}.",
          "Capture fine features across the entire {o}, focusing on the {t}.",
      }},
      {{
          "Inspect the {t} on the {o} in detail.",
          "Examine the {t} of the {o} closely for subtle defects.",
          "Scan the {t} on the {o} at fine resolution.",
          "Look for fine defects on the {t} of the {o}.",
          "Check the {t} of the {o} in detail for small flaws.",
      }},
      {{
          "Measure the width of the {t} on the {o}.",
          "Measure the depth of the {t} on the {o}.",
          "Determine the spacing between the {t} on the {o}.",
          "Check the dimensions of the {t} on the {o}.",
          "Measure the {t} of the {o} against its nominal dimensions.",
      }},
      {{
          "Align scans of the {o} using the {t} as reference.",
          "Register the {o} to its reference pose via the {t}.",
          "Verify the registration of the {o} across scans using the {t}.",
          "Check that the {t} of the {o} stays aligned between samples.",
          "Assess the positional alignment of the {o} relative to the {t}.",
      }},
  }};
  return templates;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline bool any_of_words(const std::vector<std::string>& ws, std::initializer_list<std::string_view> keys) {
  return std::any_of(ws.begin(), ws.end(), [&](const std::string& w) {
    return std::find(keys.begin(), keys.end(), w) != keys.end();
  });
}

}  // namespace detail

// Deterministic: the template is chosen by template_seed modulo the number of
// templates for the task. Never mentions scanner parameter values.
inline std::string realize_instruction(const SlotTuple& slot, std::string_view object_id, std::uint64_t template_seed) {
  slot.validate();
  const auto& row = detail::instruction_templates()[static_cast<std::size_t>(slot.task)];
  std::string text(row[template_seed % kTemplatesPerTask]);
  detail::replace_all(text, "{t}", kTargets[*token_index(kTargets, slot.target)].display);
  detail::replace_all(text, "{o}", display_name(object_id));
  return text;
}

// Keyword inverse of the templates. Returns nullopt when the text does not
// name exactly one granularity or lacks a known target.
inline std::optional<SlotTuple> parse_instruction(std::string_view text) {
  std::string lower = detail::lowercase(text);

  // Leftmost target phrase wins; it is cut out before keyword matching so a
  // target like "whole body" cannot read as a coverage cue.
  std::optional<std::size_t> target;
  std::size_t target_pos = std::string::npos;
  for (std::size_t i = 0; i < kTargets.size(); ++i) {
    const auto pos = lower.find(kTargets[i].display);
    if (pos != std::string::npos && pos < target_pos) {
      target = i;
      target_pos = pos;
    }
  }
  if (!target) return std::nullopt;
  lower.erase(target_pos, kTargets[*target].display.size());

  const auto ws = detail::words(lower);
  Task task;
  if (detail::any_of_words(ws, {"align", "aligned", "alignment", "register", "registration"})) {
    task = Task::registration;
  } else if (detail::any_of_words(ws, {"measure", "dimension", "dimensions", "depth", "width", "spacing"})) {
    task = Task::metrology;
  } else {
    const bool fine = detail::any_of_words(ws, {"detail", "detailed", "fine", "subtle", "closely"});
    const bool coarse =
        detail::any_of_words(ws, {"outline", "contour", "contours", "silhouette", "shape", "profile"});
    if (fine == coarse) return std::nullopt;
    const bool global = detail::any_of_words(ws, {"entire", "whole", "overall", "complete"});
    if (fine) {
      task = global ? Task::global_detail : Task::local_detail;
    } else {
      task = global ? Task::global_outline : Task::local_outline;
    }
  }
  return SlotTuple::for_task(task, std::string(kTargets[*target].id));
}

// Lowercase, drop punctuation, collapse whitespace.
inline std::string normalize_instruction(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      pending_space = !out.empty();
    } else if (std::ispunct(u)) {
      continue;
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  return out;
}

// True when the text mentions any parameter value token as a standalone word.
inline bool leaks_parameter_value(std::string_view text, const ParameterSpace& space = ParameterSpace::standard()) {
  std::string alternatives;
  for (const auto& p : space.params()) {
    for (const auto& v : p.values) {
      if (!alternatives.empty()) alternatives += '|';
      for (char c : v) {
        if (std::string_view("\\^$.|?*+()[]{}/").find(c) != std::string_view::npos) alternatives += '\\';
        alternatives += c;
      }
    }
  }
  const std::regex pattern("(^|[^A-Za-z0-9/])(" + alternatives + ")(?=$|[^A-Za-z0-9/])",
                           std::regex::ECMAScript | std::regex::icase);
  return std::regex_search(std::string(text), pattern);
}

}  // namespace scanhd
