#pragma once

// Crash-dump text parsing and stack-frame cleaning.
//
// Dump layout:
//
//   [HEADER]
//   pid: 4711
//   time: 2020-05-31T12:00:00Z
//   [BUILD]
//   ...
//   [CRASH_STACK]
//   exception:
//   0: void ns::Foo::bar(int) + 0x42 at foo.cpp:10
//   backtrace:
//   0: ...
//   [CPUINFO]
//
// A section starts at a line holding only a bracketed name. Inside
// [CRASH_STACK] the `exception:` block is optional; frames that appear before
// any block marker belong to the backtrace.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdetector/error.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

struct StackFrame {
  std::size_t index = 0;
  std::string raw_text;
  std::string function_name;

  friend bool operator==(const StackFrame&, const StackFrame&) = default;
};

struct ParseReport {
  std::size_t candidate_lines = 0;
  std::size_t valid_frames = 0;
  std::size_t skipped_lines = 0;

  friend bool operator==(const ParseReport&, const ParseReport&) = default;
};

struct CrashDump {
  std::string dump_id;
  std::map<std::string, std::string> header;
  /// Bracketed section name -> raw text, in file order.
  std::vector<std::pair<std::string, std::string>> sections;
  std::vector<StackFrame> exception_frames;
  std::vector<StackFrame> backtrace_frames;
  ParseReport report;

  const std::string* section(std::string_view name) const {
    for (const auto& [key, body] : sections)
      if (key == name) return &body;
    return nullptr;
  }

  std::vector<std::string> backtrace_names() const {
    std::vector<std::string> names;
    names.reserve(backtrace_frames.size());
    for (const auto& f : backtrace_frames) names.push_back(f.function_name);
    return names;
  }

  friend bool operator==(const CrashDump&, const CrashDump&) = default;
};

inline constexpr std::string_view kCrashStackSection = "[CRASH_STACK]";
inline constexpr std::string_view kHeaderSection = "[HEADER]";

namespace detail {

inline bool is_hex_address(std::string_view token) {
  if (token.size() < 3 || token[0] != '0' || (token[1] != 'x' && token[1] != 'X')) return false;
  for (char c : token.substr(2))
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

inline bool is_section_line(std::string_view t) {
  if (t.size() < 3 || t.front() != '[' || t.back() != ']') return false;
  for (char c : t.substr(1, t.size() - 2))
    if (!(std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
          c == '_' || c == ' '))
      return false;
  return true;
}

/// Length of a leading `<digits>:` prefix, or 0 if absent.
inline std::size_t index_prefix_length(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0 || i >= s.size() || s[i] != ':') return 0;
  return i + 1;
}

inline bool is_auxiliary_line(std::string_view s) {
  static constexpr std::string_view kAux[] = {"SFrame", "Params", "Regs"};
  for (auto tag : kAux) {
    if (!text::starts_with(s, tag)) continue;
    if (s.size() == tag.size()) return true;
    char next = s[tag.size()];
    if (next == ':' || text::is_space(next)) return true;
  }
  return false;
}

/// Position of the '(' that opens the parameter list, skipping the
/// parentheses that belong to `operator()` and anything nested in templates.
inline std::size_t find_parameter_list(std::string_view s) {
  int angle = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.compare(i, 8, "operator") == 0 && (i == 0 || !std::isalnum(static_cast<unsigned char>(s[i - 1])))) {
      i += 8;
      if (s.compare(i, 2, "()") == 0) {
        i += 1;
        continue;
      }
      while (i < s.size() && s[i] != '(' && !std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
      if (i < s.size() && s[i] == '(') return i;
      --i;
      continue;
    }
    char c = s[i];
    if (c == '<') ++angle;
    else if (c == '>' && angle > 0) --angle;
    else if (c == '(' && angle == 0) return i;
  }
  return std::string_view::npos;
}

/// Position just past the last whitespace run outside template brackets.
inline std::size_t qualified_name_start(std::string_view s) {
  int angle = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '<') ++angle;
    else if (c == '>' && angle > 0) --angle;
    else if (angle == 0 && text::is_space(c)) start = i + 1;
  }
  return start;
}

}  // namespace detail

/// Reduces one raw frame line to its bare qualified function name. Returns
/// nullopt for symbol-less frames and auxiliary detail lines.
inline std::optional<std::string> clean_frame(std::string_view raw_line) {
  std::string_view s = text::trim(raw_line);

  // Leading index and addresses.
  if (std::size_t n = detail::index_prefix_length(s); n > 0) s = text::trim(s.substr(n));
  if (detail::is_auxiliary_line(s)) return std::nullopt;
  for (;;) {
    std::size_t end = 0;
    while (end < s.size() && !text::is_space(s[end])) ++end;
    std::string_view token = s.substr(0, end);
    if (!token.empty() && token.back() == ':') token.remove_suffix(1);
    if (!detail::is_hex_address(token)) break;
    s = text::trim(s.substr(end));
  }
  if (s.empty() || text::starts_with(s, "<no symbol") || text::starts_with(s, "??"))
    return std::nullopt;

  // Trailing offset and source location.
  for (std::size_t pos = s.find('+'); pos != std::string_view::npos; pos = s.find('+', pos + 1)) {
    std::string_view after = text::trim(s.substr(pos + 1));
    if (text::starts_with(after, "0x") || text::starts_with(after, "0X")) {
      s = text::trim(s.substr(0, pos));
      break;
    }
  }
  if (std::size_t at = s.rfind(" at "); at != std::string_view::npos) s = text::trim(s.substr(0, at));

  std::string work(s);
  for (std::size_t pos; (pos = work.find("(anonymous namespace)")) != std::string::npos;)
    work.replace(pos, 21, "anonymous_namespace");

  // Parameter list, along with any cv/ref qualifiers after it.
  if (std::size_t open = detail::find_parameter_list(work); open != std::string::npos)
    work.erase(open);

  // Return type.
  std::string_view name = text::trim(work);
  name = name.substr(detail::qualified_name_start(name));
  while (!name.empty() && (name.front() == '*' || name.front() == '&')) name.remove_prefix(1);

  std::string result;
  for (char c : name)
    if (!text::is_space(c)) result += c;
  if (result.empty() || detail::is_hex_address(result)) return std::nullopt;
  // `operator()` is the one name allowed to keep its parentheses.
  std::string probe = result;
  for (std::size_t pos; (pos = probe.find("operator()")) != std::string::npos;) probe.erase(pos, 10);
  if (probe.find('(') != std::string::npos) return std::nullopt;
  return result;
}

/// Parses a whole dump file. `fallback_id` names the dump when the header has
/// no `dump_id` key; if both are absent the id becomes `<pid>@<time>`.
inline CrashDump parse_dump(std::string_view content, std::string_view fallback_id = {}) {
  CrashDump dump;
  const auto lines = text::split_lines(content);

  std::string* current = nullptr;
  std::string current_name;
  std::vector<std::string_view> stack_lines;
  for (std::string_view line : lines) {
    std::string_view t = text::trim(line);
    if (detail::is_section_line(t)) {
      current_name = std::string(t);
      dump.sections.emplace_back(current_name, std::string{});
      current = &dump.sections.back().second;
      continue;
    }
    if (!current) continue;
    current->append(line);
    current->push_back('\n');
    if (current_name == kCrashStackSection) stack_lines.push_back(line);
  }

  const std::string* header = dump.section(kHeaderSection);
  if (!header) throw Error(ErrorCode::MalformedHeader, "dump has no [HEADER] block");
  for (std::string_view line : text::split_lines(*header)) {
    std::string_view t = text::trim(line);
    if (t.empty()) continue;
    std::size_t colon = t.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorCode::MalformedHeader, "header line without ':': '" + std::string(t) + "'");
    dump.header[std::string(text::trim(t.substr(0, colon)))] =
        std::string(text::trim(t.substr(colon + 1)));
  }
  for (const char* required : {"pid", "time"})
    if (!dump.header.count(required))
      throw Error(ErrorCode::MalformedHeader, std::string("header lacks '") + required + "'");

  if (!dump.section(kCrashStackSection))
    throw Error(ErrorCode::MissingSection, "dump has no [CRASH_STACK] section");

  if (auto it = dump.header.find("dump_id"); it != dump.header.end() && !it->second.empty())
    dump.dump_id = it->second;
  else if (!fallback_id.empty())
    dump.dump_id = std::string(fallback_id);
  else
    dump.dump_id = dump.header["pid"] + "@" + dump.header["time"];

  std::vector<StackFrame>* target = &dump.backtrace_frames;
  for (std::string_view line : stack_lines) {
    std::string_view t = text::trim(line);
    if (t.empty()) continue;
    if (t == "exception:") {
      target = &dump.exception_frames;
      continue;
    }
    if (t == "backtrace:") {
      target = &dump.backtrace_frames;
      continue;
    }
    ++dump.report.candidate_lines;
    std::size_t prefix = detail::index_prefix_length(t);
    std::optional<std::string> name = prefix > 0 ? clean_frame(t) : std::nullopt;
    if (!name) {
      ++dump.report.skipped_lines;
      continue;
    }
    StackFrame frame;
    std::from_chars(t.data(), t.data() + prefix - 1, frame.index);
    frame.raw_text = std::string(line);
    frame.function_name = std::move(*name);
    target->push_back(std::move(frame));
    ++dump.report.valid_frames;
  }

  if (dump.backtrace_frames.empty())
    throw Error(ErrorCode::EmptyStack, "dump '" + dump.dump_id + "' has no valid backtrace frames");
  return dump;
}

}  // namespace kdetector
