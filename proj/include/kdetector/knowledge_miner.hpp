#pragma once

// Component knowledge mining: SET_COMPONENT directives in layered
// CMakeLists.txt files give File -> Component, declaration scans or a
// precomputed index give File -> Function, and the two compose into
// Function -> Component.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kdetector/error.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

inline constexpr std::string_view kManifestFileName = "CMakeLists.txt";
inline constexpr std::string_view kUnknownComponentPrefix = "UNKNOWN:";
inline constexpr std::string_view kComponentMapVersion = "#version 1";

inline std::string unknown_component(std::string_view function_name) {
  return std::string(kUnknownComponentPrefix) + std::string(function_name);
}

inline bool is_unknown_component(std::string_view component) {
  return text::starts_with(component, kUnknownComponentPrefix);
}

struct ComponentManifest {
  std::string directory;  // relative to the mining root, "." for the root itself
  std::optional<std::string> default_component;
  std::map<std::string, std::string> file_overrides;
  std::vector<std::string> warnings;
};

/// Parses the SET_COMPONENT directives of one manifest. Other CMake commands
/// are ignored.
inline ComponentManifest parse_manifest(std::string_view content, std::string_view directory = ".",
                                        std::string_view file_label = "CMakeLists.txt") {
  ComponentManifest manifest;
  manifest.directory = std::string(directory);

  // Comments are blanked out, keeping offsets (and thus line numbers) stable.
  std::string body(content);
  bool in_quote = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c == '"') in_quote = !in_quote;
    else if (c == '\n') in_quote = false;
    else if (c == '#' && !in_quote) {
      while (i < body.size() && body[i] != '\n') body[i++] = ' ';
      --i;
    }
  }

  auto line_of = [&](std::size_t offset) {
    return 1 + std::count(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
  };
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw Error(ErrorCode::ManifestSyntaxError,
                std::string(file_label) + ":" + std::to_string(line_of(offset)) + ": " + what);
  };

  std::string upper(body);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });

  static constexpr std::string_view kDirective = "SET_COMPONENT";
  for (std::size_t pos = upper.find(kDirective); pos != std::string::npos;
       pos = upper.find(kDirective, pos + 1)) {
    const std::size_t start = pos;
    if (pos > 0 && (std::isalnum(static_cast<unsigned char>(upper[pos - 1])) || upper[pos - 1] == '_'))
      continue;
    std::size_t i = pos + kDirective.size();
    if (i < body.size() && (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_'))
      continue;
    while (i < body.size() && text::is_space(body[i])) ++i;
    if (i >= body.size() || body[i] != '(') fail(start, "expected '(' after SET_COMPONENT");
    ++i;

    std::vector<std::string> args;
    std::vector<bool> quoted;
    bool closed = false;
    while (i < body.size()) {
      char c = body[i];
      if (text::is_space(c)) {
        ++i;
      } else if (c == ')') {
        closed = true;
        ++i;
        break;
      } else if (c == '"') {
        std::size_t end = body.find('"', i + 1);
        if (end == std::string::npos) fail(start, "unterminated string in SET_COMPONENT");
        args.push_back(body.substr(i + 1, end - i - 1));
        quoted.push_back(true);
        i = end + 1;
      } else if (c == '(') {
        fail(start, "unexpected '(' inside SET_COMPONENT");
      } else {
        std::size_t end = i;
        while (end < body.size() && !text::is_space(body[end]) && body[end] != ')' && body[end] != '"')
          ++end;
        args.push_back(body.substr(i, end - i));
        quoted.push_back(false);
        i = end;
      }
    }
    if (!closed) fail(start, "missing ')' for SET_COMPONENT");
    if (args.empty() || !quoted.front()) fail(start, "SET_COMPONENT needs a quoted component name");
    const std::string& name = args.front();
    if (text::trim(name).empty() || name.find_first_of(" \t\r\n") != std::string::npos)
      fail(start, "invalid component name '" + name + "'");

    if (args.size() == 1) {
      if (manifest.default_component && *manifest.default_component != name)
        manifest.warnings.push_back(std::string(file_label) + ":" + std::to_string(line_of(start)) +
                                    ": default component redeclared ('" +
                                    *manifest.default_component + "' -> '" + name + "')");
      manifest.default_component = name;
      continue;
    }
    for (std::size_t a = 1; a < args.size(); ++a) {
      const std::string& file = args[a];
      if (file.empty()) continue;
      if (auto it = manifest.file_overrides.find(file);
          it != manifest.file_overrides.end() && it->second != name)
        manifest.warnings.push_back(std::string(file_label) + ":" + std::to_string(line_of(start)) +
                                    ": file '" + file + "' reassigned ('" + it->second + "' -> '" +
                                    name + "')");
      manifest.file_overrides[file] = name;
    }
  }
  return manifest;
}

struct ManifestMiningResult {
  std::vector<ComponentManifest> manifests;
  /// Root-relative path (with '/') -> component.
  std::map<std::string, std::string> file_to_component;
  std::vector<std::string> unmapped_files;
  std::vector<std::string> warnings;
  /// Latest modification time among the files visited; a stable snapshot stamp.
  std::optional<text::TimePoint> latest_mtime;
};

namespace detail {

inline std::string relative_path(const std::filesystem::path& root, const std::filesystem::path& p) {
  std::string rel = p.lexically_relative(root).generic_string();
  return rel.empty() ? "." : rel;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return dir == "." ? name : dir + "/" + name;
}

inline text::TimePoint to_sys_seconds(std::filesystem::file_time_type ft) {
  using namespace std::chrono;
  return floor<seconds>(file_clock::to_sys(ft));
}

}  // namespace detail

/// Breadth-first walk from `root`. A file's component is its own directory's
/// override if any, else the default of the nearest directory (itself
/// included) that declares one.
inline ManifestMiningResult parse_component_manifests(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw Error(ErrorCode::IoError, "source root '" + root.string() + "' is not a directory");

  ManifestMiningResult result;
  struct Pending {
    fs::path dir;
    std::optional<std::string> inherited;
  };
  std::deque<Pending> queue{{root, std::nullopt}};

  auto note_mtime = [&](const fs::path& p) {
    std::error_code ec;
    auto ft = fs::last_write_time(p, ec);
    if (ec) return;
    auto t = detail::to_sys_seconds(ft);
    if (!result.latest_mtime || t > *result.latest_mtime) result.latest_mtime = t;
  };

  while (!queue.empty()) {
    Pending current = std::move(queue.front());
    queue.pop_front();
    const std::string rel_dir = detail::relative_path(root, current.dir);

    std::vector<fs::path> files, dirs;
    for (const auto& entry : fs::directory_iterator(current.dir)) {
      if (entry.is_directory()) dirs.push_back(entry.path());
      else if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::sort(dirs.begin(), dirs.end());

    std::optional<std::string> effective = current.inherited;
    const ComponentManifest* manifest = nullptr;
    const fs::path manifest_path = current.dir / std::string(kManifestFileName);
    if (fs::is_regular_file(manifest_path)) {
      note_mtime(manifest_path);
      result.manifests.push_back(parse_manifest(text::read_file(manifest_path.string()), rel_dir,
                                                detail::join_path(rel_dir, std::string(kManifestFileName))));
      manifest = &result.manifests.back();
      for (const auto& w : manifest->warnings) result.warnings.push_back(w);
      if (manifest->default_component) effective = manifest->default_component;
    }

    std::set<std::string> present;
    for (const auto& file : files) {
      const std::string name = file.filename().string();
      if (name == kManifestFileName) continue;
      present.insert(name);
      note_mtime(file);
      const std::string rel = detail::join_path(rel_dir, name);
      std::optional<std::string> component = effective;
      if (manifest)
        if (auto it = manifest->file_overrides.find(name); it != manifest->file_overrides.end())
          component = it->second;
      if (component) result.file_to_component[rel] = *component;
      else result.unmapped_files.push_back(rel);
    }
    if (manifest)
      for (const auto& [name, component] : manifest->file_overrides)
        if (!present.count(name))
          result.warnings.push_back(detail::join_path(rel_dir, std::string(kManifestFileName)) +
                                    ": override names missing file '" + name + "'");

    for (const auto& d : dirs) queue.push_back({d, effective});
  }

  std::sort(result.manifests.begin(), result.manifests.end(),
            [](const ComponentManifest& a, const ComponentManifest& b) { return a.directory < b.directory; });
  std::sort(result.unmapped_files.begin(), result.unmapped_files.end());
  return result;
}

struct ExtractionResult {
  std::vector<std::string> names;
  std::size_t skipped_lines = 0;
};

/// Reads `fn <qualified::name>` declaration lines. Blank lines and `//` or `#`
/// comments are ignored; anything else counts as skipped.
inline ExtractionResult extract_function_names(std::string_view source) {
  ExtractionResult result;
  std::set<std::string> seen;
  for (std::string_view line : text::split_lines(source)) {
    std::string_view t = text::trim(line);
    if (t.empty() || text::starts_with(t, "//") || text::starts_with(t, "#")) continue;
    if (!text::starts_with(t, "fn") || t.size() < 3 || !text::is_space(t[2])) {
      ++result.skipped_lines;
      continue;
    }
    std::string_view name = text::trim(t.substr(2));
    if (!name.empty() && name.back() == ';') name = text::trim(name.substr(0, name.size() - 1));
    if (name.empty() || std::any_of(name.begin(), name.end(), text::is_space)) {
      ++result.skipped_lines;
      continue;
    }
    if (seen.insert(std::string(name)).second) result.names.emplace_back(name);
  }
  return result;
}

/// Loads `file-path<TAB>qualified-name` records produced by an external
/// extractor. Per-file order is kept; repeats are dropped.
inline std::map<std::string, std::vector<std::string>> load_function_index(std::string_view content) {
  std::map<std::string, std::vector<std::string>> index;
  std::map<std::string, std::set<std::string>> seen;
  std::size_t line_no = 0;
  for (std::string_view line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty() || text::starts_with(line, "#")) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != 2 || text::trim(fields[0]).empty() || text::trim(fields[1]).empty())
      throw Error(ErrorCode::FormatError,
                  "function index line " + std::to_string(line_no) + ": expected 'path<TAB>name'");
    std::string file(text::trim(fields[0]));
    std::string name(text::trim(fields[1]));
    if (seen[file].insert(name).second) index[file].push_back(std::move(name));
  }
  return index;
}

struct ComponentMap {
  std::map<std::string, std::string> function_to_component;
  std::map<std::string, std::string> file_to_component;

  std::optional<std::string> component_of(std::string_view function_name) const {
    auto it = function_to_component.find(std::string(function_name));
    if (it == function_to_component.end()) return std::nullopt;
    return it->second;
  }

  std::size_t function_count() const { return function_to_component.size(); }

  std::size_t component_count() const {
    std::set<std::string> components;
    for (const auto& [fn, c] : function_to_component)
      if (!is_unknown_component(c)) components.insert(c);
    return components.size();
  }
};

struct ComponentMapBuild {
  ComponentMap map;
  std::vector<std::string> warnings;
};

/// Composes File -> Component with File -> Functions. A function declared in
/// several files takes the component of the smallest path. Functions from
/// files without a component map to their UNKNOWN pseudo-component.
inline ComponentMapBuild build_function_component_map(
    const std::map<std::string, std::string>& file_to_component,
    const std::map<std::string, std::vector<std::string>>& functions_by_file) {
  ComponentMapBuild out;
  out.map.file_to_component = file_to_component;
  std::map<std::string, std::string> first_file;
  for (const auto& [file, names] : functions_by_file) {
    auto fc = file_to_component.find(file);
    for (const auto& name : names) {
      std::string component = fc != file_to_component.end() ? fc->second : unknown_component(name);
      auto [it, inserted] = out.map.function_to_component.emplace(name, component);
      if (inserted) {
        first_file[name] = file;
      } else if (it->second != component) {
        out.warnings.push_back("function '" + name + "' declared in '" + first_file[name] + "' (" +
                               it->second + ") and '" + file + "' (" + component + "); keeping " +
                               it->second);
      }
    }
  }
  return out;
}

inline std::string write_component_map(const ComponentMap& map, text::TimePoint mined_at) {
  std::string out(kComponentMapVersion);
  out += "\n#mined_at: " + text::format_time(mined_at) + "\n";
  for (const auto& [fn, component] : map.function_to_component) out += fn + "\t" + component + "\n";
  return out;
}

inline ComponentMap read_component_map(std::string_view content) {
  auto lines = text::split_lines(content);
  if (lines.empty() || text::trim(lines.front()) != kComponentMapVersion)
    throw Error(ErrorCode::FormatError, "component map lacks '" + std::string(kComponentMapVersion) + "' header");
  ComponentMap map;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (text::trim(line).empty() || text::starts_with(line, "#")) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw Error(ErrorCode::FormatError, "component map line " + std::to_string(i + 1) + " malformed");
    map.function_to_component[std::string(fields[0])] = std::string(fields[1]);
  }
  return map;
}

struct MiningReport {
  ManifestMiningResult manifests;
  ComponentMap map;
  std::size_t skipped_declaration_lines = 0;
  std::vector<std::string> warnings;
};

/// Full mining pass: manifests, then declaration scans of every non-manifest
/// file in the tree, plus any records from a precomputed function index.
inline MiningReport mine_source_tree(
    const std::filesystem::path& root,
    const std::map<std::string, std::vector<std::string>>& extra_index = {}) {
  MiningReport report;
  report.manifests = parse_component_manifests(root);

  std::map<std::string, std::vector<std::string>> functions_by_file;
  std::vector<std::string> all_files;
  for (const auto& [file, c] : report.manifests.file_to_component) all_files.push_back(file);
  all_files.insert(all_files.end(), report.manifests.unmapped_files.begin(),
                   report.manifests.unmapped_files.end());
  for (const auto& file : all_files) {
    auto extracted = extract_function_names(text::read_file((root / file).string()));
    report.skipped_declaration_lines += extracted.skipped_lines;
    if (!extracted.names.empty()) functions_by_file[file] = std::move(extracted.names);
  }
  for (const auto& [file, names] : extra_index) {
    auto& target = functions_by_file[file];
    for (const auto& name : names)
      if (std::find(target.begin(), target.end(), name) == target.end()) target.push_back(name);
  }

  auto built = build_function_component_map(report.manifests.file_to_component, functions_by_file);
  report.map = std::move(built.map);
  report.warnings = report.manifests.warnings;
  report.warnings.insert(report.warnings.end(), built.warnings.begin(), built.warnings.end());
  return report;
}

}  // namespace kdetector
