#pragma once

// Seeded synthetic corpus: a small component-structured source tree with
// SET_COMPONENT manifests, plus groups of crash dumps that share an
// underlying stack and differ by frame-level noise. Every backtrace is wrapped
// in two scaffold frames (a signal handler on top, a thread entry at the
// bottom) that never appear in the exception block.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kdetector/error.hpp"
#include "kdetector/text.hpp"

namespace kdetector::synth {

struct Options {
  std::size_t groups = 50;
  std::size_t per_group = 4;
  double noise = 0.2;
  std::uint64_t seed = 7;
  std::size_t components = 12;
  std::size_t functions_per_component = 16;
  /// Number of components that can sit on top of a stack; small values make
  /// negatives with a shared top component plentiful.
  std::size_t top_components = 4;
};

inline const std::vector<std::string>& scaffold_functions() {
  static const std::vector<std::string> kScaffold{"rt::CrashHandler::onSignal", "rt::Thread::run"};
  return kScaffold;
}

struct Corpus {
  Options options;
  /// Root-relative path -> content for the source tree (manifests + declarations).
  std::map<std::string, std::string> source_files;
  /// dump_id -> dump text, ids in generation order d0000, d0001, ...
  std::map<std::string, std::string> dumps;
  /// dump_id -> group index
  std::map<std::string, std::size_t> group_of;
  /// Ground truth used while generating.
  std::map<std::string, std::string> function_to_component;
};

namespace detail {

inline std::string two_digits(std::size_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

struct Frame {
  std::string function;
  std::string file;
};

}  // namespace detail

inline Corpus generate(const Options& opt) {
  if (opt.groups == 0 || opt.per_group == 0) throw Error(ErrorCode::FormatError, "synth needs groups and per-group > 0");
  if (opt.noise < 0.0 || opt.noise > 1.0) throw Error(ErrorCode::FormatError, "synth noise must lie in [0, 1]");
  if (opt.components < 2 || opt.functions_per_component < 4)
    throw Error(ErrorCode::FormatError, "synth needs >= 2 components and >= 4 functions each");

  Corpus corpus;
  corpus.options = opt;
  std::mt19937_64 rng(opt.seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

  // Source tree. Component k lives in src/cKK; its functions are spread over
  // four files per directory, one nested directory without a manifest, and a
  // `shared.cpp` whose functions are assigned to the next component through a
  // file override.
  const std::size_t nc = opt.components;
  std::vector<std::vector<detail::Frame>> by_component(nc + 1);
  corpus.source_files["src/CMakeLists.txt"] = "# synthetic source tree\nproject(synthetic)\n";
  for (std::size_t c = 0; c < nc; ++c) {
    const std::string cc = detail::two_digits(c);
    const std::string name = "comp" + cc;
    const std::string other = "comp" + detail::two_digits((c + 1) % nc);
    const std::string dir = "src/c" + cc;
    corpus.source_files[dir + "/CMakeLists.txt"] =
        "# All files in this directory and its sub-directories belong to " + name + "\nSET_COMPONENT(\"" + name +
        "\")\n# Except for shared.cpp\nSET_COMPONENT(\"" + other + "\"\n    shared.cpp\n)\n";
    std::map<std::string, std::string> decls;
    for (std::size_t f = 0; f < opt.functions_per_component; ++f) {
      const std::string fn = "c" + cc + "::Class" + std::to_string(f / 4) + "::fn" + std::to_string(f);
      std::string file = f % 5 == 4 ? dir + "/detail/impl" + std::to_string(f % 2) + ".cpp"
                                    : dir + "/file" + std::to_string(f % 4) + ".cpp";
      decls[file] += "fn " + fn + "\n";
      corpus.function_to_component[fn] = name;
      by_component[c].push_back({fn, file});
    }
    const std::string shared = dir + "/shared.cpp";
    const std::string shared_fn = "c" + cc + "::Shared::helper";
    decls[shared] += "fn " + shared_fn + "\n";
    corpus.function_to_component[shared_fn] = other;
    by_component[(c + 1) % nc].push_back({shared_fn, shared});
    for (auto& [file, body] : decls) corpus.source_files[file] = "// synthetic declarations\n" + body;
  }
  corpus.source_files["src/runtime/CMakeLists.txt"] = "SET_COMPONENT(\"runtime\")\n";
  corpus.source_files["src/runtime/runtime.cpp"] =
      "fn " + scaffold_functions()[0] + "\nfn " + scaffold_functions()[1] + "\n";
  for (const auto& s : scaffold_functions()) corpus.function_to_component[s] = "runtime";
  std::map<std::string, std::size_t> owner;
  for (std::size_t c = 0; c < nc; ++c)
    for (const auto& f : by_component[c]) owner[f.function] = c;

  static const char* kReturnTypes[] = {"void", "int", "bool", "Status*", "std::vector<int, std::allocator<int> >",
                                       "const char*"};
  static const char* kParams[] = {"", "int", "char const*, unsigned long", "Context&", "std::string const&"};
  auto frame_line = [&](std::size_t index, const detail::Frame& f) {
    char offset[32];
    std::snprintf(offset, sizeof offset, "0x%zx", uniform(16, 4095));
    return std::to_string(index) + ": " + kReturnTypes[uniform(0, std::size(kReturnTypes) - 1)] + " " + f.function +
           "(" + kParams[uniform(0, std::size(kParams) - 1)] + ") + " + offset + " at " + f.file + ":" +
           std::to_string(uniform(10, 900)) + "\n";
  };
  const detail::Frame top_scaffold{scaffold_functions()[0], "src/runtime/runtime.cpp"};
  const detail::Frame bottom_scaffold{scaffold_functions()[1], "src/runtime/runtime.cpp"};

  using namespace std::chrono;
  const sys_seconds base = sys_days{year{2020} / January / 1};
  std::size_t dump_index = 0;
  for (std::size_t g = 0; g < opt.groups; ++g) {
    // Underlying stack of the group: 3-6 component runs of 1-3 functions.
    std::vector<detail::Frame> signature;
    std::size_t component = uniform(0, std::min(opt.top_components, nc) - 1);
    const std::size_t runs = uniform(3, 6);
    for (std::size_t r = 0; r < runs; ++r) {
      if (r > 0) {
        std::size_t next = uniform(0, nc - 2);
        component = next >= component ? next + 1 : next;
      }
      auto pool = by_component[component];
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t len = uniform(1, 3);
      for (std::size_t k = 0; k < len; ++k) signature.push_back(pool[k]);
    }

    for (std::size_t d = 0; d < opt.per_group; ++d, ++dump_index) {
      std::vector<detail::Frame> frames;
      for (const auto& f : signature) {
        if (!chance(opt.noise)) {
          frames.push_back(f);
          continue;
        }
        const auto& pool = by_component[owner.at(f.function)];
        switch (uniform(0, 2)) {
          case 0: frames.push_back(pool[uniform(0, pool.size() - 1)]); break;  // substitute
          case 1: break;                                                        // delete
          default:                                                              // insert
            frames.push_back(f);
            frames.push_back(pool[uniform(0, pool.size() - 1)]);
        }
      }
      if (frames.empty()) frames.push_back(signature.front());

      char id[24];
      std::snprintf(id, sizeof id, "d%04zu", dump_index);
      std::string body = "[HEADER]\ndump_id: " + std::string(id) + "\npid: " + std::to_string(10000 + dump_index) +
                         "\ntime: " + text::format_time(base + hours(dump_index)) +
                         "\n[BUILD]\nversion: synthetic-" + std::to_string(opt.seed) + "\n[CRASH_STACK]\n";
      body += "exception:\n";
      const std::size_t exception_len = std::min<std::size_t>(frames.size(), uniform(1, 3));
      for (std::size_t i = 0; i < exception_len; ++i) body += frame_line(i, frames[i]);
      body += "backtrace:\n";
      std::size_t index = 0;
      body += frame_line(index++, top_scaffold);
      body += " SFrame: 0x" + std::to_string(uniform(100000, 999999)) + "\n";
      for (const auto& f : frames) {
        body += frame_line(index++, f);
        if (chance(0.1)) body += std::to_string(index++) + ": 0x00007f" + std::to_string(uniform(100000, 999999)) + " <no symbol>\n";
        if (chance(0.2)) body += " Params: this=0x" + std::to_string(uniform(1000, 9999)) + "\n";
      }
      body += frame_line(index++, bottom_scaffold);
      body += "[CPUINFO]\ncores: 8\n[MEMMAP]\n0x400000-0x800000 r-xp\n";
      corpus.dumps[id] = std::move(body);
      corpus.group_of[id] = g;
    }
  }
  return corpus;
}

/// Writes `src/...` and `dumps/<id>.dump` under `dir`, plus `groups.tsv`
/// (`dump_id<TAB>group`).
inline void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const auto& [rel, content] : corpus.source_files) {
    fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    text::write_file(p.string(), content);
  }
  fs::create_directories(dir / "dumps");
  std::string groups;
  for (const auto& [id, content] : corpus.dumps) {
    text::write_file((dir / "dumps" / (id + ".dump")).string(), content);
    groups += id + "\t" + std::to_string(corpus.group_of.at(id)) + "\n";
  }
  text::write_file((dir / "groups.tsv").string(), groups);
}

}  // namespace kdetector::synth
