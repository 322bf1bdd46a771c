#include "leakscope/pipeline.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <charconv>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "leakscope/calltree.hpp"
#include "leakscope/errors.hpp"
#include "leakscope/preprocessor.hpp"
#include "leakscope/trace_cache.hpp"

namespace leakscope {

namespace fs = std::filesystem;

namespace {

double process_cpu_seconds() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_utime.tv_sec + u.ru_stime.tv_sec) + static_cast<double>(u.ru_utime.tv_usec + u.ru_stime.tv_usec) * 1e-6;
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

double peak_rss_mib() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_maxrss) / 1024.0;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw error(fmt::format("cannot write {}", path.string()));
}

// `<k><ext>` files of `dir`, index = k; throws unless k is dense from 0.
std::vector<fs::path> dense_files(const fs::path& dir, std::string_view ext) {
  std::map<std::uint32_t, fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ext) continue;
    const std::string stem = entry.path().stem().string();
    std::uint32_t k = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), k);
    if (stem.empty() || ec != std::errc{} || ptr != stem.data() + stem.size()) continue;
    found.emplace(k, entry.path());
  }
  std::vector<fs::path> out;
  for (auto& [k, path] : found) {
    if (k != out.size()) throw format_error(fmt::format("non-dense testcase ids in {}: expected {}{}", dir.string(), out.size(), ext));
    out.push_back(path);
  }
  return out;
}

std::string node_source(const std::string& source, const YAML::Node& node) {
  return fmt::format("{}:{}", source, node.Mark().line + 1);
}

template <typename F>
void each_key(const YAML::Node& section, const std::string& source, const std::string& prefix, F&& f) {
  if (section.IsNull()) return;
  if (!section.IsMap()) throw config_error(fmt::format("{}: '{}' must be a mapping", node_source(source, section), prefix));
  for (const auto& kv : section) f(kv.first.as<std::string>(), kv.second);
}

}  // namespace

void apply_config_text(PipelineConfig& config, const std::string& yaml, const std::string& source) {
  try {
    YAML::Node doc = YAML::Load(yaml);
    each_key(doc, source, "<document>", [&](const std::string& key, const YAML::Node& section) {
      auto unknown = [&](const std::string& k, const YAML::Node& n) {
        return config_error(fmt::format("{}: unknown key '{}'", node_source(source, n), k));
      };
      if (key == "preprocess") {
        each_key(section, source, key, [&](const std::string& k, const YAML::Node& v) {
          if (k == "workers") {
            int workers = v.as<int>();
            if (workers < 1) throw config_error(fmt::format("{}: preprocess.workers must be at least 1", node_source(source, v)));
            config.workers = static_cast<std::size_t>(workers);
          } else if (k == "cache") {
            config.cache = v.as<bool>();
          } else {
            throw unknown("preprocess." + k, v);
          }
        });
      } else if (key == "analysis") {
        each_key(section, source, key, [&](const std::string& k, const YAML::Node& v) {
          if (k == "dump-tree") {
            config.dump_tree = v.as<bool>();
          } else {
            throw unknown("analysis." + k, v);
          }
        });
      } else if (key == "report") {
        each_key(section, source, key, [&](const std::string& k, const YAML::Node& v) {
          if (k == "formats") {
            config.text_report = false;
            config.code_quality = false;
            for (const auto& f : v) {
              auto name = f.as<std::string>();
              if (name == "text") {
                config.text_report = true;
              } else if (name == "code-quality") {
                config.code_quality = true;
              } else {
                throw config_error(fmt::format("{}: unknown report format '{}'", node_source(source, f), name));
              }
            }
          } else if (k == "rounding") {
            int digits = v.as<int>();
            if (digits < 0 || digits > 6) throw config_error(fmt::format("{}: report.rounding must be in 0..6", node_source(source, v)));
            config.rounding = digits;
          } else {
            throw unknown("report." + k, v);
          }
        });
      } else {
        throw unknown(key, section);
      }
    });
  } catch (const YAML::Exception& e) {
    throw config_error(fmt::format("{}: {}", source, e.what()));
  }
}

void apply_config_file(PipelineConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error(fmt::format("cannot open config {}", path.string()));
  std::stringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str(), path.string());
}

fs::path project_base(const fs::path& root) {
  if (fs::is_directory(root / "microwalk")) return root / "microwalk";
  return root;
}

std::vector<TargetSpec> discover_targets(const fs::path& base, const fs::path& out) {
  if (!fs::is_directory(base)) throw error(fmt::format("project directory {} does not exist", base.string()));
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(base)) {
    const std::string file = entry.path().filename().string();
    if (entry.is_regular_file() && file.starts_with("target-") && entry.path().extension() == ".js") names.insert(entry.path().stem().string());
  }
  if (fs::is_directory(base / "traces")) {
    for (const auto& entry : fs::directory_iterator(base / "traces")) {
      if (entry.is_directory()) names.insert(entry.path().filename().string());
    }
  }
  if (names.empty()) throw error(fmt::format("no target-*.js wrappers / trace sets in {}", base.string()));
  std::vector<TargetSpec> specs;
  for (const auto& name : names) specs.push_back({name, base / "traces" / name, base / "testcases" / name, out / name});
  return specs;
}

TargetResult run_target(const TargetSpec& spec, const PipelineConfig& config, bool skip_preprocess, std::ostream& log) {
  TargetResult r;
  r.name = spec.name;
  try {
    fs::create_directories(spec.output_dir);
    const fs::path cache_dir = spec.output_dir / "preprocessed";

    CallTree tree;
    double insert_cpu = 0;
    auto consume = [&](PreprocessedTrace&& trace) {
      const double t0 = thread_cpu_seconds();
      tree.insert(trace);
      ++r.trace_count;
      insert_cpu += thread_cpu_seconds() - t0;
    };

    const double p0 = process_cpu_seconds();
    if (skip_preprocess) {
      if (!fs::exists(cache_dir / "map.txt")) {
        throw error(fmt::format("no preprocessed cache in {}; run once without --skip-preprocess", cache_dir.string()));
      }
      auto images = std::make_shared<const ImageTable>(ImageTable::from_files(load_map_file((cache_dir / "map.txt").string()).files));
      std::vector<fs::path> files = dense_files(cache_dir, ".bin");
      if (files.empty()) throw error(fmt::format("preprocessed cache {} is empty", cache_dir.string()));
      for (const auto& f : files) consume(load_trace_cache(f, images));
    } else {
      if (!fs::is_directory(spec.trace_dir)) throw error(fmt::format("missing traces: {} does not exist", spec.trace_dir.string()));
      TraceSet set = discover_traces(spec.trace_dir);
      if (fs::is_directory(spec.testcase_dir)) {
        std::size_t testcases = dense_files(spec.testcase_dir, ".testcase").size();
        if (testcases != set.traces.size()) {
          throw error(fmt::format("{} has {} testcases but {} has {} traces", spec.testcase_dir.string(), testcases, spec.trace_dir.string(),
                                  set.traces.size()));
        }
      }
      if (config.cache) {
        fs::remove_all(cache_dir);
        fs::create_directories(cache_dir);
        fs::copy_file(spec.trace_dir / "map.txt", cache_dir / "map.txt");
      }
      preprocess_each(set, config.workers, [&](PreprocessedTrace&& trace) {
        if (config.cache) save_trace_cache(cache_dir / fmt::format("{}.bin", trace.testcase.value), trace);
        consume(std::move(trace));
      });
    }
    r.cpu.preprocess = std::max(0.0, process_cpu_seconds() - p0 - insert_cpu);

    const double a0 = process_cpu_seconds();
    AnalysisResult result = analyze(tree);
    r.cpu.analyze = insert_cpu + (process_cpu_seconds() - a0);

    const double w0 = process_cpu_seconds();
    r.counts = count_leakages(result, tree.images());
    r.issues = code_quality_issues(result, tree.images(), spec.name, config.rounding, &r.warnings);
    for (const auto& w : r.warnings) log << "warning: " << w << "\n";
    if (config.code_quality) write_file(spec.output_dir / "code-quality.json", render_code_quality(r.issues));
    if (config.text_report) write_file(spec.output_dir / "report.txt", render_detailed_report(result, tree.images(), spec.name, config.rounding));
    if (config.dump_tree) {
      DumpOptions dump;
      dump.show_allocations = true;
      write_file(spec.output_dir / "calltree.txt", dump_tree(tree, dump));
    }
    r.cpu.report = process_cpu_seconds() - w0;
    r.status = r.counts.leakages > 0 ? 1 : 0;
  } catch (const std::exception& e) {
    r.status = 2;
    r.error = e.what();
    log << "error: " << spec.name << ": " << e.what() << "\n";
  }
  r.peak_rss_mib = peak_rss_mib();
  return r;
}

std::string format_summary(const std::vector<TargetResult>& targets) {
  std::size_t width = 6;
  for (const auto& t : targets) width = std::max(width, t.name.size());
  const auto row = [&](std::string_view name, const StageTimes& cpu, std::string_view rss, std::string_view leaks, std::string_view unique,
                       std::string_view status) {
    return fmt::format("{:<{}}  {:>14.2f}  {:>11.2f}  {:>10.2f}  {:>13}  {:>8}  {:>6}  {}\n", name, width, cpu.preprocess, cpu.analyze, cpu.report, rss, leaks,
                       unique, status);
  };
  std::string out = fmt::format("{:<{}}  {:>14}  {:>11}  {:>10}  {:>13}  {:>8}  {:>6}  {}\n", "target", width, "preprocess[s]", "analyze[s]", "report[s]",
                                "peak RSS[MiB]", "leakages", "unique", "status");
  StageTimes total;
  std::size_t leaks = 0;
  std::size_t unique = 0;
  double rss = 0;
  for (const auto& t : targets) {
    total.preprocess += t.cpu.preprocess;
    total.analyze += t.cpu.analyze;
    total.report += t.cpu.report;
    rss = std::max(rss, t.peak_rss_mib);
    const char* status = t.status == 0 ? "ok" : t.status == 1 ? "leaking" : "error";
    if (t.status == 2) {
      out += row(t.name, t.cpu, fmt::format("{:.1f}", t.peak_rss_mib), "-", "-", status);
      continue;
    }
    leaks += t.counts.leakages;
    unique += t.counts.unique;
    out += row(t.name, t.cpu, fmt::format("{:.1f}", t.peak_rss_mib), std::to_string(t.counts.leakages), std::to_string(t.counts.unique), status);
  }
  out += row("total", total, fmt::format("{:.1f}", rss), std::to_string(leaks), std::to_string(unique), fmt::format("{} targets", targets.size()));
  return out;
}

RunSummary run_all(const fs::path& root, const RunOptions& options, std::ostream& log) {
  const fs::path base = project_base(root);
  const fs::path out = options.out ? *options.out : base / "results";

  PipelineConfig config;
  if (options.config) {
    apply_config_file(config, *options.config);
  } else {
    for (const char* name : {"config-preprocess.yml", "config-analyze.yml"}) {
      if (fs::exists(base / name)) apply_config_file(config, base / name);
    }
  }
  if (options.dump_tree) config.dump_tree = true;

  std::vector<TargetSpec> specs = discover_targets(base, out);
  if (options.target) {
    std::erase_if(specs, [&](const TargetSpec& s) { return s.name != *options.target; });
    if (specs.empty()) throw error(fmt::format("target '{}' not found in {}", *options.target, base.string()));
  }

  RunSummary summary;
  std::vector<CodeQualityIssue> all_issues;
  for (const auto& spec : specs) {
    TargetResult r = run_target(spec, config, options.skip_preprocess, log);
    all_issues.insert(all_issues.end(), r.issues.begin(), r.issues.end());
    summary.exit_code = std::max(summary.exit_code, r.status);
    summary.targets.push_back(std::move(r));
  }
  sort_issues(all_issues);
  fs::create_directories(out);
  if (config.code_quality) write_file(out / "code-quality.json", render_code_quality(all_issues));
  summary.table = format_summary(summary.targets);
  write_file(out / "summary.txt", summary.table);
  return summary;
}

}  // namespace leakscope
