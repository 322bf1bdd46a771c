// Command-line entry point of the leakage analysis pipeline.
//
// Exit status: 0 no findings, 1 findings, 2 error.

#include <iostream>

#include "CLI11.hpp"
#include "leakscope/errors.hpp"
#include "leakscope/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Finds secret-dependent control flow and memory accesses in recorded traces"};
  std::string root;
  leakscope::RunOptions options;
  std::string target, out, config;
  app.add_option("root", root, "Project root (uses <root>/microwalk when present)")->required();
  app.add_option("--target", target, "Analyze only this target, e.g. target-aes");
  app.add_flag("--dump-tree", options.dump_tree, "Write <out>/<target>/calltree.txt");
  app.add_flag("--skip-preprocess", options.skip_preprocess, "Reuse the preprocessed cache of an earlier run");
  app.add_option("--out", out, "Output directory (default <base>/results)");
  app.add_option("--config", config, "YAML config with preprocess/analysis/report sections");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!target.empty()) options.target = target;
  if (!out.empty()) options.out = out;
  if (!config.empty()) options.config = config;

  try {
    leakscope::RunSummary summary = leakscope::run_all(root, options, std::cerr);
    std::cout << summary.table;
    return summary.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
