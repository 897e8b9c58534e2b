// fedsim: run federated-SGD experiments described by a JSON config.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.front() == '-') {
      throw fedsim::ConfigError("--seeds", "not an unsigned integer: \"" + item + "\"");
    }
    seeds.push_back(v);
  }
  return seeds;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fedsim::Error(fedsim::ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated SGD simulator: periodic averaging, decay and consensus methods"};
  std::string config_path;
  std::string out_dir;
  std::string seeds_text;
  std::string method_name;
  bool bounds_only = false;
  bool validate = false;
  std::size_t jobs = 1;

  app.add_option("--config", config_path, "Experiment config (JSON)")->required();
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_option("--seeds", seeds_text, "Comma-separated seeds (overrides the config list)");
  app.add_option("--method", method_name, "Override run.method")
      ->check(CLI::IsMember({"pavg", "decay", "consensus"}));
  app.add_flag("--bounds-only", bounds_only, "Evaluate the bound grid without simulating");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--validate", validate, "Run the lemma and gossip validators only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fedsim::kExitOk : fedsim::kExitConfig;
  }

  fedsim::ExperimentSpec spec;
  try {
    spec = fedsim::load_config(config_path);
    if (!method_name.empty()) {
      const fedsim::Method m = method_name == "pavg"    ? fedsim::Method::kPeriodicAvg
                               : method_name == "decay" ? fedsim::Method::kDecay
                                                        : fedsim::Method::kConsensus;
      fedsim::override_method(spec, m);
    }
    if (!seeds_text.empty()) fedsim::override_seeds(spec, parse_seed_list(seeds_text));
    if (!out_dir.empty()) spec.output.dir = out_dir;
  } catch (const fedsim::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return fedsim::kExitConfig;
  }

  try {
    const std::filesystem::path dir(spec.output.dir);
    if (bounds_only) {
      if (!spec.bounds.present) {
        std::cerr << "config error: bounds-only mode needs a \"bounds\" section\n";
        return fedsim::kExitConfig;
      }
      std::filesystem::create_directories(dir);
      write_text(dir / "bounds.csv", fedsim::bounds_grid_csv(spec.bounds));
      std::cout << "wrote " << (dir / "bounds.csv").string() << '\n';
      return fedsim::kExitOk;
    }

    if (validate) {
      const auto checks = fedsim::run_validators(spec);
      bool all = true;
      std::string csv = "check,value,bound,pass\n";
      for (const auto& c : checks) {
        std::printf("%-26s value=%-14.8g bound=%-14.8g %s\n", c.name.c_str(), c.value, c.bound,
                    c.pass ? "PASS" : "FAIL");
        csv += c.name + ',' + fedsim::format_double(c.value) + ',' + fedsim::format_double(c.bound) +
               ',' + (c.pass ? "1" : "0") + '\n';
        all = all && c.pass;
      }
      std::filesystem::create_directories(dir);
      write_text(dir / "validation.csv", csv);
      return all ? fedsim::kExitOk : fedsim::kExitRunFailure;
    }

    const auto result = fedsim::run_experiment(spec, fedsim::ExperimentOptions{jobs});
    std::cout << result.summaries.size() << " runs, " << result.failures << " failed; output in "
              << dir.string() << '\n';
    for (const auto& s : result.summaries) {
      if (!s.ok) std::cerr << "run " << s.index << " (seed " << s.seed << "): " << s.error << '\n';
    }
    return result.failures == 0 ? fedsim::kExitOk : fedsim::kExitRunFailure;
  } catch (const fedsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fedsim::kExitRunFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fedsim::kExitRunFailure;
  }
}
