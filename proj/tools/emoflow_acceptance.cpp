#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "emoflow/errors.hpp"
#include "emoflow/harness/acceptance.hpp"
#include "emoflow/harness/cli.hpp"

// Trains what the acceptance criteria need from one config and prints one
// PASS/FAIL line per criterion. Exit 0 only when every selected criterion
// passes.

int main(int argc, char** argv) {
  using namespace emoflow::harness;
  CLI::App app{"Acceptance criteria runner", "emoflow_acceptance"};
  std::string config_path, preset_name, out = "runs/acceptance";
  std::vector<int> only;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--preset", preset_name, "base preset");
  app.add_option("--out", out, "directory for dumps, metrics and the result table")->capture_default_str();
  app.add_option("--only", only, "criterion ids to run (default: all)")->check(CLI::Range(1, kCriteria));
  app.add_flag("--quiet", quiet, "suppress progress on standard error");
  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<std::string> preset = preset_name.empty() ? std::nullopt : std::optional(preset_name);
    AcceptanceOptions o;
    o.config = config_path.empty() ? resolve_config(json::object(), preset) : load_config(config_path, preset);
    o.out_dir = out;
    o.only = std::set<int>(only.begin(), only.end());
    if (!quiet) o.log = [](const std::string& s) { std::cerr << s << std::endl; };
    const AcceptanceOutcome res = run_acceptance(o);
    for (const auto& r : res.results) std::cout << format_result(r) << '\n';
    int passed = 0;
    for (const auto& r : res.results) passed += r.pass;
    std::cout << passed << "/" << res.results.size() << " criteria pass\n";
    return res.all_passed() ? kExitOk : kExitNumeric;
  } catch (const emoflow::ConfigError& e) {
    std::cerr << "emoflow_acceptance: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const emoflow::DataError& e) {
    std::cerr << "emoflow_acceptance: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "emoflow_acceptance: " << e.what() << '\n';
    return kExitNumeric;
  }
}
