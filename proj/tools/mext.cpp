#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mext/cli.hpp"

namespace {

int report_error(const std::string& kind, const std::vector<std::string>& messages) {
  nlohmann::json e{{"error", {{"kind", kind}, {"messages", messages}}}};
  std::cerr << e.dump(2) << '\n';
  return kind == "validation" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mext: excursion probabilities and extreme-value limits of Gaussian fields on manifolds"};
  app.set_version_flag("--version", std::string(MEXT_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  for (const auto& name : mext::cli::subcommands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "worker cap, 0 = hardware (results do not depend on it)");
    sub->add_option("--out", out_dir, "output directory");
  }
  CLI11_PARSE(app, argc, argv);

  mext::cli::RunRequest req;
  req.subcommand = app.get_subcommands().front()->get_name();
  req.seed = seed;
  req.threads = threads;
  req.out_dir = out_dir;
  try {
    std::ifstream is(config_path);
    req.config = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    return report_error("parse", {config_path + ": " + e.what()});
  }
  try {
    const auto res = mext::cli::run(req);
    for (const auto& f : res.files) std::cout << f << '\n';
  } catch (const mext::cli::ValidationError& e) {
    return report_error("validation", e.messages());
  } catch (const std::exception& e) {
    return report_error("runtime", {e.what()});
  }
  return 0;
}
