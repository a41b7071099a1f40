#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "rde/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"random-environment diffusion toolbox"};
  app.require_subcommand(0, 1);

  std::string config_path, seed, workers, out_dir, stage;
  app.add_option("--config", config_path, "config file (key = value sections)");
  app.add_option("--seed", seed, "override [run] seed");
  app.add_option("--workers", workers, "override [run] workers");
  app.add_option("--out", out_dir, "override [run] out");

  bool list_registry = false;
  std::string rerun_hash;
  app.add_flag("--registry", list_registry, "list prior runs in the out dir");
  app.add_option("--rerun", rerun_hash, "re-run a prior config by hash");

  std::vector<CLI::App*> subs;
  for (const char* name :
       {"env", "sde", "criterion", "oned", "green", "example"}) {
    CLI::App* s = app.add_subcommand(name);
    s->fallthrough();  // let global options appear after the subcommand
    s->add_option("stage", stage, "operation within the subcommand");
    subs.push_back(s);
  }

  CLI11_PARSE(app, argc, argv);

  if (list_registry) {
    const auto entries = rde::seed_registry(out_dir.empty() ? "out" : out_dir);
    for (const auto& e : entries) {
      if (e.corrupt)
        std::printf("%s  CORRUPT\n", e.hash.c_str());
      else
        std::printf("%s  %s/%s seed=%llu  %s\n", e.hash.c_str(),
                    e.subcommand.c_str(), e.stage.c_str(),
                    static_cast<unsigned long long>(e.seed),
                    e.headline.c_str());
    }
    return 0;
  }
  if (!rerun_hash.empty()) {
    const rde::RunResult res =
        rde::rerun_by_hash(out_dir.empty() ? "out" : out_dir, rerun_hash);
    std::fprintf(res.status == 0 ? stdout : stderr, "%s\n",
                 res.message.c_str());
    return res.status;
  }

  rde::ConfigFile cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "cannot open config file %s\n",
                   config_path.c_str());
      return 2;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      cfg = rde::parse_config(ss.str());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return 2;
    }
  }
  for (CLI::App* s : subs)
    if (s->parsed()) cfg.set("run", "subcommand", s->get_name());
  if (!stage.empty()) cfg.set("run", "stage", stage);
  if (!seed.empty()) cfg.set("run", "seed", seed);
  if (!workers.empty()) cfg.set("run", "workers", workers);
  if (!out_dir.empty()) cfg.set("run", "out", out_dir);

  const rde::RunResult res = rde::run_config(cfg);
  std::fprintf(res.status == 0 ? stdout : stderr, "%s\n", res.message.c_str());
  if (res.status == 0)
    for (const std::string& a : res.artifacts)
      std::printf("wrote %s/%s\n", cfg.get("run", "out", "out").c_str(),
                  a.c_str());
  return res.status;
}
