#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shortlist/pipeline.hpp"

namespace {

int fail(const shortlist::Error& e) {
  std::cerr << shortlist::error_record(e).dump() << std::endl;
  return shortlist::exit_code(e.code());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shortlist: two-stage reranking over precomputed embeddings"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "artifact directory");
  for (const auto& [name, fn] : shortlist::commands()) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(shortlist::Error(shortlist::ErrorCode::ConfigInvalid, e.what(), "arguments"));
  }

  try {
    shortlist::RunConfig cfg = config_path.empty() ? shortlist::RunConfig{} : shortlist::load_config(config_path);
    if (seed) shortlist::apply_seed(cfg, *seed);
    shortlist::run_command(app.get_subcommands().front()->get_name(), cfg, out_dir);
  } catch (const shortlist::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail(shortlist::Error(shortlist::ErrorCode::IoError, e.what(), "unexpected"));
  }
  return 0;
}
