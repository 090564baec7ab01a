// rsgcir command-line driver.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "rsgcir/pipeline.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int exit_code(rsgcir::ErrorCode c) {
  using rsgcir::ErrorCode;
  switch (c) {
    case ErrorCode::SchemaError:
    case ErrorCode::NonWeeklyGrid:
    case ErrorCode::MaturityMismatch:
      return 3;
    default:
      return 4;
  }
}

rsgcir::json versions() {
  return {{"rsgcir", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"fmt", std::to_string(FMT_VERSION)},
          {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                         std::to_string(SPDLOG_VER_PATCH)},
          {"compiler", __VERSION__}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regime-switching GCIR sovereign and credit term-structure toolkit"};
  app.set_version_flag("--version", kVersion);
  std::string config_path, out_dir, log_level = "warn";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out_dir, "output directory (overrides paths.out)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.require_subcommand(1, 1);
  for (const auto& c : rsgcir::pipeline_commands()) app.add_subcommand(c);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  rsgcir::logger()->set_level(spdlog::level::from_str(log_level));
  const std::string cmd = app.get_subcommands().front()->get_name();

  rsgcir::RunContext ctx;
  rsgcir::json manifest;
  manifest["command"] = cmd;
  manifest["config"] = std::filesystem::path(config_path).filename().string();
  manifest["config_sha256"] = sha256_hex(slurp(config_path));
  manifest["versions"] = versions();
  int status = 0;
  try {
    ctx.cfg = rsgcir::load_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (threads) ctx.cfg.threads = *threads;
    ctx.out = out_dir.empty() ? ctx.cfg.out_dir : out_dir;
    manifest["seed"] = ctx.cfg.seed;
    manifest["threads"] = ctx.cfg.threads;
    const auto result = rsgcir::run_pipeline(cmd, ctx);
    status = result.status;
    manifest["status"] = status == 0 ? "ok" : "checks_failed";
    std::cout << result.summary.dump(2) << "\n";
  } catch (const rsgcir::Error& e) {
    status = exit_code(e.code());
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    std::cerr << "rsgcir " << cmd << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    status = 5;
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    std::cerr << "rsgcir " << cmd << ": " << e.what() << "\n";
  }
  if (ctx.out.empty()) return status;
  if (status > 1) ctx.discard_outputs();
  manifest["outputs"] = rsgcir::json::array();
  for (const auto& f : ctx.outputs)
    manifest["outputs"].push_back({{"file", f}, {"sha256", sha256_hex(slurp(ctx.path(f)))}});
  try {
    std::filesystem::create_directories(ctx.out);
    std::ofstream(ctx.path("manifest_" + cmd + ".json"), std::ios::binary) << manifest.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "rsgcir: cannot write manifest: " << e.what() << "\n";
    if (status == 0) status = 5;
  }
  return status;
}
