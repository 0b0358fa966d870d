#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mext/cli.hpp"

using namespace mext;
using cli::json;

namespace {

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mext_cli_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

json small_config(const std::string& sub) {
  json circle{{"kind", "circle"}};
  json kernel{{"family", "isotropic"}, {"alpha", 2.0}, {"c", 0.2}, {"h", 0.1}};
  if (sub == "net") return {{"manifold", circle}, {"epsilon", 0.2}, {"candidate_resolution", 2000}};
  if (sub == "voronoi") return {{"manifold", circle}, {"epsilon", 0.2}, {"candidate_resolution", 1000}};
  if (sub == "grid")
    return {{"manifold", circle}, {"structure", {{"block_sizes", {2}}, {"exponents", {2.0}}, {"manifold_dims", {1}}}},
            {"h", 0.5}, {"gamma", 0.5}, {"theta", 1.0}};
  if (sub == "pickands")
    return {{"structure", {{"block_sizes", {1}}, {"exponents", {2.0}}}}, {"T", 4.0}, {"gamma", 0.1}, {"reps", 300}};
  if (sub == "excursion")
    return {{"manifold", circle}, {"kernel", kernel}, {"u", {2.0, 3.0}}, {"reps", 300}, {"grid_resolution", 128},
            {"export_field_reps", 2}};
  if (sub == "chi-excursion")
    return {{"manifold", circle}, {"kernel", kernel}, {"p", 2}, {"u", {3.0}}, {"reps", 300}, {"grid_resolution", 128}};
  if (sub == "evd") return {{"manifold", circle}, {"h", {0.3, 0.2}}, {"reps", 300}};
  if (sub == "tube") return {{"manifold", circle}, {"h", 0.2}, {"trials", 300}};
  return {{"h", 0.2}, {"trials", 300}, {"lattice", 5}};
}

}  // namespace

TEST(Cli, ValidationListsEveryViolation) {
  cli::RunRequest req;
  req.subcommand = "pickands";
  req.config = {{"structure", {{"block_sizes", {1}}, {"exponents", {3.0}}}}, {"T", -1.0}, {"reps", 0}};
  req.out_dir = tmp_dir("invalid");
  try {
    cli::run(req);
    FAIL();
  } catch (const cli::ValidationError& e) {
    ASSERT_EQ(e.messages().size(), 3u) << e.what();
    EXPECT_NE(e.messages()[0].find("α_i ∈ (0,2]"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(req.out_dir));
}

TEST(Cli, RejectsUnknownSubcommandAndVersion) {
  cli::RunRequest req;
  req.subcommand = "plot";
  req.config = json::object();
  EXPECT_THROW(cli::run(req), cli::ValidationError);
  req.subcommand = "net";
  req.config = small_config("net");
  req.config["schema_version"] = 7;
  EXPECT_THROW(cli::run(req), cli::ValidationError);
}

TEST(Cli, PickandsEstimate) {
  cli::RunRequest req;
  req.subcommand = "pickands";
  req.config = {{"structure", {{"block_sizes", {1}}, {"exponents", {2.0}}}}, {"reps", 4000}};
  req.seed = 3;
  req.out_dir = tmp_dir("pickands");
  auto res = cli::run(req);
  ASSERT_EQ(res.files.size(), 1u);
  std::ifstream is(res.files[0]);
  auto doc = json::parse(is);
  EXPECT_NEAR(doc["data"]["estimate"].get<double>(), 1.0 / std::sqrt(M_PI), 0.08);
  EXPECT_EQ(doc["data"]["excluded"].get<int>(), 0);
  EXPECT_EQ(doc["meta"]["seed"].get<int>(), 3);
  EXPECT_EQ(doc["meta"]["config_hash"].get<std::string>().size(), 16u);
  EXPECT_TRUE(doc["meta"].contains("wall_clock_seconds"));
  EXPECT_TRUE(doc["meta"].contains("artifact_version"));
}

TEST(Cli, DataSectionsIdenticalAcrossThreads) {
  for (const auto& sub : cli::subcommands()) {
    cli::RunRequest a;
    a.subcommand = sub;
    a.config = small_config(sub);
    a.config["seed"] = 99;
    a.threads = 1;
    a.out_dir = tmp_dir(sub + "_a");
    cli::RunRequest b = a;
    b.threads = 3;
    b.out_dir = tmp_dir(sub + "_b");
    const auto ra = cli::run(a);
    const auto rb = cli::run(b);
    ASSERT_EQ(ra.files.size(), rb.files.size()) << sub;
    for (std::size_t i = 0; i < ra.files.size(); ++i) {
      EXPECT_EQ(std::filesystem::path(ra.files[i]).parent_path(), std::filesystem::path(a.out_dir)) << sub;
      const auto da = cli::data_section(ra.files[i]);
      EXPECT_FALSE(da.empty()) << sub;
      EXPECT_EQ(da, cli::data_section(rb.files[i])) << sub << " " << ra.files[i];
    }
  }
  set_max_threads(0);
}

TEST(Cli, SeedChangesData) {
  cli::RunRequest a;
  a.subcommand = "excursion";
  a.config = small_config("excursion");
  a.out_dir = tmp_dir("seed_a");
  cli::RunRequest b = a;
  b.seed = 12345;
  b.out_dir = tmp_dir("seed_b");
  EXPECT_NE(cli::data_section(cli::run(a).files[0]), cli::data_section(cli::run(b).files[0]));
}
