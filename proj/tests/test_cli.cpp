#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "gapcert/models.hpp"

using gapcert::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

// Value of "key: value" in command output.
std::string field(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
  return {};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST(Cli, GapOfOpenHeisenbergChain) {
  const auto r = call({"gap", "--model", "heisenberg-ferro", "--D", "1", "--n", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(field(r.out, "gap")), 1.0 - std::cos(M_PI / 6), 1e-11);
  EXPECT_EQ(field(r.out, "kernel_dim"), "7");
  EXPECT_EQ(field(r.out, "dimension"), "64");
}

TEST(Cli, GapOfPeriodicAklt) {
  const auto r = call({"gap", "--model", "aklt", "--D", "1", "--n", "3", "--boundary", "periodic"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "kernel_dim"), "1");
  EXPECT_EQ(field(r.out, "dimension"), "81");
}

TEST(Cli, CertifyReportsMarginAndCertification) {
  const auto r = call({"certify", "--model", "aklt", "--theorem", "gm", "--n", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "certified"), "true");
  EXPECT_EQ(field(r.out, "threshold"), "0.3");
  const auto h = call({"certify", "--model", "heisenberg-ferro", "--theorem", "lm", "--n", "8"});
  ASSERT_EQ(h.code, 0);
  EXPECT_EQ(field(h.out, "certified"), "false");
}

TEST(Cli, ConfigErrorsExitThree) {
  EXPECT_EQ(call({}).code, 3);
  EXPECT_EQ(call({"frobnicate"}).code, 3);
  EXPECT_EQ(call({"gap", "--model", "heisenberg-ferro"}).code, 3);  // --n required
  EXPECT_EQ(call({"gap", "--model", "/nonexistent/model", "--n", "2"}).code, 3);
  EXPECT_EQ(call({"gap", "--model", "heisenberg-ferro", "--n", "2", "--boundary", "twisted"}).code, 3);
  EXPECT_EQ(call({"certify", "--model", "aklt", "--theorem", "main", "--D", "3", "--n", "1"}).code, 3);
  EXPECT_EQ(call({"certify", "--model", "aklt", "--theorem", "gm", "--D", "2", "--n", "4"}).code, 3);
  EXPECT_EQ(call({"certify", "--model", "random", "--rank", "3", "--theorem", "gm", "--n", "4"}).code, 3);
  EXPECT_EQ(call({"verify"}).code, 3);
  EXPECT_EQ(call({"sweep", "--model", "aklt", "--n-min", "5", "--n-max", "4"}).code, 3);
  // Dimension beyond the matvec limit.
  EXPECT_EQ(call({"gap", "--model", "heisenberg-ferro", "--D", "3", "--n", "4"}).code, 3);
}

TEST(Cli, MalformedModelFileExitsThreeWithPosition) {
  const auto path = (std::filesystem::temp_directory_path() / "gapcert_cli_bad.txt").string();
  {
    std::ofstream f(path);
    f << "d=2\n0,0 0,0 0,0\n";
  }
  const auto r = call({"gap", "--model", path, "--n", "2"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Cli, ModelFileIsAccepted) {
  const auto path = (std::filesystem::temp_directory_path() / "gapcert_cli_model.txt").string();
  gapcert::save_model(path, gapcert::aklt());
  const auto r = call({"certify", "--model", path, "--theorem", "gm", "--n", "5"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "certified"), "true");
  std::filesystem::remove(path);
}

TEST(Cli, NonConvergenceExitsTwo) {
  ::setenv("GAPCERT_DENSE_LIMIT", "16", 1);
  const auto r = call({"gap", "--model", "heisenberg-ferro", "--D", "1", "--n", "7", "--max-matvecs", "3"});
  ::unsetenv("GAPCERT_DENSE_LIMIT");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("numerical failure"), std::string::npos);
}

TEST(Cli, VerifySubcommandsPass) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"verify", "counting", "--D", "2", "--n", "2"},
           {"verify", "square-identity", "--D", "1", "--N", "3"},
           {"verify", "cauchy-schwarz", "--d", "2", "--samples", "20"},
           {"verify", "per-box", "--D", "2", "--n", "1"},
           {"verify", "coarse-grain-identity", "--R", "1"}}) {
    const auto r = call(args);
    EXPECT_EQ(r.code, 0) << args[1] << "\n" << r.out << r.err;
    EXPECT_EQ(field(r.out, "result"), "PASS") << args[1];
  }
}

TEST(Cli, CountingOutOfRegimeFailsWithExitOne) {
  const auto r = call({"verify", "counting", "--D", "2", "--n", "3", "--N", "2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(field(r.out, "result"), "FAIL");
}

TEST(Cli, SweepCsvIsByteDeterministic) {
  const std::vector<std::string> args{"sweep", "--model", "heisenberg-ferro", "--theorem", "gm", "--n-min", "3",
                                      "--n-max", "7"};
  const auto a = call(args), b = call(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto ls = lines(a.out);
  ASSERT_EQ(ls.size(), 1u + 5u + 3u);
  EXPECT_EQ(ls[0], "model,D,n,boundary,gap,kernel_dim,threshold_main,threshold_gm,threshold_lm,margin_selected,runtime_ms");
  EXPECT_EQ(ls[2], "heisenberg-ferro,1,4,open,0.292893218813,5,0.375,0.3,1.22474487139,-0.00710678118655,NA");
  EXPECT_EQ(ls[6].rfind("# fit:", 0), 0u);
  EXPECT_EQ(ls[8], "# theorem=gm first_positive_margin=none");
}

TEST(Cli, SweepWritesFileAndFindsAkltCrossing) {
  const auto path = (std::filesystem::temp_directory_path() / "gapcert_sweep.csv").string();
  const auto r = call({"sweep", "--model", "aklt", "--theorem", "gm", "--n-min", "3", "--n-max", "6", "--output", path});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  const auto ls = lines(ss.str());
  ASSERT_FALSE(ls.empty());
  EXPECT_EQ(ls.back(), "# theorem=gm first_positive_margin=4");
  std::filesystem::remove(path);
}

TEST(Cli, SweepTimingColumnIsNumericWhenRequested) {
  const auto r = call({"sweep", "--model", "heisenberg-ferro", "--theorem", "gm", "--n-min", "3", "--n-max", "3",
                       "--timing"});
  ASSERT_EQ(r.code, 0);
  const auto row = lines(r.out)[1];
  EXPECT_EQ(row.find(",NA\n"), std::string::npos);
  EXPECT_NE(row.substr(row.rfind(',') + 1), "NA");
}
