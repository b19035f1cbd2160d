#include "fiberpath/cli.hpp"
#include "fiberpath/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace fiberpath;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("fiberpath_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        unsetenv("FIBERPATH_SEED");
        unsetenv("FIBERPATH_THREADS");
    }
    void TearDown() override
    {
        fs::remove_all(dir_);
        unsetenv("FIBERPATH_SEED");
        unsetenv("FIBERPATH_THREADS");
    }

    std::string write_config(const std::string& name, const std::string& body) const
    {
        const auto p = dir_ / name;
        std::ofstream(p) << body;
        return p.string();
    }

    int run(std::vector<std::string> args)
    {
        args.insert(args.begin(), "fiberpath");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        out_.str("");
        err_.str("");
        return cli::run(int(argv.size()), argv.data(), out_, err_);
    }

    std::string slurp(const fs::path& p) const
    {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream s;
        s << is.rdbuf();
        return s.str();
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

const char* free_energy = R"(e = 0.0
[model]
kind = "reference"
[path]
n_steps = 16
n_paths = 400
seed = 7
[estimator]
P = [[0.0, 0.0, 0.0]]
t_ladder = [1.0, 2.0]
[output]
prefix = "run"
)";

}  // namespace

TEST(Toml, TablesArraysAndScalars)
{
    const auto d = toml::parse(R"(
# comment
e = [0.1, 0.2]   # trailing
flag = true
n = -3
[model]
kind = "modes"
modes_k = [
  [0.0, 0.0, 1.0],  # first
  [1.0, 0.0, 0.0],
]
[path.extra]
name = "a\"b\\c\tq"
x = 1e-3
)");
    EXPECT_EQ(d["e"].size(), 2u);
    EXPECT_TRUE(d["flag"].get<bool>());
    EXPECT_EQ(d["n"].get<long>(), -3);
    EXPECT_EQ(d["model"]["kind"], "modes");
    EXPECT_EQ(d["model"]["modes_k"][1][0].get<double>(), 1.0);
    EXPECT_EQ(d["path"]["extra"]["name"], "a\"b\\c\tq");
    EXPECT_DOUBLE_EQ(d["path"]["extra"]["x"].get<double>(), 1e-3);
}

TEST(Toml, ErrorsCarryLineNumbers)
{
    try {
        toml::parse("a = 1\n\na = 2\n");
        FAIL() << "duplicate key accepted";
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(toml::parse("a = \"open\n"), config_error);
    EXPECT_THROW(toml::parse("a = [1, 2\n"), config_error);
    EXPECT_THROW(toml::parse("= 3\n"), config_error);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected)
{
    EXPECT_THROW(make_config(toml::parse("bogus = 1\n")), config_error);
    EXPECT_THROW(make_config(toml::parse("[path]\nn_stpes = 8\n")), config_error);
    EXPECT_THROW(make_config(toml::parse("[model]\nkind = \"lattice\"\n")), config_error);
    EXPECT_THROW(make_config(toml::parse("[path]\nn_paths = -4\n")), config_error);
    EXPECT_THROW(make_config(toml::parse("e = \"strong\"\n")), config_error);
    const auto c = make_config(toml::parse("e = 0.25\n"));
    ASSERT_EQ(c.e.size(), 1u);
    EXPECT_EQ(c.e[0], 0.25);
    EXPECT_EQ(c.model.kind, "reference");
}

TEST_F(Cli, ValidationErrorWritesNothing)
{
    const auto cfg = write_config("bad.toml", std::string(free_energy) + "[oracle]\nn_mux = 3\n");
    EXPECT_EQ(run({"energy", "--config", cfg, "--out", (dir_ / "o").string()}), cli::validation);
    EXPECT_FALSE(fs::exists(dir_ / "o"));
    const auto j = nlohmann::json::parse(err_.str());
    EXPECT_EQ(j["exit"], 2);
    EXPECT_NE(j["error"].get<std::string>().find("n_mux"), std::string::npos);
    EXPECT_EQ(run({"energy"}), cli::validation);
    EXPECT_EQ(run({"nonsense"}), cli::validation);
}

TEST_F(Cli, FreeEnergyAtRestIsZero)
{
    const auto cfg = write_config("free.toml", free_energy);
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", dir_.string()}), cli::ok) << err_.str();
    std::istringstream csv(slurp(dir_ / "run.csv"));
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    EXPECT_EQ(header, "P_x,P_y,P_z,e,t1,t2,E_hat,stderr,n_paths,n_steps");
    EXPECT_EQ(row, "0,0,0,0,1,2,0,0,400,16");
    const auto j = nlohmann::json::parse(slurp(dir_ / "run.json"));
    EXPECT_EQ(j["schema_version"], cli::schema_version);
    EXPECT_EQ(j["exit"], 0);
    EXPECT_EQ(j["seed"], 7);
    EXPECT_EQ(j["config"]["path"]["n_paths"], 400);
}

TEST_F(Cli, OutputIsByteIdenticalAcrossRunsAndThreadCounts)
{
    std::string body = free_energy;
    body.replace(0, 7, "e = 0.5");
    const auto cfg = write_config("e.toml", body);
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", (dir_ / "a").string()}), cli::ok) << err_.str();
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", (dir_ / "b").string()}), cli::ok);
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", (dir_ / "c").string(), "--threads", "3"}), cli::ok);
    const auto a = slurp(dir_ / "a" / "run.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir_ / "b" / "run.csv"));
    EXPECT_EQ(a, slurp(dir_ / "c" / "run.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "run.json"), slurp(dir_ / "b" / "run.json"));
}

TEST_F(Cli, SeedPrecedence)
{
    const auto cfg = write_config("s.toml", free_energy);
    auto seed = [&] { return nlohmann::json::parse(slurp(dir_ / "run.json"))["seed"].get<long>(); };
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", dir_.string()}), cli::ok);
    EXPECT_EQ(seed(), 7);
    setenv("FIBERPATH_SEED", "11", 1);
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", dir_.string()}), cli::ok);
    EXPECT_EQ(seed(), 11);
    ASSERT_EQ(run({"energy", "--config", cfg, "--out", dir_.string(), "--seed", "13"}), cli::ok);
    EXPECT_EQ(seed(), 13);
    setenv("FIBERPATH_SEED", "x1", 1);
    EXPECT_EQ(run({"energy", "--config", cfg, "--out", dir_.string()}), cli::validation);
}

TEST_F(Cli, StatisticalFailureKeepsTheSummaryOnly)
{
    // a fast phase and few paths: some batch sums of Z go negative
    const auto cfg = write_config("st.toml", R"(e = 0.0
[path]
n_steps = 8
n_paths = 64
seed = 1
[estimator]
P = [[6.0, 0.0, 0.0]]
t_ladder = [1.0, 2.0]
[output]
prefix = "st"
)");
    EXPECT_EQ(run({"energy", "--config", cfg, "--out", dir_.string()}), cli::statistical);
    EXPECT_FALSE(fs::exists(dir_ / "st.csv"));
    const auto j = nlohmann::json::parse(slurp(dir_ / "st.json"));
    EXPECT_EQ(j["exit"], 3);
    EXPECT_EQ(j["errors"][0]["kind"], "statistical");
}

TEST_F(Cli, CheckPolarizationPasses)
{
    ASSERT_EQ(run({"check-polarization", "--samples", "500"}), cli::ok);
    const auto j = nlohmann::json::parse(out_.str());
    for (const char* name : {"meridian", "axis-cross"}) {
        ASSERT_TRUE(j.contains(name));
        EXPECT_TRUE(j[name]["pass"].get<bool>()) << name;
        EXPECT_EQ(j[name]["samples"], 500);
    }
    EXPECT_EQ(run({"check-polarization", "--construction", "diagonal"}), cli::validation);
}

TEST_F(Cli, KernelTableIsReproducible)
{
    const auto cfg = write_config("k.toml", R"([model]
kind = "continuum"
cutoff = 1.0
tau_max = 0.25
r_max = 2.0
[path]
t = [0.25]
[output]
prefix = "k"
)");
    ASSERT_EQ(run({"kernel-table", "--config", cfg, "--out", (dir_ / "a").string()}), cli::ok) << err_.str();
    ASSERT_EQ(run({"kernel-table", "--config", cfg, "--out", (dir_ / "b").string()}), cli::ok);
    const auto a = slurp(dir_ / "a" / "k.fpk");
    EXPECT_GT(a.size(), 64u);
    EXPECT_EQ(a, slurp(dir_ / "b" / "k.fpk"));
    ASSERT_EQ(run({"kernel-table", "--config", cfg, "--inspect", (dir_ / "a" / "k.fpk").string()}), cli::ok)
        << err_.str();
    const auto j = nlohmann::json::parse(out_.str());
    EXPECT_EQ(j["tau_max"], 0.25);
    EXPECT_EQ(j["r_max"], 2.0);
}

TEST_F(Cli, VersionAndHelp)
{
    EXPECT_EQ(run({"--version"}), cli::ok);
    EXPECT_FALSE(out_.str().empty());
    EXPECT_EQ(run({"--help"}), cli::ok);
    EXPECT_NE(out_.str().find("compare-oracle"), std::string::npos);
}
