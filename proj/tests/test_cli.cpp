#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(STABLESKETCH_CLI) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    std::string out;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("stablesketch_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SketchWritesFileOfExpectedSize) {
    std::ofstream(path("m.csv")) << "1,2,3,4\n0,1,0,1\n5,5,5,5\n";
    const auto r = run("sketch " + path("m.csv") + " --alpha 1 --k 2 --seed 7 -o " + path("m.sskp"));
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("n=3 k=2"), std::string::npos);
    EXPECT_EQ(fs::file_size(path("m.sskp")), 40u + 3 * 2 * 8);
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(run("sketch " + path("missing.csv") + " --alpha 1 --k 2 -o " + path("x")).code, 2);
    std::ofstream(path("m.csv")) << "1,2\n3,4\n";
    EXPECT_EQ(run("sketch " + path("m.csv") + " --alpha 2.5 --k 2 -o " + path("x")).code, 3);
    EXPECT_EQ(run("sketch " + path("m.csv") + " --k 2 -o " + path("x")).code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("simulate mse --replicates 0 --alphas 1 --ks 10").code, 1);
    EXPECT_EQ(run("bounds --alpha 1 --eps 0.5 --delta 0.05 --n 10 --T 10").code, 1);
    std::ofstream(path("bad.csv")) << "1,2\n3\n";
    EXPECT_EQ(run("sketch " + path("bad.csv") + " --alpha 1 --k 2 -o " + path("x")).code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, EstimatePairsAndAll) {
    std::ostringstream csv;
    for (int i = 0; i < 100; ++i) csv << i << "," << (i % 7) << "," << (i % 3) << "\n";
    std::ofstream(path("m.csv")) << csv.str();
    ASSERT_EQ(run("sketch " + path("m.csv") + " --alpha 1.5 --k 20 -o " + path("s.sskp")).code, 0);
    const auto pairs = run("estimate " + path("s.sskp") + " --pairs \"0,0;0,1\"");
    EXPECT_EQ(pairs.code, 0);
    EXPECT_NE(pairs.out.find("0,0,0\n"), std::string::npos);
    const auto all = run("estimate " + path("s.sskp") + " --all --estimator gm");
    EXPECT_EQ(all.code, 0);
    EXPECT_EQ(count_lines(all.out), 1 + 4950);
    EXPECT_EQ(run("estimate " + path("s.sskp") + " --pairs 0,1 --estimator hm").code, 3);
    EXPECT_EQ(run("estimate " + path("s.sskp") + " --pairs 0,1 --all").code, 1);
    const auto kern = run("estimate " + path("s.sskp") + " --pairs 0,0 --kernel 0.5");
    EXPECT_NE(kern.out.find("0,0,1\n"), std::string::npos);
}

TEST_F(CliTest, OqcCalibrationMiss) {
    std::ofstream(path("m.csv")) << "1,2\n3,4\n";
    ASSERT_EQ(run("sketch " + path("m.csv") + " --alpha 1 --k 12 -o " + path("s.sskp")).code, 0);
    std::ofstream(path("bias.csv")) << "alpha,k,B,stderr,replicates,seed\n1,10,1.2,0.001,100000,1\n1,20,1.1,0.001,100000,1\n";
    EXPECT_EQ(run("estimate " + path("s.sskp") + " --pairs 0,1 --calibration " + path("bias.csv") + " --no-interpolate")
                  .code,
              4);
    EXPECT_EQ(run("estimate " + path("s.sskp") + " --pairs 0,1 --calibration " + path("bias.csv")).code, 0);
    EXPECT_EQ(run("estimate " + path("s.sskp") + " --pairs 0,1 --estimator oqc").code, 3);
}

TEST_F(CliTest, QStarLines) {
    const auto r = run("qstar --alpha 1");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out.rfind("1.0,0.5,", 0), 0u);
    const auto z = run("qstar --alpha 0+");
    EXPECT_EQ(z.out.rfind("0+,0.2031", 0), 0u);
    EXPECT_EQ(run("qstar --alpha abc").code, 1);
    EXPECT_EQ(run("qstar --alpha 3").code, 3);
}

TEST_F(CliTest, BoundsReportsPlannedK) {
    const auto r = run("bounds --alpha 1 --q 0.5 --eps 0.5 --delta 0.05 --T 10");
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
    EXPECT_GE(j["k"].get<int>(), 120);
    EXPECT_LE(j["k"].get<int>(), 216);
    EXPECT_EQ(j["regime"], "fraction_T");
}

TEST_F(CliTest, SimulateWritesCsvAndManifest) {
    const std::string args = "simulate tail --alphas 1 --ks 10 --eps 0.5 --replicates 500 --seed 3 -o ";
    ASSERT_EQ(run(args + path("a.csv") + " --manifest " + path("m.json")).code, 0);
    ASSERT_EQ(run(args + path("b.csv")).code, 0);
    std::ifstream a(path("a.csv")), b(path("b.csv"));
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str().rfind("alpha,k,estimator,metric,value,stderr\n", 0), 0u);
    std::ifstream m(path("m.json"));
    const auto j = nlohmann::json::parse(m);
    EXPECT_EQ(j["seed"], 3);
    EXPECT_EQ(j["experiment"], "tail");
}

TEST_F(CliTest, CalibrateRefusesTinyRuns) {
    EXPECT_NE(run("calibrate --alphas 1 --ks 10 --replicates 1000 -o " + path("b.csv")).code, 0);
}
