#include "gsamp/gsamp.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gsamp;

namespace {

/// Fresh scratch directory per test.
fs::path scratch()
{
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const fs::path dir = fs::temp_directory_path() / "gsamp_cli_tests" /
                         (std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs the CLI; stdout and stderr land in dir/stdout.txt and dir/stderr.txt.
int run(const std::string& args, const fs::path& dir)
{
    const std::string cmd = std::string(GSAMP_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string data(const std::string& name)
{
    return (fs::path(GSAMP_DATA_DIR) / name).string();
}

SamplingDistribution read_distribution(const fs::path& p)
{
    std::ifstream in(p);
    return distribution_from_csv(in);
}

/// Data rows of a CSV (comment and header lines dropped), split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            f.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            f.emplace_back();
        }
        rows.push_back(f);
    }
    return rows;
}

const std::string p4_args = "--graph " + data("p4.txt") + " --partition " + data("p4.part") + " --k 2";

} // namespace

TEST(CliCoherence, ExactP4SplitsEvenly)
{
    const auto dir = scratch();
    ASSERT_EQ(run("coherence " + p4_args + " --exact --out " + dir.string(), dir), 0) << slurp(dir / "stderr.txt");
    const auto p = read_distribution(dir / "p_star.csv");
    ASSERT_EQ(p.size(), 2);
    EXPECT_NEAR(p[0], 0.5, 1e-12);
    EXPECT_NEAR(p[1], 0.5, 1e-12);
    for (const char* f : {"p_star.csv", "q_star.csv", "profile_spectral.csv", "profile_frobenius.csv", "summary.txt"}) {
        EXPECT_EQ(slurp(dir / f).rfind("# config-hash: ", 0), 0u) << f;
    }
}

TEST(CliCoherence, EstimatedPBarIsCloseToExact)
{
    const auto dir = scratch();
    ASSERT_EQ(run("coherence " + p4_args + " --exact --out " + (dir / "exact").string(), dir), 0);
    ASSERT_EQ(run("coherence " + p4_args + " --estimate p_bar --order 50 --out " + (dir / "est").string(), dir), 0)
        << slurp(dir / "stderr.txt");
    EXPECT_LE(total_variation(read_distribution(dir / "exact" / "p_star.csv"),
                              read_distribution(dir / "est" / "p_bar.csv")),
              0.1);
    EXPECT_FALSE(fs::exists(dir / "est" / "q_bar.csv"));
}

TEST(CliCoherence, MissingPartitionExitsTwoNamingThePath)
{
    const auto dir = scratch();
    const std::string missing = (dir / "nowhere.part").string();
    EXPECT_EQ(run("coherence --graph " + data("p4.txt") + " --partition " + missing + " --k 2 --exact", dir), 2);
    EXPECT_NE(slurp(dir / "stderr.txt").find(missing), std::string::npos);
}

TEST(CliCoherence, ValidationFailuresExitTwo)
{
    const auto dir = scratch();
    EXPECT_EQ(run("coherence " + p4_args + " --k 5 --exact --out " + dir.string(), dir), 2);
    EXPECT_EQ(run("coherence --graph " + data("p4.txt") + " --k 2 --exact", dir), 2);
    EXPECT_EQ(run("coherence --recipe bogus --cells 2x2 --k 2", dir), 2);
    EXPECT_EQ(run("frobnicate", dir), 2);
}

TEST(CliCoherence, NumericalFailureExitsThree)
{
    const auto dir = scratch();
    // a 1-nearest-neighbor sensor network on 60 nodes is never connected
    EXPECT_EQ(run("coherence --recipe random-sensor --nodes 60 --sensor-knn 1 --cells 2x2 --k 2 --exact --out " +
                      dir.string(),
                  dir),
              3);
}

TEST(CliConfig, FileValuesYieldToFlagsAndHashTracksResult)
{
    const auto dir = scratch();
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "# comment\ngraph = " << data("p4.txt") << "\npartition = " << data("p4.part")
            << "\nk = 1\nexact = true\n";
    }
    ASSERT_EQ(run("coherence --config " + (dir / "run.cfg").string() + " --k 2 --out " + (dir / "a").string(), dir),
              0)
        << slurp(dir / "stderr.txt");
    ASSERT_EQ(run("coherence " + p4_args + " --exact --out " + (dir / "b").string(), dir), 0);
    const auto a = slurp(dir / "a" / "p_star.csv");
    EXPECT_EQ(a, slurp(dir / "b" / "p_star.csv"));
    EXPECT_NE(slurp(dir / "a" / "summary.txt").find("\nk 2\n"), std::string::npos);
    // the resolved config reproduces the run, hash included
    ASSERT_EQ(run("coherence --config " + (dir / "a" / "resolved.cfg").string() + " --out " + (dir / "c").string(),
                  dir),
              0);
    EXPECT_EQ(slurp(dir / "c" / "p_star.csv"), a);
    ASSERT_EQ(run("coherence " + p4_args + " --exact --laplacian normalized --out " + (dir / "d").string(), dir), 0);
    EXPECT_NE(slurp(dir / "d" / "p_star.csv").substr(0, 32), a.substr(0, 32));
}

TEST(CliConfig, UnknownKeyAndMissingConfigExitTwo)
{
    const auto dir = scratch();
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "no_such_key = 3\n";
    }
    EXPECT_EQ(run("coherence " + p4_args + " --exact --config " + (dir / "bad.cfg").string(), dir), 2);
    EXPECT_EQ(run("coherence " + p4_args + " --exact --config " + (dir / "absent.cfg").string(), dir), 2);
    EXPECT_NE(slurp(dir / "stderr.txt").find("absent.cfg"), std::string::npos);
}

TEST(CliRipcurve, SingleTrialGivesZeroOrOne)
{
    const auto dir = scratch();
    ASSERT_EQ(run("ripcurve --recipe grid --rows 8 --cols 8 --cells 4x4 --k 4 --s-grid 1:12:1 --trials 1 "
                  "--distributions uniform,p_star --seed 5 --out " +
                      dir.string(),
                  dir),
              0)
        << slurp(dir / "stderr.txt");
    for (const char* f : {"ripcurve_uniform.csv", "ripcurve_p_star.csv"}) {
        const auto rows = csv_rows(dir / f);
        ASSERT_EQ(rows.size(), 12u);
        for (const auto& r : rows) {
            const double p = std::stod(r[1]);
            EXPECT_TRUE(p == 0.0 || p == 1.0) << f << " s=" << r[0];
            EXPECT_EQ(r[2], "1");
        }
    }
    const auto dat = slurp(dir / "ripcurve.dat");
    EXPECT_EQ(dat.rfind("# config-hash: ", 0), 0u);
    EXPECT_NE(dat.find("# s uniform p_star"), std::string::npos);
}

TEST(CliRipcurve, FixedSeedReproducesBytes)
{
    const auto dir = scratch();
    const std::string args = "ripcurve --recipe random-sensor --nodes 120 --cells 4x4 --k 5 --s-grid 4:20:4 "
                             "--trials 20 --distributions uniform,q_bar --order 30 --seed 11 --out ";
    ASSERT_EQ(run(args + (dir / "a").string(), dir), 0) << slurp(dir / "stderr.txt");
    ASSERT_EQ(run(args + (dir / "b").string() + " --threads 1", dir), 0);
    for (const char* f : {"ripcurve_uniform.csv", "ripcurve_q_bar.csv", "ripcurve.dat"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
}

TEST(CliRipcurve, BundledDeskCurveRises)
{
    const auto dir = scratch();
    ASSERT_EQ(run("ripcurve --config " + std::string(GSAMP_CONFIG_DIR) +
                      "/ripcurve_sensor.cfg --distributions uniform,p_star --out " + dir.string(),
                  dir),
              0)
        << slurp(dir / "stderr.txt");
    for (const char* f : {"ripcurve_uniform.csv", "ripcurve_p_star.csv"}) {
        const auto rows = csv_rows(dir / f);
        ASSERT_GE(rows.size(), 3u);
        EXPECT_LE(std::stod(rows.front()[1]), 0.2) << f;
        EXPECT_EQ(std::stod(rows.back()[1]), 1.0) << f;
        // Monte Carlo noise with 100 trials is about 0.02 near the top
        for (std::size_t i = 1; i < rows.size(); ++i) {
            EXPECT_GE(std::stod(rows[i][1]), std::stod(rows[i - 1][1]) - 0.05) << f << " s=" << rows[i][0];
        }
    }
}

TEST(CliSegment, FastIsFasterThanFullFromFast)
{
    const auto dir = scratch();
    const std::string base = "segment --synthetic 64x96 --superpixels 60 --repeats 3 --seed 4 ";
    ASSERT_EQ(run(base + "--decoder fast --out " + (dir / "fast").string(), dir), 0) << slurp(dir / "stderr.txt");
    ASSERT_EQ(run(base + "--decoder full --init fast --out " + (dir / "full").string(), dir), 0);
    const auto fast = csv_rows(dir / "fast" / "segment.csv");
    const auto full = csv_rows(dir / "full" / "segment.csv");
    ASSERT_EQ(fast.size(), 3u);
    ASSERT_EQ(full.size(), 3u);
    double fast_ms = 0.0, full_ms = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(fast[r][5], "fast");
        EXPECT_EQ(full[r][5], "full_from_fast");
        EXPECT_TRUE(fast[r][9].empty());
        fast_ms += std::stod(fast[r][8]);
        full_ms += std::stod(full[r][9]);
        EXPECT_FALSE(fast[r][6].empty());
    }
    EXPECT_LT(fast_ms, full_ms);
    const auto png = slurp(dir / "fast" / "mask.png");
    EXPECT_NE(png.find("config-hash"), std::string::npos);
    const auto mask = decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
    EXPECT_EQ(mask.height, 64);
    EXPECT_EQ(mask.width, 96);
}

TEST(CliSegment, WithoutGroundTruthSnrIsEmpty)
{
    const auto dir = scratch();
    const auto scene = synthetic_two_region(24, 32, 3);
    save_image((dir / "scene.png").string(), scene.image);
    {
        std::ofstream lab(dir / "labels.csv");
        lab << "group_id,label\n1,0\n2,1\n3,0\n";
    }
    ASSERT_EQ(run("segment --image " + (dir / "scene.png").string() + " --superpixels 12 --labels " +
                      (dir / "labels.csv").string() + " --out " + (dir / "out").string(),
                  dir),
              0)
        << slurp(dir / "stderr.txt");
    const auto rows = csv_rows(dir / "out" / "segment.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0][6].empty());
    EXPECT_TRUE(rows[0][7].empty());
    EXPECT_EQ(rows[0][3], "3");
    EXPECT_TRUE(fs::exists(dir / "out" / "mask.png"));
    EXPECT_EQ(slurp(dir / "out" / "summary.txt").find("mean_snr_db"), std::string::npos);
    // neither ground truth nor labels: nothing to reconstruct from
    EXPECT_EQ(run("segment --image " + (dir / "scene.png").string() + " --superpixels 12", dir), 2);
}
