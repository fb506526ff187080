#include <gtest/gtest.h>
#include <sys/wait.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "thermocell/experiments.hpp"

using namespace thermocell;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
    try {
        load_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("thermocell_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

std::string write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_sim(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + SIM_EXE + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

// ---------------- config ----------------

TEST(Config, DefaultsAndParams) {
    const ExperimentConfig c = load_config_text("[experiment]\nname = pwm_sweep\nseed = 3\n");
    EXPECT_EQ(c.experiment, "pwm_sweep");
    EXPECT_EQ(c.require_seed(), 3u);
    EXPECT_EQ(c.array.pwm.tap_mismatch_sigma, 0.05);
    EXPECT_EQ(c.integer("draws"), 50);
    EXPECT_EQ(c.list("sigma_sweep").size(), 8u);
    EXPECT_EQ(c.array.rows, 9);
    EXPECT_EQ(c.array.cols, 6);
}

TEST(Config, OverridesLand) {
    const ExperimentConfig c = load_config_text(
        "[experiment]\nname = regulation_steps\nseed = 1\n"
        "[array]\nrows = 2\ncols = 3\n[plant]\ng_lat = 0\n[pid]\nki = 5\n[params]\nplateaus = 30, 40\n");
    EXPECT_EQ(c.array.rows, 2);
    EXPECT_EQ(c.array.cols, 3);
    EXPECT_EQ(c.array.plant.g_lat, 0.0);
    EXPECT_NEAR(c.array.plant.g_amb, 0.27 / 65.0, 1e-15);
    ASSERT_TRUE(c.array.gains.has_value());
    EXPECT_EQ(c.array.gains->ki, 5.0);
    EXPECT_EQ(c.list("plateaus"), (std::vector<double>{30.0, 40.0}));
}

TEST(Config, ErrorsNameTheKeyPath) {
    const std::string base = "[experiment]\nname = pwm_sweep\nseed = 1\n";
    EXPECT_EQ(config_error(base + "[array]\nrowz = 3\n").rfind("array.rowz:", 0), 0u);
    EXPECT_EQ(config_error(base + "[bogus]\nx = 1\n").rfind("bogus:", 0), 0u);
    EXPECT_EQ(config_error(base + "[madc]\nf_clk = fast\n").rfind("madc.f_clk:", 0), 0u);
    EXPECT_EQ(config_error(base + "[params]\nsamples = 5\n").rfind("params.samples:", 0), 0u);
    EXPECT_EQ(config_error(base + "[device]\nchopper = maybe\n").rfind("device.chopper:", 0), 0u);
    EXPECT_EQ(config_error("[experiment]\nseed = 1\n").rfind("experiment.name:", 0), 0u);
    EXPECT_EQ(config_error("[experiment]\nname = nope\n").rfind("experiment.name:", 0), 0u);
    EXPECT_FALSE(config_error("stray = 1\n[experiment]\nname = pwm_sweep\n").empty());
    EXPECT_FALSE(config_error(base + "[array]\nrows = 0\n").empty());
    EXPECT_FALSE(config_error(base + "[pwm]\nring_taps = 31\n").empty());
    EXPECT_FALSE(config_error(base + "[plant]\nstep_time = -1\n").empty());
}

TEST(Config, SeedRequiredForStochastic) {
    const ExperimentConfig c = load_config_text("[experiment]\nname = channel_spread\n");
    EXPECT_THROW(run_experiment(c), ConfigError);
    // the noise-free SNR run needs none
    const ExperimentConfig s = load_config_text("[experiment]\nname = snr_test\n");
    EXPECT_NO_THROW(run_experiment(s));
}

TEST(Config, ShippedConfigsLoad) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(CONFIG_DIR)) {
        if (e.path().extension() != ".ini") continue;
        EXPECT_NO_THROW(load_config_file(e.path().string())) << e.path();
        ++n;
    }
    EXPECT_GE(n, 11);
}

// ---------------- catalog and experiments ----------------

TEST(Catalog, ElevenExperimentsWithAnchors) {
    const auto& cat = experiment_catalog();
    ASSERT_EQ(cat.size(), 11u);
    std::set<std::string> names;
    for (const auto& e : cat) {
        names.insert(e.name);
        EXPECT_FALSE(e.figure.empty()) << e.name;
        EXPECT_FALSE(e.description.empty()) << e.name;
        EXPECT_EQ(find_experiment(e.name), &e);
    }
    EXPECT_EQ(names.size(), 11u);
    for (const char* n : {"characterize_sensor", "die_error_sweep", "pwm_sweep", "regulation_steps", "channel_spread",
                          "madc_oracle", "pid_oracle", "fra_sweep", "cpa_ph", "cv_scan", "snr_test"})
        EXPECT_TRUE(names.count(n)) << n;
    EXPECT_NE(catalog_text().find("regulation_steps"), std::string::npos);
}

TEST(Experiments, PwmSweepTransferTable) {
    const auto r = run_experiment(load_config_text("[experiment]\nname = pwm_sweep\nseed = 1\n"));
    EXPECT_TRUE(r.pass());
    const auto it = std::find_if(r.files.begin(), r.files.end(), [](const auto& f) { return f.first == "pwm_transfer.csv"; });
    ASSERT_NE(it, r.files.end());
    EXPECT_EQ(line_count(it->second), 4097);
    std::istringstream in(it->second);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "code,duty_nominal,high_time_us,duty_mismatch");
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, line.find(',', 2)), "0,0.04");
}

TEST(Experiments, RegulationProducesTraceAndPlateauChecks) {
    const auto c = load_config_text(
        "[experiment]\nname = regulation_steps\nseed = 2\n[array]\nrows = 2\ncols = 2\n"
        "[traces]\npid = true\nmadc = true\n"
        "[params]\nplateaus = 35,45\nplateau_s = 90\nsettle_s = 60\n");
    const auto r = run_experiment(c);
    std::set<std::string> files;
    for (const auto& f : r.files) files.insert(f.first);
    for (const char* f : {"regulation_trace.csv", "regulation_plateaus.csv", "pid_trace.csv", "madc_trace.csv"})
        EXPECT_TRUE(files.count(f)) << f;
    ASSERT_NE(r.find("plateau_mean_error_c"), nullptr);
    EXPECT_TRUE(r.find("plateau_mean_error_c")->pass);
    EXPECT_TRUE(r.find("settled_abs_error_c")->pass);
    EXPECT_TRUE(r.find("missing_rise_events")->pass);
}

TEST(Experiments, CsvBytesRepeat) {
    for (const char* name : {"channel_spread", "cv_scan", "madc_oracle"}) {
        const auto c = load_config_text(std::string("[experiment]\nname = ") + name + "\nseed = 7\n");
        const auto a = run_experiment(c), b = run_experiment(c);
        ASSERT_EQ(a.files.size(), b.files.size());
        for (std::size_t i = 0; i < a.files.size(); ++i) EXPECT_EQ(a.files[i].second, b.files[i].second) << name;
    }
}

TEST(Experiments, SummaryHasNoClockFields) {
    const auto r = run_experiment(load_config_text("[experiment]\nname = snr_test\n"));
    const auto j = nlohmann::json::parse(r.summary_json());
    EXPECT_EQ(j["experiment"], "snr_test");
    EXPECT_TRUE(j.contains("checks"));
    EXPECT_FALSE(j.contains("timestamp"));
    EXPECT_EQ(r.summary_json(), run_experiment(load_config_text("[experiment]\nname = snr_test\n")).summary_json());
}

TEST(Format, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-7, 123456.789, -2.5, 0.0}) {
        const std::string s = format_number(v);
        double back = 1.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        EXPECT_EQ(back, v) << s;
    }
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(42.0), "42");
}

// ---------------- CLI ----------------

TEST(Cli, ListsCatalog) { EXPECT_EQ(run_sim("--list"), 0); }

TEST(Cli, PassFailAndUsageExitCodes) {
    const fs::path dir = scratch("codes");
    const std::string ok = write_file(dir / "ok.ini", "[experiment]\nname = snr_test\n");
    EXPECT_EQ(run_sim(ok + " --out " + (dir / "ok").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "ok" / "summary.json"));
    EXPECT_TRUE(fs::exists(dir / "ok" / "snr_record.csv"));

    const std::string fail = write_file(dir / "fail.ini", "[experiment]\nname = snr_test\n[params]\nbound = 200\n");
    EXPECT_EQ(run_sim(fail + " --out " + (dir / "fail").string()), 1);
    EXPECT_TRUE(fs::exists(dir / "fail" / "summary.json"));

    EXPECT_EQ(run_sim(""), 2);
    EXPECT_EQ(run_sim("--bogus"), 2);
    EXPECT_EQ(run_sim((dir / "missing.ini").string()), 2);
}

TEST(Cli, MalformedConfigWritesNothing) {
    const fs::path dir = scratch("malformed");
    const std::string bad = write_file(dir / "bad.ini", "[experiment]\nname = pwm_sweep\nseed = 1\n[array]\nrowz = 3\n");
    EXPECT_EQ(run_sim(bad + " --out " + (dir / "out").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
    // a runtime failure (calibration cannot reach the design count) also leaves nothing
    const std::string broken = write_file(dir / "broken.ini",
                                          "[experiment]\nname = channel_spread\nseed = 1\n[array]\nsigma_r1 = 0.3\n");
    EXPECT_EQ(run_sim(broken + " --out " + (dir / "out2").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "out2"));
}

TEST(Cli, OutputDirPrecedence) {
    const fs::path dir = scratch("precedence");
    const std::string cfg =
        write_file(dir / "c.ini", "[experiment]\nname = snr_test\noutput_dir = " + (dir / "from_config").string() + "\n");
    EXPECT_EQ(run_sim(cfg), 0);
    EXPECT_TRUE(fs::exists(dir / "from_config" / "summary.json"));
    EXPECT_EQ(run_sim(cfg, "SIM_OUT_DIR=" + (dir / "from_env").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "from_env" / "summary.json"));
    EXPECT_EQ(run_sim(cfg + " --out " + (dir / "from_flag").string(), "SIM_OUT_DIR=" + (dir / "env2").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "from_flag" / "summary.json"));
    EXPECT_FALSE(fs::exists(dir / "env2"));
}

TEST(Cli, SeedOverrideAndByteIdenticalReruns) {
    const fs::path dir = scratch("seed");
    const std::string cfg = write_file(dir / "c.ini", "[experiment]\nname = die_error_sweep\nseed = 1\n");
    ASSERT_EQ(run_sim(cfg + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_sim(cfg + " --out " + (dir / "b").string()), 0);
    ASSERT_EQ(run_sim(cfg + " --seed 9 --out " + (dir / "c").string()), 0);
    EXPECT_EQ(slurp(dir / "a" / "die_errors.csv"), slurp(dir / "b" / "die_errors.csv"));
    EXPECT_EQ(slurp(dir / "a" / "die_summary.csv"), slurp(dir / "b" / "die_summary.csv"));
    EXPECT_NE(slurp(dir / "a" / "die_errors.csv"), slurp(dir / "c" / "die_errors.csv"));
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "c" / "summary.json"))["seed"], 9);
}
