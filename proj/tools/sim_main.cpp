#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "thermocell.h"

// exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error
int main(int argc, char** argv) {
    CLI::App app{"sim: thermal regulation array simulator"};
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool list = false;
    app.add_option("config", config, "experiment config (INI)");
    app.add_option("--out", out, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "seed override");
    app.add_flag("--list", list, "print the experiment catalog");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (list) {
        std::size_t need = 0;
        tc_list_experiments(nullptr, 0, &need);
        std::vector<char> buf(need);
        if (tc_list_experiments(buf.data(), buf.size(), &need) != TC_OK) {
            std::fprintf(stderr, "sim: %s\n", tc_last_error());
            return 2;
        }
        std::fputs(buf.data(), stdout);
        return 0;
    }
    if (config.empty()) {
        std::fprintf(stderr, "sim: a config file is required\n%s", app.help().c_str());
        return 2;
    }

    tc_run_options opt{};
    opt.out_dir = out.empty() ? nullptr : out.c_str();
    opt.has_seed = seed_opt->count() > 0;
    opt.seed = seed;
    int pass = 0;
    const tc_status st = tc_run_config_file(config.c_str(), &opt, &pass);
    if (st != TC_OK) {
        std::fprintf(stderr, "sim: error: %s\n", tc_last_error());
        return 2;
    }
    std::printf("%s\n", pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
}
