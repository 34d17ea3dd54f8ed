// sweepkit: command-line driver for the two-stage augmentation defense.
//
//   sweepkit gen-data --config run.json --out results/
//   sweepkit poison   --config run.json --out results/
//   sweepkit train    --config run.json --out results/
//   sweepkit sweep    --config run.json --out results/
//   sweepkit defend   --config run.json --out results/
//   sweepkit eval     --config run.json --out results/
//   sweepkit report   --out results/
//
// Exit status: 0 success, 1 invalid usage or configuration, 2 I/O or format error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "sweepkit/error.hpp"
#include "sweepkit/formats.hpp"
#include "sweepkit/pipeline.hpp"

namespace {

using namespace sweepkit;

struct Options {
    std::string config;
    std::string out = "sweepkit-run";
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

RunConfig load_config(const Options& o)
{
    RunConfig cfg = o.config.empty() ? RunConfig{} : run_config_from_json(read_text(o.config));
    if (o.seed)
        cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

Logger make_logger(const Options& o)
{
    if (!o.verbose)
        return {};
    const auto start = std::chrono::steady_clock::now();
    return [start](std::string_view msg) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cerr << "[" << static_cast<long long>(s) << "s] " << msg << "\n";
    };
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Backdoor defense by augmentation policy search"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("--config", opt.config, "Run configuration JSON (schema sweepkit.run/v1)");
    app.add_option("--out", opt.out, "Run directory holding every artifact")->capture_default_str();
    app.add_option("--seed", opt.seed, "Override the master seed");
    app.add_flag("-v,--verbose", opt.verbose, "Progress messages on stderr");

    using Stage = void (*)(const RunConfig&, const std::filesystem::path&, const Logger&);
    const std::pair<const char*, std::pair<const char*, Stage>> stage_commands[] = {
        {"gen-data", {"Generate or import the train, test and clean-pool datasets", &stages::gen_data}},
        {"poison", {"Poison the training set with the configured attack", &stages::poison}},
        {"train", {"Train the infected model on the poisoned set", &stages::train}},
        {"sweep", {"Search P_f and P_i over the attack database", &stages::sweep}},
        {"defend", {"Fine-tune the infected model with P_f and bind P_i", &stages::defend}},
        {"eval", {"Measure ACC and ASR before and after the defense", &stages::eval}},
    };
    Stage chosen = nullptr;
    for (const auto& [name, entry] : stage_commands) {
        const Stage stage = entry.second;
        app.add_subcommand(name, entry.first)->callback([&chosen, stage] { chosen = stage; });
    }
    bool render = false;
    app.add_subcommand("report", "Render report.json as text tables")->callback([&] { render = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (render) {
            std::cout << stages::report(opt.out);
            return 0;
        }
        const RunConfig cfg = load_config(opt);
        chosen(cfg, opt.out, make_logger(opt));
        return 0;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
