#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "levelscope/experiment.hpp"
#include "levelscope/lob_data.hpp"
#include "levelscope/synthgen.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

int cmd_run(const std::string& config_path, int jobs, const std::string& out_override) {
    levelscope::KeyValueConfig kv = levelscope::KeyValueConfig::from_file(config_path);
    levelscope::ExperimentConfig config = levelscope::parse_experiment_config(kv);
    if (!out_override.empty()) config.output_dir = out_override;
    const auto result = levelscope::run_experiment(config, jobs, &std::cout);
    std::cout << result.record_files.size() << " run records, " << result.report_files.size()
              << " report files in " << config.output_dir << "\n";
    return kExitOk;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path) {
    levelscope::KeyValueConfig kv = levelscope::KeyValueConfig::from_file(config_path);
    const levelscope::SynthConfig sc = levelscope::parse_synth_section(kv, "synth");
    kv.reject_unconsumed();
    const auto events = levelscope::generate(sc);
    levelscope::write_events(out_path, events);
    std::cout << "wrote " << events.size() << " events to " << out_path << "\n";
    return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
    const auto records = levelscope::load_records(in_dir);
    const auto files = levelscope::generate_reports(records, out_dir);
    for (const auto& f : files) std::cout << f << "\n";
    return kExitOk;
}

int cmd_validate(const std::string& in_file) {
    const auto report = levelscope::validate_events_file(in_file);
    std::cout << "events: " << report.event_count << "\n";
    std::cout << "days: " << report.day_count << "\n";
    std::cout << "violations: " << report.violations.size() << "\n";
    for (const auto& v : report.violations) std::cout << "  " << v << "\n";
    return report.violations.empty() ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Order-book level informativeness toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_path;
    int jobs = 1;

    auto* run = app.add_subcommand("run", "Run the configured experiment grid and emit reports");
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--jobs", jobs, "Max concurrent cells")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides output.dir)");

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic event file");
    gen->add_option("--config", config_path, "Config file with a synth.* section")->required();
    gen->add_option("--out", out_dir, "Output event file")->required();

    auto* rep = app.add_subcommand("report", "Aggregate run records into tables and figures");
    rep->add_option("--in", in_path, "Directory holding record_*.json files")->required();
    rep->add_option("--out", out_dir, "Report output directory")->required();

    auto* val = app.add_subcommand("validate-data", "Check an event file against the format invariants");
    val->add_option("--in", in_path, "Event file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, jobs, out_dir);
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (rep->parsed()) return cmd_report(in_path, out_dir);
        return cmd_validate(in_path);
    } catch (const levelscope::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const levelscope::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const levelscope::ValidationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        if (what.find("no records") != std::string::npos ||
            what.find("cannot open") != std::string::npos) {
            std::cerr << "data error: " << what << "\n";
            return kExitData;
        }
        std::cerr << "error: " << what << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
