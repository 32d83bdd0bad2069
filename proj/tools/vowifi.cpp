#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vowifi/attack.hpp"
#include "vowifi/correlator.hpp"
#include "vowifi/dataset.hpp"
#include "vowifi/manifest.hpp"
#include "vowifi/mitigation.hpp"
#include "vowifi/wica.hpp"

namespace fs = std::filesystem;
using namespace vowifi;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string profile;
};

std::string slurp(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n')
        out << '\n';
}

// "0..3" or "0,2,3"
std::vector<std::size_t> parse_app_counts(const std::string& spec)
{
    std::vector<std::size_t> out;
    if (const auto dots = spec.find(".."); dots != std::string::npos) {
        const auto lo = std::stoul(spec.substr(0, dots));
        const auto hi = std::stoul(spec.substr(dots + 2));
        for (auto k = lo; k <= hi; ++k)
            out.push_back(k);
        return out;
    }
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');)
        out.push_back(std::stoul(item));
    return out;
}

int cmd_simulate(const Globals& g, const std::string& scenario_path, std::size_t dataset_runs, const std::string& carrier)
{
    if (g.out.empty())
        throw CLI::ValidationError("--out", "simulate needs an output directory");
    if (dataset_runs > 0) {
        const auto data = generate_dataset(dataset_runs, carrier_from_string(carrier), g.seed.value_or(1));
        write_dataset(data, g.out);
        std::cout << "wrote " << data.size() << " labeled segments to " << g.out << '\n';
        return 0;
    }
    if (scenario_path.empty())
        throw CLI::ValidationError("--scenario", "give a scenario file or --dataset N");
    auto scenario = read_scenario(scenario_path);
    if (g.seed) {
        scenario.seed = *g.seed;
        if (scenario.call)
            scenario.call->seed = *g.seed;
    }
    const auto sim = run_scenario(scenario);
    fs::create_directories(g.out);
    write_trace(sim.delivered_trace(), fs::path(g.out) / "trace.jsonl");
    spit(fs::path(g.out) / "events.json", events_to_json(sim.events));
    spit(fs::path(g.out) / "truth.json", truth_to_json(sim.truth));
    std::cout << "wrote " << sim.trace.size() << " packets to " << (fs::path(g.out) / "trace.jsonl").string() << '\n';
    return 0;
}

int cmd_attack(const Globals& g, const std::string& scenario_path, const std::string& policy_path,
               const std::string& report)
{
    auto scenario = read_scenario(scenario_path);
    auto policy = read_policy(policy_path);
    if (g.seed) {
        scenario.seed = *g.seed;
        if (scenario.call)
            scenario.call->seed = *g.seed;
        policy.seed = *g.seed;
    }
    const auto outcome = run_attack(scenario, policy);
    const auto json = outcome_report_json(outcome);
    if (!report.empty())
        spit(report, json);
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        write_trace(outcome.sim.delivered_trace(), fs::path(g.out) / "trace.jsonl");
        spit(fs::path(g.out) / "events.json", events_to_json(outcome.sim.events));
    }
    std::cout << to_string(outcome.kind) << '\n';
    return 0;
}

int cmd_train(const Globals& g, const std::string& in)
{
    if (g.out.empty())
        throw CLI::ValidationError("--out", "train needs a model output path");
    const auto data = read_dataset(in);
    const auto model = train_classifier(data, g.seed.value_or(1));
    write_model(model, g.out);
    std::size_t ok = 0;
    for (const auto& d : data)
        ok += classify_event(model, d.segment) == d.label ? 1 : 0;
    std::cout << "trained on " << data.size() << " segments, depth " << model.depth() << ", training accuracy "
              << ok << "/" << data.size() << '\n';
    return 0;
}

int cmd_analyze(const Globals& g, const std::string& in, const std::string& model_path, const std::string& report)
{
    if (g.profile.empty())
        throw CLI::ValidationError("--profile", "analyze needs a carrier profile");
    const auto profile = read_profile(g.profile);
    const auto trace = filter_wifi_calling(read_trace(in), profile);
    const auto stats = extract_call_statistics(trace, profile);
    if (!model_path.empty()) {
        const auto model = read_model(model_path);
        for (const auto& s : segment_trace(trace))
            std::cout << s.front().ts << ".." << s.back().ts << ' ' << to_string(classify_event(model, s)) << '\n';
    }
    const auto json = statistics_to_json(stats);
    if (!report.empty())
        spit(report, json);
    else
        std::cout << json << '\n';
    return 0;
}

int cmd_correlate(const std::string& net, const std::string& obs, Millis sigma, Millis epsilon,
                  const std::string& report)
{
    const auto assoc = correlate(network_records_from_json(slurp(net)), observer_events_from_json(slurp(obs)),
                                 CorrelatorConfig{sigma, epsilon});
    const auto json = associations_to_json(assoc);
    if (!report.empty())
        spit(report, json);
    else
        std::cout << json << '\n';
    return 0;
}

int cmd_mitigate(const Globals& g, const std::string& scenarios, const std::string& model_path,
                 const std::string& apps, const std::string& tunnel_path, const std::string& report)
{
    const auto model = read_model(model_path);
    TunnelConfig cfg = tunnel_path.empty() ? TunnelConfig{} : read_tunnel_config(tunnel_path);
    if (g.seed)
        cfg.seed = *g.seed;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(scenarios))
        if (e.path().extension() == ".json")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<EventRun> runs;
    for (const auto& f : files)
        runs.push_back(event_run_from_scenario(read_scenario(f)));
    if (runs.empty())
        throw std::runtime_error("no scenario files in " + scenarios);
    const auto csv = degradation_csv(evaluate_degradation(model, runs, cfg, parse_app_counts(apps)));
    if (!report.empty())
        spit(report, csv);
    std::cout << csv;
    return 0;
}

int cmd_run(const Globals& g, const std::string& manifest, unsigned parallel)
{
    ManifestOptions opt;
    if (!g.out.empty())
        opt.output_dir = fs::path(g.out);
    opt.seed = g.seed;
    opt.parallel = parallel;
    try {
        const auto run = run_manifest(manifest, opt);
        for (const auto& s : run.steps) {
            std::cout << (s.mismatches.empty() ? "PASS     " : "MISMATCH ") << s.name << '\n';
            for (const auto& m : s.mismatches)
                std::cerr << "  " << s.name << ": " << m << '\n';
        }
        std::cout << "reports in " << run.output_dir.string() << '\n';
        return run.exit_code;
    } catch (const ManifestError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Wi-Fi calling traffic simulator, attack harness and side-channel analyzer"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every stochastic component");
    app.add_option("--out", g.out, "Output path (directory or file, per subcommand)");
    app.add_option("--profile", g.profile, "Carrier profile JSON");

    std::string scenario, policy, report, in, model, net, obs, scenarios, apps = "0..3", tunnel, manifest;
    std::string carrier = "TMOBILE";
    std::size_t dataset_runs = 0;
    Millis sigma = 1000, epsilon = 1500;
    unsigned parallel = 1;

    auto* sim = app.add_subcommand("simulate", "Simulate a scenario, or generate a labeled event dataset");
    sim->add_option("--scenario", scenario, "Scenario JSON")->check(CLI::ExistingFile);
    sim->add_option("--dataset", dataset_runs, "Runs per event kind for a labeled dataset");
    sim->add_option("--carrier", carrier, "Carrier for --dataset")->check(CLI::IsMember({"TMOBILE", "ATT", "VERIZON"}));

    auto* atk = app.add_subcommand("attack", "Run a scenario through a selective-drop policy");
    atk->add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    atk->add_option("--policy", policy, "Drop policy JSON")->required()->check(CLI::ExistingFile);
    atk->add_option("--report", report, "Outcome report JSON");

    auto* train = app.add_subcommand("train", "Train the event classifier on a labeled dataset");
    train->add_option("--in", in, "Dataset directory")->required()->check(CLI::ExistingDirectory);

    auto* analyze = app.add_subcommand("analyze", "Classify events and extract call statistics from a trace");
    analyze->add_option("--in", in, "Trace JSONL")->required()->check(CLI::ExistingFile);
    analyze->add_option("--model", model, "Classifier model JSON")->check(CLI::ExistingFile);
    analyze->add_option("--report", report, "Call statistics JSON");

    auto* corr = app.add_subcommand("correlate", "Associate device addresses with user identities");
    corr->add_option("--net", net, "Network call records JSON")->required()->check(CLI::ExistingFile);
    corr->add_option("--obs", obs, "Observer events JSON")->required()->check(CLI::ExistingFile);
    corr->add_option("--sigma", sigma, "Network-side error bound (ms)")->check(CLI::PositiveNumber);
    corr->add_option("--epsilon", epsilon, "Observer-side error bound (ms)")->check(CLI::PositiveNumber);
    corr->add_option("--report", report, "Association report JSON");

    auto* mit = app.add_subcommand("mitigate", "Measure classifier degradation on VPN-mixed tunnels");
    mit->add_option("--scenarios", scenarios, "Directory of single-event scenarios")->required()->check(CLI::ExistingDirectory);
    mit->add_option("--model", model, "Pre-trained classifier model")->required()->check(CLI::ExistingFile);
    mit->add_option("--apps", apps, "App counts, e.g. 0..3 or 0,1");
    mit->add_option("--tunnel", tunnel, "Tunnel config JSON")->check(CLI::ExistingFile);
    mit->add_option("--report", report, "Degradation CSV");

    auto* run = app.add_subcommand("run", "Execute an experiment manifest and compare against fixtures");
    run->add_option("--manifest", manifest, "Manifest JSON")->required();
    run->add_option("--parallel", parallel, "Steps to run concurrently")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim)
            return cmd_simulate(g, scenario, dataset_runs, carrier);
        if (*atk)
            return cmd_attack(g, scenario, policy, report);
        if (*train)
            return cmd_train(g, in);
        if (*analyze)
            return cmd_analyze(g, in, model, report);
        if (*corr)
            return cmd_correlate(net, obs, sigma, epsilon, report);
        if (*mit)
            return cmd_mitigate(g, scenarios, model, apps, tunnel, report);
        if (*run)
            return cmd_run(g, manifest, parallel);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
