#include "vowifi/manifest.hpp"

#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vowifi/attack.hpp"
#include "vowifi/dataset.hpp"
#include "vowifi/mitigation.hpp"
#include "vowifi/wica.hpp"

namespace vowifi {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw ManifestError(kExitSchema, what); }

std::string slurp(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ManifestError(kExitMissingFile, "missing file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& path)
{
    const auto text = slurp(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        schema_error(path.string() + ": " + e.what());
    }
}

// Runs fn and converts parse/validation failures into schema errors.
template <typename F>
auto schema_guard(const std::string& where, F&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ManifestError&) {
        throw;
    } catch (const json::exception& e) {
        schema_error(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        schema_error(where + ": " + e.what());
    }
}

struct StepSpec {
    std::string name;
    std::string kind;
    std::map<std::string, fs::path> files;
    json raw;
};

const std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>>& step_files()
{
    // kind -> (required file keys, optional file keys)
    static const std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> m = {
        {"attack_table", {{"scenario", "fixture"}, {}}},
        {"attack", {{"scenario", "policy"}, {}}},
        {"voice_quality", {{"scenario", "fixture"}, {}}},
        {"degradation", {{"fixture"}, {"model", "tunnel"}}},
        {"analyze", {{"scenario"}, {"model"}}},
    };
    return m;
}

Scenario load_scenario(const fs::path& path, std::uint64_t seed)
{
    const auto text = slurp(path);
    auto sc = schema_guard(path.string(), [&] { return parse_scenario(text); });
    sc.seed = seed;
    if (sc.call)
        sc.call->seed = seed;
    return sc;
}

StepResult run_attack_table(const StepSpec& step, std::uint64_t seed)
{
    const auto scenario = load_scenario(step.files.at("scenario"), seed);
    const auto fixture = load_json(step.files.at("fixture"));
    StepResult r{step.name, step.kind, {}, {}};
    ordered_json rows = ordered_json::array();
    schema_guard(step.files.at("fixture").string(), [&] {
        const auto& list = fixture.at("rows");
        if (!list.is_array() || list.empty())
            throw std::invalid_argument("rows must be a non-empty array");
        for (const auto& row : list) {
            const int no = row.at("row").get<int>();
            json pj = row.at("policy");
            if (!pj.contains("seed"))
                pj["seed"] = seed + static_cast<std::uint64_t>(no);
            const auto policy = parse_policy(pj.dump());
            const auto expected = outcome_kind_from_string(row.at("expected").get<std::string>());
            const auto outcome = run_attack(scenario, policy);
            ordered_json o;
            o["row"] = no;
            o["dropped"] = row.value("dropped", std::string());
            o["sender"] = row.value("sender", std::string());
            o["expected"] = to_string(expected);
            o["actual"] = to_string(outcome.kind);
            o["match"] = outcome.kind == expected;
            o["matched_packets"] = outcome.matched;
            o["dropped_packets"] = outcome.dropped;
            rows.push_back(o);
            if (outcome.kind != expected)
                r.mismatches.push_back("row " + std::to_string(no) + ": expected " + to_string(expected) + ", got " +
                                       to_string(outcome.kind));
        }
    });
    ordered_json rep;
    rep["step"] = step.name;
    rep["kind"] = step.kind;
    rep["seed"] = seed;
    rep["rows"] = rows;
    r.report = rep.dump(2);
    return r;
}

StepResult run_single_attack(const StepSpec& step, std::uint64_t seed)
{
    const auto scenario = load_scenario(step.files.at("scenario"), seed);
    const auto ptext = slurp(step.files.at("policy"));
    const auto policy = schema_guard(step.files.at("policy").string(), [&] {
        auto pj = json::parse(ptext);
        if (!pj.contains("seed"))
            pj["seed"] = seed;
        return parse_policy(pj.dump());
    });
    StepResult r{step.name, step.kind, {}, {}};
    const auto outcome = run_attack(scenario, policy);
    if (step.raw.contains("expected")) {
        const auto expected = schema_guard(step.name, [&] {
            return outcome_kind_from_string(step.raw["expected"].get<std::string>());
        });
        if (expected != outcome.kind)
            r.mismatches.push_back("expected " + to_string(expected) + ", got " + to_string(outcome.kind));
    }
    r.report = outcome_report_json(outcome);
    return r;
}

StepResult run_voice_quality(const StepSpec& step, std::uint64_t seed)
{
    const auto scenario = load_scenario(step.files.at("scenario"), seed);
    const auto fixture = load_json(step.files.at("fixture"));
    StepResult r{step.name, step.kind, {}, {}};
    ordered_json rows = ordered_json::array();
    schema_guard(step.files.at("fixture").string(), [&] {
        for (const auto& row : fixture.at("rows")) {
            AttackPolicy p;
            p.selector.voice = true;
            p.drop_rate = row.at("drop_rate").get<double>();
            p.seed = seed;
            validate_policy(p);
            const auto expected = voice_band_from_string(row.at("expected").get<std::string>());
            const auto outcome = run_attack(scenario, p);
            const auto band = outcome.voice_quality.value_or(VoiceQualityBand::NO_IMPACT);
            ordered_json o;
            o["drop_rate"] = p.drop_rate;
            o["realized_drop_fraction"] = outcome.effective_drop;
            o["expected"] = to_string(expected);
            o["actual"] = to_string(band);
            o["outcome"] = to_string(outcome.kind);
            o["match"] = band == expected;
            rows.push_back(o);
            if (band != expected) {
                std::ostringstream msg;
                msg << "drop rate " << p.drop_rate << ": expected " << to_string(expected) << ", got "
                    << to_string(band);
                r.mismatches.push_back(msg.str());
            }
        }
    });
    ordered_json rep;
    rep["step"] = step.name;
    rep["kind"] = step.kind;
    rep["seed"] = seed;
    rep["rows"] = rows;
    r.report = rep.dump(2);
    return r;
}

StepResult run_degradation(const StepSpec& step, std::uint64_t seed)
{
    const auto fixture = load_json(step.files.at("fixture"));
    StepResult r{step.name, step.kind, {}, {}};

    EventClassifier model;
    if (step.files.contains("model")) {
        const auto text = slurp(step.files.at("model"));
        model = schema_guard(step.files.at("model").string(), [&] { return model_from_json(text); });
    }
    TunnelConfig tunnel;
    if (step.files.contains("tunnel")) {
        const auto text = slurp(step.files.at("tunnel"));
        tunnel = schema_guard(step.files.at("tunnel").string(), [&] { return parse_tunnel_config(text); });
    }
    tunnel.seed = seed;

    struct Expect {
        std::size_t apps;
        double lo, hi;
    };
    std::vector<Expect> expects;
    std::size_t train_runs = 0, test_runs = 0;
    Carrier train_carrier = Carrier::TMOBILE;
    bool monotone = false;
    schema_guard(step.files.at("fixture").string(), [&] {
        train_runs = fixture.value("train_runs_per_event", std::size_t{50});
        test_runs = fixture.at("test_runs_per_event").get<std::size_t>();
        train_carrier = carrier_from_string(fixture.value("train_carrier", std::string("TMOBILE")));
        monotone = fixture.value("monotone", false);
        for (const auto& row : fixture.at("rows"))
            expects.push_back({row.at("apps").get<std::size_t>(), row.value("min_fraction", 0.0),
                               row.value("max_fraction", 1.0)});
        if (expects.empty())
            throw std::invalid_argument("rows must be non-empty");
    });
    if (!model.root)
        model = train_classifier(generate_dataset(train_runs, train_carrier, seed), seed);

    std::vector<EventRun> runs;
    std::uint64_t n = 0;
    for (auto c : {Carrier::TMOBILE, Carrier::ATT, Carrier::VERIZON})
        for (auto k : kAllEventKinds)
            for (std::size_t i = 0; i < test_runs; ++i)
                runs.push_back(simulate_event(k, c, seed * 7919ULL + 1000000ULL + n++));

    std::vector<std::size_t> counts;
    for (const auto& e : expects)
        counts.push_back(e.apps);
    const auto rows = schema_guard(step.name, [&] { return evaluate_degradation(model, runs, tunnel, counts); });

    ordered_json out = ordered_json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const bool ok = row.fraction >= expects[i].lo - 1e-9 && row.fraction <= expects[i].hi + 1e-9;
        out.push_back({{"apps", row.apps},
                       {"correct", row.correct},
                       {"total", row.total},
                       {"fraction", row.fraction},
                       {"min_fraction", expects[i].lo},
                       {"max_fraction", expects[i].hi},
                       {"match", ok}});
        if (!ok) {
            std::ostringstream msg;
            msg << row.apps << " apps: fraction " << row.fraction << " outside [" << expects[i].lo << ", "
                << expects[i].hi << "]";
            r.mismatches.push_back(msg.str());
        }
        if (monotone && i > 0 && row.apps > rows[i - 1].apps && row.fraction > rows[i - 1].fraction)
            r.mismatches.push_back("correctness increases from " + std::to_string(rows[i - 1].apps) + " to " +
                                   std::to_string(row.apps) + " apps");
    }
    ordered_json rep;
    rep["step"] = step.name;
    rep["kind"] = step.kind;
    rep["seed"] = seed;
    rep["csv"] = degradation_csv(rows);
    rep["rows"] = out;
    r.report = rep.dump(2);
    return r;
}

StepResult run_analyze(const StepSpec& step, std::uint64_t seed)
{
    const auto scenario = load_scenario(step.files.at("scenario"), seed);
    StepResult r{step.name, step.kind, {}, {}};
    const auto sim = run_scenario(scenario);
    const auto profile = carrier_profile(scenario.carrier);
    const auto filtered = filter_wifi_calling(sim.delivered_trace(), profile);
    ordered_json rep;
    rep["step"] = step.name;
    rep["kind"] = step.kind;
    rep["seed"] = seed;
    rep["calls"] = ordered_json::parse(statistics_to_json(extract_call_statistics(filtered, profile)));
    rep["truth"] = ordered_json::parse(truth_to_json(sim.truth));
    if (step.files.contains("model")) {
        const auto text = slurp(step.files.at("model"));
        const auto model = schema_guard(step.files.at("model").string(), [&] { return model_from_json(text); });
        ordered_json segs = ordered_json::array();
        for (const auto& s : segment_trace(filtered))
            segs.push_back({{"start", s.front().ts}, {"end", s.back().ts}, {"event", to_string(classify_event(model, s))}});
        rep["segments"] = segs;
    }
    r.report = rep.dump(2);
    return r;
}

StepResult run_step(const StepSpec& step, std::uint64_t seed)
{
    static const std::map<std::string, std::function<StepResult(const StepSpec&, std::uint64_t)>> runners = {
        {"attack_table", run_attack_table}, {"attack", run_single_attack}, {"voice_quality", run_voice_quality},
        {"degradation", run_degradation},   {"analyze", run_analyze},
    };
    return runners.at(step.kind)(step, seed);
}

}  // namespace

ManifestRun run_manifest(const fs::path& manifest, const ManifestOptions& options)
{
    const auto doc = load_json(manifest);
    const auto base = manifest.parent_path();
    ManifestRun run;
    std::uint64_t seed = 0;
    std::vector<StepSpec> steps;

    schema_guard(manifest.string(), [&] {
        if (!doc.is_object())
            throw std::invalid_argument("manifest must be an object");
        run.name = doc.at("name").get<std::string>();
        seed = options.seed.value_or(doc.at("seed").get<std::uint64_t>());
        run.output_dir = options.output_dir.value_or(base / doc.value("output_dir", "out/" + run.name));
        const auto& list = doc.at("steps");
        if (!list.is_array() || list.empty())
            throw std::invalid_argument("steps must be a non-empty array");
        std::set<std::string> names;
        for (const auto& s : list) {
            StepSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.kind = s.at("kind").get<std::string>();
            spec.raw = s;
            if (!names.insert(spec.name).second)
                throw std::invalid_argument("duplicate step name '" + spec.name + "'");
            const auto kind = step_files().find(spec.kind);
            if (kind == step_files().end())
                throw std::invalid_argument("unknown step kind '" + spec.kind + "'");
            for (const auto& key : kind->second.first)
                spec.files[key] = base / s.at(key).get<std::string>();
            for (const auto& key : kind->second.second)
                if (s.contains(key))
                    spec.files[key] = base / s.at(key).get<std::string>();
            steps.push_back(std::move(spec));
        }
    });

    for (const auto& s : steps)
        for (const auto& [key, path] : s.files)
            if (!fs::exists(path))
                throw ManifestError(kExitMissingFile,
                                    "step '" + s.name + "' references missing " + key + ": " + path.string());

    run.steps.resize(steps.size());
    const std::size_t width = std::max(1u, options.parallel);
    for (std::size_t i = 0; i < steps.size(); i += width) {
        std::vector<std::future<StepResult>> batch;
        for (std::size_t j = i; j < std::min(steps.size(), i + width); ++j)
            batch.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred,
                                       [&, j] { return run_step(steps[j], seed); }));
        for (std::size_t j = 0; j < batch.size(); ++j)
            run.steps[i + j] = batch[j].get();
    }

    ordered_json summary;
    summary["manifest"] = run.name;
    summary["seed"] = seed;
    ordered_json list = ordered_json::array();
    bool all_ok = true;
    for (const auto& s : run.steps) {
        all_ok = all_ok && s.mismatches.empty();
        list.push_back({{"step", s.name}, {"kind", s.kind}, {"status", s.mismatches.empty() ? "PASS" : "MISMATCH"},
                        {"diff", s.mismatches}});
    }
    summary["steps"] = list;
    summary["result"] = all_ok ? "PASS" : "MISMATCH";
    run.summary = summary.dump(2);
    run.exit_code = all_ok ? kExitOk : kExitMismatch;

    if (options.write_files) {
        fs::create_directories(run.output_dir);
        for (const auto& s : run.steps)
            std::ofstream(run.output_dir / (s.name + ".json")) << s.report << '\n';
        std::ofstream(run.output_dir / "summary.json") << run.summary << '\n';
    }
    return run;
}

}  // namespace vowifi
