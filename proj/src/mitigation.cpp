#include "vowifi/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;

const std::vector<BackgroundAppProfile>& default_app_profiles()
{
    static const std::vector<BackgroundAppProfile> apps = {
        {"mail", 15.0, 1500, 10000, 80, 1500, 0.3},
        {"chat", 4.0, 3000, 6000, 60, 600, 0.5},
        {"maps", 30.0, 4000, 5000, 100, 1500, 0.2},
    };
    return apps;
}

const BackgroundAppProfile& app_profile(const std::string& name)
{
    for (const auto& a : default_app_profiles())
        if (a.name == name)
            return a;
    throw std::invalid_argument("unknown app profile '" + name + "'");
}

void validate_tunnel(const TunnelConfig& cfg)
{
    for (auto c : {Carrier::TMOBILE, Carrier::ATT, Carrier::VERIZON})
        if (carrier_profile(c).gateway_addrs.contains(cfg.endpoint))
            throw std::invalid_argument("tunnel endpoint " + cfg.endpoint + " is a carrier gateway");
    if (cfg.endpoint.empty())
        throw std::invalid_argument("tunnel endpoint is empty");
    if (cfg.noise_rate < 0)
        throw std::invalid_argument("noise_rate must be non-negative");
    for (const auto& a : cfg.apps) {
        if (!(a.on_rate > 0 && a.mean_on_ms > 0 && a.mean_off_ms > 0))
            throw std::invalid_argument("app profile " + a.name + " needs positive rates");
        if (a.min_size < 40 || a.max_size > 1500 || a.min_size > a.max_size)
            throw std::invalid_argument("app profile " + a.name + " sizes must lie in [40, 1500]");
        if (a.ul_fraction < 0 || a.ul_fraction > 1)
            throw std::invalid_argument("app profile " + a.name + " ul_fraction must be in [0, 1]");
    }
}

namespace {

PacketRecord tunnel_packet(Millis ts, Direction dir, int size, const std::string& endpoint)
{
    PacketRecord p;
    p.ts = ts;
    p.dir = dir;
    p.size = size + kTunnelOverhead;
    p.proto = Proto::ESP;
    p.src = dir == Direction::UL ? kDeviceAddr : endpoint;
    p.dst = dir == Direction::UL ? endpoint : kDeviceAddr;
    p.tunnel = kTunnelTag;
    return p;
}

void generate_app(const BackgroundAppProfile& app, Millis lo, Millis hi, std::mt19937_64& rng,
                  const std::string& endpoint, std::vector<std::pair<PacketRecord, TrafficSource>>& out)
{
    std::exponential_distribution<double> on_len(1.0 / app.mean_on_ms);
    std::exponential_distribution<double> off_len(1.0 / app.mean_off_ms);
    std::exponential_distribution<double> gap(app.on_rate / 1000.0);
    std::uniform_int_distribution<int> size(app.min_size, app.max_size);
    std::bernoulli_distribution up(app.ul_fraction);
    std::bernoulli_distribution starts_on(app.mean_on_ms / (app.mean_on_ms + app.mean_off_ms));

    double t = static_cast<double>(lo);
    bool on = starts_on(rng);
    while (t <= static_cast<double>(hi)) {
        const double len = on ? on_len(rng) : off_len(rng);
        if (on) {
            const double stop = std::min(t + len, static_cast<double>(hi) + 1);
            for (double a = t + gap(rng); a < stop; a += gap(rng)) {
                const auto dir = up(rng) ? Direction::UL : Direction::DL;
                out.push_back({tunnel_packet(static_cast<Millis>(a), dir, size(rng), endpoint), TrafficSource::APP});
            }
        }
        t += len;
        on = !on;
    }
}

}  // namespace

TunnelTrace mix_tunnel_labeled(std::span<const PacketRecord> calling, const TunnelConfig& cfg, Millis span_start,
                               Millis span_end)
{
    validate_tunnel(cfg);
    std::vector<std::pair<PacketRecord, TrafficSource>> all;
    for (const auto& p : calling)
        all.push_back({tunnel_packet(p.ts, p.dir, p.size, cfg.endpoint), TrafficSource::CALLING});

    std::mt19937_64 rng(cfg.seed);
    for (const auto& app : cfg.apps)
        generate_app(app, span_start, span_end, rng, cfg.endpoint, all);
    if (cfg.noise_rate > 0) {
        std::exponential_distribution<double> gap(cfg.noise_rate / 1000.0);
        std::uniform_int_distribution<int> size(40, 1500);
        std::bernoulli_distribution up(0.5);
        for (double a = static_cast<double>(span_start) + gap(rng); a <= static_cast<double>(span_end); a += gap(rng)) {
            const auto dir = up(rng) ? Direction::UL : Direction::DL;
            all.push_back({tunnel_packet(static_cast<Millis>(a), dir, size(rng), cfg.endpoint), TrafficSource::NOISE});
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first.ts < b.first.ts; });

    TunnelTrace out;
    out.trace.reserve(all.size());
    out.source.reserve(all.size());
    for (auto& [p, s] : all) {
        out.trace.push_back(std::move(p));
        out.source.push_back(s);
    }
    return out;
}

Trace mix_tunnel(std::span<const PacketRecord> calling, const TunnelConfig& cfg)
{
    if (calling.empty())
        return mix_tunnel_labeled(calling, cfg, 0, 0).trace;
    return mix_tunnel_labeled(calling, cfg, calling.front().ts, calling.back().ts).trace;
}

Trace strip_tunnel_overhead(std::span<const PacketRecord> tunnel)
{
    Trace out(tunnel.begin(), tunnel.end());
    for (auto& p : out) {
        p.size = std::max(1, p.size - kTunnelOverhead);
        p.tunnel.reset();
    }
    return out;
}

bool detection_correct(const EventClassifier& classifier, const EventRun& run, const TunnelConfig& cfg)
{
    const auto bare = filter_wifi_calling(run.sim.delivered_trace(), carrier_profile(run.carrier));
    if (bare.empty())
        return false;
    const Millis lo = std::max<Millis>(0, bare.front().ts - kObservationMarginMs);
    const Millis hi = bare.back().ts + kObservationMarginMs;
    const auto tunnel = mix_tunnel_labeled(bare, cfg, lo, hi);
    const auto observed = segment_trace(strip_tunnel_overhead(tunnel.trace));
    const auto expected = segment_trace(bare);

    if (observed.size() != expected.size())
        return false;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (std::abs(observed[i].front().ts - expected[i].front().ts) > kBoundaryToleranceMs ||
            std::abs(observed[i].back().ts - expected[i].back().ts) > kBoundaryToleranceMs)
            return false;
    }
    return classify_event(classifier, observed.front()) == run.kind;
}

std::vector<DegradationRow> evaluate_degradation(const EventClassifier& classifier, const std::vector<EventRun>& runs,
                                                 const TunnelConfig& base, const std::vector<std::size_t>& app_counts)
{
    const auto& pool = base.apps.empty() ? default_app_profiles() : base.apps;
    std::vector<DegradationRow> rows;
    for (auto k : app_counts) {
        if (k > pool.size())
            throw std::invalid_argument("requested more apps than profiles available");
        TunnelConfig cfg = base;
        cfg.apps.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
        DegradationRow row;
        row.apps = k;
        row.total = runs.size();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            cfg.seed = base.seed * 1000003ULL + i;
            row.correct += detection_correct(classifier, runs[i], cfg) ? 1 : 0;
        }
        row.fraction = row.total ? static_cast<double>(row.correct) / static_cast<double>(row.total) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string degradation_csv(const std::vector<DegradationRow>& rows)
{
    std::ostringstream out;
    out << "apps,correct,total,fraction\n";
    for (const auto& r : rows) {
        char frac[32];
        std::snprintf(frac, sizeof frac, "%.4f", r.fraction);
        out << r.apps << ',' << r.correct << ',' << r.total << ',' << frac << '\n';
    }
    return out.str();
}

EventRun event_run_from_scenario(const Scenario& scenario)
{
    EventRun run;
    run.carrier = scenario.carrier;
    run.seed = scenario.seed;
    if (scenario.call) {
        if (!scenario.events.empty())
            throw std::invalid_argument("scenario must contain exactly one event to be labeled");
        run.kind = scenario.call->role == Role::CALLER ? EventKind::DIAL_CALL : EventKind::RECEIVE_CALL;
    } else {
        if (scenario.events.size() != 1)
            throw std::invalid_argument("scenario must contain exactly one event to be labeled");
        bool found = false;
        for (auto k : kAllEventKinds)
            if (sim_event_for(k) == scenario.events.front().kind) {
                run.kind = k;
                found = true;
            }
        if (!found)
            throw std::invalid_argument("scenario event " + to_string(scenario.events.front().kind) +
                                        " is not a classifiable event");
    }
    run.sim = run_scenario(scenario);
    return run;
}

TunnelConfig parse_tunnel_config(const std::string& text)
{
    const auto j = json::parse(text);
    TunnelConfig cfg;
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.noise_rate = j.value("noise_rate", 0.0);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("apps")) {
        for (const auto& a : j["apps"]) {
            if (a.is_string()) {
                cfg.apps.push_back(app_profile(a.get<std::string>()));
                continue;
            }
            BackgroundAppProfile p;
            p.name = a.at("name").get<std::string>();
            p.on_rate = a.at("on_rate").get<double>();
            p.mean_on_ms = a.at("mean_on_ms").get<double>();
            p.mean_off_ms = a.at("mean_off_ms").get<double>();
            p.min_size = a.value("min_size", 40);
            p.max_size = a.value("max_size", 1500);
            p.ul_fraction = a.value("ul_fraction", 0.5);
            cfg.apps.push_back(p);
        }
    }
    validate_tunnel(cfg);
    return cfg;
}

TunnelConfig read_tunnel_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_tunnel_config(ss.str());
}

}  // namespace vowifi
