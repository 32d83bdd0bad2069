#include "vowifi/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>

namespace vowifi {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b)
{
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

CallScript random_call_script(Role role, Carrier carrier, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto uniform = [&](Millis lo, Millis hi) {
        return lo + static_cast<Millis>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };
    CallScript s;
    s.role = role;
    s.carrier = carrier;
    s.dial_time = uniform(1000, 5000);
    s.answer_delay = uniform(3000, 15000);
    s.talk_duration = uniform(5000, 30000);
    s.hangup_side = rng() % 2 ? Side::LOCAL : Side::REMOTE;
    s.seed = rng();
    return s;
}

SimEventKind sim_event_for(EventKind kind)
{
    switch (kind) {
    case EventKind::DIAL_CALL: return SimEventKind::DIAL_OUT;
    case EventKind::RECEIVE_CALL: return SimEventKind::RECEIVE_CALL;
    case EventKind::SEND_TEXT: return SimEventKind::SEND_TEXT;
    case EventKind::RECEIVE_TEXT: return SimEventKind::RECEIVE_TEXT;
    case EventKind::ACTIVATE: return SimEventKind::ACTIVATE;
    case EventKind::DEACTIVATE: return SimEventKind::DEACTIVATE;
    }
    throw std::invalid_argument("unknown event kind");
}

EventRun simulate_event(EventKind kind, Carrier carrier, std::uint64_t seed)
{
    EventRun run{kind, carrier, seed, {}};
    switch (kind) {
    case EventKind::DIAL_CALL:
        run.sim = run_call(random_call_script(Role::CALLER, carrier, seed));
        break;
    case EventKind::RECEIVE_CALL:
        run.sim = run_call(random_call_script(Role::CALLEE, carrier, seed));
        break;
    default: {
        std::mt19937_64 rng(seed);
        const Millis at = 1000 + static_cast<Millis>(rng() % 4001);
        run.sim = run_event(sim_event_for(kind), at, carrier_profile(carrier), rng());
        break;
    }
    }
    return run;
}

Trace event_segment(const EventRun& run)
{
    const auto filtered = filter_wifi_calling(run.sim.delivered_trace(), carrier_profile(run.carrier));
    auto segments = segment_trace(filtered);
    if (segments.empty())
        throw std::runtime_error("simulated event produced no Wi-Fi-calling packets");
    return std::move(segments.front());
}

std::vector<LabeledSegment> generate_dataset(std::size_t runs_per_event, Carrier carrier, std::uint64_t base_seed)
{
    std::vector<LabeledSegment> out;
    out.reserve(runs_per_event * kEventKindCount);
    for (auto kind : kAllEventKinds)
        for (std::size_t r = 0; r < runs_per_event; ++r) {
            const auto seed = mix(base_seed, (static_cast<std::uint64_t>(kind) << 32) | r);
            out.push_back({kind, event_segment(simulate_event(kind, carrier, seed))});
        }
    return out;
}

void write_dataset(const std::vector<LabeledSegment>& data, const std::filesystem::path& dir)
{
    std::map<EventKind, std::size_t> next;
    for (const auto& d : data) {
        const auto sub = dir / to_string(d.label);
        std::filesystem::create_directories(sub);
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu.jsonl", next[d.label]++);
        write_trace(d.segment, sub / name);
    }
}

std::vector<LabeledSegment> read_dataset(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("dataset directory not found: " + dir.string());
    std::vector<LabeledSegment> out;
    for (auto kind : kAllEventKinds) {
        const auto sub = dir / to_string(kind);
        if (!std::filesystem::is_directory(sub))
            continue;
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(sub))
            if (e.path().extension() == ".jsonl")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            out.push_back({kind, read_trace(f)});
    }
    return out;
}

}  // namespace vowifi
