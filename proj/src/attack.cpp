#include "vowifi/attack.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool PacketSelector::matches(const PacketRecord& packet, const PacketTag& tag) const
{
    if (voice != tag.is_voice())
        return false;
    if (!voice && message && tag.message() != *message)
        return false;
    if (direction && packet.dir != *direction)
        return false;
    if (phase && tag.phase != *phase)
        return false;
    return true;
}

DropTap::DropTap(AttackPolicy policy)
    : policy_(std::move(policy)), rng_(policy_.seed), coin_(policy_.drop_rate)
{
    validate_policy(policy_);
}

bool DropTap::forward(const PacketRecord& packet, const PacketTag& tag)
{
    if (policy_.active_window) {
        const auto [first, last] = *policy_.active_window;
        if (packet.ts < first || packet.ts >= last)
            return true;
    }
    if (!policy_.selector.matches(packet, tag))
        return true;
    ++matched_;
    if (coin_(rng_)) {
        ++dropped_;
        return false;
    }
    return true;
}

void validate_policy(const AttackPolicy& policy)
{
    if (!(policy.drop_rate >= 0.0 && policy.drop_rate <= 1.0))
        throw std::invalid_argument("drop_rate must be in [0, 1]");
    if (!policy.selector.voice && !policy.selector.message)
        throw std::invalid_argument("selector must name a message kind or RTP");
    if (policy.active_window && policy.active_window->first > policy.active_window->second)
        throw std::invalid_argument("window_ms start after end");
}

OutcomeKind outcome_from_events(const std::vector<SimEvent>& events)
{
    auto has = [&](SimEventKind k) {
        return std::any_of(events.begin(), events.end(), [&](const SimEvent& e) { return e.kind == k; });
    };
    if (has(SimEventKind::VOLTE_FALLBACK))
        return OutcomeKind::CELLULAR_FALLBACK_CALL;
    if (has(SimEventKind::SECOND_INCOMING_CALL))
        return OutcomeKind::TWO_INCOMING_CALLS;
    if (has(SimEventKind::STUCK_CONVERSATION))
        return OutcomeKind::STUCK_CONVERSATION_20S;
    if (has(SimEventKind::STUCK_DIALING))
        return has(SimEventKind::RINGBACK_STARTED) ? OutcomeKind::KEEPS_HEARING_ALERTING
                                                   : OutcomeKind::STUCK_DIALING_SCREEN;
    if (has(SimEventKind::CALL_TERMINATED_BY_NETWORK))
        return OutcomeKind::TERMINATED;
    if (has(SimEventKind::VOICE_MUTED))
        return OutcomeKind::MUTED;
    if (has(SimEventKind::VOICE_DEGRADED))
        return OutcomeKind::CALL_DROP_OR_QUALITY_LOSS;
    return OutcomeKind::NO_EFFECT;
}

VoiceQualityBand assess_voice_quality(double effective_drop)
{
    if (effective_drop >= 1.0)
        return VoiceQualityBand::TERMINATED;
    if (effective_drop >= 0.70)
        return VoiceQualityBand::HARDLY_CONTINUED;
    if (effective_drop >= kAudibleLossFraction)
        return VoiceQualityBand::NOISES;
    return VoiceQualityBand::NO_IMPACT;
}

namespace {

AttackOutcome summarize(SimResult sim, const DropTap& tap, const AttackPolicy& policy)
{
    AttackOutcome out;
    out.matched = tap.matched();
    out.dropped = tap.dropped();
    out.effective_drop =
        out.matched ? static_cast<double>(out.dropped) / static_cast<double>(out.matched) : 0.0;
    out.observed_events = sim.events;
    out.kind = outcome_from_events(sim.events);
    if (out.matched == 0) {
        out.kind = OutcomeKind::NO_EFFECT;
        out.notes.push_back("selector matched no packets in this scenario");
    }
    if (policy.selector.voice && out.matched > 0) {
        const bool terminated = sim.count_events(SimEventKind::CALL_TERMINATED_BY_NETWORK) > 0;
        out.voice_quality = terminated ? VoiceQualityBand::TERMINATED : assess_voice_quality(out.effective_drop);
    }
    out.sim = std::move(sim);
    return out;
}

}  // namespace

AttackOutcome run_attack(const Scenario& scenario, const AttackPolicy& policy)
{
    DropTap tap(policy);
    auto sim = run_scenario(scenario, &tap);
    return summarize(std::move(sim), tap, policy);
}

AttackOutcome run_attack(const CallScript& script, const AttackPolicy& policy)
{
    DropTap tap(policy);
    auto sim = run_call(script, &tap);
    return summarize(std::move(sim), tap, policy);
}

AttackOutcome mute_attack(const CallScript& script, Millis mute_start, Millis mute_duration)
{
    const auto clean = run_call(script);
    std::optional<Millis> first_voice_after;
    std::optional<Millis> conversation_begin;
    for (std::size_t i = 0; i < clean.trace.size(); ++i) {
        if (clean.tags[i].step != FlowStep::VOICE)
            continue;
        if (!conversation_begin)
            conversation_begin = clean.trace[i].ts;
        if (clean.trace[i].ts >= mute_start) {
            first_voice_after = clean.trace[i].ts;
            break;
        }
    }

    const auto outside = [&] {
        AttackOutcome out;
        out.kind = OutcomeKind::NO_EFFECT;
        out.observed_events = clean.events;
        out.sim = clean;
        return out;
    };
    if (mute_duration <= 0)
        return outside();
    if (!conversation_begin || !first_voice_after || !clean.truth.call_end || mute_start < *conversation_begin ||
        *first_voice_after + mute_duration > *clean.truth.call_end) {
        auto out = outside();
        out.notes.push_back("mute window outside the conversation");
        return out;
    }

    // The voice packet at s0 gets through; the next one delivered is at s0 + duration,
    // so the receiver-side silence equals the requested mute duration.
    const Millis s0 = *first_voice_after;
    AttackPolicy policy;
    policy.selector.voice = true;
    policy.selector.phase = CallPhase::CONVERSATION;
    policy.drop_rate = 1.0;
    policy.active_window = std::make_pair(s0 + 1, s0 + mute_duration);
    auto out = run_attack(script, policy);
    out.kind = out.sim.count_events(SimEventKind::CALL_TERMINATED_BY_NETWORK) ? OutcomeKind::TERMINATED
                                                                             : OutcomeKind::MUTED;
    return out;
}

AttackPolicy parse_policy(const std::string& text)
{
    const auto j = json::parse(text);
    AttackPolicy p;
    const auto sel = j.at("selector").get<std::string>();
    if (sel == "RTP")
        p.selector.voice = true;
    else
        p.selector.message = sip_kind_from_string(sel);
    const auto dir = j.value("direction", std::string("ANY"));
    if (dir != "ANY")
        p.selector.direction = direction_from_string(dir);
    if (j.contains("phase") && !j["phase"].is_null())
        p.selector.phase = phase_from_string(j["phase"].get<std::string>());
    p.drop_rate = j.value("drop_rate", 1.0);
    if (j.contains("window_ms") && !j["window_ms"].is_null()) {
        const auto& w = j["window_ms"];
        if (!w.is_array() || w.size() != 2)
            throw std::invalid_argument("window_ms must be [start, end]");
        p.active_window = std::make_pair(w[0].get<Millis>(), w[1].get<Millis>());
    }
    p.seed = j.value("seed", std::uint64_t{0});
    validate_policy(p);
    return p;
}

AttackPolicy read_policy(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_policy(ss.str());
}

std::string policy_to_json(const AttackPolicy& p)
{
    ordered_json j;
    j["selector"] = p.selector.voice ? std::string("RTP") : to_string(*p.selector.message);
    j["direction"] = p.selector.direction ? to_string(*p.selector.direction) : std::string("ANY");
    if (p.selector.phase)
        j["phase"] = to_string(*p.selector.phase);
    j["drop_rate"] = p.drop_rate;
    if (p.active_window)
        j["window_ms"] = {p.active_window->first, p.active_window->second};
    j["seed"] = p.seed;
    return j.dump(2);
}

std::string outcome_report_json(const AttackOutcome& o)
{
    ordered_json j;
    j["outcome"] = to_string(o.kind);
    j["matched_packets"] = o.matched;
    j["dropped_packets"] = o.dropped;
    j["realized_drop_fraction"] = o.effective_drop;
    j["voice_quality"] = o.voice_quality ? ordered_json(to_string(*o.voice_quality)) : ordered_json(nullptr);
    j["notes"] = o.notes;
    ordered_json events = ordered_json::array();
    for (const auto& e : o.observed_events)
        events.push_back(ordered_json{{"kind", to_string(e.kind)}, {"ts", e.ts}, {"detail", e.detail}});
    j["events"] = events;
    return j.dump(2);
}

namespace {

const std::pair<OutcomeKind, const char*> kOutcomeNames[] = {
    {OutcomeKind::CELLULAR_FALLBACK_CALL, "CELLULAR_FALLBACK_CALL"},
    {OutcomeKind::TWO_INCOMING_CALLS, "TWO_INCOMING_CALLS"},
    {OutcomeKind::STUCK_DIALING_SCREEN, "STUCK_DIALING_SCREEN"},
    {OutcomeKind::KEEPS_HEARING_ALERTING, "KEEPS_HEARING_ALERTING"},
    {OutcomeKind::NO_EFFECT, "NO_EFFECT"},
    {OutcomeKind::CALL_DROP_OR_QUALITY_LOSS, "CALL_DROP_OR_QUALITY_LOSS"},
    {OutcomeKind::STUCK_CONVERSATION_20S, "STUCK_CONVERSATION_20S"},
    {OutcomeKind::MUTED, "MUTED"},
    {OutcomeKind::TERMINATED, "TERMINATED"},
};

const std::pair<VoiceQualityBand, const char*> kBandNames[] = {
    {VoiceQualityBand::NO_IMPACT, "NO_IMPACT"},
    {VoiceQualityBand::NOISES, "NOISES"},
    {VoiceQualityBand::HARDLY_CONTINUED, "HARDLY_CONTINUED"},
    {VoiceQualityBand::TERMINATED, "TERMINATED"},
};

}  // namespace

std::string to_string(OutcomeKind k)
{
    for (const auto& [v, n] : kOutcomeNames)
        if (v == k)
            return n;
    return "?";
}

std::string to_string(VoiceQualityBand b)
{
    for (const auto& [v, n] : kBandNames)
        if (v == b)
            return n;
    return "?";
}

OutcomeKind outcome_kind_from_string(const std::string& s)
{
    for (const auto& [v, n] : kOutcomeNames)
        if (s == n)
            return v;
    throw std::invalid_argument("unknown outcome kind '" + s + "'");
}

VoiceQualityBand voice_band_from_string(const std::string& s)
{
    for (const auto& [v, n] : kBandNames)
        if (s == n)
            return v;
    throw std::invalid_argument("unknown voice quality band '" + s + "'");
}

}  // namespace vowifi
