#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "vowifi/attack.hpp"

using namespace vowifi;

namespace {

AttackPolicy drop(SipMessageKind kind, Direction dir, std::optional<CallPhase> phase = std::nullopt)
{
    AttackPolicy p;
    p.selector.message = kind;
    p.selector.direction = dir;
    p.selector.phase = phase;
    return p;
}

AttackPolicy voice(double rate, std::uint64_t seed = 1)
{
    AttackPolicy p;
    p.selector.voice = true;
    p.drop_rate = rate;
    p.seed = seed;
    return p;
}

std::optional<Millis> last_delivered_dl_voice(const SimResult& r)
{
    std::optional<Millis> t;
    for (std::size_t i = 0; i < r.trace.size(); ++i)
        if (r.delivered[i] && r.tags[i].step == FlowStep::VOICE && r.trace[i].dir == Direction::DL)
            t = r.trace[i].ts;
    return t;
}

}  // namespace

TEST_CASE("outgoing-call drop table")
{
    using K = SipMessageKind;
    using O = OutcomeKind;
    const auto UL = Direction::UL, DL = Direction::DL;
    const std::vector<std::pair<AttackPolicy, OutcomeKind>> rows = {
        {drop(K::INVITE, UL), O::CELLULAR_FALLBACK_CALL},
        {drop(K::TRYING_100, DL), O::NO_EFFECT},
        {drop(K::SESSION_183, DL), O::TWO_INCOMING_CALLS},
        {drop(K::PRACK, UL, CallPhase::SETUP), O::NO_EFFECT},
        {drop(K::OK_200, DL, CallPhase::SETUP), O::NO_EFFECT},
        {drop(K::RINGING_180, DL), O::STUCK_DIALING_SCREEN},
        {drop(K::PRACK, UL, CallPhase::ALERTING), O::NO_EFFECT},
        {drop(K::OK_200, DL, CallPhase::ALERTING), O::KEEPS_HEARING_ALERTING},
        {drop(K::ACK, UL), O::NO_EFFECT},
        {voice(0.8), O::CALL_DROP_OR_QUALITY_LOSS},
        {drop(K::BYE, UL), O::STUCK_CONVERSATION_20S},
        {drop(K::OK_200, DL, CallPhase::TEARDOWN), O::NO_EFFECT},
    };
    for (std::uint64_t seed : {11, 12, 13}) {
        for (const auto& [policy, expected] : rows) {
            const auto out = run_attack(testing::outgoing_call(seed), policy);
            CHECK(out.kind == expected);
            CHECK(out.matched > 0);
        }
    }
}

TEST_CASE("outcome kind is a function of the event log")
{
    const auto out = run_attack(testing::outgoing_call(), drop(SipMessageKind::RINGING_180, Direction::DL));
    CHECK(outcome_from_events(out.observed_events) == out.kind);
    CHECK(outcome_from_events({}) == OutcomeKind::NO_EFFECT);
    CHECK(outcome_from_events({{SimEventKind::STUCK_DIALING, 5, ""}, {SimEventKind::RINGBACK_STARTED, 1, ""}}) ==
          OutcomeKind::KEEPS_HEARING_ALERTING);
}

TEST_CASE("a dropped BYE leaves the callee in conversation for 20 s")
{
    const auto out = run_attack(testing::outgoing_call(), drop(SipMessageKind::BYE, Direction::UL));
    const auto stuck = out.sim.first_event(SimEventKind::STUCK_CONVERSATION);
    REQUIRE(stuck);
    REQUIRE(out.sim.truth.call_end);
    CHECK(stuck->ts - *out.sim.truth.call_end == doctest::Approx(kPeerMediaTimeoutMs).epsilon(0.01));
}

TEST_CASE("attacks are deterministic under a fixed seed")
{
    const auto a = run_attack(testing::outgoing_call(), voice(0.5, 9));
    const auto b = run_attack(testing::outgoing_call(), voice(0.5, 9));
    CHECK(a.sim.delivered == b.sim.delivered);
    CHECK(a.observed_events == b.observed_events);
    CHECK(outcome_report_json(a) == outcome_report_json(b));
}

TEST_CASE("drop rate zero is transparent")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto clean = run_call(testing::outgoing_call(seed));
        const auto out = run_attack(testing::outgoing_call(seed), voice(0.0, seed));
        CHECK(out.sim.trace == clean.trace);
        CHECK(out.sim.delivered_trace() == clean.delivered_trace());
        CHECK(out.observed_events == clean.events);
        CHECK(out.dropped == 0);
        CHECK(out.kind == OutcomeKind::NO_EFFECT);
    }
}

TEST_CASE("delivered packets are the observed ones minus the dropped ones")
{
    const auto out = run_attack(testing::outgoing_call(), voice(0.3, 2));
    std::size_t not_delivered = 0;
    for (bool d : out.sim.delivered)
        not_delivered += d ? 0 : 1;
    CHECK(not_delivered == out.dropped);
    CHECK(out.sim.delivered_trace().size() == out.sim.trace.size() - out.dropped);
}

TEST_CASE("voice quality bands")
{
    CHECK(assess_voice_quality(0.0) == VoiceQualityBand::NO_IMPACT);
    CHECK(assess_voice_quality(0.2) == VoiceQualityBand::NO_IMPACT);
    CHECK(assess_voice_quality(0.39) == VoiceQualityBand::NO_IMPACT);
    CHECK(assess_voice_quality(0.4) == VoiceQualityBand::NOISES);
    CHECK(assess_voice_quality(0.6) == VoiceQualityBand::NOISES);
    CHECK(assess_voice_quality(0.7) == VoiceQualityBand::HARDLY_CONTINUED);
    CHECK(assess_voice_quality(0.99) == VoiceQualityBand::HARDLY_CONTINUED);
    CHECK(assess_voice_quality(1.0) == VoiceQualityBand::TERMINATED);

    const std::pair<double, VoiceQualityBand> sweep[] = {{0.2, VoiceQualityBand::NO_IMPACT},
                                                         {0.5, VoiceQualityBand::NOISES},
                                                         {0.8, VoiceQualityBand::HARDLY_CONTINUED},
                                                         {1.0, VoiceQualityBand::TERMINATED}};
    for (const auto& [rate, band] : sweep) {
        const auto out = run_attack(testing::outgoing_call(), voice(rate, 4));
        REQUIRE(out.voice_quality);
        CHECK(*out.voice_quality == band);
        CHECK(out.effective_drop == doctest::Approx(rate).epsilon(0.1));
    }
}

TEST_CASE("dropping all voice in conversation ends the call 8 to 10 s later")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        AttackPolicy p = voice(1.0, seed);
        p.selector.phase = CallPhase::CONVERSATION;
        auto script = testing::outgoing_call(seed);
        script.talk_duration = 60000;
        const auto out = run_attack(script, p);
        CHECK(out.kind == OutcomeKind::TERMINATED);
        const auto term = out.sim.first_event(SimEventKind::CALL_TERMINATED_BY_NETWORK);
        REQUIRE(term);
        // the last voice heard is the early media before the answer
        std::optional<Millis> last;
        for (std::size_t i = 0; i < out.sim.trace.size(); ++i)
            if (out.sim.delivered[i] && out.sim.tags[i].is_voice() && out.sim.trace[i].dir == Direction::DL &&
                out.sim.trace[i].ts <= term->ts)
                last = out.sim.trace[i].ts;
        REQUIRE(last);
        const auto gap = term->ts - *last;
        CHECK(gap > 8000);
        CHECK(gap <= 10000);
    }
}

TEST_CASE("mute attack")
{
    const auto script = testing::outgoing_call();
    for (Millis d : {1000, 4000, 8000}) {
        const auto out = mute_attack(script, 12000, d);
        CHECK(out.kind == OutcomeKind::MUTED);
        CHECK(out.sim.count_events(SimEventKind::CALL_TERMINATED_BY_NETWORK) == 0);
        CHECK(out.dropped > 0);
    }
    for (Millis d : {8100, 9000, 12000}) {
        const auto out = mute_attack(script, 12000, d);
        CHECK(out.kind == OutcomeKind::TERMINATED);
        const auto term = out.sim.first_event(SimEventKind::CALL_TERMINATED_BY_NETWORK);
        REQUIRE(term);
        // last downlink voice delivered before the muted stretch
        std::optional<Millis> heard;
        for (std::size_t i = 0; i < out.sim.trace.size(); ++i) {
            const auto& p = out.sim.trace[i];
            if (!out.sim.delivered[i] && out.sim.tags[i].step == FlowStep::VOICE)
                break;
            if (out.sim.tags[i].step == FlowStep::VOICE && p.dir == Direction::DL)
                heard = p.ts;
        }
        REQUIRE(heard);
        CHECK(term->ts - *heard > 8000);
        CHECK(term->ts - *heard <= 10000);
    }
    CHECK(last_delivered_dl_voice(mute_attack(script, 12000, 9000).sim) < last_delivered_dl_voice(run_call(script)));
    CHECK(mute_attack(script, 12000, 0).kind == OutcomeKind::NO_EFFECT);
    CHECK(mute_attack(script, 500, 2000).kind == OutcomeKind::NO_EFFECT);
    CHECK(mute_attack(script, 26000, 5000).kind == OutcomeKind::NO_EFFECT);
}

TEST_CASE("policy JSON round trip and validation")
{
    const auto p = parse_policy(R"({"selector":"OK_200","direction":"DL","phase":"ALERTING","drop_rate":0.5,
                                    "window_ms":[100,900],"seed":3})");
    CHECK(p.selector.message == SipMessageKind::OK_200);
    CHECK(p.selector.direction == Direction::DL);
    CHECK(p.selector.phase == CallPhase::ALERTING);
    CHECK(p.active_window == std::make_pair(Millis{100}, Millis{900}));
    const auto q = parse_policy(policy_to_json(p));
    CHECK(policy_to_json(q) == policy_to_json(p));

    CHECK_THROWS(parse_policy(R"({"selector":"RTP","drop_rate":1.5})"));
    CHECK_THROWS(parse_policy(R"({"selector":"HELLO"})"));
    CHECK_THROWS(parse_policy(R"({"selector":"BYE","window_ms":[9,1]})"));
    CHECK(parse_policy(R"({"selector":"RTP"})").selector.voice);
}

TEST_CASE("selector that matches nothing reports it")
{
    auto s = testing::outgoing_call();
    const auto out = run_attack(s, drop(SipMessageKind::REGISTER, Direction::UL));
    CHECK(out.kind == OutcomeKind::NO_EFFECT);
    CHECK(out.matched == 0);
    CHECK_FALSE(out.notes.empty());
}
