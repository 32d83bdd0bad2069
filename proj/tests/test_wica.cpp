#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vowifi/dataset.hpp"
#include "vowifi/wica.hpp"

using namespace vowifi;

namespace {

PacketRecord pkt(Millis ts, Direction dir, int size)
{
    PacketRecord p;
    p.ts = ts;
    p.dir = dir;
    p.size = size;
    p.src = dir == Direction::UL ? kDeviceAddr : "208.54.87.10";
    p.dst = dir == Direction::UL ? "208.54.87.10" : kDeviceAddr;
    return p;
}

AnalysisWindow counts(int ul, int dl)
{
    AnalysisWindow w;
    w.num_ul_c_small = ul;
    w.num_dl_c_small = dl;
    return w;
}

Trace filtered(const SimResult& r, Carrier c)
{
    return filter_wifi_calling(r.delivered_trace(), carrier_profile(c));
}

const EventClassifier& shared_model()
{
    static const EventClassifier model = train_classifier(generate_dataset(50, Carrier::TMOBILE, 1), 1);
    return model;
}

}  // namespace

TEST_CASE("features of a single large downlink packet")
{
    const Trace seg = {pkt(0, Direction::DL, 1360)};
    const auto f = extract_features(seg);
    CHECK(f[F_PACKET_COUNT] == 1);
    CHECK(f[F_DL_LARGE] == 1);
    CHECK(f[F_UL_LARGE] == 0);
    CHECK(f[F_UL_MIDDLE] == 0);
    CHECK(f[F_UL_SMALL] == 0);
    CHECK(f[F_DL_MAX_SIZE] == 1360);
    CHECK(f[F_UL_BYTE_FRACTION] == 0);
    CHECK(f[F_DURATION] == 0);
    CHECK_THROWS_AS(extract_features(Trace{}), std::invalid_argument);
}

TEST_CASE("features agree with a recount of the segment")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto dial = event_segment(simulate_event(EventKind::DIAL_CALL, Carrier::TMOBILE, seed));
        const auto f = extract_features(dial);
        int ul_large = 0, dl_small = 0;
        for (const auto& p : dial) {
            ul_large += p.dir == Direction::UL && p.size > 800;
            dl_small += p.dir == Direction::DL && p.size < 200;
        }
        CHECK(f[F_UL_LARGE] == ul_large);
        CHECK(f[F_DL_SMALL] == dl_small);
        CHECK(ul_large >= 1);
        for (double v : f)
            CHECK(std::isfinite(v));

        for (auto c : {Carrier::TMOBILE, Carrier::ATT}) {
            const auto recv = event_segment(simulate_event(EventKind::RECEIVE_CALL, c, seed));
            const auto s = random_call_script(Role::CALLEE, c, seed);
            const auto r = run_call(s);
            int ringing_small = 0;
            for (const auto& p : r.trace)
                ringing_small += p.dir == Direction::DL && p.size < 200 && p.ts > *r.truth.ringing_start &&
                                 p.ts < *r.truth.talking_start;
            CHECK(ringing_small > 10);
            CHECK(extract_features(recv)[F_DL_SMALL] > 10);
        }
    }
}

TEST_CASE("scenario table")
{
    const auto tmo = carrier_profile(Carrier::TMOBILE);
    const auto vzw = carrier_profile(Carrier::VERIZON);
    CHECK(classify_scenario(counts(0, 15), tmo) == ScenarioKind::RINGING);
    CHECK_FALSE(classify_scenario(counts(0, 15), vzw));
    CHECK(classify_scenario(counts(12, 11), tmo) == ScenarioKind::TALKING);
    CHECK(classify_scenario(counts(12, 11), vzw) == ScenarioKind::TALKING);
    CHECK(classify_scenario(counts(0, 0), tmo) == ScenarioKind::NOT_IN_TALKING);
    CHECK_FALSE(classify_scenario(counts(5, 11), tmo));
    CHECK_FALSE(classify_scenario(counts(0, 10), tmo));
    CHECK_FALSE(classify_scenario(counts(11, 10), tmo));
}

TEST_CASE("equal gains split on the lowest feature index")
{
    // Features 0 and 1 both separate the two classes perfectly.
    std::vector<LabeledSegment> data;
    for (int i = 0; i < 6; ++i) {
        for (auto kind : kAllEventKinds) {
            const int k = static_cast<int>(kind);
            Trace seg;
            for (int j = 0; j <= k; ++j) {
                seg.push_back(pkt(j * 10, Direction::UL, 900));
                seg.push_back(pkt(j * 10 + 1, Direction::DL, 900));
            }
            seg.push_back(pkt(100 + i, Direction::DL, 300 + i));
            data.push_back({kind, seg});
        }
    }
    const auto model = train_classifier(data, 0);
    REQUIRE(model.root);
    CHECK(model.root->feature == F_UL_LARGE);
    for (const auto& d : data)
        CHECK(classify_event(model, d.segment) == d.label);
}

TEST_CASE("training rejects degenerate input")
{
    std::vector<LabeledSegment> one_class;
    for (int i = 0; i < 5; ++i)
        one_class.push_back({EventKind::SEND_TEXT, {pkt(0, Direction::UL, 1150)}});
    CHECK_THROWS_AS(train_classifier(one_class, 1), std::invalid_argument);

    auto data = generate_dataset(2, Carrier::TMOBILE, 3);
    CHECK_NOTHROW(train_classifier(data, 1));
    data.pop_back();
    CHECK_THROWS_AS(train_classifier(data, 1), std::invalid_argument);
}

TEST_CASE("classifier reproduces training labels and generalizes across carriers")
{
    const auto& model = shared_model();
    for (const auto& d : generate_dataset(50, Carrier::TMOBILE, 1))
        CHECK(classify_event(model, d.segment) == d.label);
    for (auto c : {Carrier::TMOBILE, Carrier::ATT, Carrier::VERIZON}) {
        const auto test = generate_dataset(20, c, 77);
        std::size_t ok = 0;
        for (const auto& d : test)
            ok += classify_event(model, d.segment) == d.label;
        CHECK(static_cast<double>(ok) / static_cast<double>(test.size()) >= 0.95);
    }
}

TEST_CASE("training is deterministic and the model file round trips")
{
    const auto data = generate_dataset(10, Carrier::ATT, 4);
    const auto a = train_classifier(data, 9);
    const auto b = train_classifier(data, 9);
    CHECK(model_to_json(a) == model_to_json(b));
    const auto c = model_from_json(model_to_json(a));
    CHECK(model_to_json(c) == model_to_json(a));
    for (const auto& d : generate_dataset(5, Carrier::VERIZON, 8))
        CHECK(classify_event(a, d.segment) == classify_event(c, d.segment));
    CHECK_THROWS(model_from_json(R"({"features":["x"],"tree":{"label":"ACTIVATE"}})"));
}

TEST_CASE("segments split at three seconds of silence")
{
    const Trace t = {pkt(0, Direction::UL, 100), pkt(2999, Direction::UL, 100), pkt(5999, Direction::UL, 100),
                     pkt(6000, Direction::DL, 100)};
    const auto segs = segment_trace(t);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].size() == 2);
    CHECK(segs[1].size() == 2);
    CHECK(segment_trace(Trace{}).empty());
}

TEST_CASE("canonical incoming call statistics")
{
    const auto r = run_call(testing::incoming_call());
    const auto stats = extract_call_statistics(filtered(r, Carrier::TMOBILE), carrier_profile(Carrier::TMOBILE));
    REQUIRE(stats.size() == 1);
    const auto& s = stats[0];
    CHECK(s.device_addr == kDeviceAddr);
    CHECK(s.initiator == Side::REMOTE);
    CHECK(s.hangup_first == Side::LOCAL);
    CHECK_FALSE(s.incomplete);
    REQUIRE(s.t_ringing_start);
    REQUIRE(s.t_talking_start);
    REQUIRE(s.t_call_end);
    CHECK(std::abs(*s.t_ringing_start - *r.truth.ringing_start) <= 1000);
    CHECK(std::abs(*s.t_talking_start - *r.truth.talking_start) <= 1000);
    CHECK(std::abs(*s.t_call_end - *r.truth.call_end) <= 1000);
    CHECK(std::abs(*s.ringing_duration - 5950) <= 1000);
    CHECK(std::abs(*s.conversation_duration - 11810) <= 1000);
    CHECK(*s.ringing_duration == *s.t_talking_start - *s.t_ringing_start);
    CHECK(*s.conversation_duration == *s.t_call_end - *s.t_talking_start);
}

TEST_CASE("unanswered call has ringing but no conversation")
{
    auto script = testing::incoming_call();
    script.answer_delay = 0;
    script.talk_duration = 0;
    script.hangup_side = Side::REMOTE;
    const auto r = run_call(script);
    const auto stats = extract_call_statistics(filtered(r, Carrier::TMOBILE), carrier_profile(Carrier::TMOBILE));
    REQUIRE(stats.size() == 1);
    const auto& s = stats[0];
    CHECK_FALSE(s.t_talking_start);
    CHECK_FALSE(s.conversation_duration);
    REQUIRE(s.t_call_end);
    REQUIRE(s.ringing_duration);
    CHECK(*s.ringing_duration == *s.t_call_end - *s.t_ringing_start);
    CHECK(s.hangup_first == Side::REMOTE);
}

TEST_CASE("no ringing estimate without early media")
{
    const auto r = run_call(testing::incoming_call(7, Carrier::VERIZON));
    const auto profile = carrier_profile(Carrier::VERIZON);
    const auto stats = extract_call_statistics(filtered(r, Carrier::VERIZON), profile);
    REQUIRE(stats.size() == 1);
    CHECK_FALSE(stats[0].t_ringing_start);
    CHECK_FALSE(stats[0].ringing_duration);
    REQUIRE(stats[0].conversation_duration);
    CHECK(std::abs(*stats[0].conversation_duration - 11810) <= 1000);
    CHECK(stats[0].initiator == Side::REMOTE);
}

TEST_CASE("one record per call over a multi-call trace with texts in between")
{
    for (auto carrier : {Carrier::TMOBILE, Carrier::ATT, Carrier::VERIZON}) {
        std::vector<SimResult> parts;
        std::vector<GroundTruth> truths;
        Millis at = 1000;
        for (std::uint64_t i = 0; i < 6; ++i) {
            auto s = random_call_script(i % 2 ? Role::CALLER : Role::CALLEE, carrier, 100 + i);
            s.dial_time = at;
            auto r = run_call(s);
            truths.push_back(r.truth);
            at = r.trace.back().ts + 10000;
            parts.push_back(std::move(r));
            parts.push_back(run_event(i % 2 ? SimEventKind::SEND_TEXT : SimEventKind::ACTIVATE, at,
                                      carrier_profile(carrier), i));
            at += 10000;
        }
        const auto merged = merge_results(std::move(parts));
        const auto profile = carrier_profile(carrier);
        const auto stats = extract_call_statistics(filter_wifi_calling(merged.delivered_trace(), profile), profile);
        REQUIRE(stats.size() == truths.size());
        for (std::size_t i = 0; i < stats.size(); ++i) {
            CHECK(stats[i].initiator == truths[i].initiator);
            CHECK(stats[i].hangup_first == truths[i].hangup_first);
            REQUIRE(stats[i].t_call_end);
            CHECK(std::abs(*stats[i].t_call_end - *truths[i].call_end) <= 1000);
        }
    }
}

TEST_CASE("a trace cut mid-conversation yields an incomplete record")
{
    const auto r = run_call(testing::outgoing_call());
    Trace cut;
    for (const auto& p : filtered(r, Carrier::TMOBILE))
        if (p.ts < 15000)
            cut.push_back(p);
    const auto stats = extract_call_statistics(cut, carrier_profile(Carrier::TMOBILE));
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].incomplete);
    CHECK(stats[0].t_talking_start);
    CHECK_FALSE(stats[0].t_call_end);
    CHECK(extract_call_statistics(Trace{}, carrier_profile(Carrier::TMOBILE)).empty());
}

TEST_CASE("statistics JSON round trip")
{
    const auto r = run_call(testing::outgoing_call());
    const auto stats = extract_call_statistics(filtered(r, Carrier::TMOBILE), carrier_profile(Carrier::TMOBILE));
    const auto text = statistics_to_json(stats);
    CHECK(statistics_to_json(statistics_from_json(text)) == text);
}
