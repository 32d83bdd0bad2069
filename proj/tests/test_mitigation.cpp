#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "support.hpp"
#include "vowifi/mitigation.hpp"

using namespace vowifi;

namespace {

Trace bare_call(std::uint64_t seed = 11)
{
    return filter_wifi_calling(run_call(testing::outgoing_call(seed)).delivered_trace(),
                               carrier_profile(Carrier::TMOBILE));
}

TunnelConfig with_apps(std::size_t k, std::uint64_t seed)
{
    TunnelConfig cfg;
    cfg.seed = seed;
    const auto& all = default_app_profiles();
    cfg.apps.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    return cfg;
}

}  // namespace

TEST_CASE("an empty tunnel only adds the encapsulation overhead")
{
    const auto bare = bare_call();
    const auto tunnel = mix_tunnel(bare, with_apps(0, 1));
    REQUIRE(tunnel.size() == bare.size());
    for (std::size_t i = 0; i < bare.size(); ++i) {
        CHECK(tunnel[i].ts == bare[i].ts);
        CHECK(tunnel[i].dir == bare[i].dir);
        CHECK(tunnel[i].size == bare[i].size + kTunnelOverhead);
        CHECK(tunnel[i].tunnel == kTunnelTag);
    }
    const auto stripped = strip_tunnel_overhead(tunnel);
    for (std::size_t i = 0; i < bare.size(); ++i)
        CHECK(stripped[i].size == bare[i].size);
}

TEST_CASE("the tunnel endpoint must not be a carrier gateway")
{
    TunnelConfig cfg;
    CHECK_NOTHROW(validate_tunnel(cfg));
    cfg.endpoint = *carrier_profile(Carrier::ATT).gateway_addrs.begin();
    CHECK_THROWS_AS(validate_tunnel(cfg), std::invalid_argument);
    cfg = TunnelConfig{};
    cfg.noise_rate = -1;
    CHECK_THROWS_AS(validate_tunnel(cfg), std::invalid_argument);
}

TEST_CASE("every calling packet survives mixing and apps add traffic")
{
    const auto bare = bare_call();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto mixed = mix_tunnel_labeled(bare, with_apps(3, seed), bare.front().ts - 20000,
                                              bare.back().ts + 20000);
        REQUIRE(mixed.source.size() == mixed.trace.size());
        std::map<TrafficSource, std::size_t> count;
        for (auto s : mixed.source)
            ++count[s];
        CHECK(count[TrafficSource::CALLING] == bare.size());
        CHECK(count[TrafficSource::APP] > 0);
        for (std::size_t i = 1; i < mixed.trace.size(); ++i)
            CHECK(mixed.trace[i - 1].ts <= mixed.trace[i].ts);
        // calling packets keep their timing and order
        std::size_t j = 0;
        for (std::size_t i = 0; i < mixed.trace.size(); ++i)
            if (mixed.source[i] == TrafficSource::CALLING) {
                CHECK(mixed.trace[i].ts == bare[j].ts);
                ++j;
            }
    }
}

TEST_CASE("the carrier-gateway filter sees nothing inside the tunnel")
{
    const auto tunnel = mix_tunnel(bare_call(), with_apps(2, 3));
    for (auto c : {Carrier::TMOBILE, Carrier::ATT, Carrier::VERIZON})
        CHECK(filter_wifi_calling(tunnel, carrier_profile(c)).empty());
}

TEST_CASE("one background app already perturbs the window counts")
{
    const auto bare = bare_call();
    std::size_t perturbed = 0, compared = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto stripped =
            strip_tunnel_overhead(mix_tunnel_labeled(bare, with_apps(1, seed), bare.front().ts, bare.back().ts).trace);
        const auto a = window_partition(bare);
        const auto b = window_partition(stripped);
        std::map<std::int64_t, std::pair<int, int>> counts;
        for (const auto& w : b)
            counts[w.index] = {w.num_ul_c_small, w.num_dl_c_small};
        for (const auto& w : a) {
            ++compared;
            if (counts[w.index] != std::make_pair(w.num_ul_c_small, w.num_dl_c_small))
                ++perturbed;
        }
    }
    CHECK(perturbed > compared / 10);
}

TEST_CASE("detection accuracy falls as apps are added")
{
    const auto model = train_classifier(generate_dataset(30, Carrier::TMOBILE, 1), 1);
    std::vector<EventRun> runs;
    for (auto kind : kAllEventKinds)
        for (std::uint64_t s = 0; s < 5; ++s)
            runs.push_back(simulate_event(kind, Carrier::TMOBILE, 900 + s));
    TunnelConfig base;
    base.seed = 4;
    const auto rows = evaluate_degradation(model, runs, base, {0, 1, 2, 3});
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].fraction == 1.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].apps == i);
        CHECK(rows[i].total == runs.size());
        if (i > 0)
            CHECK(rows[i].fraction <= rows[i - 1].fraction);
    }
    CHECK(rows[3].fraction <= 0.1);

    const auto csv = degradation_csv(rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "apps,correct,total,fraction");
    std::size_t n = 0;
    while (std::getline(in, line))
        n += line.empty() ? 0 : 1;
    CHECK(n == rows.size());
}

TEST_CASE("mixing is deterministic under a fixed seed")
{
    const auto bare = bare_call();
    CHECK(mix_tunnel(bare, with_apps(3, 8)) == mix_tunnel(bare, with_apps(3, 8)));
    CHECK_FALSE(mix_tunnel(bare, with_apps(3, 8)) == mix_tunnel(bare, with_apps(3, 9)));
}

TEST_CASE("tunnel config parsing")
{
    const auto cfg = parse_tunnel_config(R"({"endpoint":"198.51.100.7","apps":["mail","maps"],"seed":2})");
    CHECK(cfg.endpoint == "198.51.100.7");
    REQUIRE(cfg.apps.size() == 2);
    CHECK(cfg.apps[1].name == "maps");
    CHECK_THROWS(parse_tunnel_config(R"({"apps":["fax"]})"));
}
