#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <tuple>

#include "vowifi/correlator.hpp"

using namespace vowifi;

namespace {

// (net index or -1, obs index or -1, status)
using Key = std::tuple<long, long, AssociationStatus>;

std::set<Key> keys(const std::vector<Association>& assoc)
{
    std::set<Key> out;
    for (const auto& a : assoc)
        out.insert({a.device_addr ? static_cast<long>(a.net_index) : -1L,
                    a.user_id ? static_cast<long>(a.obs_index) : -1L, a.status});
    return out;
}

// Straight from the definition: two closed intervals meet when neither lies
// entirely before the other.
std::set<Key> oracle(const std::vector<NetworkCallRecord>& net, const std::vector<ObserverEvent>& obs,
                     const CorrelatorConfig& cfg)
{
    auto meets = [](Millis c1, Millis r1, Millis c2, Millis r2) { return !(c1 + r1 < c2 - r2 || c2 + r2 < c1 - r1); };
    std::vector<std::vector<std::size_t>> by_net(net.size()), by_obs(obs.size());
    for (std::size_t i = 0; i < net.size(); ++i)
        for (std::size_t j = 0; j < obs.size(); ++j)
            if (meets(net[i].tc_start_w, cfg.sigma, obs[j].tc_start_u, cfg.epsilon) &&
                meets(net[i].tc_end_w, cfg.sigma, obs[j].tc_end_u, cfg.epsilon)) {
                by_net[i].push_back(j);
                by_obs[j].push_back(i);
            }
    std::set<Key> out;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (by_net[i].empty())
            out.insert({static_cast<long>(i), -1L, AssociationStatus::UNMATCHED});
        for (auto j : by_net[i])
            out.insert({static_cast<long>(i), static_cast<long>(j),
                        by_net[i].size() == 1 && by_obs[j].size() == 1 ? AssociationStatus::UNIQUE
                                                                       : AssociationStatus::AMBIGUOUS});
    }
    for (std::size_t j = 0; j < obs.size(); ++j)
        if (by_obs[j].empty())
            out.insert({-1L, static_cast<long>(j), AssociationStatus::UNMATCHED});
    return out;
}

void random_instance(std::mt19937_64& rng, std::size_t n, std::size_t m, std::vector<NetworkCallRecord>& net,
                     std::vector<ObserverEvent>& obs)
{
    net.clear();
    obs.clear();
    std::uniform_int_distribution<Millis> start(0, 120000), len(2000, 30000);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = start(rng);
        net.push_back({"10.0.0." + std::to_string(i), s, s + len(rng)});
    }
    for (std::size_t j = 0; j < m; ++j) {
        const auto s = start(rng);
        obs.push_back({"user" + std::to_string(j), s, s + len(rng)});
    }
}

}  // namespace

TEST_CASE("single pair within both windows is unique")
{
    const auto out = correlate({{"A", 1900, 10200}}, {{"Alice", 3000, 10800}}, {});
    REQUIRE(out.size() == 1);
    CHECK(out[0].status == AssociationStatus::UNIQUE);
    CHECK(out[0].device_addr == "A");
    CHECK(out[0].user_id == "Alice");
    REQUIRE(out[0].start_overlap);
    CHECK(*out[0].start_overlap == Interval{1500, 2900});
}

TEST_CASE("near-simultaneous calls are ambiguous")
{
    const std::vector<NetworkCallRecord> net = {{"A", 10000, 40000}, {"B", 10800, 40900}};
    const std::vector<ObserverEvent> obs = {{"Alice", 10200, 40300}, {"Bob", 11000, 41000}};
    const auto out = correlate(net, obs, {});
    REQUIRE(out.size() == 4);
    for (const auto& a : out)
        CHECK(a.status == AssociationStatus::AMBIGUOUS);
}

TEST_CASE("observer event with no network record is unmatched")
{
    const auto out = correlate({{"A", 1000, 9000}}, {{"Alice", 1000, 9000}, {"Bob", 50000, 60000}}, {});
    REQUIRE(out.size() == 2);
    CHECK(out[0].status == AssociationStatus::UNIQUE);
    CHECK(out[1].status == AssociationStatus::UNMATCHED);
    CHECK(out[1].user_id == "Bob");
    CHECK_FALSE(out[1].device_addr);
}

TEST_CASE("start overlap without end overlap is flagged")
{
    const auto out = correlate({{"A", 1000, 9000}}, {{"Alice", 1200, 20000}}, {});
    REQUIRE(out.size() == 2);
    for (const auto& a : out) {
        CHECK(a.status == AssociationStatus::UNMATCHED);
        CHECK(a.partial_overlap);
    }
}

TEST_CASE("matches the brute-force oracle on random instances up to 50 x 50")
{
    std::mt19937_64 rng(21);
    std::vector<NetworkCallRecord> net;
    std::vector<ObserverEvent> obs;
    for (int round = 0; round < 300; ++round) {
        const std::size_t n = 1 + rng() % 50, m = 1 + rng() % 50;
        random_instance(rng, n, m, net, obs);
        const CorrelatorConfig cfg{static_cast<Millis>(1 + rng() % 3000), static_cast<Millis>(1 + rng() % 3000)};
        CHECK(keys(correlate(net, obs, cfg)) == oracle(net, obs, cfg));
    }
}

TEST_CASE("invariant under a global time shift and under relabeling")
{
    std::mt19937_64 rng(8);
    std::vector<NetworkCallRecord> net;
    std::vector<ObserverEvent> obs;
    for (int round = 0; round < 50; ++round) {
        random_instance(rng, 20, 20, net, obs);
        const auto base = keys(correlate(net, obs, {}));
        auto net2 = net;
        auto obs2 = obs;
        for (auto& r : net2) {
            r.tc_start_w += 123456;
            r.tc_end_w += 123456;
            r.device_addr += "x";
        }
        for (auto& e : obs2) {
            e.tc_start_u += 123456;
            e.tc_end_u += 123456;
            e.user_id = "renamed-" + e.user_id;
        }
        CHECK(keys(correlate(net2, obs2, {})) == base);
    }
}

TEST_CASE("well separated calls with zero noise are all recovered")
{
    std::vector<TruthCall> truth;
    Millis t = 0;
    for (int i = 0; i < 20; ++i) {
        truth.push_back({"user" + std::to_string(i), "10.1.0." + std::to_string(i), t, t + 8000});
        t += 8000 + 3001;
    }
    const auto obs = simulate_observer(truth, 0, 1);
    std::vector<NetworkCallRecord> net;
    for (const auto& c : truth)
        net.push_back({c.device_addr, c.start, c.end});
    const auto out = correlate(net, obs, {});
    REQUIRE(out.size() == truth.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].status == AssociationStatus::UNIQUE);
        CHECK(out[i].user_id == truth[i].user_id);
    }
}

TEST_CASE("observer noise stays within its bound")
{
    const std::vector<TruthCall> truth = {{"Bob", "A", 5000, 20000}};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto e = simulate_observer(truth, 1500, seed).front();
        CHECK(e.tc_start_u >= 3500);
        CHECK(e.tc_start_u <= 6500);
        CHECK(e.tc_end_u >= 18500);
        CHECK(e.tc_end_u <= 21500);
    }
    const auto exact = simulate_observer(truth, 0, 3).front();
    CHECK(exact.tc_start_u == 5000);
    CHECK(exact.tc_end_u == 20000);
}

TEST_CASE("JSON inputs are validated")
{
    CHECK_THROWS(network_records_from_json(R"([{"device_addr":"A","tc_start_w":10,"tc_end_w":5}])"));
    CHECK_THROWS(observer_events_from_json(R"([{"user_id":"A","tc_start_u":10}])"));
    const std::vector<NetworkCallRecord> net = {{"A", 1, 2}};
    CHECK(network_records_from_json(network_records_to_json(net)).front().device_addr == "A");
    CHECK_THROWS(correlate(net, {}, CorrelatorConfig{0, 1}));
}
