#include "vowifi/correlator.hpp"

#include <algorithm>
#include <random>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::optional<Interval> overlap(Interval a, Interval b)
{
    const Millis lo = std::max(a.lo, b.lo);
    const Millis hi = std::min(a.hi, b.hi);
    if (lo > hi)
        return std::nullopt;
    return Interval{lo, hi};
}

void validate_config(const CorrelatorConfig& cfg)
{
    if (cfg.sigma <= 0 || cfg.epsilon <= 0)
        throw std::invalid_argument("sigma and epsilon must be positive");
}

std::vector<Association> correlate(const std::vector<NetworkCallRecord>& net,
                                   const std::vector<ObserverEvent>& obs, const CorrelatorConfig& cfg)
{
    validate_config(cfg);
    const std::size_t n = net.size(), m = obs.size();
    std::vector<std::size_t> net_degree(n, 0), obs_degree(m, 0);
    std::vector<bool> net_partial(n, false), obs_partial(m, false);
    std::vector<Association> pairs;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = net[i];
        const Interval ws{w.tc_start_w - cfg.sigma, w.tc_start_w + cfg.sigma};
        const Interval we{w.tc_end_w - cfg.sigma, w.tc_end_w + cfg.sigma};
        for (std::size_t j = 0; j < m; ++j) {
            const auto& u = obs[j];
            const auto s = overlap(ws, {u.tc_start_u - cfg.epsilon, u.tc_start_u + cfg.epsilon});
            if (!s)
                continue;
            const auto e = overlap(we, {u.tc_end_u - cfg.epsilon, u.tc_end_u + cfg.epsilon});
            if (!e) {
                net_partial[i] = obs_partial[j] = true;
                continue;
            }
            ++net_degree[i];
            ++obs_degree[j];
            Association a;
            a.device_addr = w.device_addr;
            a.user_id = u.user_id;
            a.net_index = i;
            a.obs_index = j;
            a.start_overlap = s;
            a.end_overlap = e;
            pairs.push_back(std::move(a));
        }
    }

    std::vector<Association> out;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (net_degree[i] == 0) {
            Association a;
            a.device_addr = net[i].device_addr;
            a.net_index = i;
            a.partial_overlap = net_partial[i];
            out.push_back(std::move(a));
            continue;
        }
        for (; next < pairs.size() && pairs[next].net_index == i; ++next) {
            auto a = pairs[next];
            a.status = net_degree[i] == 1 && obs_degree[a.obs_index] == 1 ? AssociationStatus::UNIQUE
                                                                          : AssociationStatus::AMBIGUOUS;
            out.push_back(std::move(a));
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (obs_degree[j] != 0)
            continue;
        Association a;
        a.user_id = obs[j].user_id;
        a.obs_index = j;
        a.partial_overlap = obs_partial[j];
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<ObserverEvent> simulate_observer(const std::vector<TruthCall>& truth, Millis error_bound,
                                             std::uint64_t seed)
{
    if (error_bound < 0)
        throw std::invalid_argument("error_bound must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Millis> noise(-error_bound, error_bound);
    std::vector<ObserverEvent> out;
    out.reserve(truth.size());
    for (const auto& t : truth) {
        ObserverEvent e{t.user_id, t.start + noise(rng), t.end + noise(rng)};
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<NetworkCallRecord> network_records_from_json(const std::string& text)
{
    std::vector<NetworkCallRecord> out;
    for (const auto& j : json::parse(text)) {
        NetworkCallRecord r{j.at("device_addr").get<std::string>(), j.at("tc_start_w").get<Millis>(),
                            j.at("tc_end_w").get<Millis>()};
        if (r.tc_start_w >= r.tc_end_w)
            throw std::invalid_argument("network record for " + r.device_addr + " ends before it starts");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ObserverEvent> observer_events_from_json(const std::string& text)
{
    std::vector<ObserverEvent> out;
    for (const auto& j : json::parse(text)) {
        ObserverEvent e{j.at("user_id").get<std::string>(), j.at("tc_start_u").get<Millis>(),
                        j.at("tc_end_u").get<Millis>()};
        if (e.tc_start_u >= e.tc_end_u)
            throw std::invalid_argument("observer event for " + e.user_id + " ends before it starts");
        out.push_back(std::move(e));
    }
    return out;
}

std::string network_records_to_json(const std::vector<NetworkCallRecord>& net)
{
    ordered_json arr = ordered_json::array();
    for (const auto& r : net)
        arr.push_back({{"device_addr", r.device_addr}, {"tc_start_w", r.tc_start_w}, {"tc_end_w", r.tc_end_w}});
    return arr.dump(2);
}

std::string observer_events_to_json(const std::vector<ObserverEvent>& obs)
{
    ordered_json arr = ordered_json::array();
    for (const auto& e : obs)
        arr.push_back({{"user_id", e.user_id}, {"tc_start_u", e.tc_start_u}, {"tc_end_u", e.tc_end_u}});
    return arr.dump(2);
}

std::string associations_to_json(const std::vector<Association>& assoc)
{
    auto interval = [](const std::optional<Interval>& i) {
        return i ? ordered_json::array({i->lo, i->hi}) : ordered_json(nullptr);
    };
    ordered_json arr = ordered_json::array();
    for (const auto& a : assoc) {
        ordered_json j;
        j["device_addr"] = a.device_addr ? ordered_json(*a.device_addr) : ordered_json(nullptr);
        j["user_id"] = a.user_id ? ordered_json(*a.user_id) : ordered_json(nullptr);
        j["status"] = to_string(a.status);
        j["start_overlap"] = interval(a.start_overlap);
        j["end_overlap"] = interval(a.end_overlap);
        j["partial_overlap"] = a.partial_overlap;
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::string to_string(AssociationStatus s)
{
    switch (s) {
    case AssociationStatus::UNIQUE: return "UNIQUE";
    case AssociationStatus::AMBIGUOUS: return "AMBIGUOUS";
    case AssociationStatus::UNMATCHED: return "UNMATCHED";
    }
    return "?";
}

}  // namespace vowifi
