#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vowifi/trace.hpp"

namespace vowifi {

struct NetworkCallRecord {
    std::string device_addr;
    Millis tc_start_w = 0;
    Millis tc_end_w = 0;
};

struct ObserverEvent {
    std::string user_id;
    Millis tc_start_u = 0;
    Millis tc_end_u = 0;
};

struct CorrelatorConfig {
    Millis sigma = 1000;    // network-side error bound
    Millis epsilon = 1500;  // observer-side error bound
};

enum class AssociationStatus { UNIQUE, AMBIGUOUS, UNMATCHED };

struct Interval {
    Millis lo = 0;
    Millis hi = 0;
    bool operator==(const Interval&) const = default;
};

struct Association {
    std::optional<std::string> device_addr;
    std::optional<std::string> user_id;
    std::size_t net_index = 0;  // index into the input lists, when present
    std::size_t obs_index = 0;
    std::optional<Interval> start_overlap;
    std::optional<Interval> end_overlap;
    AssociationStatus status = AssociationStatus::UNMATCHED;
    bool partial_overlap = false;  // some start window overlapped but no end window did

    bool operator==(const Association&) const = default;
};

std::optional<Interval> overlap(Interval a, Interval b);

// Every (net, obs) pair whose start windows and end windows both intersect is a
// candidate. A pair is UNIQUE when it is the only candidate for both of its
// records; every other candidate pair is AMBIGUOUS. Records without any
// candidate get an UNMATCHED entry. Output is sorted by (net_index, obs_index),
// with unmatched observer entries last.
std::vector<Association> correlate(const std::vector<NetworkCallRecord>& net,
                                   const std::vector<ObserverEvent>& obs, const CorrelatorConfig& cfg);

struct TruthCall {
    std::string user_id;
    std::string device_addr;
    Millis start = 0;
    Millis end = 0;
};

// One observer event per call, start and end each shifted by independent
// uniform noise in [-error_bound, +error_bound].
std::vector<ObserverEvent> simulate_observer(const std::vector<TruthCall>& truth, Millis error_bound,
                                             std::uint64_t seed);

void validate_config(const CorrelatorConfig& cfg);

std::vector<NetworkCallRecord> network_records_from_json(const std::string& text);
std::vector<ObserverEvent> observer_events_from_json(const std::string& text);
std::string network_records_to_json(const std::vector<NetworkCallRecord>& net);
std::string observer_events_to_json(const std::vector<ObserverEvent>& obs);
std::string associations_to_json(const std::vector<Association>& assoc);

std::string to_string(AssociationStatus s);

}  // namespace vowifi
