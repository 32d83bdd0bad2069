#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vowifi/callflow.hpp"
#include "vowifi/wica.hpp"

namespace vowifi {

// One simulated occurrence of a user-visible event.
struct EventRun {
    EventKind kind = EventKind::DIAL_CALL;
    Carrier carrier = Carrier::TMOBILE;
    std::uint64_t seed = 0;
    SimResult sim;
};

// Randomized but seed-determined call script for the given role.
CallScript random_call_script(Role role, Carrier carrier, std::uint64_t seed);

EventRun simulate_event(EventKind kind, Carrier carrier, std::uint64_t seed);

// The segment the event classifier sees for a run: the first silence-delimited
// segment of the Wi-Fi-calling packets.
Trace event_segment(const EventRun& run);

// runs_per_event runs of each EventKind; run seeds derive from base_seed.
std::vector<LabeledSegment> generate_dataset(std::size_t runs_per_event, Carrier carrier,
                                             std::uint64_t base_seed);

// Writes one JSONL trace per run under dir/<EVENT_KIND>/run_NNN.jsonl.
void write_dataset(const std::vector<LabeledSegment>& data, const std::filesystem::path& dir);
std::vector<LabeledSegment> read_dataset(const std::filesystem::path& dir);

SimEventKind sim_event_for(EventKind kind);

}  // namespace vowifi
