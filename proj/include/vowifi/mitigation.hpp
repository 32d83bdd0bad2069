#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vowifi/dataset.hpp"
#include "vowifi/wica.hpp"

namespace vowifi {

constexpr int kTunnelOverhead = 73;  // bytes added per re-encapsulated packet
inline const std::string kTunnelTag = "vpn";

// Two-state ON/OFF packet process; packets arrive as a Poisson stream while ON.
struct BackgroundAppProfile {
    std::string name;
    double on_rate = 5.0;  // packets per second while ON
    double mean_on_ms = 2000;
    double mean_off_ms = 8000;
    int min_size = 40;
    int max_size = 1500;
    double ul_fraction = 0.5;
};

// mail, chat, maps
const std::vector<BackgroundAppProfile>& default_app_profiles();
const BackgroundAppProfile& app_profile(const std::string& name);

struct TunnelConfig {
    std::string endpoint = "203.0.113.50";
    std::vector<BackgroundAppProfile> apps;
    double noise_rate = 0.0;  // packets per second, uniform sizes
    std::uint64_t seed = 0;
};

void validate_tunnel(const TunnelConfig& cfg);

enum class TrafficSource { CALLING, APP, NOISE };

struct TunnelTrace {
    Trace trace;
    std::vector<TrafficSource> source;  // parallel to trace
};

// Re-encapsulates calling packets and merges app and noise traffic generated over
// [span_start, span_end]. Timing is preserved exactly.
TunnelTrace mix_tunnel_labeled(std::span<const PacketRecord> calling, const TunnelConfig& cfg, Millis span_start,
                               Millis span_end);
Trace mix_tunnel(std::span<const PacketRecord> calling, const TunnelConfig& cfg);

// Removes the fixed encapsulation overhead, leaving sizes comparable to bare ESP.
Trace strip_tunnel_overhead(std::span<const PacketRecord> tunnel);

constexpr Millis kObservationMarginMs = 20000;
constexpr Millis kBoundaryToleranceMs = 500;

// The pre-trained model is applied to the stripped tunnel trace. A detection is
// correct when the tunnel splits into the same segments as the bare calling trace
// (within kBoundaryToleranceMs) and the first one carries the true label.
bool detection_correct(const EventClassifier& classifier, const EventRun& run, const TunnelConfig& cfg);

struct DegradationRow {
    std::size_t apps = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
    double fraction = 0.0;
};

// For each count k, the tunnel carries the first k apps of base.apps
// (default_app_profiles() when base.apps is empty).
std::vector<DegradationRow> evaluate_degradation(const EventClassifier& classifier, const std::vector<EventRun>& runs,
                                                 const TunnelConfig& base, const std::vector<std::size_t>& app_counts);

std::string degradation_csv(const std::vector<DegradationRow>& rows);

// Labels a scenario by its call role, or by its single non-call event.
EventRun event_run_from_scenario(const Scenario& scenario);

TunnelConfig parse_tunnel_config(const std::string& text);
TunnelConfig read_tunnel_config(const std::filesystem::path& path);

}  // namespace vowifi
