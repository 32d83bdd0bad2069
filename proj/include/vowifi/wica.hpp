#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vowifi/callflow.hpp"
#include "vowifi/trace.hpp"

namespace vowifi {

enum class EventKind { DIAL_CALL, RECEIVE_CALL, SEND_TEXT, RECEIVE_TEXT, ACTIVATE, DEACTIVATE };
constexpr std::size_t kEventKindCount = 6;
constexpr std::array<EventKind, kEventKindCount> kAllEventKinds = {
    EventKind::DIAL_CALL, EventKind::RECEIVE_CALL, EventKind::SEND_TEXT,
    EventKind::RECEIVE_TEXT, EventKind::ACTIVATE, EventKind::DEACTIVATE};

// Feature order matters: ties in split quality go to the lowest index.
enum Feature : std::size_t {
    F_UL_LARGE,
    F_DL_LARGE,
    F_UL_MAX_SIZE,
    F_DL_MAX_SIZE,
    F_UL_MIDDLE,
    F_DL_MIDDLE,
    F_UL_MIN_SIZE,
    F_DL_MIN_SIZE,
    F_UL_MEAN_SIZE,
    F_DL_MEAN_SIZE,
    F_UL_SMALL,
    F_DL_SMALL,
    F_PACKET_COUNT,
    F_UL_BYTE_FRACTION,
    F_IAT_MEAN,
    F_IAT_VAR,
    F_DURATION,
    F_COUNT
};

using FeatureVector = std::array<double, F_COUNT>;

const std::array<std::string, F_COUNT>& feature_names();

// Throws std::invalid_argument for an empty segment.
FeatureVector extract_features(std::span<const PacketRecord> segment);

struct TreeNode {
    std::optional<EventKind> label;  // set on leaves
    std::size_t feature = 0;
    double threshold = 0.0;
    std::unique_ptr<TreeNode> le;
    std::unique_ptr<TreeNode> gt;
};

struct EventClassifier {
    std::unique_ptr<TreeNode> root;
    std::map<EventKind, std::size_t> class_counts;
    std::uint64_t seed = 0;

    EventKind predict(const FeatureVector& features) const;
    std::size_t depth() const;
    std::size_t leaves() const;
};

struct LabeledSegment {
    EventKind label = EventKind::DIAL_CALL;
    Trace segment;
};

// C4.5 over continuous features: binary threshold splits chosen by gain ratio
// among candidates whose information gain is at least average.
// Throws std::invalid_argument unless every EventKind has at least two examples.
EventClassifier train_classifier(std::span<const LabeledSegment> data, std::uint64_t seed);

EventKind classify_event(const EventClassifier& classifier, std::span<const PacketRecord> segment);

std::string model_to_json(const EventClassifier& classifier);
EventClassifier model_from_json(const std::string& text);
void write_model(const EventClassifier& classifier, const std::filesystem::path& path);
EventClassifier read_model(const std::filesystem::path& path);

constexpr Millis kSegmentGapMs = 3000;

// Splits a time-ordered trace wherever two consecutive packets are at least
// kSegmentGapMs apart.
std::vector<Trace> segment_trace(std::span<const PacketRecord> trace);

enum class ScenarioKind { RINGING, TALKING, NOT_IN_TALKING };

std::optional<ScenarioKind> classify_scenario(const AnalysisWindow& window, const CarrierProfile& profile);

struct CallStatistics {
    std::string device_addr;
    Side initiator = Side::LOCAL;
    std::optional<Side> hangup_first;
    std::optional<Millis> t_ringing_start;
    std::optional<Millis> t_talking_start;
    std::optional<Millis> t_call_end;
    std::optional<Millis> ringing_duration;
    std::optional<Millis> conversation_duration;
    bool incomplete = false;
};

// A silent stretch this long while no call is recognized ends the session.
constexpr Millis kAnalyzerIdleMs = 40000;

// Runs the window state machine over a trace of one device's Wi-Fi-calling
// packets (one call at a time).
std::vector<CallStatistics> extract_call_statistics(std::span<const PacketRecord> trace,
                                                    const CarrierProfile& profile);

std::string statistics_to_json(const std::vector<CallStatistics>& stats);
std::vector<CallStatistics> statistics_from_json(const std::string& text);

std::string to_string(EventKind k);
std::string to_string(ScenarioKind k);
EventKind event_from_string(const std::string& s);

}  // namespace vowifi
