#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vowifi/trace.hpp"

namespace vowifi {

enum class SipMessageKind {
    INVITE,
    TRYING_100,
    SESSION_183,
    PRACK,
    RINGING_180,
    OK_200,
    ACK,
    BYE,
    MESSAGE,
    REGISTER,
    DEREGISTER,
};

enum class CallPhase { NONE, SETUP, ALERTING, CONVERSATION, TEARDOWN };

// Position of a packet in the modeled message flow. Several steps share one
// SipMessageKind (three distinct 200 OK responses in an outgoing call, for example).
enum class FlowStep {
    INVITE,
    TRYING,
    SESSION_PROGRESS,
    PRACK_SESSION,
    PRACK_SESSION_OK,
    RINGING,
    PRACK_RINGING,
    PRACK_RINGING_OK,
    ANSWER_OK,
    ACK,
    EARLY_MEDIA,
    VOICE,
    BYE,
    BYE_OK,
    TEXT,
    TEXT_ACK,
    REGISTER,
    DEREGISTER,
};

// Simulator-side label for one emitted packet; never written to trace files.
struct PacketTag {
    FlowStep step = FlowStep::INVITE;
    CallPhase phase = CallPhase::NONE;

    bool is_voice() const { return step == FlowStep::VOICE || step == FlowStep::EARLY_MEDIA; }
    SipMessageKind message() const;  // meaningless for voice
};

enum class Role { CALLER, CALLEE };
enum class Side { LOCAL, REMOTE };

struct RtpConfig {
    int packets_per_second = 50;  // per direction
    int payload_size = 176;
};

struct CallScript {
    Role role = Role::CALLER;
    Millis dial_time = 0;
    Millis answer_delay = 0;  // from ring to answer; 0 = never answered
    Millis talk_duration = 0;
    Side hangup_side = Side::LOCAL;
    Carrier carrier = Carrier::TMOBILE;
    std::uint64_t seed = 0;
    RtpConfig rtp{};
};

enum class SimEventKind {
    DIAL_OUT,
    RECEIVE_CALL,
    SEND_TEXT,
    RECEIVE_TEXT,
    ACTIVATE,
    DEACTIVATE,
    VOLTE_FALLBACK,
    CALL_TERMINATED_BY_NETWORK,
    SECOND_INCOMING_CALL,
    STUCK_DIALING,
    STUCK_CONVERSATION,
    // Observations that let attack outcomes be derived from the event log alone.
    RINGBACK_STARTED,
    CONVERSATION_STARTED,
    CALL_ENDED,
    VOICE_DEGRADED,
    VOICE_MUTED,
};

struct SimEvent {
    SimEventKind kind = SimEventKind::DIAL_OUT;
    Millis ts = 0;
    std::string detail;

    bool operator==(const SimEvent&) const = default;
};

struct GroundTruth {
    Side initiator = Side::LOCAL;
    std::optional<Side> hangup_first;
    std::optional<Millis> ringing_start;  // 180 Ringing at the device
    std::optional<Millis> talking_start;  // answering 200 OK at the device
    std::optional<Millis> call_end;       // first BYE at the device
};

// On-path observer consulted for every packet that crosses the tap. Returning
// false drops the packet.
class Interceptor {
public:
    virtual ~Interceptor() = default;
    virtual bool forward(const PacketRecord& packet, const PacketTag& tag) = 0;
};

struct SimResult {
    Trace trace;                  // everything seen at the tap
    std::vector<PacketTag> tags;  // parallel to trace
    std::vector<bool> delivered;  // parallel to trace
    std::vector<SimEvent> events;
    GroundTruth truth;

    Trace delivered_trace() const;
    std::size_t count_events(SimEventKind kind) const;
    std::optional<SimEvent> first_event(SimEventKind kind) const;
};

constexpr int kMaxInviteAttempts = 6;
constexpr Millis kInviteRetryMs = 2000;
constexpr Millis kInactivityTimeoutMs = 8000;
constexpr Millis kSessionProgressTimeoutMs = 4000;
constexpr Millis kPeerMediaTimeoutMs = 20000;
constexpr Millis kTransactionTimeoutMs = 32000;
constexpr Millis kRingTimeoutMs = 30000;
constexpr Millis kJitterMs = 50;
// Lowest voice-loss fraction users notice (start of the "some noises" band).
constexpr double kAudibleLossFraction = 0.40;

int signaling_size(FlowStep step);

// Throws std::invalid_argument for an inconsistent script.
void validate_script(const CallScript& script);

SimResult run_call(const CallScript& script, Interceptor* tap = nullptr);

// kind must be one of SEND_TEXT, RECEIVE_TEXT, ACTIVATE, DEACTIVATE.
SimResult run_event(SimEventKind kind, Millis at, const CarrierProfile& profile, std::uint64_t seed,
                    Interceptor* tap = nullptr);

// Inputs for the service-continuity rules evaluated by the simulator clock.
struct ContinuityObservation {
    CallPhase phase = CallPhase::SETUP;
    Millis now = 0;
    int unanswered_invites = 0;
    bool response_received = false;
    std::optional<Millis> last_voice_rx;
};

// VOLTE_FALLBACK once six INVITEs went unanswered during setup;
// CALL_TERMINATED_BY_NETWORK once the conversation has been silent for more than 8 s.
std::optional<SimEvent> continuity_check(const ContinuityObservation& obs);

// Merges several results on the shared trace clock (stable by timestamp).
SimResult merge_results(std::vector<SimResult> parts);

struct ScheduledEvent {
    SimEventKind kind = SimEventKind::SEND_TEXT;
    Millis at = 0;
};

struct Scenario {
    std::optional<CallScript> call;
    std::vector<ScheduledEvent> events;
    std::uint64_t seed = 0;
    Carrier carrier = Carrier::TMOBILE;  // the call's carrier when a call is present
};

Scenario read_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text);
SimResult run_scenario(const Scenario& scenario, Interceptor* tap = nullptr);

std::string to_string(SipMessageKind k);
std::string to_string(CallPhase p);
std::string to_string(SimEventKind k);
std::string to_string(Role r);
std::string to_string(Side s);
SipMessageKind sip_kind_from_string(const std::string& s);
CallPhase phase_from_string(const std::string& s);
SimEventKind event_kind_from_string(const std::string& s);
Role role_from_string(const std::string& s);
Side side_from_string(const std::string& s);

// events sidecar and ground truth as JSON text
std::string events_to_json(const std::vector<SimEvent>& events);
std::string truth_to_json(const GroundTruth& truth);

}  // namespace vowifi
