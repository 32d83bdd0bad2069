#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vowifi/callflow.hpp"

namespace vowifi {

// Which intercepted packets a policy applies to. Unset fields match anything.
struct PacketSelector {
    bool voice = false;  // RTP (early media and conversation voice)
    std::optional<SipMessageKind> message;
    std::optional<Direction> direction;
    std::optional<CallPhase> phase;

    bool matches(const PacketRecord& packet, const PacketTag& tag) const;
};

struct AttackPolicy {
    PacketSelector selector;
    double drop_rate = 1.0;
    std::optional<std::pair<Millis, Millis>> active_window;  // [first, last) ms
    std::uint64_t seed = 0;
};

enum class OutcomeKind {
    CELLULAR_FALLBACK_CALL,
    TWO_INCOMING_CALLS,
    STUCK_DIALING_SCREEN,
    KEEPS_HEARING_ALERTING,
    NO_EFFECT,
    CALL_DROP_OR_QUALITY_LOSS,
    STUCK_CONVERSATION_20S,
    MUTED,
    TERMINATED,
};

enum class VoiceQualityBand { NO_IMPACT, NOISES, HARDLY_CONTINUED, TERMINATED };

struct AttackOutcome {
    OutcomeKind kind = OutcomeKind::NO_EFFECT;
    std::vector<SimEvent> observed_events;
    std::size_t matched = 0;
    std::size_t dropped = 0;
    double effective_drop = 0.0;  // realized dropped / matched
    std::optional<VoiceQualityBand> voice_quality;
    std::vector<std::string> notes;
    SimResult sim;
};

// The adversary's tap: sees every packet, drops the ones the policy selects.
class DropTap final : public Interceptor {
public:
    explicit DropTap(AttackPolicy policy);
    bool forward(const PacketRecord& packet, const PacketTag& tag) override;

    std::size_t matched() const { return matched_; }
    std::size_t dropped() const { return dropped_; }

private:
    AttackPolicy policy_;
    std::mt19937_64 rng_;
    std::bernoulli_distribution coin_;
    std::size_t matched_ = 0;
    std::size_t dropped_ = 0;
};

void validate_policy(const AttackPolicy& policy);

// Fixed mapping from the simulator's event log to an outcome kind.
OutcomeKind outcome_from_events(const std::vector<SimEvent>& events);

// below 40% -> NO_IMPACT, [40%, 70%) -> NOISES, [70%, 100%) -> HARDLY_CONTINUED, 100% -> TERMINATED
VoiceQualityBand assess_voice_quality(double effective_drop);

AttackOutcome run_attack(const Scenario& scenario, const AttackPolicy& policy);
AttackOutcome run_attack(const CallScript& script, const AttackPolicy& policy);

// Drops all voice for mute_duration starting at the first voice packet at or after
// mute_start. The window must lie inside the conversation.
AttackOutcome mute_attack(const CallScript& script, Millis mute_start, Millis mute_duration);

AttackPolicy parse_policy(const std::string& text);
AttackPolicy read_policy(const std::filesystem::path& path);
std::string policy_to_json(const AttackPolicy& policy);
std::string outcome_report_json(const AttackOutcome& outcome);

std::string to_string(OutcomeKind k);
std::string to_string(VoiceQualityBand b);
OutcomeKind outcome_kind_from_string(const std::string& s);
VoiceQualityBand voice_band_from_string(const std::string& s);

}  // namespace vowifi
