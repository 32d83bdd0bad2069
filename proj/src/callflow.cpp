#include "vowifi/callflow.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

SipMessageKind PacketTag::message() const
{
    switch (step) {
    case FlowStep::INVITE: return SipMessageKind::INVITE;
    case FlowStep::TRYING: return SipMessageKind::TRYING_100;
    case FlowStep::SESSION_PROGRESS: return SipMessageKind::SESSION_183;
    case FlowStep::PRACK_SESSION:
    case FlowStep::PRACK_RINGING: return SipMessageKind::PRACK;
    case FlowStep::RINGING: return SipMessageKind::RINGING_180;
    case FlowStep::PRACK_SESSION_OK:
    case FlowStep::PRACK_RINGING_OK:
    case FlowStep::ANSWER_OK:
    case FlowStep::BYE_OK:
    case FlowStep::TEXT_ACK: return SipMessageKind::OK_200;
    case FlowStep::ACK: return SipMessageKind::ACK;
    case FlowStep::BYE: return SipMessageKind::BYE;
    case FlowStep::TEXT: return SipMessageKind::MESSAGE;
    case FlowStep::REGISTER: return SipMessageKind::REGISTER;
    case FlowStep::DEREGISTER: return SipMessageKind::DEREGISTER;
    case FlowStep::EARLY_MEDIA:
    case FlowStep::VOICE: break;
    }
    return SipMessageKind::OK_200;
}

int signaling_size(FlowStep step)
{
    // Call-critical messages all land in (800, 1360]; only INVITE reaches 1360.
    switch (step) {
    case FlowStep::INVITE: return 1360;
    case FlowStep::TRYING: return 860;
    case FlowStep::SESSION_PROGRESS: return 1270;
    case FlowStep::PRACK_SESSION: return 940;
    case FlowStep::PRACK_SESSION_OK: return 900;
    case FlowStep::RINGING: return 1010;
    case FlowStep::PRACK_RINGING: return 950;
    case FlowStep::PRACK_RINGING_OK: return 910;
    case FlowStep::ANSWER_OK: return 1180;
    case FlowStep::ACK: return 880;
    case FlowStep::BYE: return 990;
    case FlowStep::BYE_OK: return 870;
    case FlowStep::TEXT: return 1150;
    case FlowStep::TEXT_ACK: return 420;
    case FlowStep::REGISTER: return 680;
    case FlowStep::DEREGISTER: return 380;
    case FlowStep::EARLY_MEDIA:
    case FlowStep::VOICE: break;
    }
    return 0;
}

Trace SimResult::delivered_trace() const
{
    Trace out;
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (delivered[i])
            out.push_back(trace[i]);
    return out;
}

std::size_t SimResult::count_events(SimEventKind kind) const
{
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const SimEvent& e) { return e.kind == kind; }));
}

std::optional<SimEvent> SimResult::first_event(SimEventKind kind) const
{
    for (const auto& e : events)
        if (e.kind == kind)
            return e;
    return std::nullopt;
}

void validate_script(const CallScript& s)
{
    if (s.dial_time < 0 || s.answer_delay < 0 || s.talk_duration < 0)
        throw std::invalid_argument("script durations must be non-negative");
    if (s.answer_delay == 0 && s.talk_duration > 0)
        throw std::invalid_argument("talk_duration > 0 but the call is never answered");
    if (s.rtp.packets_per_second < 5 || s.rtp.packets_per_second > 1000)
        throw std::invalid_argument("rtp packets_per_second must be in [5, 1000]");
    if (s.rtp.payload_size < 1)
        throw std::invalid_argument("rtp payload_size must be positive");
}

std::optional<SimEvent> continuity_check(const ContinuityObservation& obs)
{
    if (obs.phase == CallPhase::SETUP && !obs.response_received &&
        obs.unanswered_invites >= kMaxInviteAttempts) {
        return SimEvent{SimEventKind::VOLTE_FALLBACK, obs.now,
                        std::to_string(obs.unanswered_invites) + " INVITE attempts unanswered"};
    }
    if (obs.phase == CallPhase::CONVERSATION && obs.last_voice_rx &&
        obs.now - *obs.last_voice_rx >= kInactivityTimeoutMs) {
        return SimEvent{SimEventKind::CALL_TERMINATED_BY_NETWORK, obs.now, "no voice received for 8 s"};
    }
    return std::nullopt;
}

namespace {

// Timers run after packets scheduled for the same millisecond.
enum Priority { kPacket = 0, kTimer = 1 };

class Clock {
public:
    void at(Millis t, Priority prio, std::function<void()> fn)
    {
        queue_.push(Item{t, prio, seq_++, std::move(fn)});
    }

    void run()
    {
        while (!queue_.empty()) {
            auto item = queue_.top();
            queue_.pop();
            now_ = item.t;
            item.fn();
        }
    }

    Millis now() const { return now_; }

private:
    struct Item {
        Millis t;
        Priority prio;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const
        {
            return std::tie(a.t, a.prio, a.seq) > std::tie(b.t, b.prio, b.seq);
        }
    };
    std::priority_queue<Item, std::vector<Item>, Later> queue_;
    std::uint64_t seq_ = 0;
    Millis now_ = 0;
};

enum class LocalState { IDLE, SETUP, ALERTING, CONVERSATION, ENDED, ABANDONED };

class CallSimulation {
public:
    CallSimulation(const CallScript& script, Interceptor* tap)
        : script_(script),
          profile_(carrier_profile(script.carrier)),
          gateway_(*profile_.gateway_addrs.begin()),
          tap_(tap),
          rng_(script.seed),
          period_(std::max<Millis>(1, 1000 / script.rtp.packets_per_second))
    {
    }

    SimResult run()
    {
        result_.truth.initiator = script_.role == Role::CALLER ? Side::LOCAL : Side::REMOTE;
        clock_.at(script_.dial_time, kPacket, [this] {
            if (script_.role == Role::CALLER) {
                event(SimEventKind::DIAL_OUT, "outgoing Wi-Fi call");
                local_ = LocalState::SETUP;
                caller_send_invite();
            } else {
                event(SimEventKind::RECEIVE_CALL, "incoming Wi-Fi call");
                callee_remote_send_invite();
            }
        });
        clock_.run();
        finish();
        std::stable_sort(result_.events.begin(), result_.events.end(),
                         [](const SimEvent& a, const SimEvent& b) { return a.ts < b.ts; });
        return std::move(result_);
    }

private:
    Millis now() const { return clock_.now(); }
    Millis jitter() { return std::uniform_int_distribution<Millis>(-kJitterMs, kJitterMs)(rng_); }

    void after(Millis delay, std::function<void()> fn) { clock_.at(now() + delay, kPacket, std::move(fn)); }
    void timer(Millis t, std::function<void()> fn) { clock_.at(t, kTimer, std::move(fn)); }

    void event(SimEventKind kind, std::string detail)
    {
        result_.events.push_back(SimEvent{kind, now(), std::move(detail)});
    }

    // Emits one packet through the tap and hands it to the receiver when delivered.
    bool emit(FlowStep step, CallPhase phase, Direction dir)
    {
        PacketTag tag{step, phase};
        PacketRecord p;
        p.ts = now();
        p.dir = dir;
        p.size = tag.is_voice() ? script_.rtp.payload_size : signaling_size(step);
        p.proto = Proto::ESP;
        p.src = dir == Direction::UL ? kDeviceAddr : gateway_;
        p.dst = dir == Direction::UL ? gateway_ : kDeviceAddr;
        const bool ok = tap_ ? tap_->forward(p, tag) : true;
        result_.trace.push_back(p);
        result_.tags.push_back(tag);
        result_.delivered.push_back(ok);
        if (ok) {
            if (dir == Direction::UL)
                remote_receive(tag);
            else
                local_receive(tag);
        }
        return ok;
    }

    bool local_in_call() const
    {
        return local_ == LocalState::SETUP || local_ == LocalState::ALERTING ||
               local_ == LocalState::CONVERSATION;
    }

    Millis next_grid(Millis t) const
    {
        if (t <= rtp_start_)
            return rtp_start_;
        return rtp_start_ + (t - rtp_start_ + period_ - 1) / period_ * period_;
    }

    // ---- outgoing call: local device is the caller -------------------------------

    void caller_send_invite()
    {
        ++invite_attempts_;
        emit(FlowStep::INVITE, CallPhase::SETUP, Direction::UL);
        timer(now() + kInviteRetryMs, [this] {
            if (local_ != LocalState::SETUP || response_received_)
                return;
            ContinuityObservation obs{CallPhase::SETUP, now(), invite_attempts_, false, std::nullopt};
            if (auto ev = continuity_check(obs)) {
                result_.events.push_back(*ev);
                local_ = LocalState::ABANDONED;
                return;
            }
            caller_send_invite();
        });
    }

    void caller_response_received()
    {
        if (response_received_)
            return;
        response_received_ = true;
        timer(now() + kSessionProgressTimeoutMs, [this] {
            if (local_ == LocalState::SETUP && !got_session_progress_) {
                event(SimEventKind::SECOND_INCOMING_CALL,
                      "no 183 Session Progress; cellular call placed while the Wi-Fi call still rings");
                local_ = LocalState::ABANDONED;
            }
        });
    }

    // ---- incoming call: local device is the callee -------------------------------

    void callee_remote_send_invite()
    {
        ++invite_attempts_;
        emit(FlowStep::INVITE, CallPhase::SETUP, Direction::DL);
        timer(now() + kInviteRetryMs, [this] {
            if (remote_got_response_ || remote_ended_)
                return;
            ContinuityObservation obs{CallPhase::SETUP, now(), invite_attempts_, false, std::nullopt};
            if (auto ev = continuity_check(obs)) {
                ev->detail += "; network routes the call over cellular";
                result_.events.push_back(*ev);
                remote_ended_ = true;
                return;
            }
            callee_remote_send_invite();
        });
    }

    void callee_ring()
    {
        if (local_ != LocalState::SETUP)
            return;
        local_ = LocalState::ALERTING;
        result_.truth.ringing_start = now();
        emit(FlowStep::RINGING, CallPhase::SETUP, Direction::UL);
        if (script_.answer_delay > 0)
            after(script_.answer_delay, [this] { callee_answer(); });
        else
            after(kRingTimeoutMs, [this] { unanswered_end(); });
    }

    void callee_answer()
    {
        if (local_ != LocalState::ALERTING)
            return;
        local_ = LocalState::CONVERSATION;
        result_.truth.talking_start = now();
        event(SimEventKind::CONVERSATION_STARTED, "callee answered");
        rtp_start_ = now() + 320;
        last_dl_voice_ = rtp_start_;
        arm_inactivity(rtp_start_);
        clock_.at(rtp_start_, kPacket, [this] { local_voice_tick(); });
        emit(FlowStep::ANSWER_OK, CallPhase::ALERTING, Direction::UL);
        schedule_answer_retransmit(now(), 0, Direction::UL);
        if (script_.hangup_side == Side::LOCAL)
            after(script_.talk_duration, [this] { local_hangup(); });
    }

    // ---- shared behaviour ---------------------------------------------------------

    void remote_ring()
    {
        remote_ring_time_ = now();
        emit(FlowStep::RINGING, CallPhase::SETUP, Direction::DL);
        if (profile_.early_media_while_ringing) {
            early_media_ = true;
            after(260, [this] { early_media_tick(); });
        }
        if (script_.answer_delay > 0)
            after(script_.answer_delay, [this] { remote_answer(); });
        else
            after(kRingTimeoutMs, [this] { unanswered_end(); });
    }

    void early_media_tick()
    {
        if (!early_media_ || remote_ended_)
            return;
        emit(FlowStep::EARLY_MEDIA, CallPhase::ALERTING, Direction::DL);
        after(period_, [this] { early_media_tick(); });
    }

    // Called for an outgoing call when the remote party picks up.
    void remote_answer()
    {
        if (remote_ended_)
            return;
        answered_ = true;
        early_media_ = false;
        remote_in_call_ = true;
        rtp_start_ = now() + 60;
        clock_.at(rtp_start_, kPacket, [this] { remote_voice_tick(); });
        emit(FlowStep::ANSWER_OK, CallPhase::ALERTING, Direction::DL);
        schedule_answer_retransmit(now(), 0, Direction::DL);
        if (script_.hangup_side == Side::REMOTE)
            after(script_.talk_duration, [this] { remote_hangup(); });
    }

    // 200 OK to INVITE is retransmitted with doubling intervals until ACK or voice
    // confirms the dialog; the answering side gives up after the transaction timeout.
    void schedule_answer_retransmit(Millis answered_at, int n, Direction dir)
    {
        const Millis delay = std::min<Millis>(500LL << n, 4000);
        timer(now() + delay, [this, answered_at, n, dir] {
            if (dialog_confirmed_)
                return;
            const bool local_answered = dir == Direction::UL;
            if (local_answered ? local_ != LocalState::CONVERSATION : remote_ended_)
                return;
            if (now() - answered_at >= kTransactionTimeoutMs) {
                if (local_answered) {
                    local_hangup();
                } else {
                    const bool alerting = local_ == LocalState::ALERTING;
                    event(SimEventKind::STUCK_DIALING,
                          alerting ? "answer never reached the caller; alerting tone kept playing"
                                   : "caller never left the dialing screen");
                    remote_in_call_ = false;
                    remote_ended_ = true;
                    emit(FlowStep::BYE, CallPhase::TEARDOWN, Direction::DL);
                }
                return;
            }
            emit(FlowStep::ANSWER_OK, CallPhase::ALERTING, dir);
            schedule_answer_retransmit(answered_at, n + 1, dir);
        });
    }

    void unanswered_end()
    {
        if (remote_ended_ || answered_ || local_ == LocalState::CONVERSATION)
            return;
        early_media_ = false;
        if (script_.hangup_side == Side::LOCAL) {
            local_hangup();
        } else {
            remote_ended_ = true;
            remote_bye();
        }
    }

    void local_voice_tick()
    {
        if (local_ != LocalState::CONVERSATION)
            return;
        emit(FlowStep::VOICE, CallPhase::CONVERSATION, Direction::UL);
        after(period_, [this] { local_voice_tick(); });
    }

    void remote_voice_tick()
    {
        if (!remote_in_call_)
            return;
        emit(FlowStep::VOICE, CallPhase::CONVERSATION, Direction::DL);
        after(period_, [this] { remote_voice_tick(); });
    }

    void arm_inactivity(Millis last_rx)
    {
        timer(last_rx + kInactivityTimeoutMs, [this, last_rx] {
            if (local_ != LocalState::CONVERSATION || terminating_ || last_dl_voice_ != last_rx)
                return;
            ContinuityObservation obs{CallPhase::CONVERSATION, now(), 0, true, last_rx};
            auto ev = continuity_check(obs);
            if (!ev)
                return;
            terminating_ = true;
            const Millis teardown = std::uniform_int_distribution<Millis>(200, 1500)(rng_);
            after(teardown, [this, detail = ev->detail] {
                if (local_ != LocalState::CONVERSATION)
                    return;
                event(SimEventKind::CALL_TERMINATED_BY_NETWORK, detail);
                remote_in_call_ = false;
                remote_ended_ = true;
                local_call_ended(Side::REMOTE);
                emit(FlowStep::BYE, CallPhase::TEARDOWN, Direction::DL);
            });
        });
    }

    void arm_peer_media_timeout(Millis last_rx)
    {
        timer(last_rx + kPeerMediaTimeoutMs, [this, last_rx] {
            if (!remote_in_call_ || last_ul_voice_ != last_rx)
                return;
            if (local_ == LocalState::ENDED)
                event(SimEventKind::STUCK_CONVERSATION,
                      "BYE lost; remote party held the conversation for 20 s before teardown");
            else
                event(SimEventKind::CALL_TERMINATED_BY_NETWORK, "remote party stopped receiving voice");
            remote_in_call_ = false;
            remote_ended_ = true;
            remote_bye();
        });
    }

    void local_call_ended(Side by)
    {
        local_ = LocalState::ENDED;
        if (!result_.truth.call_end) {
            result_.truth.call_end = now();
            result_.truth.hangup_first = by;
        }
        event(SimEventKind::CALL_ENDED, by == Side::LOCAL ? "local hang-up" : "remote hang-up");
    }

    void local_hangup()
    {
        if (!local_in_call())
            return;
        local_call_ended(Side::LOCAL);
        local_bye(now(), 0);
    }

    void local_bye(Millis first_sent, int n)
    {
        if (local_bye_acked_)
            return;
        emit(FlowStep::BYE, CallPhase::TEARDOWN, Direction::UL);
        const Millis delay = std::min<Millis>(500LL << n, 4000);
        timer(now() + delay, [this, first_sent, n] {
            if (!local_bye_acked_ && now() - first_sent < kTransactionTimeoutMs)
                local_bye(first_sent, n + 1);
        });
    }

    void remote_hangup()
    {
        if (!remote_in_call_)
            return;
        remote_in_call_ = false;
        remote_ended_ = true;
        remote_bye();
    }

    void remote_bye() { remote_bye_at(now(), 0); }

    void remote_bye_at(Millis first_sent, int n)
    {
        if (remote_bye_acked_)
            return;
        emit(FlowStep::BYE, CallPhase::TEARDOWN, Direction::DL);
        const Millis delay = std::min<Millis>(500LL << n, 4000);
        timer(now() + delay, [this, first_sent, n] {
            if (!remote_bye_acked_ && now() - first_sent < kTransactionTimeoutMs)
                remote_bye_at(first_sent, n + 1);
        });
    }

    // ---- receivers ---------------------------------------------------------------

    void local_receive(const PacketTag& tag)
    {
        const bool caller = script_.role == Role::CALLER;
        switch (tag.step) {
        case FlowStep::INVITE:
            if (!caller && local_ == LocalState::IDLE) {
                local_ = LocalState::SETUP;
                after(80 + jitter(), [this] {
                    emit(FlowStep::SESSION_PROGRESS, CallPhase::SETUP, Direction::UL);
                });
                after(430 + jitter(), [this] { callee_ring(); });
            }
            break;
        case FlowStep::TRYING:
            if (caller)
                caller_response_received();
            break;
        case FlowStep::SESSION_PROGRESS:
            caller_response_received();
            if (local_ == LocalState::SETUP && !got_session_progress_) {
                got_session_progress_ = true;
                after(30, [this] { emit(FlowStep::PRACK_SESSION, CallPhase::SETUP, Direction::UL); });
            }
            break;
        case FlowStep::PRACK_SESSION:
            if (!caller)
                after(60 + jitter(), [this] {
                    emit(FlowStep::PRACK_SESSION_OK, CallPhase::SETUP, Direction::UL);
                });
            break;
        case FlowStep::RINGING:
            caller_response_received();
            if (local_ == LocalState::SETUP && got_session_progress_) {
                local_ = LocalState::ALERTING;
                result_.truth.ringing_start = now();
                event(SimEventKind::RINGBACK_STARTED, "caller hears the alerting tone");
                after(30, [this] { emit(FlowStep::PRACK_RINGING, CallPhase::ALERTING, Direction::UL); });
            }
            break;
        case FlowStep::ANSWER_OK:
            caller_response_received();
            if (local_ == LocalState::ALERTING) {
                local_ = LocalState::CONVERSATION;
                result_.truth.talking_start = now();
                event(SimEventKind::CONVERSATION_STARTED, "call answered");
                last_dl_voice_ = std::max(rtp_start_, now());
                arm_inactivity(last_dl_voice_);
                clock_.at(next_grid(now() + 60), kPacket, [this] { local_voice_tick(); });
                after(30, [this] { emit(FlowStep::ACK, CallPhase::CONVERSATION, Direction::UL); });
                if (script_.hangup_side == Side::LOCAL)
                    after(script_.talk_duration, [this] { local_hangup(); });
            } else if (local_ == LocalState::CONVERSATION) {
                after(30, [this] { emit(FlowStep::ACK, CallPhase::CONVERSATION, Direction::UL); });
            }
            break;
        case FlowStep::ACK:
            dialog_confirmed_ = true;
            break;
        case FlowStep::VOICE:
            if (local_ == LocalState::CONVERSATION) {
                if (script_.role == Role::CALLEE)
                    dialog_confirmed_ = true;
                const Millis gap = now() - last_dl_voice_;
                if (gap >= 2000)
                    event(SimEventKind::VOICE_MUTED, "no voice for " + std::to_string(gap) + " ms");
                last_dl_voice_ = now();
                arm_inactivity(now());
            }
            break;
        case FlowStep::BYE:
            if (local_in_call()) {
                early_media_ = false;
                local_call_ended(Side::REMOTE);
            }
            after(30 + std::abs(jitter()), [this] {
                emit(FlowStep::BYE_OK, CallPhase::TEARDOWN, Direction::UL);
            });
            break;
        case FlowStep::BYE_OK:
            local_bye_acked_ = true;
            break;
        default:
            break;
        }
    }

    void remote_receive(const PacketTag& tag)
    {
        const bool caller = script_.role == Role::CALLER;
        switch (tag.step) {
        case FlowStep::INVITE:
            if (!caller)
                break;
            after(60 + jitter(), [this] { emit(FlowStep::TRYING, CallPhase::SETUP, Direction::DL); });
            if (!remote_got_invite_) {
                remote_got_invite_ = true;
                after(250 + jitter(), [this] {
                    emit(FlowStep::SESSION_PROGRESS, CallPhase::SETUP, Direction::DL);
                });
                after(650 + jitter(), [this] { remote_ring(); });
            }
            break;
        case FlowStep::SESSION_PROGRESS:
            remote_got_response_ = true;
            after(100 + jitter(), [this] { emit(FlowStep::PRACK_SESSION, CallPhase::SETUP, Direction::DL); });
            break;
        case FlowStep::PRACK_SESSION:
            after(120 + jitter(), [this] {
                emit(FlowStep::PRACK_SESSION_OK, CallPhase::SETUP, Direction::DL);
            });
            break;
        case FlowStep::PRACK_RINGING:
            after(120 + jitter(), [this] {
                emit(FlowStep::PRACK_RINGING_OK, CallPhase::ALERTING, Direction::DL);
            });
            break;
        case FlowStep::RINGING:
            remote_got_response_ = true;
            if (!caller && profile_.early_media_while_ringing && !early_media_) {
                early_media_ = true;
                after(40, [this] { early_media_tick(); });
            }
            break;
        case FlowStep::ANSWER_OK:
            if (!caller && !answered_) {
                answered_ = true;
                early_media_ = false;
                remote_in_call_ = true;
                last_ul_voice_ = rtp_start_;
                arm_peer_media_timeout(rtp_start_);
                clock_.at(next_grid(now() + 1), kPacket, [this] { remote_voice_tick(); });
                if (script_.hangup_side == Side::REMOTE)
                    after(script_.talk_duration, [this] { remote_hangup(); });
            }
            if (!caller)
                after(300 + jitter(), [this] { emit(FlowStep::ACK, CallPhase::CONVERSATION, Direction::DL); });
            break;
        case FlowStep::ACK:
            if (!dialog_confirmed_) {
                dialog_confirmed_ = true;
                last_ul_voice_ = now();
                arm_peer_media_timeout(now());
            }
            break;
        case FlowStep::VOICE:
            if (remote_in_call_) {
                dialog_confirmed_ = true;
                last_ul_voice_ = now();
                arm_peer_media_timeout(now());
            }
            break;
        case FlowStep::BYE:
            remote_in_call_ = false;
            remote_ended_ = true;
            early_media_ = false;
            after(130 + jitter(), [this] { emit(FlowStep::BYE_OK, CallPhase::TEARDOWN, Direction::DL); });
            break;
        case FlowStep::BYE_OK:
            remote_bye_acked_ = true;
            break;
        default:
            break;
        }
    }

    void finish()
    {
        std::size_t voice = 0, dropped = 0;
        for (std::size_t i = 0; i < result_.trace.size(); ++i) {
            if (result_.tags[i].step != FlowStep::VOICE)
                continue;
            ++voice;
            if (!result_.delivered[i])
                ++dropped;
        }
        if (voice == 0 || dropped == voice)
            return;
        const double loss = static_cast<double>(dropped) / static_cast<double>(voice);
        if (loss >= kAudibleLossFraction) {
            std::ostringstream os;
            os << "voice loss " << loss;
            const Millis ts = result_.truth.call_end.value_or(result_.trace.back().ts);
            result_.events.push_back(SimEvent{SimEventKind::VOICE_DEGRADED, ts, os.str()});
        }
    }

    CallScript script_;
    CarrierProfile profile_;
    std::string gateway_;
    Interceptor* tap_;
    std::mt19937_64 rng_;
    Millis period_;
    Clock clock_;
    SimResult result_;

    LocalState local_ = LocalState::IDLE;
    int invite_attempts_ = 0;
    bool response_received_ = false;
    bool got_session_progress_ = false;
    bool terminating_ = false;
    bool local_bye_acked_ = false;
    Millis last_dl_voice_ = 0;

    bool remote_got_invite_ = false;
    bool remote_got_response_ = false;
    bool remote_in_call_ = false;
    bool remote_ended_ = false;
    bool remote_bye_acked_ = false;
    bool answered_ = false;
    bool early_media_ = false;
    bool dialog_confirmed_ = false;
    Millis remote_ring_time_ = 0;
    Millis last_ul_voice_ = 0;
    Millis rtp_start_ = 0;
};

}  // namespace

SimResult run_call(const CallScript& script, Interceptor* tap)
{
    validate_script(script);
    return CallSimulation(script, tap).run();
}

SimResult run_event(SimEventKind kind, Millis at, const CarrierProfile& profile, std::uint64_t seed,
                    Interceptor* tap)
{
    struct Step {
        Millis offset;
        Direction dir;
        int size;
    };
    std::vector<Step> steps;
    FlowStep first = FlowStep::TEXT, rest = FlowStep::TEXT_ACK;
    switch (kind) {
    case SimEventKind::SEND_TEXT:
        steps = {{0, Direction::UL, 1150}, {180, Direction::DL, 420}};
        break;
    case SimEventKind::RECEIVE_TEXT:
        steps = {{0, Direction::DL, 1150}, {120, Direction::UL, 420}};
        break;
    case SimEventKind::ACTIVATE:
        first = rest = FlowStep::REGISTER;
        steps = {{0, Direction::UL, 680}, {150, Direction::DL, 560}, {400, Direction::UL, 720},
                 {550, Direction::DL, 600}};
        break;
    case SimEventKind::DEACTIVATE:
        first = rest = FlowStep::DEREGISTER;
        steps = {{0, Direction::UL, 380}, {150, Direction::DL, 300}, {400, Direction::UL, 340},
                 {550, Direction::DL, 260}};
        break;
    default:
        throw std::invalid_argument("run_event: unsupported kind " + to_string(kind));
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Millis> jitter(-kJitterMs, kJitterMs);
    const std::string gateway = *profile.gateway_addrs.begin();

    SimResult r;
    r.truth.initiator = (kind == SimEventKind::RECEIVE_TEXT) ? Side::REMOTE : Side::LOCAL;
    r.events.push_back(SimEvent{kind, at, "service event"});
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        PacketRecord p;
        p.ts = at + s.offset + (i == 0 ? 0 : jitter(rng));
        p.dir = s.dir;
        p.size = s.size;
        p.src = s.dir == Direction::UL ? kDeviceAddr : gateway;
        p.dst = s.dir == Direction::UL ? gateway : kDeviceAddr;
        PacketTag tag{i == 0 ? first : rest, CallPhase::NONE};
        const bool ok = tap ? tap->forward(p, tag) : true;
        r.trace.push_back(std::move(p));
        r.tags.push_back(tag);
        r.delivered.push_back(ok);
    }
    return r;
}

SimResult merge_results(std::vector<SimResult> parts)
{
    struct Row {
        PacketRecord rec;
        PacketTag tag;
        bool delivered;
    };
    std::vector<Row> rows;
    SimResult out;
    for (auto& part : parts) {
        for (std::size_t i = 0; i < part.trace.size(); ++i)
            rows.push_back(Row{std::move(part.trace[i]), part.tags[i], part.delivered[i]});
        out.events.insert(out.events.end(), part.events.begin(), part.events.end());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.rec.ts < b.rec.ts; });
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const SimEvent& a, const SimEvent& b) { return a.ts < b.ts; });
    for (auto& row : rows) {
        out.trace.push_back(std::move(row.rec));
        out.tags.push_back(row.tag);
        out.delivered.push_back(row.delivered);
    }
    if (!parts.empty())
        out.truth = parts.front().truth;
    return out;
}

// ---- string conversions -----------------------------------------------------------

namespace {

template <typename E, std::size_t N>
std::string name_of(E value, const std::pair<E, const char*> (&table)[N])
{
    for (const auto& [v, n] : table)
        if (v == value)
            return n;
    return "?";
}

template <typename E, std::size_t N>
E value_of(const std::string& name, const std::pair<E, const char*> (&table)[N], const char* what)
{
    for (const auto& [v, n] : table)
        if (name == n)
            return v;
    throw std::invalid_argument(std::string("unknown ") + what + " '" + name + "'");
}

const std::pair<SipMessageKind, const char*> kSipNames[] = {
    {SipMessageKind::INVITE, "INVITE"},       {SipMessageKind::TRYING_100, "TRYING_100"},
    {SipMessageKind::SESSION_183, "SESSION_183"}, {SipMessageKind::PRACK, "PRACK"},
    {SipMessageKind::RINGING_180, "RINGING_180"}, {SipMessageKind::OK_200, "OK_200"},
    {SipMessageKind::ACK, "ACK"},             {SipMessageKind::BYE, "BYE"},
    {SipMessageKind::MESSAGE, "MESSAGE"},     {SipMessageKind::REGISTER, "REGISTER"},
    {SipMessageKind::DEREGISTER, "DEREGISTER"},
};

const std::pair<CallPhase, const char*> kPhaseNames[] = {
    {CallPhase::NONE, "NONE"},
    {CallPhase::SETUP, "SETUP"},
    {CallPhase::ALERTING, "ALERTING"},
    {CallPhase::CONVERSATION, "CONVERSATION"},
    {CallPhase::TEARDOWN, "TEARDOWN"},
};

const std::pair<SimEventKind, const char*> kEventNames[] = {
    {SimEventKind::DIAL_OUT, "DIAL_OUT"},
    {SimEventKind::RECEIVE_CALL, "RECEIVE_CALL"},
    {SimEventKind::SEND_TEXT, "SEND_TEXT"},
    {SimEventKind::RECEIVE_TEXT, "RECEIVE_TEXT"},
    {SimEventKind::ACTIVATE, "ACTIVATE"},
    {SimEventKind::DEACTIVATE, "DEACTIVATE"},
    {SimEventKind::VOLTE_FALLBACK, "VOLTE_FALLBACK"},
    {SimEventKind::CALL_TERMINATED_BY_NETWORK, "CALL_TERMINATED_BY_NETWORK"},
    {SimEventKind::SECOND_INCOMING_CALL, "SECOND_INCOMING_CALL"},
    {SimEventKind::STUCK_DIALING, "STUCK_DIALING"},
    {SimEventKind::STUCK_CONVERSATION, "STUCK_CONVERSATION"},
    {SimEventKind::RINGBACK_STARTED, "RINGBACK_STARTED"},
    {SimEventKind::CONVERSATION_STARTED, "CONVERSATION_STARTED"},
    {SimEventKind::CALL_ENDED, "CALL_ENDED"},
    {SimEventKind::VOICE_DEGRADED, "VOICE_DEGRADED"},
    {SimEventKind::VOICE_MUTED, "VOICE_MUTED"},
};

const std::pair<Role, const char*> kRoleNames[] = {{Role::CALLER, "CALLER"}, {Role::CALLEE, "CALLEE"}};
const std::pair<Side, const char*> kSideNames[] = {{Side::LOCAL, "LOCAL"}, {Side::REMOTE, "REMOTE"}};

}  // namespace

std::string to_string(SipMessageKind k) { return name_of(k, kSipNames); }
std::string to_string(CallPhase p) { return name_of(p, kPhaseNames); }
std::string to_string(SimEventKind k) { return name_of(k, kEventNames); }
std::string to_string(Role r) { return name_of(r, kRoleNames); }
std::string to_string(Side s) { return name_of(s, kSideNames); }
SipMessageKind sip_kind_from_string(const std::string& s) { return value_of(s, kSipNames, "message kind"); }
CallPhase phase_from_string(const std::string& s) { return value_of(s, kPhaseNames, "call phase"); }
SimEventKind event_kind_from_string(const std::string& s) { return value_of(s, kEventNames, "event kind"); }
Role role_from_string(const std::string& s) { return value_of(s, kRoleNames, "role"); }
Side side_from_string(const std::string& s) { return value_of(s, kSideNames, "side"); }

// ---- scenario files ---------------------------------------------------------------

Scenario parse_scenario(const std::string& text)
{
    const auto j = json::parse(text);
    Scenario sc;
    sc.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("carrier"))
        sc.carrier = carrier_from_string(j["carrier"].get<std::string>());
    if (j.contains("role")) {
        CallScript s;
        s.role = role_from_string(j.at("role").get<std::string>());
        s.dial_time = j.at("dial_time_ms").get<Millis>();
        s.answer_delay = j.at("answer_delay_ms").get<Millis>();
        s.talk_duration = j.at("talk_ms").get<Millis>();
        s.hangup_side = side_from_string(j.at("hangup_side").get<std::string>());
        s.carrier = carrier_from_string(j.at("carrier").get<std::string>());
        s.seed = sc.seed;
        if (j.contains("rtp")) {
            s.rtp.packets_per_second = j["rtp"].value("packets_per_second", 50);
            s.rtp.payload_size = j["rtp"].value("payload_size", 176);
        }
        validate_script(s);
        sc.call = s;
        sc.carrier = s.carrier;
    }
    if (j.contains("events")) {
        for (const auto& e : j["events"])
            sc.events.push_back(
                ScheduledEvent{event_kind_from_string(e.at("kind").get<std::string>()), e.at("at_ms").get<Millis>()});
    }
    if (!sc.call && sc.events.empty())
        throw std::invalid_argument("scenario has neither a call nor events");
    return sc;
}

Scenario read_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

SimResult run_scenario(const Scenario& scenario, Interceptor* tap)
{
    std::vector<SimResult> parts;
    Carrier carrier = scenario.carrier;
    if (scenario.call) {
        parts.push_back(run_call(*scenario.call, tap));
        carrier = scenario.call->carrier;
    }
    std::uint64_t n = 1;
    for (const auto& e : scenario.events)
        parts.push_back(run_event(e.kind, e.at, carrier_profile(carrier), scenario.seed + n++, tap));
    return merge_results(std::move(parts));
}

std::string events_to_json(const std::vector<SimEvent>& events)
{
    ordered_json arr = ordered_json::array();
    for (const auto& e : events)
        arr.push_back(ordered_json{{"kind", to_string(e.kind)}, {"ts", e.ts}, {"detail", e.detail}});
    return arr.dump(2);
}

std::string truth_to_json(const GroundTruth& t)
{
    ordered_json j;
    j["initiator"] = to_string(t.initiator);
    j["hangup_first"] = t.hangup_first ? ordered_json(to_string(*t.hangup_first)) : ordered_json(nullptr);
    auto opt = [](const std::optional<Millis>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    j["ringing_start"] = opt(t.ringing_start);
    j["talking_start"] = opt(t.talking_start);
    j["call_end"] = opt(t.call_end);
    return j.dump(2);
}

}  // namespace vowifi
