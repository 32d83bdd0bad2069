#pragma once

#include <random>

#include "vowifi/callflow.hpp"
#include "vowifi/trace.hpp"

namespace vowifi::testing {

// Outgoing T-Mobile call: answered after 6 s, 20 s of talk, caller hangs up.
inline CallScript outgoing_call(std::uint64_t seed = 11)
{
    CallScript s;
    s.role = Role::CALLER;
    s.dial_time = 1000;
    s.answer_delay = 6000;
    s.talk_duration = 20000;
    s.hangup_side = Side::LOCAL;
    s.carrier = Carrier::TMOBILE;
    s.seed = seed;
    return s;
}

// Incoming call shaped like the measured one: ring at ~2.43 s, answer ~8.38 s, BYE ~20.19 s.
inline CallScript incoming_call(std::uint64_t seed = 7, Carrier carrier = Carrier::TMOBILE)
{
    CallScript s;
    s.role = Role::CALLEE;
    s.dial_time = 2000;
    s.answer_delay = 5950;
    s.talk_duration = 11810;
    s.hangup_side = Side::LOCAL;
    s.carrier = carrier;
    s.seed = seed;
    return s;
}

inline Trace random_trace(std::mt19937_64& rng, std::size_t n)
{
    Trace t;
    Millis ts = static_cast<Millis>(rng() % 500);
    for (std::size_t i = 0; i < n; ++i) {
        ts += static_cast<Millis>(rng() % 900);
        PacketRecord p;
        p.ts = ts;
        p.dir = rng() % 2 ? Direction::UL : Direction::DL;
        p.size = 1 + static_cast<int>(rng() % 1500);
        p.proto = rng() % 5 ? Proto::ESP : Proto::OTHER;
        p.src = p.dir == Direction::UL ? kDeviceAddr : "208.54.87.10";
        p.dst = p.dir == Direction::UL ? "208.54.87.10" : kDeviceAddr;
        if (rng() % 7 == 0)
            p.tunnel = "vpn";
        t.push_back(p);
    }
    return t;
}

}  // namespace vowifi::testing
