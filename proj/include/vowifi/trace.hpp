#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vowifi {

// Trace time in integer milliseconds since the trace epoch.
using Millis = std::int64_t;

constexpr Millis kWindowMs = 2000;

enum class Direction { UL, DL };  // UL = device -> network
enum class Proto { ESP, OTHER };

struct PacketRecord {
    Millis ts = 0;
    Direction dir = Direction::UL;
    int size = 1;  // total encapsulated bytes
    Proto proto = Proto::ESP;
    std::string src;
    std::string dst;
    std::optional<std::string> tunnel;

    bool operator==(const PacketRecord&) const = default;
};

using Trace = std::vector<PacketRecord>;

enum class SizeBand { C_SMALL, C_MIDDLE, C_LARGE };

// C_SMALL < 200 <= C_MIDDLE <= 800 < C_LARGE
SizeBand size_band(int size);

struct AnalysisWindow {
    std::int64_t index = 0;  // covers [index*2s, index*2s + 2s)
    Trace packets;
    int num_ul_c_small = 0;
    int num_dl_c_small = 0;
};

enum class Carrier { TMOBILE, ATT, VERIZON };

struct CarrierProfile {
    Carrier name = Carrier::TMOBILE;
    std::set<std::string> gateway_addrs;
    bool early_media_while_ringing = true;
};

// Built-in gateway addresses used by the simulator.
CarrierProfile carrier_profile(Carrier carrier);

// Address the simulator assigns to the observed device.
inline const std::string kDeviceAddr = "192.168.1.23";

// Keeps ESP packets exchanged with one of the profile's gateways, order preserved.
Trace filter_wifi_calling(std::span<const PacketRecord> trace, const CarrierProfile& profile);

// Epoch-aligned, non-overlapping 2 s windows up to the last packet's window.
std::vector<AnalysisWindow> window_partition(std::span<const PacketRecord> trace);

// Error raised for malformed or inconsistent trace input. line() is 1-based, 0 when
// the error is not tied to a line.
class TraceError : public std::runtime_error {
public:
    TraceError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

Trace parse_trace(std::istream& in);
void write_trace(std::span<const PacketRecord> trace, std::ostream& out);
Trace read_trace(const std::filesystem::path& path);
void write_trace(std::span<const PacketRecord> trace, const std::filesystem::path& path);

// Checks size, time ordering and that dir agrees with the device address
// (UL packets originate at the device, DL packets are addressed to it).
void validate_trace(std::span<const PacketRecord> trace, const std::string& device_addr);

CarrierProfile read_profile(const std::filesystem::path& path);
void write_profile(const CarrierProfile& profile, const std::filesystem::path& path);

std::string to_string(Direction d);
std::string to_string(Proto p);
std::string to_string(SizeBand b);
std::string to_string(Carrier c);
Direction direction_from_string(const std::string& s);
Proto proto_from_string(const std::string& s);
Carrier carrier_from_string(const std::string& s);

}  // namespace vowifi
