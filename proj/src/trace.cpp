#include "vowifi/trace.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

SizeBand size_band(int size)
{
    if (size < 200)
        return SizeBand::C_SMALL;
    if (size <= 800)
        return SizeBand::C_MIDDLE;
    return SizeBand::C_LARGE;
}

CarrierProfile carrier_profile(Carrier carrier)
{
    switch (carrier) {
    case Carrier::TMOBILE:
        return {Carrier::TMOBILE, {"208.54.87.10", "208.54.87.11"}, true};
    case Carrier::ATT:
        return {Carrier::ATT, {"107.112.50.4"}, true};
    case Carrier::VERIZON:
        return {Carrier::VERIZON, {"141.207.160.9"}, false};
    }
    throw std::invalid_argument("unknown carrier");
}

Trace filter_wifi_calling(std::span<const PacketRecord> trace, const CarrierProfile& profile)
{
    Trace out;
    for (const auto& p : trace) {
        if (p.proto != Proto::ESP)
            continue;
        if (profile.gateway_addrs.contains(p.src) || profile.gateway_addrs.contains(p.dst))
            out.push_back(p);
    }
    return out;
}

std::vector<AnalysisWindow> window_partition(std::span<const PacketRecord> trace)
{
    std::vector<AnalysisWindow> windows;
    if (trace.empty())
        return windows;
    const auto last = trace.back().ts / kWindowMs;
    windows.resize(static_cast<std::size_t>(last + 1));
    for (std::int64_t x = 0; x <= last; ++x)
        windows[static_cast<std::size_t>(x)].index = x;
    for (const auto& p : trace) {
        auto& w = windows[static_cast<std::size_t>(p.ts / kWindowMs)];
        w.packets.push_back(p);
        if (size_band(p.size) == SizeBand::C_SMALL) {
            if (p.dir == Direction::UL)
                ++w.num_ul_c_small;
            else
                ++w.num_dl_c_small;
        }
    }
    return windows;
}

TraceError::TraceError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line)
{
}

std::string to_string(Direction d) { return d == Direction::UL ? "UL" : "DL"; }
std::string to_string(Proto p) { return p == Proto::ESP ? "ESP" : "OTHER"; }

std::string to_string(SizeBand b)
{
    switch (b) {
    case SizeBand::C_SMALL: return "C_SMALL";
    case SizeBand::C_MIDDLE: return "C_MIDDLE";
    case SizeBand::C_LARGE: return "C_LARGE";
    }
    return "?";
}

std::string to_string(Carrier c)
{
    switch (c) {
    case Carrier::TMOBILE: return "TMOBILE";
    case Carrier::ATT: return "ATT";
    case Carrier::VERIZON: return "VERIZON";
    }
    return "?";
}

Direction direction_from_string(const std::string& s)
{
    if (s == "UL")
        return Direction::UL;
    if (s == "DL")
        return Direction::DL;
    throw std::invalid_argument("bad direction '" + s + "'");
}

Proto proto_from_string(const std::string& s)
{
    if (s == "ESP")
        return Proto::ESP;
    if (s == "OTHER")
        return Proto::OTHER;
    throw std::invalid_argument("bad proto '" + s + "'");
}

Carrier carrier_from_string(const std::string& s)
{
    if (s == "TMOBILE")
        return Carrier::TMOBILE;
    if (s == "ATT")
        return Carrier::ATT;
    if (s == "VERIZON")
        return Carrier::VERIZON;
    throw std::invalid_argument("bad carrier '" + s + "'");
}

namespace {

PacketRecord record_from_json(const json& j)
{
    static const std::set<std::string> required = {"ts", "dir", "size", "proto", "src", "dst"};
    if (!j.is_object())
        throw std::invalid_argument("record is not an object");
    for (const auto& k : required)
        if (!j.contains(k))
            throw std::invalid_argument("missing key '" + k + "'");
    for (const auto& [k, v] : j.items())
        if (!required.contains(k) && k != "tunnel")
            throw std::invalid_argument("unexpected key '" + k + "'");

    PacketRecord p;
    if (!j["ts"].is_number_integer() || j["ts"].get<std::int64_t>() < 0)
        throw std::invalid_argument("ts must be a non-negative integer");
    p.ts = j["ts"].get<Millis>();
    if (!j["size"].is_number_integer() || j["size"].get<std::int64_t>() < 1)
        throw std::invalid_argument("size must be a positive integer");
    p.size = j["size"].get<int>();
    p.dir = direction_from_string(j["dir"].get<std::string>());
    p.proto = proto_from_string(j["proto"].get<std::string>());
    p.src = j["src"].get<std::string>();
    p.dst = j["dst"].get<std::string>();
    if (j.contains("tunnel") && !j["tunnel"].is_null())
        p.tunnel = j["tunnel"].get<std::string>();
    return p;
}

}  // namespace

Trace parse_trace(std::istream& in)
{
    Trace trace;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        PacketRecord p;
        try {
            p = record_from_json(json::parse(line));
        } catch (const std::exception& e) {
            throw TraceError(lineno, e.what());
        }
        if (!trace.empty() && p.ts < trace.back().ts)
            throw TraceError(lineno, "timestamp decreases");
        trace.push_back(std::move(p));
    }
    return trace;
}

void write_trace(std::span<const PacketRecord> trace, std::ostream& out)
{
    for (const auto& p : trace) {
        ordered_json j;
        j["ts"] = p.ts;
        j["dir"] = to_string(p.dir);
        j["size"] = p.size;
        j["proto"] = to_string(p.proto);
        j["src"] = p.src;
        j["dst"] = p.dst;
        if (p.tunnel)
            j["tunnel"] = *p.tunnel;
        out << j.dump() << '\n';
    }
}

Trace read_trace(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw TraceError(0, "cannot open " + path.string());
    return parse_trace(in);
}

void write_trace(std::span<const PacketRecord> trace, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw TraceError(0, "cannot write " + path.string());
    write_trace(trace, out);
}

void validate_trace(std::span<const PacketRecord> trace, const std::string& device_addr)
{
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& p = trace[i];
        if (p.size < 1)
            throw TraceError(i + 1, "size must be positive");
        if (i > 0 && p.ts < trace[i - 1].ts)
            throw TraceError(i + 1, "timestamp decreases");
        const bool ok = p.dir == Direction::UL ? p.src == device_addr : p.dst == device_addr;
        if (!ok)
            throw TraceError(i + 1, "direction disagrees with device address");
    }
}

CarrierProfile read_profile(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    const auto j = json::parse(in);
    CarrierProfile p;
    p.name = carrier_from_string(j.at("name").get<std::string>());
    for (const auto& a : j.at("gateway_addrs"))
        p.gateway_addrs.insert(a.get<std::string>());
    p.early_media_while_ringing = j.at("early_media_while_ringing").get<bool>();
    if (p.gateway_addrs.empty())
        throw std::invalid_argument("gateway_addrs must be non-empty");
    if (p.early_media_while_ringing == (p.name == Carrier::VERIZON))
        throw std::invalid_argument("early_media_while_ringing must be false exactly for VERIZON");
    return p;
}

void write_profile(const CarrierProfile& profile, const std::filesystem::path& path)
{
    ordered_json j;
    j["name"] = to_string(profile.name);
    j["gateway_addrs"] = profile.gateway_addrs;
    j["early_media_while_ringing"] = profile.early_media_while_ringing;
    std::ofstream(path) << j.dump(2) << '\n';
}

}  // namespace vowifi
