#include "vowifi/wica.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace vowifi {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::array<std::string, F_COUNT>& feature_names()
{
    static const std::array<std::string, F_COUNT> names = {
        "ul_large",       "dl_large",       "ul_max_size",  "dl_max_size", "ul_middle",
        "dl_middle",      "ul_min_size",    "dl_min_size",  "ul_mean_size", "dl_mean_size",
        "ul_small",       "dl_small",       "packet_count", "ul_byte_fraction",
        "iat_mean",       "iat_var",        "duration"};
    return names;
}

FeatureVector extract_features(std::span<const PacketRecord> segment)
{
    if (segment.empty())
        throw std::invalid_argument("cannot extract features from an empty segment");

    FeatureVector f{};
    double bytes[2] = {0, 0};
    double count[2] = {0, 0};
    double min_size[2] = {0, 0};
    double max_size[2] = {0, 0};
    for (const auto& p : segment) {
        const int d = p.dir == Direction::UL ? 0 : 1;
        const double size = p.size;
        min_size[d] = count[d] == 0 ? size : std::min(min_size[d], size);
        max_size[d] = std::max(max_size[d], size);
        bytes[d] += size;
        count[d] += 1;
        switch (size_band(p.size)) {
        case SizeBand::C_SMALL: f[d ? F_DL_SMALL : F_UL_SMALL] += 1; break;
        case SizeBand::C_MIDDLE: f[d ? F_DL_MIDDLE : F_UL_MIDDLE] += 1; break;
        case SizeBand::C_LARGE: f[d ? F_DL_LARGE : F_UL_LARGE] += 1; break;
        }
    }
    f[F_UL_MAX_SIZE] = max_size[0];
    f[F_DL_MAX_SIZE] = max_size[1];
    f[F_UL_MIN_SIZE] = min_size[0];
    f[F_DL_MIN_SIZE] = min_size[1];
    f[F_UL_MEAN_SIZE] = count[0] ? bytes[0] / count[0] : 0.0;
    f[F_DL_MEAN_SIZE] = count[1] ? bytes[1] / count[1] : 0.0;
    f[F_PACKET_COUNT] = static_cast<double>(segment.size());
    f[F_UL_BYTE_FRACTION] = bytes[0] / (bytes[0] + bytes[1]);

    if (segment.size() > 1) {
        const double n = static_cast<double>(segment.size() - 1);
        double sum = 0, sq = 0;
        for (std::size_t i = 1; i < segment.size(); ++i) {
            const double gap = static_cast<double>(segment[i].ts - segment[i - 1].ts);
            sum += gap;
            sq += gap * gap;
        }
        f[F_IAT_MEAN] = sum / n;
        f[F_IAT_VAR] = std::max(0.0, sq / n - f[F_IAT_MEAN] * f[F_IAT_MEAN]);
    }
    f[F_DURATION] = static_cast<double>(segment.back().ts - segment.front().ts);
    return f;
}

// ---------------------------------------------------------------------------
// C4.5

namespace {

struct Sample {
    FeatureVector x;
    EventKind y;
};

using Counts = std::array<std::size_t, kEventKindCount>;

double entropy(const Counts& c, std::size_t total)
{
    if (total == 0)
        return 0.0;
    double h = 0.0;
    for (auto n : c) {
        if (n == 0)
            continue;
        const double p = static_cast<double>(n) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

EventKind majority(const Counts& c)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < kEventKindCount; ++k)
        if (c[k] > c[best])
            best = k;
    return static_cast<EventKind>(best);
}

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    double ratio = 0.0;
};

// Best threshold on one feature by information gain. Thresholds are observed
// values (the largest value on the le side); ties keep the lower threshold.
std::optional<Split> best_split_on(const std::vector<const Sample*>& rows, std::size_t feature, double base)
{
    std::vector<const Sample*> sorted(rows);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](const Sample* a, const Sample* b) { return a->x[feature] < b->x[feature]; });
    const std::size_t n = sorted.size();
    Counts left{}, right{};
    for (const auto* s : sorted)
        ++right[static_cast<std::size_t>(s->y)];

    std::optional<Split> best;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto k = static_cast<std::size_t>(sorted[i]->y);
        ++left[k];
        --right[k];
        const double a = sorted[i]->x[feature];
        const double b = sorted[i + 1]->x[feature];
        if (a == b)
            continue;
        const std::size_t nl = i + 1, nr = n - nl;
        const double pl = static_cast<double>(nl) / static_cast<double>(n);
        const double pr = 1.0 - pl;
        const double gain = base - pl * entropy(left, nl) - pr * entropy(right, nr);
        if (!best || gain > best->gain + 1e-12) {
            const double split_info = -pl * std::log2(pl) - pr * std::log2(pr);
            best = Split{feature, a, gain, split_info > 0 ? gain / split_info : 0.0};
        }
    }
    return best;
}

std::unique_ptr<TreeNode> grow(const std::vector<const Sample*>& rows)
{
    Counts c{};
    for (const auto* s : rows)
        ++c[static_cast<std::size_t>(s->y)];
    auto leaf = [&] {
        auto node = std::make_unique<TreeNode>();
        node->label = majority(c);
        return node;
    };
    const auto classes = std::count_if(c.begin(), c.end(), [](std::size_t n) { return n > 0; });
    if (classes <= 1 || rows.size() < 2)
        return leaf();

    const double base = entropy(c, rows.size());
    std::vector<Split> candidates;
    for (std::size_t f = 0; f < F_COUNT; ++f)
        if (auto s = best_split_on(rows, f, base); s && s->gain > 1e-12)
            candidates.push_back(*s);
    if (candidates.empty())
        return leaf();

    double avg_gain = 0.0;
    for (const auto& s : candidates)
        avg_gain += s.gain;
    avg_gain /= static_cast<double>(candidates.size());

    const Split* chosen = nullptr;
    for (const auto& s : candidates) {
        if (s.gain + 1e-12 < avg_gain)
            continue;
        if (!chosen || s.ratio > chosen->ratio + 1e-12)
            chosen = &s;
    }

    std::vector<const Sample*> le, gt;
    for (const auto* s : rows)
        (s->x[chosen->feature] <= chosen->threshold ? le : gt).push_back(s);

    auto node = std::make_unique<TreeNode>();
    node->feature = chosen->feature;
    node->threshold = chosen->threshold;
    node->le = grow(le);
    node->gt = grow(gt);
    return node;
}

std::size_t node_depth(const TreeNode* n)
{
    if (!n || n->label)
        return 0;
    return 1 + std::max(node_depth(n->le.get()), node_depth(n->gt.get()));
}

std::size_t node_leaves(const TreeNode* n)
{
    if (!n)
        return 0;
    if (n->label)
        return 1;
    return node_leaves(n->le.get()) + node_leaves(n->gt.get());
}

}  // namespace

EventKind EventClassifier::predict(const FeatureVector& features) const
{
    if (!root)
        throw std::logic_error("classifier is not trained");
    const TreeNode* n = root.get();
    while (!n->label)
        n = features[n->feature] <= n->threshold ? n->le.get() : n->gt.get();
    return *n->label;
}

std::size_t EventClassifier::depth() const { return node_depth(root.get()); }
std::size_t EventClassifier::leaves() const { return node_leaves(root.get()); }

EventClassifier train_classifier(std::span<const LabeledSegment> data, std::uint64_t seed)
{
    EventClassifier model;
    model.seed = seed;
    for (auto k : kAllEventKinds)
        model.class_counts[k] = 0;
    std::vector<Sample> samples;
    samples.reserve(data.size());
    for (const auto& d : data) {
        samples.push_back({extract_features(d.segment), d.label});
        ++model.class_counts[d.label];
    }
    for (const auto& [k, n] : model.class_counts)
        if (n < 2)
            throw std::invalid_argument("training set needs at least two examples of " + to_string(k));

    std::vector<const Sample*> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples)
        rows.push_back(&s);
    model.root = grow(rows);
    return model;
}

EventKind classify_event(const EventClassifier& classifier, std::span<const PacketRecord> segment)
{
    return classifier.predict(extract_features(segment));
}

namespace {

ordered_json node_to_json(const TreeNode& n)
{
    ordered_json j;
    if (n.label) {
        j["label"] = to_string(*n.label);
        return j;
    }
    j["feature"] = n.feature;
    j["feature_name"] = feature_names()[n.feature];
    j["threshold"] = n.threshold;
    j["children"] = ordered_json::array({node_to_json(*n.le), node_to_json(*n.gt)});
    return j;
}

std::unique_ptr<TreeNode> node_from_json(const json& j)
{
    auto n = std::make_unique<TreeNode>();
    if (j.contains("label")) {
        n->label = event_from_string(j["label"].get<std::string>());
        return n;
    }
    n->feature = j.at("feature").get<std::size_t>();
    if (n->feature >= F_COUNT)
        throw std::invalid_argument("model references unknown feature index");
    n->threshold = j.at("threshold").get<double>();
    const auto& ch = j.at("children");
    if (!ch.is_array() || ch.size() != 2)
        throw std::invalid_argument("tree node needs exactly two children");
    n->le = node_from_json(ch[0]);
    n->gt = node_from_json(ch[1]);
    return n;
}

}  // namespace

std::string model_to_json(const EventClassifier& c)
{
    if (!c.root)
        throw std::logic_error("classifier is not trained");
    ordered_json j;
    j["features"] = feature_names();
    ordered_json counts;
    for (const auto& [k, n] : c.class_counts)
        counts[to_string(k)] = n;
    j["class_counts"] = counts;
    j["seed"] = c.seed;
    j["tree"] = node_to_json(*c.root);
    return j.dump(2);
}

EventClassifier model_from_json(const std::string& text)
{
    const auto j = json::parse(text);
    EventClassifier c;
    const auto& names = j.at("features");
    if (names.size() != F_COUNT)
        throw std::invalid_argument("model feature list does not match this build");
    for (std::size_t i = 0; i < F_COUNT; ++i)
        if (names[i].get<std::string>() != feature_names()[i])
            throw std::invalid_argument("model feature list does not match this build");
    if (j.contains("class_counts"))
        for (const auto& [k, v] : j["class_counts"].items())
            c.class_counts[event_from_string(k)] = v.get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.root = node_from_json(j.at("tree"));
    return c;
}

void write_model(const EventClassifier& classifier, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << model_to_json(classifier) << '\n';
}

EventClassifier read_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

std::vector<Trace> segment_trace(std::span<const PacketRecord> trace)
{
    std::vector<Trace> out;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (i == 0 || trace[i].ts - trace[i - 1].ts >= kSegmentGapMs)
            out.emplace_back();
        out.back().push_back(trace[i]);
    }
    return out;
}

std::optional<ScenarioKind> classify_scenario(const AnalysisWindow& w, const CarrierProfile& profile)
{
    const auto ul = w.num_ul_c_small, dl = w.num_dl_c_small;
    if (ul == 0 && dl == 0)
        return ScenarioKind::NOT_IN_TALKING;
    if (ul == 0 && dl > 10)
        return profile.early_media_while_ringing ? std::optional(ScenarioKind::RINGING) : std::nullopt;
    if (ul > 10 && dl > 10)
        return ScenarioKind::TALKING;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Call-statistics state machine

namespace {

constexpr Millis kBurstGapMs = 1000;
constexpr int kMinCallLargePackets = 3;

bool is_large(const PacketRecord& p) { return size_band(p.size) == SizeBand::C_LARGE; }
bool is_small(const PacketRecord& p) { return size_band(p.size) == SizeBand::C_SMALL; }

class CallAnalyzer {
public:
    CallAnalyzer(std::span<const PacketRecord> trace, const CarrierProfile& profile)
        : trace_(trace), profile_(profile)
    {
        for (const auto& p : trace) {
            device_ = p.dir == Direction::UL ? p.src : p.dst;
            break;
        }
    }

    std::vector<CallStatistics> run()
    {
        auto windows = window_partition(trace_);
        // The capture is taken to stay silent for one window past its last packet.
        if (!windows.empty())
            windows.push_back(AnalysisWindow{windows.back().index + 1, {}, 0, 0});
        std::size_t next = 0;
        for (const auto& w : windows) {
            const Millis window_end = (w.index + 1) * kWindowMs;
            for (; next < trace_.size() && trace_[next].ts < window_end; ++next)
                on_packet(next);
            if (next == 0)
                continue;
            if (const auto s = classify_scenario(w, profile_))
                on_scenario(*s, w.index);
        }
        if (active_ && (ringing_ || talking_))
            emit(std::nullopt, true);
        return std::move(out_);
    }

private:
    void start(std::size_t i)
    {
        active_ = true;
        first_ = i;
        large_ = 0;
        initiator_.reset();
        gap_resume_.reset();
        ringing_ = talking_ = false;
        ring_idx_.reset();
        talk_chain_end_.reset();
        ring_ts_.reset();
        talk_ts_.reset();
        last_talking_window_ = 0;
    }

    void on_packet(std::size_t i)
    {
        const auto& p = trace_[i];
        if (!active_) {
            start(i);
        } else if (!ringing_ && !talking_) {
            const Millis gap = p.ts - trace_[i - 1].ts;
            if (gap >= kAnalyzerIdleMs || (gap >= kSegmentGapMs && large_ < kMinCallLargePackets))
                start(i);
            else if (gap >= kSegmentGapMs && !gap_resume_)
                gap_resume_ = i;
        }
        if (is_large(p)) {
            ++large_;
            if (!initiator_)
                initiator_ = p.dir == Direction::UL ? Side::LOCAL : Side::REMOTE;
        }
        last_ = i;
    }

    void on_scenario(ScenarioKind s, std::int64_t x)
    {
        if (!active_)
            return;
        switch (s) {
        case ScenarioKind::RINGING:
            if (!ringing_ && !talking_)
                on_ringing();
            break;
        case ScenarioKind::TALKING:
            last_talking_window_ = x;
            if (!talking_)
                on_talking();
            break;
        case ScenarioKind::NOT_IN_TALKING:
            on_silence(x);
            break;
        }
    }

    void on_ringing()
    {
        std::optional<std::size_t> first_dl_small;
        for (std::size_t i = first_; i <= last_; ++i)
            if (trace_[i].dir == Direction::DL && is_small(trace_[i])) {
                first_dl_small = i;
                break;
            }
        if (!first_dl_small)
            return;
        for (std::size_t i = *first_dl_small; i-- > first_;)
            if (is_large(trace_[i])) {
                ring_idx_ = i;
                ring_ts_ = trace_[i].ts;
                break;
            }
        ringing_ = ring_ts_.has_value();
    }

    void on_talking()
    {
        const std::size_t from = ring_idx_ ? *ring_idx_ + 1 : first_;
        std::optional<std::size_t> first_ul_small;
        for (std::size_t i = from; i <= last_; ++i)
            if (trace_[i].dir == Direction::UL && is_small(trace_[i])) {
                first_ul_small = i;
                break;
            }
        if (!first_ul_small)
            return;
        std::optional<std::size_t> chain_end, chain_start;
        for (std::size_t i = *first_ul_small; i-- > from;) {
            if (!is_large(trace_[i]))
                continue;
            if (!chain_end) {
                chain_end = chain_start = i;
            } else if (trace_[*chain_start].ts - trace_[i].ts < kBurstGapMs) {
                chain_start = i;
            } else {
                break;
            }
        }
        talking_ = true;
        if (chain_start) {
            talk_ts_ = trace_[*chain_start].ts;
            talk_chain_end_ = chain_end;
        } else {
            talk_ts_ = trace_[*first_ul_small].ts;
            talk_chain_end_ = *first_ul_small;
        }
    }

    void on_silence(std::int64_t x)
    {
        if (ringing_ || talking_) {
            const std::size_t after = talking_ ? *talk_chain_end_ : *ring_idx_;
            const Millis not_before = talking_ ? last_talking_window_ * kWindowMs : 0;
            std::optional<std::size_t> end;
            for (std::size_t i = after + 1; i <= last_; ++i)
                if (is_large(trace_[i]) && trace_[i].ts >= not_before) {
                    end = i;
                    break;
                }
            emit(end, !end.has_value());
            return;
        }
        // Without early media the ringing phase is silent; an unanswered call
        // shows up as setup, a pause, then a teardown burst followed by silence.
        if (!gap_resume_ || large_ < kMinCallLargePackets)
            return;
        for (std::size_t i = *gap_resume_; i <= last_; ++i) {
            if (!is_large(trace_[i]))
                continue;
            if (trace_[i].ts / kWindowMs < x)
                emit(i, false);
            return;
        }
    }

    void emit(std::optional<std::size_t> end_idx, bool incomplete)
    {
        CallStatistics s;
        s.device_addr = device_;
        s.initiator = initiator_.value_or(Side::LOCAL);
        s.t_ringing_start = ring_ts_;
        s.t_talking_start = talk_ts_;
        if (end_idx) {
            s.t_call_end = trace_[*end_idx].ts;
            s.hangup_first = trace_[*end_idx].dir == Direction::UL ? Side::LOCAL : Side::REMOTE;
        }
        if (s.t_ringing_start && s.t_talking_start)
            s.ringing_duration = *s.t_talking_start - *s.t_ringing_start;
        else if (s.t_ringing_start && s.t_call_end)
            s.ringing_duration = *s.t_call_end - *s.t_ringing_start;
        if (s.t_talking_start && s.t_call_end)
            s.conversation_duration = *s.t_call_end - *s.t_talking_start;
        s.incomplete = incomplete;
        out_.push_back(std::move(s));
        active_ = false;
    }

    std::span<const PacketRecord> trace_;
    const CarrierProfile& profile_;
    std::string device_;
    std::vector<CallStatistics> out_;

    bool active_ = false;
    std::size_t first_ = 0;
    std::size_t last_ = 0;
    int large_ = 0;
    std::optional<Side> initiator_;
    std::optional<std::size_t> gap_resume_;
    bool ringing_ = false;
    bool talking_ = false;
    std::optional<std::size_t> ring_idx_;
    std::optional<std::size_t> talk_chain_end_;
    std::optional<Millis> ring_ts_;
    std::optional<Millis> talk_ts_;
    std::int64_t last_talking_window_ = 0;
};

template <typename T>
ordered_json opt(const std::optional<T>& v)
{
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::vector<CallStatistics> extract_call_statistics(std::span<const PacketRecord> trace,
                                                    const CarrierProfile& profile)
{
    return CallAnalyzer(trace, profile).run();
}

std::string statistics_to_json(const std::vector<CallStatistics>& stats)
{
    ordered_json arr = ordered_json::array();
    for (const auto& s : stats) {
        ordered_json j;
        j["device_addr"] = s.device_addr;
        j["initiator"] = to_string(s.initiator);
        j["hangup_first"] = s.hangup_first ? ordered_json(to_string(*s.hangup_first)) : ordered_json(nullptr);
        j["t_ringing_start"] = opt(s.t_ringing_start);
        j["t_talking_start"] = opt(s.t_talking_start);
        j["t_call_end"] = opt(s.t_call_end);
        j["ringing_duration"] = opt(s.ringing_duration);
        j["conversation_duration"] = opt(s.conversation_duration);
        j["incomplete"] = s.incomplete;
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::vector<CallStatistics> statistics_from_json(const std::string& text)
{
    const auto arr = json::parse(text);
    std::vector<CallStatistics> out;
    auto get = [](const json& j, const char* key) -> std::optional<Millis> {
        if (!j.contains(key) || j[key].is_null())
            return std::nullopt;
        return j[key].get<Millis>();
    };
    for (const auto& j : arr) {
        CallStatistics s;
        s.device_addr = j.at("device_addr").get<std::string>();
        s.initiator = side_from_string(j.at("initiator").get<std::string>());
        if (j.contains("hangup_first") && !j["hangup_first"].is_null())
            s.hangup_first = side_from_string(j["hangup_first"].get<std::string>());
        s.t_ringing_start = get(j, "t_ringing_start");
        s.t_talking_start = get(j, "t_talking_start");
        s.t_call_end = get(j, "t_call_end");
        s.ringing_duration = get(j, "ringing_duration");
        s.conversation_duration = get(j, "conversation_duration");
        s.incomplete = j.value("incomplete", false);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

const std::pair<EventKind, const char*> kEventNames[] = {
    {EventKind::DIAL_CALL, "DIAL_CALL"},       {EventKind::RECEIVE_CALL, "RECEIVE_CALL"},
    {EventKind::SEND_TEXT, "SEND_TEXT"},       {EventKind::RECEIVE_TEXT, "RECEIVE_TEXT"},
    {EventKind::ACTIVATE, "ACTIVATE"},         {EventKind::DEACTIVATE, "DEACTIVATE"},
};

}  // namespace

std::string to_string(EventKind k)
{
    for (const auto& [v, n] : kEventNames)
        if (v == k)
            return n;
    return "?";
}

std::string to_string(ScenarioKind k)
{
    switch (k) {
    case ScenarioKind::RINGING: return "RINGING";
    case ScenarioKind::TALKING: return "TALKING";
    case ScenarioKind::NOT_IN_TALKING: return "NOT_IN_TALKING";
    }
    return "?";
}

EventKind event_from_string(const std::string& s)
{
    for (const auto& [v, n] : kEventNames)
        if (s == n)
            return v;
    throw std::invalid_argument("unknown event kind '" + s + "'");
}

}  // namespace vowifi
