#include <doctest.h>

#include <cmath>
#include <sstream>

#include "trome/channel_sim.hpp"

using namespace trome;
using namespace trome::sim;

namespace {

SimConfig lossless(Protocol proto, int m, std::size_t n, std::size_t payload = 100) {
    SimConfig c;
    c.topology = Topology::line(m);
    c.protocol = proto;
    c.params.packet_count = n;
    c.params.payload_bytes = payload;
    c.loss.mode = LossMode::PerPacket;
    return c;
}

std::vector<std::tuple<engine::FrameKind, int, int>> air(const SimTrace& t) {
    std::vector<std::tuple<engine::FrameKind, int, int>> out;
    for (const auto& f : t.frames) out.emplace_back(f.kind, f.sender, f.dest);
    return out;
}

double rate(LossModel loss, StepKind kind, int n = 1'000'000) {
    std::mt19937_64 rng(123);
    int ok = 0;
    for (int i = 0; i < n; ++i) ok += draw_success(loss, kind, rng) == Draw::Full;
    return static_cast<double>(ok) / n;
}

}  // namespace

TEST_CASE("draw_success matches the composite probabilities") {
    CHECK(rate({1, 1, LossMode::PerMetastep}, StepKind::WakeupMeta, 10000) == 1.0);
    CHECK(rate({1, 1, LossMode::PerMetastep}, StepKind::DataMeta, 10000) == 1.0);
    CHECK(std::abs(rate({1, 0.97, LossMode::PerMetastep}, StepKind::DataMeta) - 0.9409) < 0.001);
    CHECK(std::abs(rate({0.75, 0.97, LossMode::PerMetastep}, StepKind::WakeupMeta) - 0.75 * std::pow(0.97, 5)) <
          0.0015);
}

TEST_CASE("data meta-step failures split into q(1-q) partial and 1-q full fail") {
    std::mt19937_64 rng(5);
    const LossModel loss{1, 0.8, LossMode::PerMetastep};
    int partial = 0, fail = 0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const auto d = draw_success(loss, StepKind::DataMeta, rng);
        partial += d == Draw::Partial;
        fail += d == Draw::Fail;
    }
    CHECK(std::abs(static_cast<double>(partial) / n - 0.16) < 0.003);
    CHECK(std::abs(static_cast<double>(fail) / n - 0.2) < 0.003);
}

TEST_CASE("line topology ids and reach") {
    const auto t = Topology::line(4);
    CHECK(t.node_ids == std::vector<int>{13, 12, 11, 10});
    CHECK(t.wakeup_reach(0, 1));
    CHECK_FALSE(t.wakeup_reach(0, 2));
    CHECK(t.data_reach(0, 3));
    CHECK(t.config_for(0).hops_to_sink == 3);
    CHECK(t.config_for(3).is_sink());
    CHECK_THROWS_AS(t.index_of(99), ConfigError);
    CHECK_THROWS_AS(Topology::line(1).validate(), ConfigError);
}

TEST_CASE("naive single hop is exactly wake-up plus transfer") {
    const auto t = run(lossless(Protocol::Naive, 2, 1));
    const auto k = markov::default_costs(Protocol::Naive, 100).time_us;
    REQUIRE(t.stats.delivery_time_us);
    CHECK(*t.stats.delivery_time_us == static_cast<Micros>(k.w1 + k.tx1));
    using engine::FrameKind;
    CHECK(air(t) == std::vector<std::tuple<FrameKind, int, int>>{
                        {FrameKind::Wuc, 11, 10}, {FrameKind::MacData, 11, 10}, {FrameKind::MacAck, 10, 11}});
}

TEST_CASE("ctp-wur relays the wake-up call once and sends data two hops") {
    const auto t = run(lossless(Protocol::CtpWur, 3, 1));
    using engine::FrameKind;
    CHECK(air(t) == std::vector<std::tuple<FrameKind, int, int>>{{FrameKind::Wuc, 12, 11},
                                                                 {FrameKind::Wuc, 11, 10},
                                                                 {FrameKind::MacData, 12, 10},
                                                                 {FrameKind::MacAck, 10, 12}});
}

TEST_CASE("t-rome sends data straight to the three-hop neighbour") {
    const auto t = run(lossless(Protocol::TRome, 4, 1));
    int data = 0;
    for (const auto& f : t.frames)
        if (f.kind == engine::FrameKind::RData) {
            ++data;
            CHECK(f.sender == 13);
            CHECK(f.dest == 10);
        }
    CHECK(data == 1);
    CHECK(t.stats.delivered == 1);
    CHECK(t.stats.all_asleep_at_end);
}

TEST_CASE("five packets over four nodes arrive in about 90 ms") {
    auto c = lossless(Protocol::TRome, 4, 5);
    const auto t = run(c);
    REQUIRE(t.stats.delivery_time_us);
    CHECK(*t.stats.delivery_time_us >= 81000);
    CHECK(*t.stats.delivery_time_us <= 99000);
    c.loss.mode = LossMode::PerMetastep;
    CHECK(run(c).stats.delivery_time_us == t.stats.delivery_time_us);
}

TEST_CASE("lossless runs deliver every payload once, in order") {
    for (auto proto : {Protocol::TRome, Protocol::Naive, Protocol::CtpWur})
        for (int m = 2; m <= 6; ++m) {
            const auto t = run(lossless(proto, m, 7));
            CAPTURE(markov::to_string(proto));
            CAPTURE(m);
            REQUIRE(t.delivered_ids.size() == 7);
            for (std::size_t k = 0; k < 7; ++k) CHECK(t.delivered_ids[k] == payload_key(0, k));
            CHECK(t.stats.collisions == 0);
            CHECK(t.stats.all_asleep_at_end);
        }
}

TEST_CASE("same seed gives an identical trace") {
    auto c = lossless(Protocol::TRome, 5, 12);
    c.loss = {0.85, 0.9, LossMode::PerPacket};
    c.seed = 77;
    std::ostringstream a, b;
    run(c).write_jsonl(a);
    run(c).write_jsonl(b);
    CHECK(a.str() == b.str());
    CHECK_FALSE(a.str().empty());
    c.seed = 78;
    std::ostringstream other;
    run(c).write_jsonl(other);
    CHECK(other.str() != a.str());
}

TEST_CASE("two simultaneous sources share the channel without collisions") {
    for (auto proto : {Protocol::TRome, Protocol::Naive, Protocol::CtpWur}) {
        auto c = lossless(proto, 4, 1);
        c.flows = {{0, 3, 0}, {1, 3, 0}};
        const auto t = run(c);
        CAPTURE(markov::to_string(proto));
        CHECK(t.stats.collisions == 0);
        CHECK(t.stats.delivered == 6);
        CHECK(t.stats.duplicate_deliveries == 0);
        for (std::size_t i = 0; i < t.frames.size(); ++i)
            for (std::size_t j = i + 1; j < t.frames.size(); ++j)
                CHECK((t.frames[i].end_us <= t.frames[j].start_us || t.frames[j].end_us <= t.frames[i].start_us));
    }
}

TEST_CASE("carrier_sense sees frames on air only") {
    const auto t = run(lossless(Protocol::Naive, 2, 1));
    REQUIRE_FALSE(t.frames.empty());
    const auto& f = t.frames.front();
    CHECK(carrier_sense((f.start_us + f.end_us) / 2, 10, t));
    CHECK_FALSE(carrier_sense(f.start_us - 1, 10, t));
    CHECK_FALSE(carrier_sense(t.stats.end_us + 1000, 10, t));
}

TEST_CASE("per-metastep mean tracks the analytic expectation") {
    SimConfig c;
    c.topology = Topology::line(3);
    c.params.packet_count = 1;
    c.loss = {0.75, 0.97, LossMode::PerMetastep};
    const int n = 20000;
    double sum = 0, sq = 0;
    for (int s = 0; s < n; ++s) {
        c.seed = s + 1;
        const double t = static_cast<double>(*run(c).stats.delivery_time_us);
        sum += t;
        sq += t * t;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    const auto costs = markov::default_costs(Protocol::TRome, 100);
    const double expect =
        markov::multi_packet_cost(Protocol::TRome, {3, 0.75, 0.97}, costs, 1).time_us;
    CHECK(std::abs(mean - expect) <= 4 * se);
}

TEST_CASE("invalid configurations are rejected") {
    SimConfig c;
    c.loss.p = 1.5;
    CHECK_THROWS_AS(run(c), ConfigError);
    c = {};
    c.params.payload_bytes = 300;
    CHECK_THROWS_AS(run(c), ConfigError);
    c = {};
    c.flows = {{7, 1, 0}};
    CHECK_THROWS_AS(run(c), ConfigError);
    CHECK_THROWS_AS(loss_mode_from_string("bogus"), ConfigError);
}

TEST_CASE("energy breakdown totals add up per node") {
    const auto t = run(lossless(Protocol::TRome, 4, 5));
    const energy::EnergyModel em;
    double from_intervals = 0;
    for (const auto& iv : t.intervals) from_intervals += energy::interval_energy(iv, em);
    double from_breakdown = 0;
    for (const auto& [id, tot] : t.breakdown(em)) from_breakdown += tot.total_energy();
    CHECK(from_breakdown == doctest::Approx(from_intervals).epsilon(1e-12));
}

TEST_CASE("largest payload is delivered by every protocol") {
    for (auto proto : {Protocol::TRome, Protocol::Naive, Protocol::CtpWur})
        for (std::size_t payload : {4u, 242u, 243u, 246u}) {
            const auto t = run(lossless(proto, 3, 2, payload));
            CAPTURE(markov::to_string(proto));
            CAPTURE(payload);
            CHECK(t.stats.delivered == 2);
        }
}
