#include <doctest.h>

#include <cmath>
#include <sstream>

#include "trome/experiments.hpp"
#include "trome/scenario.hpp"

using namespace trome;
using namespace trome::scenario;

namespace {

Scenario from(const std::string& text) {
    std::istringstream in(text);
    return parse(in, "test.cfg");
}

std::string error_of(const std::string& text) {
    try {
        from(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("scenario files parse lists, ranges and comments") {
    const auto s = from(R"(# sweep
name = curves
protocol = trome, naive,ctpwur
nodes = 2..6
p = 1, 0.75   # trailing comment
packets = 1,5
payload = 100
seed = 42
seeds = 10
loss_mode = per_packet
ttl = 3
)");
    CHECK(s.name == "curves");
    CHECK(s.protocols.size() == 3);
    CHECK(s.nodes == std::vector<int>{2, 3, 4, 5, 6});
    CHECK(s.p == std::vector<double>{1.0, 0.75});
    CHECK(s.packets == std::vector<std::size_t>{1, 5});
    CHECK(s.seed == 42);
    CHECK(s.seeds == 10);
    CHECK(s.loss_mode == sim::LossMode::PerPacket);
}

TEST_CASE("scenario errors name the line") {
    CHECK(error_of("nodes = 4\nbogus = 1\n").find("test.cfg:2") != std::string::npos);
    CHECK(error_of("nodes = 4\nbogus = 1\n").find("unknown key") != std::string::npos);
    CHECK(error_of("p = x\n").find("test.cfg:1") != std::string::npos);
    CHECK(error_of("just words\n").find("expected key = value") != std::string::npos);
    CHECK_FALSE(error_of("nodes = 1\n").empty());
    CHECK_FALSE(error_of("p = 0\n").empty());
    CHECK_FALSE(error_of("payload = 2\n").empty());
    CHECK_FALSE(error_of("protocol = zigbee\n").empty());
    CHECK_FALSE(error_of("nodes = 6..2\n").empty());
    CHECK_FALSE(error_of("loss_mode = sometimes\n").empty());
}

TEST_CASE("later settings override earlier ones") {
    Scenario s;
    set(s, "nodes", "5");
    std::istringstream in("nodes = 3\n");
    scenario::apply(s, in);
    CHECK(s.nodes == std::vector<int>{3});
}

TEST_CASE("cost overrides replace the derived constants") {
    const auto s = from("cost.w1 = 10\ncost.tx1 = 1\ncost.w2 = 10\ncost.w3 = 10\ncost.tx2 = 1\ncost.tx3 = 1\n");
    const auto k = s.cost_model(Protocol::Naive, 100).time_us;
    CHECK(k.w1 == 10);
    CHECK(k.tx1 == 1);
    auto rows = experiments::analyze(s);
    REQUIRE(rows.size() == 1);
    // trome m=4: three wake steps and one transfer of five packets
    CHECK(rows[0].expected_time_us == doctest::Approx(3 * 10 + 5 * 1));
}

TEST_CASE("output directory falls back to the environment") {
    Scenario s;
    s.output_dir = "explicit";
    CHECK(output_dir(s) == "explicit");
}

TEST_CASE("analyze rows compare against naive at the same point") {
    Scenario s;
    s.protocols = {Protocol::TRome, Protocol::Naive, Protocol::CtpWur};
    s.nodes = {2, 4};
    s.packets = {1};
    const auto rows = experiments::analyze(s);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        if (r.protocol == Protocol::Naive) CHECK(r.ratio_vs_naive == 1.0);
        if (r.protocol == Protocol::TRome && r.m == 2) CHECK(r.ratio_vs_naive == doctest::Approx(1.4).epsilon(0.11));
        if (r.protocol == Protocol::CtpWur && r.m == 2) CHECK(r.ratio_vs_naive == doctest::Approx(1.0));
    }
    std::ostringstream csv;
    experiments::write_analyze_csv(csv, rows);
    CHECK(csv.str().rfind(
              "protocol,m,p,q,n_packets,payload_bytes,expected_time_us,expected_energy_mJ,ratio_vs_naive\n", 0) == 0);
    // trome sorts first, then naive, then ctpwur; m ascending inside
    CHECK(csv.str().find("\ntrome,2,") < csv.str().find("\ntrome,4,"));
    CHECK(csv.str().find("\ntrome,4,") < csv.str().find("\nnaive,2,"));
}

TEST_CASE("budget rows cover every node, source first") {
    Scenario s;
    s.packets = {5};
    const auto rows = experiments::budget(s);
    REQUIRE(rows.size() == 4);
    std::ostringstream csv;
    experiments::write_budget_csv(csv, rows);
    const auto text = csv.str();
    CHECK(text.rfind("protocol,m,n_packets,payload_bytes,node_id,role,WUC_mJ,Delay_mJ,Receive_mJ,Send_mJ,"
                     "Processing_mJ,Sleep_mJ,total_mJ,total_time_us\n",
                     0) == 0);
    CHECK(text.find(",13,source,") < text.find(",10,sink,"));
}

TEST_CASE("overhead: naive flat in packet count, t-rome falling") {
    Scenario s;
    double naive_prev = -1, trome_prev = 1e9;
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto naive = experiments::overhead_point(s, Protocol::Naive, 2, n, 100);
        const auto trome = experiments::overhead_point(s, Protocol::TRome, 2, n, 100);
        if (naive_prev >= 0) CHECK(naive.o_cd == doctest::Approx(naive_prev));
        CHECK(trome.o_cd < trome_prev);
        if (n >= 2) CHECK(trome.o_cd < naive.o_cd);
        naive_prev = naive.o_cd;
        trome_prev = trome.o_cd;
    }
    CHECK(experiments::overhead_point(s, Protocol::Naive, 2, 1, 4).o_cd > 10);
}

TEST_CASE("simulate summarises seeds and writes nothing without a trace dir") {
    Scenario s;
    s.p = {0.9};
    s.q = {0.95};
    s.packets = {2};
    s.seeds = 50;
    const auto rows = experiments::simulate(s);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].seeds == 50);
    CHECK(rows[0].complete_runs == 50);
    CHECK(rows[0].stderr_us > 0);
    CHECK(rows[0].analytic_us > 0);
    CHECK_FALSE(rows[0].mean_energy_mJ);
}

TEST_CASE("safety checker flags duplicates and collisions") {
    sim::SimConfig c;
    c.params.packet_count = 2;
    sim::SimTrace t;
    t.delivered_ids = {sim::payload_key(0, 0), sim::payload_key(0, 0)};
    t.stats.collisions = 1;
    const auto r = experiments::check_safety(c, t);
    CHECK_FALSE(r.exactly_once);
    CHECK_FALSE(r.no_collision);
    CHECK_FALSE(r.ok());
    const auto clean = sim::run([] {
        sim::SimConfig x;
        x.loss.mode = sim::LossMode::PerPacket;
        return x;
    }());
    sim::SimConfig x;
    x.loss.mode = sim::LossMode::PerPacket;
    CHECK(experiments::check_safety(x, clean).ok());
}

TEST_CASE("lossy links pull the ratios towards naive") {
    Scenario clean;
    clean.protocols = {Protocol::TRome, Protocol::CtpWur};
    clean.nodes = {3, 4, 5, 6};
    clean.packets = {1, 2, 5};
    Scenario lossy = clean;
    lossy.p = {0.75};
    lossy.q = {0.97};
    const auto a = experiments::analyze(clean);
    const auto b = experiments::analyze(lossy);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CAPTURE(markov::to_string(a[i].protocol));
        CAPTURE(a[i].m);
        CAPTURE(a[i].n_packets);
        if (a[i].protocol == Protocol::CtpWur || a[i].n_packets > 1)
            CHECK(std::abs(b[i].ratio_vs_naive - 1) < std::abs(a[i].ratio_vs_naive - 1));
        if (a[i].protocol == Protocol::TRome) CHECK((b[i].ratio_vs_naive < 1) == (b[i].n_packets > 1));
    }
}
