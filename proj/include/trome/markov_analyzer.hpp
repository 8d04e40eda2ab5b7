#pragma once

// Expected delivery time and energy on a line of m nodes, from absorbing
// meta-chains solved as dense linear systems.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trome/airtime_energy.hpp"

namespace trome::markov {

enum class Protocol { TRome, Naive, CtpWur };

const char* to_string(Protocol p);
Protocol protocol_from_string(std::string_view name);  // throws std::invalid_argument

enum class MarkovErrc { InvalidArgument, DegenerateProbability, SingularSystem };

class MarkovError : public std::runtime_error {
public:
    MarkovError(MarkovErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    MarkovErrc code() const noexcept { return code_; }

private:
    MarkovErrc code_;
};

// W(i, j): the message sits at node i while node j wakes node j+1.
// T(i, j): data moves from node i to node j.
struct MetaState {
    enum class Kind { Wake, Transfer, Delivered };
    Kind kind = Kind::Delivered;
    int i = 0;
    int j = 0;

    static MetaState wake(int i, int j) { return {Kind::Wake, i, j}; }
    static MetaState transfer(int i, int j) { return {Kind::Transfer, i, j}; }
    static MetaState delivered() { return {}; }

    std::string label() const;
    friend bool operator==(const MetaState&, const MetaState&) = default;
};

// Success / wake-fail / data-fail costs for wake-up steps (w*) and transfers
// (tx*). Units are whatever the caller chooses: us for time, mJ for energy.
struct CostConstants {
    double w1 = 0, w2 = 0, w3 = 0;
    double tx1 = 0, tx2 = 0, tx3 = 0;

    void validate() const;
};

struct CostModel {
    CostConstants time_us;
    CostConstants energy_mJ;
};

struct ModelParams {
    int m = 4;
    double p = 1.0;
    double q = 1.0;
    int ttl = 3;
    int trome_wake_exponent = 5;
    int ctp_relay_exponent = 2;

    void validate() const;
};

// One branch out of a meta-state.
struct Outcome {
    enum class Cost { W1, W2, W3, Tx1, Tx2, Tx3 };
    double probability = 0;
    Cost cost = Cost::W1;
    MetaState next;
};

double cost_of(Outcome::Cost c, const CostConstants& k);

// Branches leaving a transient state; probabilities sum to 1 (zero-probability
// branches are omitted).
std::vector<Outcome> outcomes(Protocol protocol, const ModelParams& params, const MetaState& s);

struct ExpectationSystem {
    Protocol protocol = Protocol::TRome;
    std::vector<MetaState> variables;
    std::vector<std::vector<double>> A;
    std::vector<double> b;

    std::size_t index_of(const MetaState& s) const;  // throws MarkovError
};

ExpectationSystem build(Protocol protocol, const ModelParams& params, const CostConstants& costs);
ExpectationSystem build_trome(const ModelParams& params, const CostConstants& costs);
ExpectationSystem build_naive(const ModelParams& params, const CostConstants& costs);
ExpectationSystem build_ctpwur(const ModelParams& params, const CostConstants& costs);

MetaState start_state();

// Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> A, std::vector<double> b);
double solve(const ExpectationSystem& system, const MetaState& start = start_state());

// Per-packet costs for a given payload. For T-ROME, tx* covers one slot over an
// established link; for the other two, one full hop transfer.
CostModel default_costs(Protocol protocol, std::size_t payload_bytes,
                        const energy::ProtocolTiming& timing = {},
                        const energy::RadioTimingModel& radio = {},
                        const energy::EnergyModel& em = {});

// Transfer costs for a batch of n slots sent back-to-back in one session.
CostConstants batch_costs(const CostConstants& per_packet, std::size_t n);

struct Expectation {
    double time_us = 0;
    double energy_mJ = 0;
};

// T-ROME sets the link up once per session (at most 63 slots) and sends the
// batch; naive and CTP-WUR repeat the full sequence for every packet.
Expectation multi_packet_cost(Protocol protocol, const ModelParams& params, const CostModel& costs,
                              std::size_t n_packets);

}  // namespace trome::markov
