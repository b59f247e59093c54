#pragma once

// Agent policies and the batch match engine: fixed groups of four, random
// pairing inside each group every round, simultaneous prices, segment
// resolution (a fair coin on ties), simultaneous orders, integer demand draws.

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nvlab/market.hpp"

namespace nvlab::sim {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Policies.

/// Plays F*. With snap_to_grid = false prices are exact real draws, which
/// only makes sense for analysis of the theory; such logs are off-grid.
struct EquilibriumPolicy {
  bool snap_to_grid = true;
};

/// Posts r with probability phi, otherwise draws from F*.
struct FocalPolicy {
  double phi = 0.0;
  bool snap_to_grid = true;
};

/// Prices like EquilibriumPolicy; orders lambda * mean + (1 - lambda) * q*,
/// plus an optional uniform integer jitter in [-jitter, jitter].
struct PtcPolicy {
  double lambda = 0.5;
  int jitter = 0;
  bool snap_to_grid = true;
};

/// Raises the last price by delta_up after winning, lowers it by delta_down
/// after losing, repeats it after a tie. Starts from `initial`, or the NE
/// median snapped to the grid when unset.
struct DirectionalPolicy {
  double delta_up = 0.4;
  double delta_down = 0.5;
  std::optional<double> initial;
};

/// Decisions come from an input channel (a human seat).
struct ExternalPolicy {
  std::string channel_id;
};

using AgentPolicy =
    std::variant<EquilibriumPolicy, FocalPolicy, PtcPolicy, DirectionalPolicy, ExternalPolicy>;

/// Throws std::invalid_argument for out-of-range parameters.
void validate_policy(const AgentPolicy& policy);

/// "equilibrium", "equilibrium:nosnap", "focal:0.3", "ptc:0.5", "ptc:0.5:2",
/// "directional:0.4:0.5", "directional:0.4:0.5:10.0", "external:<id>".
AgentPolicy parse_policy(const std::string& spec);
std::string describe(const AgentPolicy& policy);

// ---------------------------------------------------------------------------
// Records.

enum SubstitutionFlags : unsigned { kNoSubstitution = 0, kPriceSubstituted = 1, kQuantitySubstituted = 2 };

struct RoundRecord {
  int round = 0;    ///< 1-based
  int subject = 0;  ///< 1-based
  int group = 0;    ///< 1-based
  int pair = 0;     ///< 1-based, unique within a round
  double price = 0.0;
  double opp_price = 0.0;
  PriceOutcome outcome = PriceOutcome::lower();
  long quantity = 0;
  long demand = 0;
  double profit = 0.0;
  double cumulative = 0.0;
  unsigned substituted = kNoSubstitution;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct SessionLog {
  Treatment treatment;
  std::uint64_t seed = 0;
  std::vector<std::array<int, 4>> groups;  ///< members ascending, groups numbered from 1
  std::vector<RoundRecord> records;        ///< ordered by (round, subject)

  int n_subjects() const { return static_cast<int>(groups.size()) * 4; }
  int n_rounds() const;
  /// Records of one subject in round order.
  std::vector<RoundRecord> history(int subject) const;
};

bool operator==(const SessionLog& a, const SessionLog& b);

struct LogViolation {
  std::size_t record_index;  ///< index into records, or SIZE_MAX for structural issues
  std::string message;
};

/// Every RoundRecord / SessionLog invariant: profit accounting, running
/// cumulative sums, outcome vs. price comparison, tie segments, perfect
/// matchings inside fixed groups, demand inside the segment support.
std::vector<LogViolation> check_log(const SessionLog& log);

/// Profit of one record. Exact in tenths when price and cost are on the 0.1 grid.
double record_profit(const GameParams& params, double price, long quantity, long demand);

/// Running earnings of one subject: exact in tenths while every profit is on
/// the 0.1 grid, plain double accumulation from the first off-grid profit on.
struct Earnings {
  bool exact = true;
  std::int64_t tenths = 0;
  double value = 0.0;

  double add(std::optional<std::int64_t> profit_tenths, double profit);
};

/// Fills profit and cumulative of `r` from its price, quantity and demand.
void settle_record(const GameParams& params, RoundRecord& r, Earnings& earnings);

// ---------------------------------------------------------------------------
// External input.

class ChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageRequest {
  int round = 0;
  int subject = 0;
  double own_price = 0.0;                 ///< quantity stage only
  std::optional<PriceOutcome> outcome;    ///< quantity stage only
};

class InputChannel {
 public:
  virtual ~InputChannel() = default;
  /// Block until a value arrives. Throw ChannelError on timeout or disconnect.
  virtual double next_price(const StageRequest& request) = 0;
  virtual long next_quantity(const StageRequest& request) = 0;
};

/// Thread-safe FIFO channel: producers push values, the engine pops them.
class QueueChannel : public InputChannel {
 public:
  explicit QueueChannel(std::chrono::milliseconds timeout = std::chrono::seconds(20))
      : timeout_(timeout) {}

  void push_price(double p);
  void push_quantity(long q);
  void close();

  double next_price(const StageRequest& request) override;
  long next_quantity(const StageRequest& request) override;

 private:
  template <class T>
  T pop(std::deque<T>& queue, const char* what);

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<double> prices_;
  std::deque<long> quantities_;
  bool closed_ = false;
  std::chrono::milliseconds timeout_;
};

using ChannelMap = std::map<std::string, InputChannel*>;

// ---------------------------------------------------------------------------
// Decisions.

struct DecisionContext {
  const GameParams& params;
  Rng& rng;
  const ChannelMap* channels = nullptr;
  int round = 0;
  int subject = 0;
};

/// Stage-1 price. Grid-valid unless the policy opts out of snapping.
double decide_price(const AgentPolicy& policy, const std::vector<RoundRecord>& history,
                    DecisionContext& ctx);

/// Stage-2 order, an integer in [0, q_cap].
long decide_quantity(const AgentPolicy& policy, double p, const PriceOutcome& outcome,
                     DecisionContext& ctx);

// ---------------------------------------------------------------------------
// Engine building blocks, shared with the live session service.

/// Shuffles subjects 1..n into groups of four.
std::vector<std::array<int, 4>> assign_groups(int n_subjects, Rng& rng);

/// Random perfect matching inside each group: two pairs per group.
std::vector<std::array<int, 2>> pair_round(const std::vector<std::array<int, 4>>& groups, Rng& rng);

/// Outcomes for a pair from their prices; a tie consumes one coin flip.
std::array<PriceOutcome, 2> resolve_pair(double price_a, double price_b, Rng& rng);

long draw_demand(const GameParams& params, Segment segment, Rng& rng);

class SessionError : public std::runtime_error {
 public:
  SessionError(int round, int subject, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ", subject " + std::to_string(subject) +
                           ": " + what),
        round_(round),
        subject_(subject) {}
  int round() const { return round_; }
  int subject() const { return subject_; }

 private:
  int round_;
  int subject_;
};

struct SessionOptions {
  const ChannelMap* channels = nullptr;
};

/// Runs the full protocol. `policies` holds one policy per subject, or a
/// single policy applied to everyone. Deterministic for a given seed.
SessionLog run_session(const Treatment& treatment, const std::vector<AgentPolicy>& policies,
                       int n_subjects, int n_rounds, std::uint64_t seed,
                       const SessionOptions& options = {});

// ---------------------------------------------------------------------------
// Serialization of SessionLog.

inline constexpr const char* kCsvHeader =
    "treatment,seed,group,pair,round,subject,price,opp_price,outcome,segment,quantity,demand,profit,"
    "cumulative";

/// Flat CSV. Throws std::invalid_argument if any price is off the 0.1 grid.
std::string export_csv(const SessionLog& log);
/// Structured record (JSON) including groups and substitution flags.
std::string export_record(const SessionLog& log);
SessionLog import_record(const std::string& json_text);

}  // namespace nvlab::sim
