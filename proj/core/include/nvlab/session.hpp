#pragma once

// Live sessions with human seats. The round structure and random-number
// consumption follow run_session exactly, so a live session replays
// bit-for-bit as a batch run fed with the same human inputs.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvlab/market.hpp"
#include "nvlab/simulation.hpp"

namespace nvlab::live {

using Clock = std::function<std::chrono::steady_clock::time_point()>;

enum class Stage { Lobby, PriceStage, SegmentReveal, QuantityStage, Feedback, Finished };
std::string_view to_string(Stage s);

/// Machine-readable failure. `code` is stable, `status` is the HTTP mapping.
class ApiError : public std::runtime_error {
 public:
  ApiError(std::string code, int status, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)), status_(status) {}
  const std::string& code() const { return code_; }
  int status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

struct SessionConfig {
  Treatment treatment{TreatmentLabel::HM_LU, GameParams{}};
  int humans = 1;
  std::vector<sim::AgentPolicy> bots;  ///< one policy per bot seat
  int n_rounds = 50;
  std::uint64_t seed = 0;
  std::chrono::milliseconds stage_timeout{20000};
  std::chrono::milliseconds reveal_duration{3000};
  std::chrono::milliseconds feedback_duration{5000};
  std::string persist_dir;  ///< completed logs go here when non-empty

  int seats() const { return humans + static_cast<int>(bots.size()); }
  /// Throws ApiError("invalid_config").
  void validate() const;
};

struct JoinResult {
  std::string token;
  int subject = 0;
};

/// What one seat may see of the round in progress.
struct RoundView {
  int round = 0;
  std::optional<double> price;
  std::optional<double> opp_price;       ///< from SegmentReveal on
  std::optional<PriceOutcome> outcome;   ///< from SegmentReveal on
  std::optional<long> demand_lo;
  std::optional<long> demand_hi;
  std::optional<long> quantity;
  std::optional<long> demand;            ///< Feedback only
  std::optional<double> profit;
  std::optional<double> cumulative;
  std::optional<long> opp_quantity;      ///< Feedback only
  std::optional<double> opp_profit;      ///< Feedback only
  unsigned substituted = sim::kNoSubstitution;
};

struct StageView {
  std::string session;
  Treatment treatment{TreatmentLabel::HM_LU, GameParams{}};
  Stage stage = Stage::Lobby;
  int round = 0;
  int n_rounds = 0;
  int subject = 0;
  int group = 0;  ///< 0 until the session starts
  int joined = 0;
  int humans = 0;
  std::optional<std::int64_t> deadline_ms;  ///< time left in a timed stage
  bool awaiting_price = false;              ///< this seat still owes a price
  bool awaiting_quantity = false;
  std::optional<RoundView> current;
  std::vector<sim::RoundRecord> history;    ///< own completed rounds
  double cumulative = 0.0;
};

class LiveSession {
 public:
  LiveSession(std::string id, SessionConfig config, Clock clock);

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }

  /// Claims a human seat (1-based), or the first free one. The session
  /// starts once every human seat is taken.
  JoinResult join(std::optional<int> seat = std::nullopt);
  void submit_price(const std::string& token, double price);
  void submit_quantity(const std::string& token, long quantity);
  StageView view(const std::string& token);
  /// Applies timeouts and timed transitions due by now.
  void tick();

  Stage stage();
  int round();
  bool owns_token(const std::string& token);
  /// Completed log. Throws ApiError("not_finished") before the end.
  sim::SessionLog log();

 private:
  using Lock = std::unique_lock<std::mutex>;
  using TimePoint = std::chrono::steady_clock::time_point;

  int subject_of(const std::string& token) const;
  bool is_human(int subject) const { return subject <= config_.humans; }
  const sim::AgentPolicy& bot_policy(int subject) const;

  void advance(TimePoint now);
  void start(TimePoint now);
  void begin_price_stage(TimePoint now);
  void close_price_stage(TimePoint now);
  void begin_quantity_stage(TimePoint now);
  void close_quantity_stage(TimePoint now);
  void finish();

  std::string id_;
  SessionConfig config_;
  Clock clock_;
  std::mutex mu_;

  std::map<std::string, int> tokens_;
  std::vector<bool> seat_taken_;

  sim::Rng rng_;
  sim::SessionLog log_;
  std::vector<int> group_of_;
  std::vector<std::vector<sim::RoundRecord>> histories_;
  std::vector<sim::Earnings> earnings_;

  Stage stage_ = Stage::Lobby;
  int round_ = 0;
  TimePoint deadline_{};
  std::vector<std::array<int, 2>> pairs_;
  std::vector<sim::RoundRecord> pending_;  ///< index by subject
  std::vector<bool> has_price_;
  std::vector<bool> has_quantity_;
};

/// Owns every live session; thread-safe.
class SessionManager {
 public:
  explicit SessionManager(Clock clock = [] { return std::chrono::steady_clock::now(); });

  std::string create(SessionConfig config);
  std::shared_ptr<LiveSession> get(const std::string& id);
  void tick_all();
  std::size_t size();

 private:
  Clock clock_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace nvlab::live
