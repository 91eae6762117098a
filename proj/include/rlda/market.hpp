#pragma once

// Discrete-event simulation of a two-seller computation marketplace:
// matching, zero-sum credit, lottery tickets, and the validate / select /
// verify evaluation of submitted models.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlda/random.hpp"
#include "rlda/sampler.hpp"

namespace rlda::market {

enum class Honesty { kHonest, kLazy, kCorrupt };

std::string_view honesty_name(Honesty h);

/// lazy: fraction of iterations skipped; corrupt: relative count noise.
struct HonestyProfile {
  Honesty kind = Honesty::kHonest;
  double level = 0.0;
};

struct SellerNode {
  std::uint32_t seller_id = 0;
  std::int64_t credit = 0;
  double speed = 1.0;  // token-iterations per time unit
  HonestyProfile honesty;
  double available_at = 0.0;
};

struct BuyerTask {
  std::uint64_t task_id = 0;
  std::uint64_t token_count = 0;
  std::uint32_t requested_iterations = 1;
  double arrival_time = 0.0;
  std::size_t corpus = 0;
  std::optional<std::uint32_t> buyer_seller;  // the buyer's own seller listing
};

struct SubmittedModel {
  std::uint32_t seller_id = 0;
  TopicModelState state;
  double reported_perplexity = 0.0;
  std::uint32_t iterations = 1;  // i*, as reported
};

/// 1 - (sigmoid(c1 + c2) + 2 min(p1,p2)/max(p1,p2)) / 3. Throws
/// ValidationError unless both perplexities are positive.
double verification_probability(double c1, double c2, double p1, double p2);

/// Verification happens with probability p_v: s < p_v for s ~ U[0,1).
inline bool verification_occurs(double p_v, double s) { return s < p_v; }

enum class ValidationFailure {
  kNone,
  kMalformed,
  kNegativeCount,
  kThetaNotNormalized,
  kPhiNotNormalized,
  kCountMismatch,
  kBadIterations,
};

std::string_view failure_name(ValidationFailure f);

struct ValidationOutcome {
  ValidationFailure reason = ValidationFailure::kNone;
  std::string detail;
  bool ok() const { return reason == ValidationFailure::kNone; }
};

/// Shape checks, non-negative counts, every theta_d and phi_t summing to 1
/// within 1e-6 from the stored counts, and counts agreeing with the
/// assignments.
ValidationOutcome validate_model(const SubmittedModel& submission, const Hyperparams& hyper);

struct Selection {
  std::size_t winner = 0;  // 0 or 1
  std::size_t loser = 1;
  double perplexity[2] = {0.0, 0.0};  // recomputed, not reported
};

/// Lower recomputed perplexity wins; exact ties go to the lower seller id.
Selection select_model(const SubmittedModel& first, const SubmittedModel& second, const Hyperparams& hyper);

struct VerificationOutcome {
  bool accepted = true;
  double submitted_perplexity = 0.0;
  double final_perplexity = 0.0;
  double improvement = 0.0;  // relative perplexity decrease
};

/// Runs extra sweeps on a copy of the submitted state; rejects iff the
/// relative improvement exceeds the tolerance.
VerificationOutcome verify_model(const SubmittedModel& winner, const Hyperparams& hyper,
                                 std::size_t extra_iterations = 5, double tolerance = 0.02);

struct Settlement {
  double time = 0.0;
  std::uint64_t task_id = 0;
  std::uint32_t winner = 0;
  std::uint32_t loser = 0;
  std::uint64_t t = 0;
  std::uint64_t i_star = 0;
  std::uint64_t tickets = 0;
};

class LotteryLedger {
 public:
  void add_seller(std::uint32_t seller_id);
  bool has_seller(std::uint32_t seller_id) const { return credits_.contains(seller_id); }

  std::int64_t credit(std::uint32_t seller_id) const { return credits_.at(seller_id); }
  std::uint64_t tickets(std::uint32_t seller_id) const { return tickets_.at(seller_id); }
  std::int64_t total_credit() const;
  std::uint64_t total_tickets() const;
  const std::map<std::uint32_t, std::int64_t>& credits() const { return credits_; }
  const std::map<std::uint32_t, std::uint64_t>& ticket_counts() const { return tickets_; }

  /// Winner +1 credit and t * i_star tickets, loser -1. Throws
  /// ValidationError for unknown or identical sellers.
  const Settlement& settle(std::uint32_t winner, std::uint32_t loser, std::uint64_t t, std::uint64_t i_star,
                           double time = 0.0, std::uint64_t task_id = 0);

  /// Ticket-weighted draw; tickets reset afterwards. Throws ValidationError
  /// if nobody holds a ticket.
  std::uint32_t draw_lottery(Rng& rng);

  const std::vector<Settlement>& log() const { return log_; }

 private:
  std::map<std::uint32_t, std::int64_t> credits_;
  std::map<std::uint32_t, std::uint64_t> tickets_;
  std::vector<Settlement> log_;
};

/// Picks two distinct sellers (indices into the pool) for a task, or none.
class MatchStrategy {
 public:
  virtual ~MatchStrategy() = default;
  virtual std::optional<std::pair<std::size_t, std::size_t>> choose(const BuyerTask& task,
                                                                    std::span<const SellerNode> pool,
                                                                    double now) const = 0;
};

/// The two available sellers highest by (credit, speed, seller_id), all
/// descending, skipping the buyer's own listing.
class GreedyMatch final : public MatchStrategy {
 public:
  std::optional<std::pair<std::size_t, std::size_t>> choose(const BuyerTask& task, std::span<const SellerNode> pool,
                                                            double now) const override;
};

struct MatchResult {
  std::size_t first = 0;  // pool indices
  std::size_t second = 0;
  double first_done = 0.0;
  double second_done = 0.0;
};

/// Asks the strategy for a pair and marks both busy for
/// token_count * requested_iterations / speed. Throws ConsistencyError if
/// the strategy returns an unavailable seller or the buyer's own listing.
std::optional<MatchResult> match(const BuyerTask& task, std::vector<SellerNode>& pool, const MatchStrategy& strategy,
                                 double now);

/// Corrupt-profile tampering: every stored count scaled by
/// (1 + level * N(0,1)), floored at one unit; assignments untouched.
void corrupt_counts(TopicModelState& s, double level, Rng& rng);

struct SellerGroup {
  std::size_t count = 1;
  double speed_min = 1.0;
  double speed_max = 1.0;
  HonestyProfile honesty;
};

struct TaskPoolSpec {
  std::size_t corpora = 2;
  std::size_t docs = 30;
  std::size_t doc_length = 25;
  std::size_t topics = 3;
  std::size_t words_per_topic = 15;
  int k = 3;
  std::uint32_t iterations = 30;
  std::size_t variants = 4;  // honestly trained models per corpus and seller class
  double alpha = 0.1;
  double beta = 0.01;
};

struct Scenario {
  std::uint64_t seed = 1;
  std::vector<SellerNode> sellers;
  std::string arrival_process = "poisson";  // or "schedule"
  double arrival_rate = 1.0;
  std::vector<double> schedule;
  std::size_t max_tasks = 0;
  double duration = 0.0;  // stop accepting arrivals after this time; 0 = unbounded
  double buyer_seller_fraction = 0.0;
  TaskPoolSpec tasks;
  std::size_t extra_iterations = 5;
  double tolerance = 0.02;
  double lottery_period = 0.0;  // 0 = no lottery
  std::size_t trajectory_every = 100;
};

/// Reads a JSON scenario. Sellers come from "sellers" (explicit) and/or
/// "seller_groups". Throws ValidationError on malformed input.
Scenario parse_scenario(std::string_view json_text);

struct PairRecord {
  double time = 0.0;
  std::uint64_t task_id = 0;
  std::string pair_class;  // "honest", "lazy", "corrupt" (worst member)
  double p_v = 0.0;
  bool verified = false;
};

struct Metrics {
  std::size_t tasks_arrived = 0;
  std::size_t tasks_completed = 0;  // settled
  std::size_t tasks_failed = 0;     // no acceptable submission
  double mean_latency = 0.0;
  std::size_t verifications = 0;
  std::size_t verification_rejects = 0;
  std::map<std::string, std::size_t> validation_rejects;  // by failure name
  std::size_t zero_sum_violations = 0;
  std::size_t ticket_audit_failures = 0;
  double end_time = 0.0;
  std::vector<PairRecord> pairs;
  std::map<std::uint32_t, std::int64_t> final_credit;
  std::map<std::uint32_t, std::uint64_t> tickets_awarded;
  std::vector<std::uint32_t> lottery_winners;
  std::vector<std::pair<double, std::vector<std::int64_t>>> credit_trajectory;  // in seller order
  std::map<std::string, double> mean_credit_by_class;
  std::vector<std::string> event_log;

  /// Mean p_v of pairs of the given class whose time lies in quartile q
  /// (0..3) of [0, end_time]; NaN when there are none.
  double mean_pv(std::string_view pair_class, int quartile) const;
};

Metrics run_simulation(const Scenario& scenario, const MatchStrategy& strategy = GreedyMatch{});

/// Metrics as a JSON document (event log excluded).
std::string metrics_json(const Metrics& metrics);

}  // namespace rlda::market
