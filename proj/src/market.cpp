#include "rlda/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <queue>
#include <set>

#include "json.hpp"
#include "rlda/errors.hpp"
#include "rlda/synthetic.hpp"

namespace rlda::market {

std::string_view honesty_name(Honesty h) {
  switch (h) {
    case Honesty::kHonest: return "honest";
    case Honesty::kLazy: return "lazy";
    case Honesty::kCorrupt: return "corrupt";
  }
  return "?";
}

double verification_probability(double c1, double c2, double p1, double p2) {
  if (!(p1 > 0.0) || !(p2 > 0.0) || !std::isfinite(p1) || !std::isfinite(p2)) {
    throw ValidationError("verification probability needs positive perplexities");
  }
  const double sigmoid = 1.0 / (1.0 + std::exp(-(c1 + c2)));
  return 1.0 - (sigmoid + 2.0 * std::min(p1, p2) / std::max(p1, p2)) / 3.0;
}

std::string_view failure_name(ValidationFailure f) {
  switch (f) {
    case ValidationFailure::kNone: return "ok";
    case ValidationFailure::kMalformed: return "malformed";
    case ValidationFailure::kNegativeCount: return "negative_count";
    case ValidationFailure::kThetaNotNormalized: return "theta_not_normalized";
    case ValidationFailure::kPhiNotNormalized: return "phi_not_normalized";
    case ValidationFailure::kCountMismatch: return "count_mismatch";
    case ValidationFailure::kBadIterations: return "bad_iterations";
  }
  return "?";
}

ValidationOutcome validate_model(const SubmittedModel& submission, const Hyperparams& hyper) {
  const auto& s = submission.state;
  auto fail = [](ValidationFailure r, std::string detail) { return ValidationOutcome{r, std::move(detail)}; };
  if (submission.iterations < 1) return fail(ValidationFailure::kBadIterations, "i* < 1");
  if (s.k < 1 || s.k != hyper.topics() || static_cast<Eigen::Index>(s.vocab_size()) != hyper.beta.size() ||
      s.z.size() != s.docs.size() || s.doc_topic.size() != s.docs.size() || s.word_topic.size() != s.vocab_size() ||
      s.topic_totals.size() != static_cast<std::size_t>(s.k)) {
    return fail(ValidationFailure::kMalformed, "table shapes disagree");
  }
  for (std::size_t d = 0; d < s.docs.size(); ++d) {
    if (s.z[d].size() != s.docs[d].tokens.size()) return fail(ValidationFailure::kMalformed, "assignment length");
    for (auto t : s.z[d]) {
      if (t >= static_cast<TopicId>(s.k)) return fail(ValidationFailure::kMalformed, "topic id out of range");
    }
    for (const auto& tok : s.docs[d].tokens) {
      if (tok.word >= s.vocab_size()) return fail(ValidationFailure::kMalformed, "word id out of range");
    }
  }
  auto negative = [](const SparseCounts& c) {
    return std::any_of(c.entries().begin(), c.entries().end(), [](const auto& e) { return e.units < 0; });
  };
  for (const auto& c : s.doc_topic) {
    if (negative(c)) return fail(ValidationFailure::kNegativeCount, "document-topic");
  }
  for (const auto& c : s.word_topic) {
    if (negative(c)) return fail(ValidationFailure::kNegativeCount, "word-topic");
  }
  for (auto u : s.topic_totals) {
    if (u < 0) return fail(ValidationFailure::kNegativeCount, "topic total");
  }
  for (const auto& c : s.doc_topic) {
    for (const auto& e : c.entries()) {
      if (e.topic >= static_cast<TopicId>(s.k)) return fail(ValidationFailure::kMalformed, "topic id out of range");
    }
  }
  for (const auto& c : s.word_topic) {
    for (const auto& e : c.entries()) {
      if (e.topic >= static_cast<TopicId>(s.k)) return fail(ValidationFailure::kMalformed, "topic id out of range");
    }
  }

  constexpr double kTol = 1e-6;
  const Eigen::VectorXd theta_sums = theta_matrix(s, hyper).rowwise().sum();
  for (Eigen::Index d = 0; d < theta_sums.size(); ++d) {
    if (!(std::abs(theta_sums(d) - 1.0) <= kTol)) {
      return fail(ValidationFailure::kThetaNotNormalized, "document " + std::to_string(d));
    }
  }
  const Eigen::VectorXd phi_sums = phi_matrix(s, hyper).rowwise().sum();
  for (Eigen::Index t = 0; t < phi_sums.size(); ++t) {
    if (!(std::abs(phi_sums(t) - 1.0) <= kTol)) {
      return fail(ValidationFailure::kPhiNotNormalized, "topic " + std::to_string(t));
    }
  }
  try {
    s.check_consistency();
  } catch (const ConsistencyError& e) {
    return fail(ValidationFailure::kCountMismatch, e.what());
  }
  return {};
}

Selection select_model(const SubmittedModel& first, const SubmittedModel& second, const Hyperparams& hyper) {
  Selection sel;
  sel.perplexity[0] = perplexity(first.state, hyper);
  sel.perplexity[1] = perplexity(second.state, hyper);
  const bool second_wins = sel.perplexity[1] < sel.perplexity[0] ||
                           (sel.perplexity[1] == sel.perplexity[0] && second.seller_id < first.seller_id);
  sel.winner = second_wins ? 1 : 0;
  sel.loser = 1 - sel.winner;
  return sel;
}

VerificationOutcome verify_model(const SubmittedModel& winner, const Hyperparams& hyper, std::size_t extra_iterations,
                                 double tolerance) {
  VerificationOutcome out;
  TopicModelState state = winner.state;
  out.submitted_perplexity = perplexity(state, hyper);
  continue_training(state, hyper, extra_iterations, {}, false);
  out.final_perplexity = perplexity(state, hyper);
  out.improvement = (out.submitted_perplexity - out.final_perplexity) / out.submitted_perplexity;
  out.accepted = !(out.improvement > tolerance);
  return out;
}

void LotteryLedger::add_seller(std::uint32_t seller_id) {
  credits_.try_emplace(seller_id, 0);
  tickets_.try_emplace(seller_id, 0);
}

std::int64_t LotteryLedger::total_credit() const {
  std::int64_t total = 0;
  for (const auto& [id, c] : credits_) total += c;
  return total;
}

std::uint64_t LotteryLedger::total_tickets() const {
  std::uint64_t total = 0;
  for (const auto& [id, t] : tickets_) total += t;
  return total;
}

const Settlement& LotteryLedger::settle(std::uint32_t winner, std::uint32_t loser, std::uint64_t t,
                                        std::uint64_t i_star, double time, std::uint64_t task_id) {
  if (!has_seller(winner) || !has_seller(loser)) throw ValidationError("settlement names an unknown seller");
  if (winner == loser) throw ValidationError("settlement needs two distinct sellers");
  credits_[winner] += 1;
  credits_[loser] -= 1;
  const std::uint64_t awarded = t * i_star;
  tickets_[winner] += awarded;
  log_.push_back({time, task_id, winner, loser, t, i_star, awarded});
  return log_.back();
}

std::uint32_t LotteryLedger::draw_lottery(Rng& rng) {
  const std::uint64_t total = total_tickets();
  if (total == 0) throw ValidationError("lottery draw with no tickets");
  std::uint64_t r = rng.below(total);
  std::uint32_t winner = 0;
  for (const auto& [id, t] : tickets_) {
    if (r < t) {
      winner = id;
      break;
    }
    r -= t;
  }
  for (auto& [id, t] : tickets_) t = 0;
  return winner;
}

std::optional<std::pair<std::size_t, std::size_t>> GreedyMatch::choose(const BuyerTask& task,
                                                                       std::span<const SellerNode> pool,
                                                                       double now) const {
  auto better = [&](std::size_t a, std::size_t b) {
    const auto& x = pool[a];
    const auto& y = pool[b];
    if (x.credit != y.credit) return x.credit > y.credit;
    if (x.speed != y.speed) return x.speed > y.speed;
    return x.seller_id > y.seller_id;
  };
  std::optional<std::size_t> best, second;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].available_at > now || pool[i].seller_id == task.buyer_seller) continue;
    if (!best || better(i, *best)) {
      second = best;
      best = i;
    } else if (!second || better(i, *second)) {
      second = i;
    }
  }
  if (!second) return std::nullopt;
  return std::pair{*best, *second};
}

std::optional<MatchResult> match(const BuyerTask& task, std::vector<SellerNode>& pool, const MatchStrategy& strategy,
                                 double now) {
  const auto pick = strategy.choose(task, pool, now);
  if (!pick) return std::nullopt;
  const auto [a, b] = *pick;
  for (auto i : {a, b}) {
    if (i >= pool.size()) throw ConsistencyError("strategy returned a seller outside the pool");
    if (pool[i].available_at > now) throw ConsistencyError("strategy matched an unavailable seller");
    if (pool[i].seller_id == task.buyer_seller) throw ConsistencyError("strategy matched a buyer to its own task");
  }
  if (a == b) throw ConsistencyError("strategy matched one seller twice");
  const double work = static_cast<double>(task.token_count) * static_cast<double>(task.requested_iterations);
  MatchResult m{a, b, now + work / pool[a].speed, now + work / pool[b].speed};
  pool[a].available_at = m.first_done;
  pool[b].available_at = m.second_done;
  return m;
}

// ---------------------------------------------------------------------------
// Scenario

namespace {

using json = nlohmann::json;

HonestyProfile parse_honesty(const json& j) {
  HonestyProfile h;
  const std::string kind = j.value("honesty", std::string("honest"));
  if (kind == "honest") {
    h.kind = Honesty::kHonest;
  } else if (kind == "lazy") {
    h.kind = Honesty::kLazy;
  } else if (kind == "corrupt") {
    h.kind = Honesty::kCorrupt;
  } else {
    throw ValidationError("unknown honesty profile '" + kind + "'");
  }
  h.level = j.value("level", h.kind == Honesty::kHonest ? 0.0 : 0.1);
  if (!(h.level >= 0.0) || (h.kind == Honesty::kLazy && h.level >= 1.0)) {
    throw ValidationError("honesty level out of range");
  }
  return h;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"seed", "sellers", "seller_groups", "arrivals", "duration", "buyer_seller_fraction", "tasks",
                "verification", "lottery_period", "trajectory_every"},
               "scenario");
    sc.seed = j.value("seed", sc.seed);
    std::set<std::uint32_t> ids;
    if (j.contains("sellers")) {
      for (const auto& s : j.at("sellers")) {
        check_keys(s, {"id", "speed", "honesty", "level", "credit"}, "seller");
        SellerNode n;
        n.seller_id = s.at("id").get<std::uint32_t>();
        n.speed = s.value("speed", 1.0);
        n.credit = s.value("credit", std::int64_t{0});
        if (n.credit != 0) throw ValidationError("sellers start with zero credit");
        n.honesty = parse_honesty(s);
        if (!ids.insert(n.seller_id).second) throw ValidationError("duplicate seller id");
        sc.sellers.push_back(n);
      }
    }
    if (j.contains("seller_groups")) {
      std::uint32_t next = ids.empty() ? 0 : *ids.rbegin() + 1;
      std::uint64_t group = 0;
      for (const auto& g : j.at("seller_groups")) {
        check_keys(g, {"count", "speed", "honesty", "level"}, "seller group");
        SellerGroup sg;
        sg.count = g.value("count", std::size_t{1});
        if (g.contains("speed")) {
          const auto& sp = g.at("speed");
          if (sp.is_array()) {
            sg.speed_min = sp.at(0).get<double>();
            sg.speed_max = sp.at(1).get<double>();
          } else {
            sg.speed_min = sg.speed_max = sp.get<double>();
          }
        }
        if (sg.speed_max < sg.speed_min) throw ValidationError("seller group speed range reversed");
        sg.honesty = parse_honesty(g);
        Rng rng(stream_seed(sc.seed, {0x73706565ULL, group++}));
        for (std::size_t i = 0; i < sg.count; ++i) {
          SellerNode n;
          n.seller_id = next++;
          n.speed = sg.speed_min + (sg.speed_max - sg.speed_min) * rng.uniform();
          n.honesty = sg.honesty;
          sc.sellers.push_back(n);
        }
      }
    }
    for (const auto& s : sc.sellers) {
      if (!(s.speed > 0.0) || !std::isfinite(s.speed)) throw ValidationError("seller speed must be positive");
    }

    if (j.contains("arrivals")) {
      const auto& a = j.at("arrivals");
      check_keys(a, {"process", "rate", "times", "max_tasks"}, "arrivals");
      sc.arrival_process = a.value("process", sc.arrival_process);
      sc.max_tasks = a.value("max_tasks", std::size_t{0});
      if (sc.arrival_process == "poisson") {
        sc.arrival_rate = a.value("rate", sc.arrival_rate);
        if (!(sc.arrival_rate > 0.0)) throw ValidationError("arrival rate must be positive");
      } else if (sc.arrival_process == "schedule") {
        sc.schedule = a.at("times").get<std::vector<double>>();
        for (double t : sc.schedule) {
          if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("arrival times must be non-negative");
        }
        std::sort(sc.schedule.begin(), sc.schedule.end());
      } else {
        throw ValidationError("unknown arrival process '" + sc.arrival_process + "'");
      }
    }
    sc.duration = j.value("duration", 0.0);
    if (!(sc.duration >= 0.0)) throw ValidationError("duration must be non-negative");
    sc.buyer_seller_fraction = j.value("buyer_seller_fraction", 0.0);
    if (!(sc.buyer_seller_fraction >= 0.0 && sc.buyer_seller_fraction <= 1.0)) {
      throw ValidationError("buyer_seller_fraction must lie in [0, 1]");
    }
    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      check_keys(t,
                 {"corpora", "docs", "doc_length", "topics", "words_per_topic", "k", "iterations", "variants", "alpha",
                  "beta"},
                 "tasks");
      auto& p = sc.tasks;
      p.corpora = t.value("corpora", p.corpora);
      p.docs = t.value("docs", p.docs);
      p.doc_length = t.value("doc_length", p.doc_length);
      p.topics = t.value("topics", p.topics);
      p.words_per_topic = t.value("words_per_topic", p.words_per_topic);
      p.k = t.value("k", p.k);
      p.iterations = t.value("iterations", p.iterations);
      p.variants = t.value("variants", p.variants);
      p.alpha = t.value("alpha", p.alpha);
      p.beta = t.value("beta", p.beta);
      if (p.corpora == 0 || p.docs == 0 || p.doc_length == 0 || p.topics == 0 || p.words_per_topic == 0 || p.k < 1 ||
          p.iterations < 1 || p.variants == 0 || !(p.alpha > 0.0) || !(p.beta > 0.0)) {
        throw ValidationError("task pool parameters must be positive");
      }
    }
    if (j.contains("verification")) {
      const auto& v = j.at("verification");
      check_keys(v, {"extra_iterations", "tolerance"}, "verification");
      sc.extra_iterations = v.value("extra_iterations", sc.extra_iterations);
      sc.tolerance = v.value("tolerance", sc.tolerance);
      if (!(sc.tolerance >= 0.0)) throw ValidationError("verification tolerance must be non-negative");
    }
    sc.lottery_period = j.value("lottery_period", 0.0);
    if (!(sc.lottery_period >= 0.0)) throw ValidationError("lottery_period must be non-negative");
    sc.trajectory_every = j.value("trajectory_every", sc.trajectory_every);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scenario: ") + e.what());
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Simulation

double Metrics::mean_pv(std::string_view pair_class, int quartile) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    if (p.pair_class != pair_class) continue;
    const int q = end_time > 0.0 ? std::min(3, static_cast<int>(4.0 * p.time / end_time)) : 0;
    if (q != quartile) continue;
    sum += p.p_v;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

void corrupt_counts(TopicModelState& s, double level, Rng& rng) {
  auto perturb = [&](SparseCounts& c) {
    for (auto& e : c.raw()) {
      const double f = 1.0 + level * rng.normal();
      e.units = std::max<Units>(1, std::llround(static_cast<double>(e.units) * f));
    }
  };
  for (auto& c : s.doc_topic) perturb(c);
  for (auto& c : s.word_topic) perturb(c);
}

namespace {

enum class EventKind { kArrival, kSellerDone, kLottery };

struct Event {
  double time;
  std::uint64_t id;
  EventKind kind;
  std::uint64_t task;
  std::size_t seller;  // pool index
  bool operator>(const Event& o) const { return time != o.time ? time > o.time : id > o.id; }
};

struct TaskRun {
  BuyerTask task;
  std::size_t sellers[2] = {0, 0};
  int done = 0;
};

// Trained models shared by every simulated submission, keyed by corpus,
// iteration count and variant.
class ModelPool {
 public:
  ModelPool(const TaskPoolSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    for (std::size_t c = 0; c < spec.corpora; ++c) {
      PlantedSpec ps;
      ps.docs = spec.docs;
      ps.doc_length = spec.doc_length;
      ps.topics = spec.topics;
      ps.words_per_topic = spec.words_per_topic;
      ps.seed = stream_seed(seed, {0x636f7270ULL, c});
      corpora_.push_back(planted_corpus(ps).corpus);
      hypers_.push_back(Hyperparams::symmetric(spec.k, corpora_.back().vocab.size(), spec.alpha, spec.beta));
    }
  }

  const WeightedCorpus& corpus(std::size_t c) const { return corpora_.at(c); }
  const Hyperparams& hyper(std::size_t c) const { return hypers_.at(c); }

  struct Entry {
    TopicModelState state;
    double perplexity = 0.0;
    std::optional<VerificationOutcome> verification;
  };

  Entry& get(std::size_t c, std::uint32_t iterations, std::size_t variant) {
    const auto key = std::tuple{c, iterations, variant};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    TrainOptions opts;
    opts.iterations = iterations;
    opts.seed = stream_seed(seed_, {0x706f6f6cULL, c, iterations, variant});
    opts.track_perplexity = false;
    Entry e;
    e.state = train(corpora_[c], spec_.k, hypers_[c], opts).state;
    e.perplexity = perplexity(e.state, hypers_[c]);
    return cache_.emplace(key, std::move(e)).first->second;
  }

 private:
  TaskPoolSpec spec_;
  std::uint64_t seed_;
  std::vector<WeightedCorpus> corpora_;
  std::vector<Hyperparams> hypers_;
  std::map<std::tuple<std::size_t, std::uint32_t, std::size_t>, Entry> cache_;
};

const char* pair_class(Honesty a, Honesty b) {
  if (a == Honesty::kCorrupt || b == Honesty::kCorrupt) return "corrupt";
  if (a == Honesty::kLazy || b == Honesty::kLazy) return "lazy";
  return "honest";
}

class Simulation {
 public:
  Simulation(const Scenario& sc, const MatchStrategy& strategy)
      : sc_(sc), strategy_(strategy), pool_(sc.tasks, sc.seed), sellers_(sc.sellers) {
    for (const auto& s : sellers_) ledger_.add_seller(s.seller_id);
  }

  Metrics run() {
    schedule_arrivals();
    if (sc_.lottery_period > 0.0 && !queue_.empty()) push(sc_.lottery_period, EventKind::kLottery, 0, 0);
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::kArrival: on_arrival(ev.task); break;
        case EventKind::kSellerDone: on_done(ev.task, ev.seller); break;
        case EventKind::kLottery: on_lottery(); break;
      }
      if (ledger_.total_credit() != 0) ++m_.zero_sum_violations;
    }
    m_.end_time = now_;
    finish();
    return std::move(m_);
  }

 private:
  void push(double time, EventKind kind, std::uint64_t task, std::size_t seller) {
    queue_.push({time, next_event_++, kind, task, seller});
  }

  void log(const char* fmt, auto... args) {
    char buf[320];
    int n = std::snprintf(buf, sizeof buf, "%.6f ", now_);
    std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), fmt, args...);
    m_.event_log.emplace_back(buf);
  }

  void schedule_arrivals() {
    std::vector<double> times;
    if (sc_.arrival_process == "schedule") {
      times = sc_.schedule;
      if (sc_.max_tasks > 0 && times.size() > sc_.max_tasks) times.resize(sc_.max_tasks);
    } else if (sc_.max_tasks > 0 || sc_.duration > 0.0) {
      Rng rng(stream_seed(sc_.seed, {0x61727276ULL}));
      double t = 0.0;
      while (sc_.max_tasks == 0 || times.size() < sc_.max_tasks) {
        t += rng.exponential(sc_.arrival_rate);
        if (sc_.duration > 0.0 && t > sc_.duration) break;
        times.push_back(t);
      }
    }
    if (sc_.duration > 0.0) std::erase_if(times, [&](double t) { return t > sc_.duration; });

    Rng rng(stream_seed(sc_.seed, {0x7461736bULL}));
    for (std::size_t i = 0; i < times.size(); ++i) {
      TaskRun run;
      run.task.task_id = i;
      run.task.arrival_time = times[i];
      run.task.corpus = rng.below(sc_.tasks.corpora);
      const auto& corpus = pool_.corpus(run.task.corpus);
      Units units = 0;
      for (const auto& d : corpus.docs) {
        for (const auto& tok : d.tokens) units += tok.units;
      }
      run.task.token_count = std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::llround(decode_weight(units, corpus.cfg))));
      run.task.requested_iterations = sc_.tasks.iterations;
      if (!sellers_.empty() && rng.uniform() < sc_.buyer_seller_fraction) {
        run.task.buyer_seller = sellers_[rng.below(sellers_.size())].seller_id;
      }
      tasks_.push_back(run);
      push(times[i], EventKind::kArrival, i, 0);
    }
    m_.tasks_arrived = tasks_.size();
  }

  void on_arrival(std::uint64_t id) {
    const auto& t = tasks_[id].task;
    log("ARRIVAL task=%llu tokens=%llu iters=%u corpus=%zu buyer_seller=%lld", ull(id), ull(t.token_count),
        t.requested_iterations, t.corpus, t.buyer_seller ? static_cast<long long>(*t.buyer_seller) : -1LL);
    pending_.push_back(id);
    dispatch();
  }

  void dispatch() {
    for (auto it = pending_.begin(); it != pending_.end();) {
      auto& run = tasks_[*it];
      const auto m = match(run.task, sellers_, strategy_, now_);
      if (!m) {
        ++it;
        continue;
      }
      run.sellers[0] = m->first;
      run.sellers[1] = m->second;
      log("MATCH task=%llu sellers=%u,%u done=%.6f,%.6f", ull(*it), sellers_[m->first].seller_id,
          sellers_[m->second].seller_id, m->first_done, m->second_done);
      push(m->first_done, EventKind::kSellerDone, *it, m->first);
      push(m->second_done, EventKind::kSellerDone, *it, m->second);
      it = pending_.erase(it);
    }
    for (auto id : pending_) {
      if (!announced_pending_.contains(id)) {
        announced_pending_.insert(id);
        log("PENDING task=%llu", ull(id));
      }
    }
  }

  void on_done(std::uint64_t id, std::size_t seller) {
    auto& run = tasks_[id];
    log("DONE task=%llu seller=%u", ull(id), sellers_[seller].seller_id);
    if (++run.done == 2) evaluate(run);
    dispatch();
  }

  void on_lottery() {
    if (ledger_.total_tickets() > 0) {
      Rng rng(stream_seed(sc_.seed, {0x6c6f7474ULL, m_.lottery_winners.size()}));
      const auto total = ledger_.total_tickets();
      const auto winner = ledger_.draw_lottery(rng);
      m_.lottery_winners.push_back(winner);
      log("LOTTERY winner=%u tickets=%llu", winner, ull(total));
    } else {
      log("LOTTERY winner=%s tickets=0", "none");
    }
    if (!queue_.empty()) push(now_ + sc_.lottery_period, EventKind::kLottery, 0, 0);
  }

  struct Submission {
    SubmittedModel model;
    ModelPool::Entry* entry = nullptr;  // null when the counts were tampered with
  };

  Submission submit(const TaskRun& run, std::size_t idx) {
    const auto& seller = sellers_[idx];
    const auto& task = run.task;
    Rng rng(stream_seed(sc_.seed, {0x7375626dULL, task.task_id, seller.seller_id}));
    const std::size_t variant = rng.below(sc_.tasks.variants);
    std::uint32_t performed = task.requested_iterations;
    if (seller.honesty.kind == Honesty::kLazy) {
      performed = static_cast<std::uint32_t>(
          std::max(1.0, std::round((1.0 - seller.honesty.level) * task.requested_iterations)));
    }
    auto& entry = pool_.get(task.corpus, performed, variant);
    Submission sub;
    sub.model.seller_id = seller.seller_id;
    sub.model.iterations = task.requested_iterations;
    sub.model.state = entry.state;
    sub.model.reported_perplexity = entry.perplexity;
    if (seller.honesty.kind == Honesty::kCorrupt) {
      corrupt_counts(sub.model.state, seller.honesty.level, rng);
      sub.model.reported_perplexity *= std::max(0.0, 1.0 - seller.honesty.level);
    } else {
      sub.entry = &entry;
    }
    return sub;
  }

  void evaluate(TaskRun& run) {
    const auto& task = run.task;
    const auto& hyper = pool_.hyper(task.corpus);
    Submission subs[2] = {submit(run, run.sellers[0]), submit(run, run.sellers[1])};
    bool valid[2];
    double perp[2];
    for (int i = 0; i < 2; ++i) {
      const auto outcome = validate_model(subs[i].model, hyper);
      valid[i] = outcome.ok();
      perp[i] = perplexity(subs[i].model.state, hyper);
      log("VALIDATE task=%llu seller=%u result=%s", ull(task.task_id), subs[i].model.seller_id,
          std::string(failure_name(outcome.reason)).c_str());
      if (!valid[i]) ++m_.validation_rejects[std::string(failure_name(outcome.reason))];
    }
    if (!valid[0] && !valid[1]) {
      fail(task);
      return;
    }
    std::size_t w = valid[0] ? 0 : 1;
    if (valid[0] && valid[1]) {
      const auto sel = select_model(subs[0].model, subs[1].model, hyper);
      w = sel.winner;
    }
    std::size_t l = 1 - w;
    log("SELECT task=%llu winner=%u loser=%u perplexity=%.9g,%.9g", ull(task.task_id), subs[w].model.seller_id,
        subs[l].model.seller_id, perp[w], perp[l]);

    const auto& sw = sellers_[run.sellers[w]];
    const auto& sl = sellers_[run.sellers[l]];
    const bool usable = std::isfinite(perp[0]) && std::isfinite(perp[1]) && perp[0] > 0.0 && perp[1] > 0.0;
    const double c = static_cast<double>(sw.credit + sl.credit);
    const double p_v = usable ? verification_probability(static_cast<double>(sw.credit), static_cast<double>(sl.credit),
                                                         perp[w], perp[l])
                              : 1.0 - 1.0 / (3.0 * (1.0 + std::exp(-c)));
    Rng rng(stream_seed(sc_.seed, {0x76657269ULL, task.task_id}));
    const double s = rng.uniform();
    const bool verified = verification_occurs(p_v, s);
    m_.pairs.push_back({now_, task.task_id, pair_class(sw.honesty.kind, sl.honesty.kind), p_v, verified});
    if (verified) {
      ++m_.verifications;
      VerificationOutcome v;
      if (subs[w].entry) {
        auto& entry = *subs[w].entry;
        if (!entry.verification) {
          entry.verification = verify_model(subs[w].model, hyper, sc_.extra_iterations, sc_.tolerance);
        }
        v = *entry.verification;
      } else {
        v = verify_model(subs[w].model, hyper, sc_.extra_iterations, sc_.tolerance);
      }
      const bool accepted = !(v.improvement > sc_.tolerance);
      log("VERIFY task=%llu seller=%u pv=%.9g s=%.9g verified=1 accepted=%d improvement=%.9g", ull(task.task_id),
          subs[w].model.seller_id, p_v, s, accepted ? 1 : 0, v.improvement);
      if (!accepted) {
        ++m_.verification_rejects;
        if (!valid[l]) {
          fail(task);
          return;
        }
        std::swap(w, l);
      }
    } else {
      log("VERIFY task=%llu seller=%u pv=%.9g s=%.9g verified=0", ull(task.task_id), subs[w].model.seller_id, p_v, s);
    }

    auto& winner = sellers_[run.sellers[w]];
    auto& loser = sellers_[run.sellers[l]];
    const auto& st = ledger_.settle(winner.seller_id, loser.seller_id, task.token_count, subs[w].model.iterations, now_,
                                    task.task_id);
    winner.credit = ledger_.credit(winner.seller_id);
    loser.credit = ledger_.credit(loser.seller_id);
    if (st.tickets != st.t * st.i_star) ++m_.ticket_audit_failures;
    log("SETTLE task=%llu winner=%u loser=%u t=%llu i=%llu tickets=%llu credit=%lld,%lld total=%lld",
        ull(task.task_id), winner.seller_id, loser.seller_id, ull(st.t), ull(st.i_star), ull(st.tickets),
        static_cast<long long>(winner.credit), static_cast<long long>(loser.credit),
        static_cast<long long>(ledger_.total_credit()));
    ++m_.tasks_completed;
    latency_sum_ += now_ - task.arrival_time;
    m_.tickets_awarded[winner.seller_id] += st.tickets;
    if (sc_.trajectory_every > 0 && m_.tasks_completed % sc_.trajectory_every == 0) snapshot();
  }

  void fail(const BuyerTask& task) {
    ++m_.tasks_failed;
    log("FAIL task=%llu", ull(task.task_id));
  }

  void snapshot() {
    std::vector<std::int64_t> credits;
    for (const auto& s : sellers_) credits.push_back(s.credit);
    m_.credit_trajectory.emplace_back(now_, std::move(credits));
  }

  void finish() {
    m_.mean_latency = m_.tasks_completed ? latency_sum_ / static_cast<double>(m_.tasks_completed) : 0.0;
    m_.final_credit = ledger_.credits();
    std::map<std::string, std::pair<double, std::size_t>> by_class;
    for (const auto& s : sellers_) {
      auto& [sum, n] = by_class[std::string(honesty_name(s.honesty.kind))];
      sum += static_cast<double>(s.credit);
      ++n;
    }
    for (const auto& [name, acc] : by_class) m_.mean_credit_by_class[name] = acc.first / static_cast<double>(acc.second);
  }

  static unsigned long long ull(std::uint64_t v) { return static_cast<unsigned long long>(v); }

  const Scenario& sc_;
  const MatchStrategy& strategy_;
  ModelPool pool_;
  std::vector<SellerNode> sellers_;
  LotteryLedger ledger_;
  std::vector<TaskRun> tasks_;
  std::deque<std::uint64_t> pending_;
  std::set<std::uint64_t> announced_pending_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_event_ = 0;
  double now_ = 0.0;
  double latency_sum_ = 0.0;
  Metrics m_;
};

}  // namespace

Metrics run_simulation(const Scenario& scenario, const MatchStrategy& strategy) {
  return Simulation(scenario, strategy).run();
}

std::string metrics_json(const Metrics& m) {
  json j;
  j["tasks_arrived"] = m.tasks_arrived;
  j["tasks_completed"] = m.tasks_completed;
  j["tasks_failed"] = m.tasks_failed;
  j["mean_latency"] = m.mean_latency;
  j["verifications"] = m.verifications;
  j["verification_rejects"] = m.verification_rejects;
  j["validation_rejects"] = m.validation_rejects;
  j["zero_sum_violations"] = m.zero_sum_violations;
  j["ticket_audit_failures"] = m.ticket_audit_failures;
  j["end_time"] = m.end_time;
  json classes = json::object();
  for (const char* c : {"honest", "lazy", "corrupt"}) {
    json q = json::array();
    for (int i = 0; i < 4; ++i) {
      const double v = m.mean_pv(c, i);
      q.push_back(std::isnan(v) ? json(nullptr) : json(v));
    }
    classes[c] = q;
  }
  j["mean_verification_probability_by_quartile"] = classes;
  j["mean_credit_by_class"] = m.mean_credit_by_class;
  json credit = json::object();
  for (const auto& [id, c] : m.final_credit) credit[std::to_string(id)] = c;
  j["final_credit"] = credit;
  json tickets = json::object();
  for (const auto& [id, t] : m.tickets_awarded) tickets[std::to_string(id)] = t;
  j["tickets_awarded"] = tickets;
  j["lottery_winners"] = m.lottery_winners;
  json traj = json::array();
  for (const auto& [t, c] : m.credit_trajectory) traj.push_back({{"time", t}, {"credit", c}});
  j["credit_trajectory"] = traj;
  return j.dump(2) + "\n";
}

}  // namespace rlda::market
