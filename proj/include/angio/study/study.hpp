#pragma once

#include "angio/data/dataset.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

namespace angio {

enum class Verdict { kReal, kSynthetic };
enum class RaterLevel { kJunior, kIntermediate, kSenior };

const char* verdict_name(Verdict v);
Verdict parse_verdict(const std::string& s);
const char* level_name(RaterLevel l);
RaterLevel parse_level(const std::string& s);

/// Raised for unknown studies/sessions/pairs.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for duplicate judgments and other state conflicts.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a report is requested with a wrong study token.
class ForbiddenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StudyPair {
  std::string pair_id;    // opaque, what raters see
  std::string source_id;  // dataset pair id
  std::string slo_png;    // absolute paths
  std::string fa_png;
  bool is_synthetic = false;
};

struct StudyConfig {
  int n_pairs = 30;
  double synthetic_fraction = 0.5;  // synthetic count = round(n_pairs * fraction)
  std::uint64_t seed = 0;
  std::int64_t time_limit_ms = 30000;
};

/// FA generator used for the synthetic half; takes and returns [0,1] images.
using FaGenerator = std::function<Image(const Image& slo)>;

/// Picks n_pairs test-split pairs at random, marks round(n * fraction) of them synthetic
/// (generating their FA), shuffles the order and writes the PNGs under image_dir.
std::vector<StudyPair> build_study(const std::string& dataset_root, const StudyConfig& cfg, const FaGenerator& gen,
                                   const std::string& image_dir);

struct Judgment {
  std::string pair_id;
  Verdict verdict = Verdict::kReal;
  std::int64_t elapsed_ms = 0;
  std::string rater_id;
  RaterLevel rater_level = RaterLevel::kJunior;
  bool timed_out = false;
};

/// Percentages of judged pairs; "real" is the positive class, so FP = synthetic judged real.
struct ConfusionRates {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  double synthetic_judged_real = 0;  // percent of the synthetic pairs
  int n_raters = 0;
};

struct StudyReport {
  std::map<RaterLevel, ConfusionRates> levels;
  int complete_sessions = 0;
  int partial_sessions = 0;
  nlohmann::json to_json() const;
};

/// Per-rater rates averaged within each level. A session is complete when it has a judgment for
/// every pair; partial sessions count only with include_partial. Throws when nothing qualifies.
StudyReport aggregate(const std::vector<Judgment>& judgments, const std::map<std::string, bool>& is_synthetic,
                      bool include_partial = false);

/// What a rater sees for one pair. Carries no ground truth.
struct PairPayload {
  bool done = false;
  std::string pair_id;
  int index = 0;  // 0-based position in the session
  int total = 0;
  std::int64_t time_limit_ms = 0;
  std::int64_t served_at_ms = 0;
  nlohmann::json to_json(const std::string& session_id) const;
};

struct SubmitResult {
  bool accepted = false;
  bool timed_out = false;
};

/// In-process study state with an append-only JSON-lines journal per study
/// (state_dir/<study_id>/journal.jsonl). Presentation is forward-only; a served pair left
/// unanswered past the time limit is recorded as verdict=real with timed_out=true.
class StudyService {
 public:
  using Clock = std::function<std::int64_t()>;  // milliseconds

  explicit StudyService(std::string state_dir, Clock clock = {});

  /// Returns (study_id, token). The token is needed for the report.
  std::pair<std::string, std::string> create_study(const StudyConfig& cfg, std::vector<StudyPair> pairs);
  std::string create_session(const std::string& study_id, RaterLevel level, const std::string& rater_id = {});
  PairPayload next_pair(const std::string& session_id);
  /// elapsed_ms is measured server-side from when the pair was served.
  SubmitResult submit(const std::string& session_id, const std::string& pair_id, Verdict verdict);
  StudyReport report(const std::string& study_id, const std::string& token, bool include_partial = false);

  /// PNG path of a pair image ("slo" or "fa") for a session's study.
  std::string image_path(const std::string& session_id, const std::string& pair_id, const std::string& which) const;

  std::string journal_path(const std::string& study_id) const;

  /// Rebuilds every study under state_dir from its journal.
  void recover();

 private:
  struct Session {
    std::string study_id;
    std::string rater_id;
    RaterLevel level = RaterLevel::kJunior;
    int position = 0;  // next pair index to serve
    std::optional<int> current;
    std::int64_t served_at = 0;
    std::map<std::string, bool> judged;
  };
  struct Study {
    StudyConfig cfg;
    std::string token;
    std::vector<StudyPair> pairs;
    std::vector<Judgment> judgments;
    std::vector<std::string> sessions;
  };

  std::int64_t now() const;
  void append(const std::string& study_id, const nlohmann::json& line);
  void expire(const std::string& session_id, Session& s);
  void record(const std::string& session_id, Session& s, const Judgment& j);
  void replay(const nlohmann::json& line);
  Session& session(const std::string& id);
  Study& study(const std::string& id);

  std::string state_dir_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, Study> studies_;
  std::map<std::string, Session> sessions_;
  std::uint64_t counter_ = 0;
};

/// Reads a journal and aggregates its judgments (pure function of the log).
StudyReport report_from_journal(const std::string& journal_path, bool include_partial = false);

}  // namespace angio
