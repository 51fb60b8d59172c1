#include "angio/study/study.hpp"

#include "angio/io/png.hpp"
#include "angio/random.hpp"

#include <openssl/rand.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace angio {

namespace fs = std::filesystem;
using nlohmann::json;

const char* verdict_name(Verdict v) { return v == Verdict::kReal ? "real" : "synthetic"; }

Verdict parse_verdict(const std::string& s) {
  if (s == "real") return Verdict::kReal;
  if (s == "synthetic") return Verdict::kSynthetic;
  throw std::invalid_argument("verdict must be 'real' or 'synthetic', got '" + s + "'");
}

const char* level_name(RaterLevel l) {
  switch (l) {
    case RaterLevel::kJunior:
      return "junior";
    case RaterLevel::kIntermediate:
      return "intermediate";
    case RaterLevel::kSenior:
      return "senior";
  }
  return "?";
}

RaterLevel parse_level(const std::string& s) {
  if (s == "junior") return RaterLevel::kJunior;
  if (s == "intermediate") return RaterLevel::kIntermediate;
  if (s == "senior") return RaterLevel::kSenior;
  throw std::invalid_argument("rater_level must be junior, intermediate or senior, got '" + s + "'");
}

std::vector<StudyPair> build_study(const std::string& root, const StudyConfig& cfg, const FaGenerator& gen,
                                   const std::string& image_dir) {
  if (cfg.n_pairs < 1) throw std::invalid_argument("study needs at least one pair");
  if (!(cfg.synthetic_fraction >= 0 && cfg.synthetic_fraction <= 1)) {
    throw std::invalid_argument("synthetic_fraction must be in [0,1]");
  }
  const DatasetManifest manifest = load_manifest(root);
  std::vector<std::string> ids = manifest.ids(Split::kTest);
  if (static_cast<int>(ids.size()) < cfg.n_pairs) {
    throw std::invalid_argument("insufficient test pairs for the study: need " + std::to_string(cfg.n_pairs) +
                                ", have " + std::to_string(ids.size()));
  }
  Rng rng = Rng::derive(cfg.seed, 0x57d1);
  rng.shuffle(ids);
  ids.resize(static_cast<size_t>(cfg.n_pairs));
  const int n_synth = static_cast<int>(std::lround(cfg.n_pairs * cfg.synthetic_fraction));
  std::vector<char> synth(static_cast<size_t>(cfg.n_pairs), 0);
  for (int i = 0; i < n_synth; ++i) synth[static_cast<size_t>(i)] = 1;
  rng.shuffle(synth);

  fs::create_directories(image_dir);
  std::vector<StudyPair> pairs;
  for (int i = 0; i < cfg.n_pairs; ++i) {
    const RawPair raw = load_pair(root, manifest.entry(ids[static_cast<size_t>(i)]));
    StudyPair p;
    std::ostringstream pid;
    pid << "p" << std::setw(2) << std::setfill('0') << i + 1;
    p.pair_id = pid.str();
    p.source_id = raw.id;
    p.is_synthetic = synth[static_cast<size_t>(i)] != 0;
    p.slo_png = fs::absolute(image_dir + "/" + p.pair_id + "_slo.png").string();
    p.fa_png = fs::absolute(image_dir + "/" + p.pair_id + "_fa.png").string();
    write_png(p.slo_png, raw.slo);
    write_png(p.fa_png, p.is_synthetic ? gen(raw.slo) : raw.fa);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

json StudyReport::to_json() const {
  json levels_json = json::object();
  for (const auto& [level, r] : levels) {
    levels_json[level_name(level)] = {{"tp", r.tp},
                                      {"tn", r.tn},
                                      {"fp", r.fp},
                                      {"fn", r.fn},
                                      {"synthetic_judged_real", r.synthetic_judged_real},
                                      {"n_raters", r.n_raters}};
  }
  return {{"levels", levels_json}, {"complete_sessions", complete_sessions}, {"partial_sessions", partial_sessions}};
}

StudyReport aggregate(const std::vector<Judgment>& judgments, const std::map<std::string, bool>& is_synthetic,
                      bool include_partial) {
  struct Rater {
    RaterLevel level;
    int tp = 0, tn = 0, fp = 0, fn = 0;
    std::set<std::string> seen;
  };
  std::map<std::string, Rater> raters;
  for (const auto& j : judgments) {
    const auto truth = is_synthetic.find(j.pair_id);
    if (truth == is_synthetic.end()) throw NotFoundError("judgment for unknown pair '" + j.pair_id + "'");
    auto [it, fresh] = raters.try_emplace(j.rater_id, Rater{j.rater_level, 0, 0, 0, 0, {}});
    Rater& r = it->second;
    if (!r.seen.insert(j.pair_id).second) {
      throw ConflictError("rater '" + j.rater_id + "' judged pair '" + j.pair_id + "' twice");
    }
    const bool says_real = j.verdict == Verdict::kReal;
    if (truth->second) {
      (says_real ? r.fp : r.tn) += 1;
    } else {
      (says_real ? r.tp : r.fn) += 1;
    }
  }

  StudyReport report;
  std::map<RaterLevel, std::vector<ConfusionRates>> per_level;
  for (const auto& [id, r] : raters) {
    const bool complete = r.seen.size() == is_synthetic.size();
    (complete ? report.complete_sessions : report.partial_sessions) += 1;
    if (!complete && !include_partial) continue;
    const double n = static_cast<double>(r.tp + r.tn + r.fp + r.fn);
    ConfusionRates c;
    c.tp = 100.0 * r.tp / n;
    c.tn = 100.0 * r.tn / n;
    c.fp = 100.0 * r.fp / n;
    c.fn = 100.0 * r.fn / n;
    const int synth = r.fp + r.tn;
    c.synthetic_judged_real = synth > 0 ? 100.0 * r.fp / synth : 0.0;
    per_level[r.level].push_back(c);
  }
  if (per_level.empty()) throw std::invalid_argument("no complete sessions to aggregate");
  for (const auto& [level, list] : per_level) {
    ConfusionRates avg;
    for (const auto& c : list) {
      avg.tp += c.tp;
      avg.tn += c.tn;
      avg.fp += c.fp;
      avg.fn += c.fn;
      avg.synthetic_judged_real += c.synthetic_judged_real;
    }
    const double k = static_cast<double>(list.size());
    avg.tp /= k;
    avg.tn /= k;
    avg.fp /= k;
    avg.fn /= k;
    avg.synthetic_judged_real /= k;
    avg.n_raters = static_cast<int>(list.size());
    report.levels[level] = avg;
  }
  return report;
}

json PairPayload::to_json(const std::string& session_id) const {
  if (done) return {{"done", true}, {"total", total}};
  const std::string base = "/sessions/" + session_id + "/pairs/" + pair_id;
  return {{"done", false},
          {"pair_id", pair_id},
          {"index", index},
          {"total", total},
          {"time_limit_ms", time_limit_ms},
          {"slo_url", base + "/slo.png"},
          {"fa_url", base + "/fa.png"}};
}

namespace {

std::string random_hex(int bytes) {
  std::vector<unsigned char> buf(static_cast<size_t>(bytes));
  if (RAND_bytes(buf.data(), bytes) != 1) throw std::runtime_error("RAND_bytes failed");
  std::ostringstream os;
  for (unsigned char c : buf) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return os.str();
}

json pair_json(const StudyPair& p) {
  return {{"pair_id", p.pair_id},
          {"source_id", p.source_id},
          {"slo_png", p.slo_png},
          {"fa_png", p.fa_png},
          {"is_synthetic", p.is_synthetic}};
}

json judgment_json(const std::string& session_id, const Judgment& j) {
  return {{"event", "judgment"},          {"session_id", session_id},       {"pair_id", j.pair_id},
          {"verdict", verdict_name(j.verdict)}, {"elapsed_ms", j.elapsed_ms},     {"rater_id", j.rater_id},
          {"rater_level", level_name(j.rater_level)}, {"timed_out", j.timed_out}};
}

Judgment judgment_from(const json& l) {
  return {l.at("pair_id").get<std::string>(), parse_verdict(l.at("verdict").get<std::string>()),
          l.at("elapsed_ms").get<std::int64_t>(), l.at("rater_id").get<std::string>(),
          parse_level(l.at("rater_level").get<std::string>()), l.at("timed_out").get<bool>()};
}

}  // namespace

StudyService::StudyService(std::string state_dir, Clock clock) : state_dir_(std::move(state_dir)), clock_(std::move(clock)) {
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  fs::create_directories(state_dir_);
}

std::int64_t StudyService::now() const { return clock_(); }

std::string StudyService::journal_path(const std::string& study_id) const {
  return state_dir_ + "/" + study_id + "/journal.jsonl";
}

void StudyService::append(const std::string& study_id, const json& line) {
  const std::string path = journal_path(study_id);
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::app);
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot append to " + path);
}

StudyService::Session& StudyService::session(const std::string& id) {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

StudyService::Study& StudyService::study(const std::string& id) {
  const auto it = studies_.find(id);
  if (it == studies_.end()) throw NotFoundError("unknown study '" + id + "'");
  return it->second;
}

std::pair<std::string, std::string> StudyService::create_study(const StudyConfig& cfg, std::vector<StudyPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("study has no pairs");
  if (cfg.time_limit_ms < 1) throw std::invalid_argument("time_limit_ms must be positive");
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    if (!ids.insert(p.pair_id).second) throw std::invalid_argument("duplicate pair id '" + p.pair_id + "'");
  }
  std::lock_guard lock(mu_);
  std::string id;
  do {
    id = "study-" + std::to_string(++counter_);
  } while (studies_.count(id) || fs::exists(state_dir_ + "/" + id));
  Study s{cfg, random_hex(16), std::move(pairs), {}, {}};
  json pj = json::array();
  for (const auto& p : s.pairs) pj.push_back(pair_json(p));
  append(id, {{"event", "study"},
              {"study_id", id},
              {"token", s.token},
              {"config",
               {{"n_pairs", cfg.n_pairs},
                {"synthetic_fraction", cfg.synthetic_fraction},
                {"seed", cfg.seed},
                {"time_limit_ms", cfg.time_limit_ms}}},
              {"pairs", pj}});
  const std::string token = s.token;
  studies_.emplace(id, std::move(s));
  return {id, token};
}

std::string StudyService::create_session(const std::string& study_id, RaterLevel level, const std::string& rater_id) {
  std::lock_guard lock(mu_);
  Study& st = study(study_id);
  const std::string sid = "sess-" + random_hex(8);
  Session s;
  s.study_id = study_id;
  s.level = level;
  s.rater_id = rater_id.empty() ? sid : rater_id;
  for (const auto& other : st.sessions) {
    if (sessions_.at(other).rater_id == s.rater_id) throw ConflictError("rater '" + s.rater_id + "' already has a session");
  }
  append(study_id, {{"event", "session"}, {"session_id", sid}, {"rater_id", s.rater_id}, {"rater_level", level_name(level)}});
  st.sessions.push_back(sid);
  sessions_.emplace(sid, std::move(s));
  return sid;
}

void StudyService::record(const std::string& session_id, Session& s, const Judgment& j) {
  append(s.study_id, judgment_json(session_id, j));
  s.judged[j.pair_id] = true;
  study(s.study_id).judgments.push_back(j);
  s.current.reset();
}

void StudyService::expire(const std::string& session_id, Session& s) {
  if (!s.current) return;
  const Study& st = study(s.study_id);
  if (now() - s.served_at <= st.cfg.time_limit_ms) return;
  const StudyPair& p = st.pairs[static_cast<size_t>(*s.current)];
  record(session_id, s, {p.pair_id, Verdict::kReal, st.cfg.time_limit_ms, s.rater_id, s.level, true});
}

PairPayload StudyService::next_pair(const std::string& session_id) {
  std::lock_guard lock(mu_);
  Session& s = session(session_id);
  expire(session_id, s);
  const Study& st = study(s.study_id);
  PairPayload out;
  out.total = static_cast<int>(st.pairs.size());
  if (!s.current) {
    if (s.position >= out.total) {
      out.done = true;
      return out;
    }
    s.current = s.position++;
    s.served_at = now();
    append(s.study_id, {{"event", "served"},
                        {"session_id", session_id},
                        {"pair_id", st.pairs[static_cast<size_t>(*s.current)].pair_id},
                        {"at_ms", s.served_at}});
  }
  out.pair_id = st.pairs[static_cast<size_t>(*s.current)].pair_id;
  out.index = *s.current;
  out.time_limit_ms = st.cfg.time_limit_ms;
  out.served_at_ms = s.served_at;
  return out;
}

SubmitResult StudyService::submit(const std::string& session_id, const std::string& pair_id, Verdict verdict) {
  std::lock_guard lock(mu_);
  Session& s = session(session_id);
  const Study& st = study(s.study_id);
  if (std::none_of(st.pairs.begin(), st.pairs.end(), [&](const StudyPair& p) { return p.pair_id == pair_id; })) {
    throw NotFoundError("pair '" + pair_id + "' is not part of this study");
  }
  expire(session_id, s);
  if (s.judged.count(pair_id)) throw ConflictError("pair '" + pair_id + "' already has a judgment");
  if (!s.current || st.pairs[static_cast<size_t>(*s.current)].pair_id != pair_id) {
    throw ConflictError("pair '" + pair_id + "' is not the pair currently served");
  }
  const std::int64_t elapsed = now() - s.served_at;
  record(session_id, s, {pair_id, verdict, elapsed, s.rater_id, s.level, false});
  return {true, false};
}

StudyReport StudyService::report(const std::string& study_id, const std::string& token, bool include_partial) {
  std::lock_guard lock(mu_);
  Study& st = study(study_id);
  if (token != st.token) throw ForbiddenError("bad study token");
  for (const auto& sid : st.sessions) expire(sid, sessions_.at(sid));
  std::map<std::string, bool> truth;
  for (const auto& p : st.pairs) truth[p.pair_id] = p.is_synthetic;
  return aggregate(st.judgments, truth, include_partial);
}

std::string StudyService::image_path(const std::string& session_id, const std::string& pair_id,
                                     const std::string& which) const {
  std::lock_guard lock(mu_);
  const auto sit = sessions_.find(session_id);
  if (sit == sessions_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  const Study& st = studies_.at(sit->second.study_id);
  for (const auto& p : st.pairs) {
    if (p.pair_id != pair_id) continue;
    if (which == "slo") return p.slo_png;
    if (which == "fa") return p.fa_png;
    throw NotFoundError("unknown image '" + which + "'");
  }
  throw NotFoundError("unknown pair '" + pair_id + "'");
}

void StudyService::replay(const json& l) {
  const std::string ev = l.at("event").get<std::string>();
  if (ev == "study") {
    Study s;
    const json& c = l.at("config");
    s.cfg = {c.at("n_pairs").get<int>(), c.at("synthetic_fraction").get<double>(), c.at("seed").get<std::uint64_t>(),
             c.at("time_limit_ms").get<std::int64_t>()};
    s.token = l.at("token").get<std::string>();
    for (const auto& p : l.at("pairs")) {
      s.pairs.push_back({p.at("pair_id").get<std::string>(), p.at("source_id").get<std::string>(),
                         p.at("slo_png").get<std::string>(), p.at("fa_png").get<std::string>(),
                         p.at("is_synthetic").get<bool>()});
    }
    studies_[l.at("study_id").get<std::string>()] = std::move(s);
    return;
  }
  const std::string sid = l.at("session_id").get<std::string>();
  if (ev == "session") {
    return;  // handled by recover(), which knows the study id
  }
  Session& s = sessions_.at(sid);
  const Study& st = studies_.at(s.study_id);
  if (ev == "served") {
    const std::string pid = l.at("pair_id").get<std::string>();
    for (size_t i = 0; i < st.pairs.size(); ++i) {
      if (st.pairs[i].pair_id == pid) s.current = static_cast<int>(i);
    }
    s.position = *s.current + 1;
    s.served_at = l.at("at_ms").get<std::int64_t>();
  } else if (ev == "judgment") {
    const Judgment j = judgment_from(l);
    s.judged[j.pair_id] = true;
    studies_.at(s.study_id).judgments.push_back(j);
    s.current.reset();
  }
}

void StudyService::recover() {
  std::lock_guard lock(mu_);
  studies_.clear();
  sessions_.clear();
  if (!fs::exists(state_dir_)) return;
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(state_dir_)) {
    if (d.is_directory() && fs::exists(d.path() / "journal.jsonl")) dirs.push_back(d.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const std::string study_id = dir.filename().string();
    std::ifstream in(dir / "journal.jsonl");
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const json l = json::parse(line);
      if (l.at("event") == "session") {
        Session s;
        s.study_id = study_id;
        s.rater_id = l.at("rater_id").get<std::string>();
        s.level = parse_level(l.at("rater_level").get<std::string>());
        const std::string sid = l.at("session_id").get<std::string>();
        studies_.at(study_id).sessions.push_back(sid);
        sessions_[sid] = std::move(s);
      } else {
        replay(l);
      }
    }
    const auto dash = study_id.rfind('-');
    if (dash != std::string::npos) {
      counter_ = std::max<std::uint64_t>(counter_, std::strtoull(study_id.c_str() + dash + 1, nullptr, 10));
    }
  }
}

StudyReport report_from_journal(const std::string& path, bool include_partial) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open journal " + path);
  std::map<std::string, bool> truth;
  std::vector<Judgment> judgments;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json l = json::parse(line);
    if (l.at("event") == "study") {
      for (const auto& p : l.at("pairs")) truth[p.at("pair_id").get<std::string>()] = p.at("is_synthetic").get<bool>();
    } else if (l.at("event") == "judgment") {
      judgments.push_back(judgment_from(l));
    }
  }
  return aggregate(judgments, truth, include_partial);
}

}  // namespace angio
