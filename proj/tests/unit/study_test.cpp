#include "angio/data/synth.hpp"
#include "angio/study/http.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

namespace angio {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("angio_study_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

// Pairs p01..pNN; the first n_synth are synthetic.
std::vector<StudyPair> fixture_pairs(int n, int n_synth) {
  std::vector<StudyPair> out;
  for (int i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "p%02d", i + 1);
    out.push_back({id, "src" + std::to_string(i), "", "", i < n_synth});
  }
  return out;
}

std::map<std::string, bool> truth_of(const std::vector<StudyPair>& pairs) {
  std::map<std::string, bool> t;
  for (const auto& p : pairs) t[p.pair_id] = p.is_synthetic;
  return t;
}

// A rater who calls `synth_as_real` synthetic pairs real, and every real pair real.
std::vector<Judgment> transcript(const std::vector<StudyPair>& pairs, const std::string& rater, RaterLevel level,
                                 int synth_as_real) {
  std::vector<Judgment> out;
  int called = 0;
  for (const auto& p : pairs) {
    Verdict v = Verdict::kReal;
    if (p.is_synthetic) v = called++ < synth_as_real ? Verdict::kReal : Verdict::kSynthetic;
    out.push_back({p.pair_id, v, 1000, rater, level, false});
  }
  return out;
}

double round2(double v) { return std::round(v * 100) / 100; }

TEST(Aggregate, ReplaysReferenceJudgmentRates) {
  const auto pairs = fixture_pairs(30, 16);
  std::vector<Judgment> all;
  for (const auto& [rater, level, k] : std::vector<std::tuple<std::string, RaterLevel, int>>{
           {"j1", RaterLevel::kJunior, 11}, {"i1", RaterLevel::kIntermediate, 8}, {"s1", RaterLevel::kSenior, 9}}) {
    const auto t = transcript(pairs, rater, level, k);
    all.insert(all.end(), t.begin(), t.end());
  }
  const auto r = aggregate(all, truth_of(pairs));
  EXPECT_DOUBLE_EQ(round2(r.levels.at(RaterLevel::kJunior).fp), 36.67);
  EXPECT_DOUBLE_EQ(round2(r.levels.at(RaterLevel::kIntermediate).fp), 26.67);
  EXPECT_DOUBLE_EQ(round2(r.levels.at(RaterLevel::kSenior).fp), 30.0);
  EXPECT_DOUBLE_EQ(r.levels.at(RaterLevel::kJunior).synthetic_judged_real, 68.75);
  EXPECT_DOUBLE_EQ(r.levels.at(RaterLevel::kIntermediate).synthetic_judged_real, 50.0);
  EXPECT_DOUBLE_EQ(r.levels.at(RaterLevel::kSenior).synthetic_judged_real, 56.25);
  EXPECT_EQ(r.complete_sessions, 3);
}

TEST(Aggregate, AllRealRater) {
  const auto pairs = fixture_pairs(30, 12);  // 18 real, 12 synthetic
  const auto r = aggregate(transcript(pairs, "a", RaterLevel::kJunior, 12), truth_of(pairs));
  const auto& c = r.levels.at(RaterLevel::kJunior);
  EXPECT_DOUBLE_EQ(c.fp, 100.0 * 12 / 30);
  EXPECT_DOUBLE_EQ(c.tp, 100.0 * 18 / 30);
  EXPECT_DOUBLE_EQ(c.tn, 0.0);
  EXPECT_DOUBLE_EQ(c.fn, 0.0);
  EXPECT_DOUBLE_EQ(c.synthetic_judged_real, 100.0);
}

TEST(Aggregate, PerfectRater) {
  const auto pairs = fixture_pairs(30, 15);
  const auto c = aggregate(transcript(pairs, "p", RaterLevel::kSenior, 0), truth_of(pairs)).levels.at(RaterLevel::kSenior);
  EXPECT_EQ(c.fp, 0.0);
  EXPECT_EQ(c.fn, 0.0);
  EXPECT_DOUBLE_EQ(c.tp + c.tn + c.fp + c.fn, 100.0);
}

TEST(Aggregate, AveragesRatersWithinLevel) {
  const auto pairs = fixture_pairs(30, 16);
  auto a = transcript(pairs, "x", RaterLevel::kIntermediate, 4);
  const auto b = transcript(pairs, "y", RaterLevel::kIntermediate, 10);
  a.insert(a.end(), b.begin(), b.end());
  const auto c = aggregate(a, truth_of(pairs)).levels.at(RaterLevel::kIntermediate);
  EXPECT_DOUBLE_EQ(c.fp, (100.0 * 4 / 30 + 100.0 * 10 / 30) / 2);
  EXPECT_EQ(c.n_raters, 2);
}

TEST(Aggregate, PartialSessionsNeedFlag) {
  const auto pairs = fixture_pairs(10, 5);
  auto t = transcript(pairs, "x", RaterLevel::kJunior, 2);
  t.pop_back();
  EXPECT_THROW(aggregate(t, truth_of(pairs)), std::invalid_argument);
  const auto r = aggregate(t, truth_of(pairs), true);
  EXPECT_EQ(r.partial_sessions, 1);
  const auto& c = r.levels.at(RaterLevel::kJunior);
  EXPECT_NEAR(c.tp + c.tn + c.fp + c.fn, 100.0, 1e-9);
}

TEST(Aggregate, RejectsDuplicatesAndUnknownPairs) {
  const auto pairs = fixture_pairs(4, 2);
  auto t = transcript(pairs, "x", RaterLevel::kJunior, 0);
  t.push_back(t.front());
  EXPECT_THROW(aggregate(t, truth_of(pairs)), ConflictError);
  EXPECT_THROW(aggregate({{"zz", Verdict::kReal, 0, "x", RaterLevel::kJunior, false}}, truth_of(pairs)), NotFoundError);
}

class FakeClock {
 public:
  std::int64_t t = 1'000'000;
  StudyService::Clock fn() {
    return [this] { return t; };
  }
};

TEST(Service, ForwardOnlyPresentation) {
  FakeClock clock;
  StudyService svc(temp_dir("fwd"), clock.fn());
  const auto [study, token] = svc.create_study({3, 0.5, 0, 30000}, fixture_pairs(3, 1));
  const auto sid = svc.create_session(study, RaterLevel::kJunior);
  const auto a = svc.next_pair(sid);
  EXPECT_EQ(a.pair_id, "p01");
  EXPECT_EQ(svc.next_pair(sid).pair_id, "p01");  // unanswered pair is served again
  EXPECT_THROW(svc.submit(sid, "p02", Verdict::kReal), ConflictError);
  clock.t += 1200;
  EXPECT_TRUE(svc.submit(sid, "p01", Verdict::kSynthetic).accepted);
  EXPECT_THROW(svc.submit(sid, "p01", Verdict::kReal), ConflictError);
  EXPECT_EQ(svc.next_pair(sid).pair_id, "p02");
  svc.submit(sid, "p02", Verdict::kReal);
  EXPECT_EQ(svc.next_pair(sid).pair_id, "p03");
  svc.submit(sid, "p03", Verdict::kReal);
  EXPECT_TRUE(svc.next_pair(sid).done);
  const auto r = svc.report(study, token);
  EXPECT_EQ(r.complete_sessions, 1);
  EXPECT_THROW(svc.report(study, "wrong"), ForbiddenError);
}

TEST(Service, UnknownIds) {
  StudyService svc(temp_dir("unknown"));
  EXPECT_THROW(svc.next_pair("nope"), NotFoundError);
  EXPECT_THROW(svc.create_session("nope", RaterLevel::kJunior), NotFoundError);
  const auto [study, token] = svc.create_study({}, fixture_pairs(2, 1));
  const auto sid = svc.create_session(study, RaterLevel::kSenior);
  svc.next_pair(sid);
  EXPECT_THROW(svc.submit(sid, "p99", Verdict::kReal), NotFoundError);
  EXPECT_THROW(svc.create_study({}, {}), std::invalid_argument);
}

TEST(Service, TimeoutRecordsRealAndFlags) {
  FakeClock clock;
  const std::string dir = temp_dir("timeout");
  StudyService svc(dir, clock.fn());
  const auto [study, token] = svc.create_study({2, 0.5, 0, 1000}, fixture_pairs(2, 1));
  const auto sid = svc.create_session(study, RaterLevel::kJunior, "r1");
  EXPECT_EQ(svc.next_pair(sid).time_limit_ms, 1000);
  clock.t += 1001;
  const auto second = svc.next_pair(sid);
  EXPECT_EQ(second.pair_id, "p02");
  EXPECT_THROW(svc.submit(sid, "p01", Verdict::kSynthetic), ConflictError);  // too late
  clock.t += 999;
  svc.submit(sid, "p02", Verdict::kSynthetic);
  const auto r = svc.report(study, token);
  // p01 (synthetic) defaulted to real -> FP; p02 (real) called synthetic -> FN.
  EXPECT_DOUBLE_EQ(r.levels.at(RaterLevel::kJunior).fp, 50.0);
  EXPECT_DOUBLE_EQ(r.levels.at(RaterLevel::kJunior).fn, 50.0);

  std::ifstream in(svc.journal_path(study));
  bool saw = false;
  for (std::string line; std::getline(in, line);) {
    const auto j = json::parse(line);
    if (j["event"] == "judgment" && j["pair_id"] == "p01") {
      saw = true;
      EXPECT_TRUE(j["timed_out"].get<bool>());
      EXPECT_EQ(j["verdict"], "real");
    }
    if (j["event"] == "judgment" && j["pair_id"] == "p02") {
      EXPECT_FALSE(j["timed_out"].get<bool>());
      EXPECT_LE(j["elapsed_ms"].get<int>(), 1000);
    }
  }
  EXPECT_TRUE(saw);
}

TEST(Service, JournalReplayAndRecovery) {
  FakeClock clock;
  const std::string dir = temp_dir("journal");
  std::string study, token, sid;
  {
    StudyService svc(dir, clock.fn());
    std::tie(study, token) = svc.create_study({4, 0.5, 0, 30000}, fixture_pairs(4, 2));
    sid = svc.create_session(study, RaterLevel::kSenior, "dr");
    for (int i = 0; i < 2; ++i) {
      const auto p = svc.next_pair(sid);
      svc.submit(sid, p.pair_id, Verdict::kSynthetic);
    }
    svc.next_pair(sid);  // p03 served, then the process dies
  }
  StudyService again(dir, clock.fn());
  again.recover();
  EXPECT_EQ(again.next_pair(sid).pair_id, "p03");
  again.submit(sid, "p03", Verdict::kReal);
  EXPECT_EQ(again.next_pair(sid).pair_id, "p04");
  again.submit(sid, "p04", Verdict::kReal);
  EXPECT_THROW(again.create_session(study, RaterLevel::kJunior, "dr"), ConflictError);
  const auto live = again.report(study, token).to_json();
  EXPECT_EQ(report_from_journal(again.journal_path(study)).to_json(), live);
  EXPECT_DOUBLE_EQ(live["levels"]["senior"]["tn"].get<double>(), 50.0);
  EXPECT_DOUBLE_EQ(live["levels"]["senior"]["tp"].get<double>(), 50.0);
}

std::string make_dataset(const std::string& dir, int n) {
  SynthConfig sc;
  sc.n_pairs = n;
  sc.height = 32;
  sc.width = 32;
  write_synth_dataset(dir + "/data", sc, 0.2);
  return dir + "/data";
}

Image flat_fa(const Image& slo) {
  Image fa(Shape{1, 1, slo.h(), slo.w()});
  for (Index i = 0; i < fa.size(); ++i) fa.data()[i] = 0.25f;
  return fa;
}

TEST(BuildStudy, ThirtyPairsReproducible) {
  const std::string dir = temp_dir("build");
  const std::string data = make_dataset(dir, 40);  // 32 test pairs
  StudyConfig cfg;
  cfg.seed = 4;
  const auto a = build_study(data, cfg, flat_fa, dir + "/img_a");
  const auto b = build_study(data, cfg, flat_fa, dir + "/img_b");
  ASSERT_EQ(a.size(), 30u);
  int synth = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].source_id, b[i].source_id);
    EXPECT_EQ(a[i].is_synthetic, b[i].is_synthetic);
    synth += a[i].is_synthetic;
    EXPECT_TRUE(fs::exists(a[i].fa_png));
  }
  EXPECT_EQ(synth, 15);
  cfg.n_pairs = 33;
  EXPECT_THROW(build_study(data, cfg, flat_fa, dir + "/img_c"), std::invalid_argument);
  fs::remove_all(dir);
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir("http");
    StudyServerOptions opts;
    opts.dataset_root = make_dataset(dir_, 40);
    opts.generator = flat_fa;
    opts.image_dir = dir_ + "/images";
    svc_ = std::make_unique<StudyService>(dir_ + "/state");
    server_ = std::make_unique<StudyHttpServer>(*svc_, opts);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_->stop();
    fs::remove_all(dir_);
  }

  json post(const std::string& path, const json& body, int expect) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
  }
  json get(const std::string& path, int expect) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
  }

  std::map<std::string, bool> server_truth(const std::string& study) {
    std::ifstream in(svc_->journal_path(study));
    std::string first;
    std::getline(in, first);
    std::map<std::string, bool> t;
    const json head = json::parse(first);
    for (const auto& p : head["pairs"]) t[p["pair_id"].get<std::string>()] = p["is_synthetic"].get<bool>();
    return t;
  }

  std::string dir_;
  std::unique_ptr<StudyService> svc_;
  std::unique_ptr<StudyHttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(Http, ScriptedThirtyPairSession) {
  const auto created = post("/studies", {{"n_pairs", 30}, {"seed", 2}}, 201);
  const std::string study = created["study_id"], token = created["token"];
  const std::string sid = post("/studies/" + study + "/sessions", {{"rater_level", "intermediate"}}, 201)["session_id"];

  // Scripted rater: alternates verdicts by position.
  std::vector<std::pair<std::string, std::string>> answers;
  for (int i = 0;; ++i) {
    const auto p = get("/sessions/" + sid + "/next", 200);
    if (p["done"].get<bool>()) break;
    for (const auto& [k, v] : p.items()) {
      EXPECT_EQ(k.find("synth"), std::string::npos) << k;
      EXPECT_NE(k, "source_id");
    }
    EXPECT_EQ(p["time_limit_ms"], 30000);
    auto img = client_->Get(p["fa_url"].get<std::string>());
    ASSERT_TRUE(img);
    EXPECT_EQ(img->status, 200);
    EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(img->body.substr(1, 3), "PNG");
    const std::string verdict = i % 3 == 0 ? "synthetic" : "real";
    post("/sessions/" + sid + "/judgments", {{"pair_id", p["pair_id"]}, {"verdict", verdict}}, 200);
    answers.emplace_back(p["pair_id"], verdict);
  }
  ASSERT_EQ(answers.size(), 30u);

  int tp = 0, tn = 0, fp = 0, fn = 0;
  const auto truth = server_truth(study);
  for (const auto& [pid, v] : answers) {
    const bool synth = truth.at(pid), real_call = v == "real";
    tp += !synth && real_call;
    tn += synth && !real_call;
    fp += synth && real_call;
    fn += !synth && !real_call;
  }
  const auto report = get("/studies/" + study + "/report?token=" + token, 200);
  const auto& lv = report["levels"]["intermediate"];
  EXPECT_DOUBLE_EQ(lv["tp"].get<double>(), 100.0 * tp / 30);
  EXPECT_DOUBLE_EQ(lv["tn"].get<double>(), 100.0 * tn / 30);
  EXPECT_DOUBLE_EQ(lv["fp"].get<double>(), 100.0 * fp / 30);
  EXPECT_DOUBLE_EQ(lv["fn"].get<double>(), 100.0 * fn / 30);
}

TEST_F(Http, ErrorStatuses) {
  const auto created = post("/studies", {{"n_pairs", 4}, {"seed", 1}}, 201);
  const std::string study = created["study_id"];
  post("/studies", {{"pairs", 4}}, 400);
  post("/studies/nope/sessions", {{"rater_level", "junior"}}, 404);
  post("/studies/" + study + "/sessions", {{"rater_level", "expert"}}, 400);
  const std::string sid = post("/studies/" + study + "/sessions", {{"rater_level", "junior"}}, 201)["session_id"];
  get("/sessions/nope/next", 404);
  const auto p = get("/sessions/" + sid + "/next", 200);
  post("/sessions/" + sid + "/judgments", {{"pair_id", p["pair_id"]}, {"verdict", "maybe"}}, 400);
  post("/sessions/" + sid + "/judgments", {{"pair_id", p["pair_id"]}, {"verdict", "real"}}, 200);
  post("/sessions/" + sid + "/judgments", {{"pair_id", p["pair_id"]}, {"verdict", "real"}}, 409);
  post("/sessions/nope/judgments", {{"pair_id", "p01"}, {"verdict", "real"}}, 404);
  get("/studies/" + study + "/report?token=bad", 403);
  get("/studies/" + study + "/report?token=" + created["token"].get<std::string>(), 409);  // nothing complete yet
  get("/studies/" + study + "/report?include_partial=1&token=" + created["token"].get<std::string>(), 200);
  auto bad = client_->Post("/studies", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST_F(Http, OneSecondLimitAutoAdvances) {
  const auto created = post("/studies", {{"n_pairs", 2}, {"time_limit_ms", 1000}, {"seed", 3}}, 201);
  const std::string study = created["study_id"], token = created["token"];
  const std::string sid = post("/studies/" + study + "/sessions", {{"rater_level", "senior"}}, 201)["session_id"];
  const auto first = get("/sessions/" + sid + "/next", 200);
  EXPECT_EQ(first["index"], 0);
  std::this_thread::sleep_for(std::chrono::milliseconds(1150));
  const auto second = get("/sessions/" + sid + "/next", 200);
  EXPECT_EQ(second["index"], 1);
  post("/sessions/" + sid + "/judgments", {{"pair_id", first["pair_id"]}, {"verdict", "synthetic"}}, 409);
  post("/sessions/" + sid + "/judgments", {{"pair_id", second["pair_id"]}, {"verdict", "synthetic"}}, 200);
  EXPECT_TRUE(get("/sessions/" + sid + "/next", 200)["done"].get<bool>());
  const auto truth = server_truth(study);
  const auto report = get("/studies/" + study + "/report?token=" + token, 200)["levels"]["senior"];
  // first pair defaulted to real
  const double first_as_real = truth.at(first["pair_id"].get<std::string>()) ? report["fp"].get<double>() : report["tp"].get<double>();
  EXPECT_GE(first_as_real, 50.0);
}

}  // namespace
}  // namespace angio
