#include <algorithm>
#include <tuple>

#include "doctest.h"
#include "support.hpp"
#include "utc/memory.hpp"

using namespace utc;

namespace {

CacheKey key(std::vector<Id> zones, double a, double b, std::string task, std::string kind) {
  return CacheKey{std::move(zones), a, b, std::move(task), std::move(kind)};
}

std::string distinct(int i) {
  const std::string n = std::to_string(i);
  return "note w" + n + " x" + n + " y" + n + " z" + n;
}

}  // namespace

TEST_CASE("context cache store semantics") {
  ContextCache c;
  CHECK(c.list().empty());
  CHECK_THROWS_AS(c.get("x"), Error);
  c.put("hotspots_t600", R"([{"lane":"AB"}])", key({"ZA"}, 0, 600, "signal_timing", "hotspots"), 600);
  CHECK(c.get("hotspots_t600") == R"([{"lane":"AB"}])");
  try {
    c.put("hotspots_t600", "[]", {}, 700);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::duplicate);
  }
  c.put("b", "1", {}, 700);
  c.put("a", "2", {}, 800);
  CHECK(c.list() == std::vector<Id>{"hotspots_t600", "b", "a"});
}

TEST_CASE("retrieval order") {
  ContextCache c;
  c.put("exact", "", key({"Z1"}, 0, 600, "signal_timing", "hotspots"), 10);
  c.put("old", "", key({"Z1"}, 0, 600, "signal_timing", "forecast"), 20);
  c.put("new", "", key({"Z1"}, 0, 600, "signal_timing", "forecast"), 30);
  c.put("half", "", key({"Z2"}, 300, 900, "signal_timing", "hotspots"), 40);
  c.put("other", "", key({"Z1"}, 0, 600, "bus_scheduling", "hotspots"), 50);

  const CacheKey q = key({"Z1"}, 0, 600, "signal_timing", "hotspots");
  std::vector<Id> got;
  for (const CacheEntry* e : c.retrieve(q)) got.push_back(e->label);

  // brute force over the documented criteria
  std::vector<const CacheEntry*> all;
  for (const CacheEntry& e : c.entries()) all.push_back(&e);
  auto score = [&](const CacheEntry* e) {
    const bool zones = e->key.zones == q.zones;
    return std::make_tuple(e->key.task == q.task, e->key.kind == q.kind, window_overlap(q, e->key), zones,
                           e->created_at);
  };
  std::sort(all.begin(), all.end(), [&](auto* a, auto* b) { return score(a) > score(b); });
  std::vector<Id> want;
  for (const CacheEntry* e : all) want.push_back(e->label);

  CHECK(got == want);
  CHECK(got == std::vector<Id>{"exact", "half", "new", "old", "other"});
}

TEST_CASE("window overlap") {
  CHECK(window_overlap(key({}, 0, 600, "", ""), key({}, 300, 900, "", "")) == 0.5);
  CHECK(window_overlap(key({}, 100, 100, "", ""), key({}, 0, 600, "", "")) == 1.0);
  CHECK(window_overlap(key({}, 700, 800, "", ""), key({}, 0, 600, "", "")) == 0.0);
}

TEST_CASE("templated insights") {
  std::vector<TaskDelta> d{{"signal_timing", "cycle-split", "08:00-08:30", 0.2},
                           {"bus_scheduling", "headway", "08:00-08:30", -0.1},
                           {"taxi_dispatching", "baseline", "08:00-08:30", 0.0}};
  auto s = summarize_episode(ContextCache{}, d);
  REQUIRE(s.insights.size() == 2);
  CHECK(s.insights[0] == "Task signal_timing improved under plan-kind cycle-split during window 08:00-08:30.");
  CHECK(s.insights[1] == "Task bus_scheduling regressed under plan-kind headway during window 08:00-08:30.");
  CHECK_FALSE(s.fallback);

  auto bad = summarize_episode(ContextCache{}, d, [](const std::string&) { return std::string("no list here"); });
  CHECK(bad.fallback);
  CHECK(bad.insights.size() == 2);

  std::string twelve = "[";
  for (int i = 0; i < 12; ++i) twelve += (i ? ",\"" : "\"") + distinct(i) + "\"";
  twelve += "]";
  auto cut = parse_reflection_array(twelve);
  CHECK(cut.insights.size() == 10);
  CHECK(cut.warnings.size() == 1);
  CHECK_THROWS_AS(parse_reflection_array(R"({"a": 1})"), Error);
}

TEST_CASE("psm update") {
  PsmStore s;
  std::vector<std::string> twelve;
  for (int i = 0; i < 12; ++i) twelve.push_back(distinct(i));
  s = psm_update(s, twelve, "ep1");
  REQUIRE(s.items.size() == 10);
  CHECK(s.items.front().text == distinct(2));
  CHECK(s.items.back().text == distinct(11));

  PsmStore t = psm_update({}, {"Signal cycles near stadium should lengthen after evening events"}, "ep1");
  const std::string near = "Signal cycles near stadium should lengthen after weekend events";
  CHECK(jaccard(t.items[0].text, near) == doctest::Approx(0.8));
  t = psm_update(t, {near}, "ep2");
  REQUIRE(t.items.size() == 1);
  CHECK(t.items[0].weight == 2.0);
  CHECK(t.items[0].text == near);
  CHECK(t.items[0].source_episodes == std::set<std::string>{"ep1", "ep2"});

  CHECK(psm_update(t, {}, "ep3") == t);
  CHECK_THROWS_AS(psm_update(t, {""}, "ep3"), Error);
  CHECK_THROWS_AS(psm_update(t, {"First one. Second one."}, "ep3"), Error);
}

TEST_CASE("psm persistence") {
  auto dir = testing::scratch("psm");
  PsmStore s = psm_update({}, {distinct(1), distinct(2)}, "ep");
  save_psm(s, dir / "psm.json");
  CHECK(load_psm(dir / "psm.json") == s);
  CHECK(load_psm(dir / "missing.json").items.empty());
  CHECK(render_psm(s) == "- " + distinct(1) + "\n- " + distinct(2) + "\n");
}
