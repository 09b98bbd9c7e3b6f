#include "utc/memory.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include "utc/error.hpp"

namespace utc {

void ContextCache::put(const Id& label, std::string value, CacheKey key, std::uint64_t created_at) {
  if (label.empty()) throw Error(Errc::precondition, "cache label must be non-empty");
  for (const CacheEntry& e : entries_) {
    if (e.label == label) throw Error(Errc::duplicate, "cache label '" + label + "' already used this episode");
  }
  if (!entries_.empty() && created_at < entries_.back().created_at) {
    throw Error(Errc::precondition, "cache entries must be created in tick order");
  }
  std::sort(key.zones.begin(), key.zones.end());
  entries_.push_back(CacheEntry{label, std::move(key), std::move(value), created_at});
}

const std::string& ContextCache::get(const Id& label) const {
  for (const CacheEntry& e : entries_) {
    if (e.label == label) return e.value;
  }
  throw Error(Errc::not_found, "no cache entry labelled '" + label + "'");
}

std::vector<Id> ContextCache::list() const {
  std::vector<Id> out;
  for (const CacheEntry& e : entries_) out.push_back(e.label);
  return out;
}

double window_overlap(const CacheKey& q, const CacheKey& e) {
  const double len = q.window_end - q.window_start;
  if (!(len > 0.0)) return (q.window_start >= e.window_start && q.window_start <= e.window_end) ? 1.0 : 0.0;
  const double inter = std::min(q.window_end, e.window_end) - std::max(q.window_start, e.window_start);
  return std::clamp(inter / len, 0.0, 1.0);
}

namespace {

double zone_overlap(std::vector<Id> a, const std::vector<Id>& b) {
  std::sort(a.begin(), a.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<Id> both, any;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(any));
  return static_cast<double>(both.size()) / static_cast<double>(any.size());
}

}  // namespace

std::vector<const CacheEntry*> ContextCache::retrieve(const CacheKey& query) const {
  using Score = std::tuple<int, int, double, double, std::uint64_t>;
  std::vector<std::pair<Score, const CacheEntry*>> scored;
  for (const CacheEntry& e : entries_) {
    scored.push_back({Score{e.key.task == query.task, e.key.kind == query.kind, window_overlap(query, e.key),
                            zone_overlap(query.zones, e.key.zones), e.created_at},
                      &e});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->label < b.second->label;
  });
  std::vector<const CacheEntry*> out;
  for (const auto& [score, e] : scored) out.push_back(e);
  return out;
}

nlohmann::json to_json(const CacheKey& k) {
  return {{"zones", k.zones}, {"window", {k.window_start, k.window_end}}, {"task", k.task}, {"kind", k.kind}};
}

CacheKey cache_key_from_json(const nlohmann::json& j) {
  CacheKey k;
  if (!j.is_object()) return k;
  k.zones = j.value("zones", std::vector<Id>{});
  if (auto w = j.find("window"); w != j.end() && w->is_array() && w->size() == 2) {
    k.window_start = (*w)[0].get<double>();
    k.window_end = (*w)[1].get<double>();
  }
  k.task = j.value("task", "");
  k.kind = j.value("kind", "");
  return k;
}

// ---- procedural memory ---------------------------------------------------

std::set<std::string> insight_tokens(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      if (!cur.empty()) out.insert(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

double jaccard(const std::string& a, const std::string& b) {
  const auto ta = insight_tokens(a), tb = insight_tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t both = 0;
  for (const auto& t : ta) both += tb.count(t);
  return static_cast<double>(both) / static_cast<double>(ta.size() + tb.size() - both);
}

bool valid_insight(const std::string& text) {
  if (insight_tokens(text).empty()) return false;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      // Terminator followed by more words starts a second sentence.
      const auto rest = text.find_first_not_of(" \t\r\n", i + 1);
      if (rest != std::string::npos && std::isupper(static_cast<unsigned char>(text[rest]))) return false;
    }
  }
  return text.find('\n') == std::string::npos;
}

PsmStore psm_update(PsmStore store, const std::vector<std::string>& candidates, const std::string& episode) {
  for (const std::string& text : candidates) {
    if (!valid_insight(text)) throw Error(Errc::precondition, "invalid insight (need one non-empty sentence): " + text);
    auto& items = store.items;
    std::size_t best = items.size();
    double best_sim = kPsmMergeThreshold;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const double sim = jaccard(items[k].text, text);
      if (sim >= best_sim && (best == items.size() || sim > best_sim)) {
        best = k;
        best_sim = sim;
      }
    }
    if (best < items.size()) {
      ProceduralInsight& it = items[best];
      it.text = text;
      it.weight += 1.0;
      it.source_episodes.insert(episode);
      it.last_updated = episode;
      // The new text may now be close to another entry; fold those in too.
      for (std::size_t k = 0; k < items.size();) {
        if (k != best && jaccard(items[k].text, it.text) >= kPsmMergeThreshold) {
          it.weight += items[k].weight;
          it.source_episodes.insert(items[k].source_episodes.begin(), items[k].source_episodes.end());
          items.erase(items.begin() + static_cast<std::ptrdiff_t>(k));
          if (k < best) --best;
        } else {
          ++k;
        }
      }
    } else {
      items.push_back(ProceduralInsight{text, 1.0, {episode}, episode});
    }
    while (items.size() > kPsmCapacity) {
      auto low = std::min_element(items.begin(), items.end(),
                                  [](const ProceduralInsight& a, const ProceduralInsight& b) { return a.weight < b.weight; });
      items.erase(low);
    }
  }
  return store;
}

nlohmann::json to_json(const PsmStore& store) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& it : store.items) {
    arr.push_back({{"text", it.text},
                   {"weight", it.weight},
                   {"source_episodes", it.source_episodes},
                   {"last_updated", it.last_updated}});
  }
  return arr;
}

PsmStore psm_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::parse, "procedural memory file must hold an array");
  PsmStore store;
  try {
    for (const auto& e : j) {
      ProceduralInsight it;
      it.text = e.at("text").get<std::string>();
      it.weight = e.value("weight", 1.0);
      it.source_episodes = e.value("source_episodes", std::set<std::string>{});
      it.last_updated = e.value("last_updated", "");
      if (!(it.weight > 0.0)) throw Error(Errc::parse, "insight weight must be positive");
      store.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("procedural memory: ") + e.what());
  }
  if (store.items.size() > kPsmCapacity) throw Error(Errc::parse, "procedural memory holds more than 10 items");
  return store;
}

PsmStore load_psm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return psm_from_json(read_json_file(path));
}

void save_psm(const PsmStore& store, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    out << to_json(store).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::string render_psm(const PsmStore& store) {
  std::string out;
  for (const auto& it : store.items) out += "- " + it.text + "\n";
  return out;
}

// ---- reflection ------------------------------------------------------------

SummaryResult parse_reflection_array(const std::string& text) {
  SummaryResult r;
  std::string body = text;
  // Accept a fenced ```json block, otherwise the first '[' onwards.
  if (auto fence = body.find("```"); fence != std::string::npos) {
    auto start = body.find('\n', fence);
    auto end = start == std::string::npos ? std::string::npos : body.find("```", start);
    if (end == std::string::npos) throw Error(Errc::parse, "unterminated code fence in reflection reply");
    body = body.substr(start + 1, end - start - 1);
  } else if (auto open = body.find('['); open != std::string::npos) {
    body = body.substr(open);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("reflection reply is not JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(Errc::parse, "reflection reply must be a JSON array of strings");
  for (const auto& e : j) {
    if (!e.is_string()) throw Error(Errc::parse, "reflection array items must be strings");
    r.insights.push_back(e.get<std::string>());
  }
  if (r.insights.size() > kPsmCapacity) {
    r.warnings.push_back("reflection array had " + std::to_string(r.insights.size()) + " items; truncated to 10");
    r.insights.resize(kPsmCapacity);
  }
  return r;
}

std::vector<std::string> template_insights(const std::vector<TaskDelta>& deltas) {
  std::vector<std::string> out;
  for (const TaskDelta& d : deltas) {
    if (d.relative_improvement == 0.0) continue;
    std::ostringstream s;
    s << "Task " << d.task << (d.relative_improvement > 0.0 ? " improved" : " regressed") << " under plan-kind "
      << d.plan_kind << " during window " << d.window << ".";
    out.push_back(s.str());
  }
  return out;
}

SummaryResult summarize_episode(const ContextCache& cache, const std::vector<TaskDelta>& deltas,
                                const Summarizer& external) {
  if (external) {
    std::ostringstream prompt;
    prompt << "You have just completed an optimization session.\n";
    prompt << "Cached analyses: ";
    for (const Id& l : cache.list()) prompt << l << ' ';
    prompt << "\nModule results:\n";
    for (const TaskDelta& d : deltas) {
      prompt << "- " << d.task << " (" << d.plan_kind << ", " << d.window << "): relative improvement "
             << d.relative_improvement << "\n";
    }
    prompt << "Final response: ACTION: REFLECTION_FINISH with only an updated memory list (JSON array of strings "
              "in a json block).\nReturn a valid JSON array (max. 10 items); one sentence per item.\n";
    try {
      SummaryResult r = parse_reflection_array(external(prompt.str()));
      std::erase_if(r.insights, [&](const std::string& s) {
        if (valid_insight(s)) return false;
        r.warnings.push_back("dropped invalid insight: " + s);
        return true;
      });
      return r;
    } catch (const std::exception& e) {
      SummaryResult r{template_insights(deltas), true, {std::string("external summarizer failed: ") + e.what()}};
      return r;
    }
  }
  return SummaryResult{template_insights(deltas), false, {}};
}

}  // namespace utc
