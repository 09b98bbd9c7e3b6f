#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/network.hpp"

namespace utc {

inline constexpr std::size_t kPsmCapacity = 10;
inline constexpr double kPsmMergeThreshold = 0.6;

struct CacheKey {
  std::vector<Id> zones;
  double window_start = 0.0;
  double window_end = 0.0;
  std::string task;
  std::string kind;
};

struct CacheEntry {
  Id label;
  CacheKey key;
  std::string value;  // serialized artifact, stored verbatim
  std::uint64_t created_at = 0;
};

/// Episodic cache of analysis artifacts. Entries are immutable once stored.
class ContextCache {
 public:
  void put(const Id& label, std::string value, CacheKey key, std::uint64_t created_at);
  const std::string& get(const Id& label) const;
  std::vector<Id> list() const;
  const std::vector<CacheEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Ranked by task match, kind match, time-window overlap, zone overlap,
  /// recency, then label.
  std::vector<const CacheEntry*> retrieve(const CacheKey& query) const;

 private:
  std::vector<CacheEntry> entries_;
};

/// Fraction of the query window covered by the entry window. A zero-length
/// query counts as covered when its instant lies inside the entry window.
double window_overlap(const CacheKey& query, const CacheKey& entry);

nlohmann::json to_json(const CacheKey& k);
CacheKey cache_key_from_json(const nlohmann::json& j);

struct ProceduralInsight {
  std::string text;
  double weight = 1.0;
  std::set<std::string> source_episodes;
  std::string last_updated;

  friend bool operator==(const ProceduralInsight&, const ProceduralInsight&) = default;
};

/// Case-folded, punctuation-stripped, whitespace-split tokens.
std::set<std::string> insight_tokens(const std::string& text);
double jaccard(const std::string& a, const std::string& b);
/// Non-empty text with one sentence (no terminator followed by more text).
bool valid_insight(const std::string& text);

/// Bounded store in insertion order; older entries come first.
struct PsmStore {
  std::vector<ProceduralInsight> items;
  friend bool operator==(const PsmStore&, const PsmStore&) = default;
};

/// Merge each candidate into the most similar entry (Jaccard >= 0.6; newer
/// text, weight + 1) or append it with weight 1, then prune the lowest weight
/// (oldest among ties) down to capacity. Invalid candidates raise precondition.
PsmStore psm_update(PsmStore store, const std::vector<std::string>& candidates, const std::string& episode);

nlohmann::json to_json(const PsmStore& store);
PsmStore psm_from_json(const nlohmann::json& j);
PsmStore load_psm(const std::filesystem::path& path);  // missing file: empty store
void save_psm(const PsmStore& store, const std::filesystem::path& path);
/// One bullet per item, as injected into the agent's memory section.
std::string render_psm(const PsmStore& store);

struct TaskDelta {
  std::string task;
  std::string plan_kind;
  std::string window;
  double relative_improvement = 0.0;
};

struct SummaryResult {
  std::vector<std::string> insights;
  bool fallback = false;
  std::vector<std::string> warnings;
};

/// Strict REFLECTION_FINISH payload: a JSON array of strings. Arrays longer
/// than 10 are truncated with a warning.
SummaryResult parse_reflection_array(const std::string& text);

/// Text-in/text-out summarizer; receives the reflection prompt.
using Summarizer = std::function<std::string(const std::string&)>;

/// External summarizer when given, else templated sentences from the deltas.
/// Malformed external output falls back to the templates.
SummaryResult summarize_episode(const ContextCache& cache, const std::vector<TaskDelta>& deltas,
                                const Summarizer& external = {});
std::vector<std::string> template_insights(const std::vector<TaskDelta>& deltas);

}  // namespace utc
