#pragma once

// Claim ingestion: grouping claims into episodes, wait-time/censoring computation
// and temporal train/test splitting. Dates are integer day indices.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace quiltsurv {

enum class ClaimType { inpatient, snf, hospice, outpatient };
enum class DischargeStatus { home, transfer, death, other };

ClaimType claim_type_from_string(std::string_view s);
DischargeStatus discharge_status_from_string(std::string_view s);
std::string_view to_string(ClaimType t);
std::string_view to_string(DischargeStatus s);

struct ClaimRecord {
  std::string person_id;
  std::string provider_id;
  int start_date = 0;
  int end_date = 0;
  ClaimType claim_type = ClaimType::inpatient;
  DischargeStatus discharge_status = DischargeStatus::home;
  // Optional episode attributes carried onto the episode by the last claim.
  int placement = 0;
  bool unplanned = false;
  std::vector<int> cohort;
};

struct EpisodeRecord {
  std::string person_id;
  std::string provider_id;
  ClaimType claim_type = ClaimType::inpatient;
  DischargeStatus discharge_status = DischargeStatus::home;
  int admit_date = 0;
  int discharge_date = 0;
  int placement = 0;                    // 0 = home ... 5 = other less-acute inpatient
  std::vector<std::uint8_t> covariates; // binary, length p
  std::vector<int> cohort;              // one coordinate per cohort axis
  double wait_days = 0.0;
  bool event = false;
  bool unplanned = false;
  std::vector<std::size_t> claim_ids;   // input claims merged into this episode
};

struct Rejection {
  std::size_t index = 0;
  std::string reason;
};

struct GroupingResult {
  std::vector<EpisodeRecord> episodes;
  std::vector<Rejection> rejected;
};

/// Merges successive same-type claims of a person into episodes when they overlap in
/// time, share a provider, and the running episode was not discharged home. Claims
/// with start > end are rejected individually.
GroupingResult group_claims(std::span<const ClaimRecord> claims);

/// Converts episodes back to one claim per episode (used to regroup).
std::vector<ClaimRecord> episodes_as_claims(std::span<const EpisodeRecord> episodes);

/// Sets wait_days/event for every episode: days to the next unplanned acute
/// (inpatient) admission of the same person, or death, whichever is first; otherwise
/// censored at observation_end. Throws DataError when observation_end precedes a discharge.
std::vector<EpisodeRecord> compute_wait(std::span<const EpisodeRecord> episodes,
                                        std::span<const bool> unplanned_flags,
                                        const std::map<std::string, int>& death_dates,
                                        int observation_end);

struct TemporalSplit {
  std::vector<EpisodeRecord> train;
  std::vector<EpisodeRecord> test;
};

/// train: discharge_date < cutoff; test: discharge_date >= cutoff. Logs a warning when
/// either side is empty.
TemporalSplit temporal_split(std::span<const EpisodeRecord> episodes, int cutoff_date);

nlohmann::json episode_to_json(const EpisodeRecord& e);
EpisodeRecord episode_from_json(const nlohmann::json& j);

void write_episodes(const std::filesystem::path& path, std::span<const EpisodeRecord> episodes);
std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path);

/// Loads claims from CSV (header row) or JSON lines, chosen by file extension.
/// Dates are ISO-8601 strings. Required columns: person_id, provider_id, start_date,
/// end_date, claim_type, discharge_status. Optional: placement, unplanned, and one
/// integer column per name in `cohort_axes`. Malformed rows are rejected, not fatal.
struct ClaimLoad {
  std::vector<ClaimRecord> claims;
  std::vector<Rejection> rejected;
};
ClaimLoad load_claims(const std::filesystem::path& path,
                      std::span<const std::string> cohort_axes = {});

}  // namespace quiltsurv
