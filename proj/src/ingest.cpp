#include "quiltsurv/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <tuple>

#include <spdlog/spdlog.h>

#include "quiltsurv/common.hpp"
#include "quiltsurv/io.hpp"

namespace quiltsurv {

ClaimType claim_type_from_string(std::string_view s) {
  if (s == "inpatient" || s == "inp") return ClaimType::inpatient;
  if (s == "snf") return ClaimType::snf;
  if (s == "hospice" || s == "hosp") return ClaimType::hospice;
  if (s == "outpatient" || s == "out" || s == "car") return ClaimType::outpatient;
  throw DataError("unknown claim type '" + std::string(s) + "'");
}

DischargeStatus discharge_status_from_string(std::string_view s) {
  if (s == "home") return DischargeStatus::home;
  if (s == "transfer") return DischargeStatus::transfer;
  if (s == "death") return DischargeStatus::death;
  if (s == "other") return DischargeStatus::other;
  throw DataError("unknown discharge status '" + std::string(s) + "'");
}

std::string_view to_string(ClaimType t) {
  switch (t) {
    case ClaimType::inpatient: return "inpatient";
    case ClaimType::snf: return "snf";
    case ClaimType::hospice: return "hospice";
    case ClaimType::outpatient: return "outpatient";
  }
  return "inpatient";
}

std::string_view to_string(DischargeStatus s) {
  switch (s) {
    case DischargeStatus::home: return "home";
    case DischargeStatus::transfer: return "transfer";
    case DischargeStatus::death: return "death";
    case DischargeStatus::other: return "other";
  }
  return "other";
}

GroupingResult group_claims(std::span<const ClaimRecord> claims) {
  GroupingResult result;
  std::vector<std::size_t> order;
  order.reserve(claims.size());
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (claims[i].start_date > claims[i].end_date) {
      result.rejected.push_back({i, "start_date after end_date"});
      spdlog::warn("claim {} rejected: start_date {} after end_date {}", i, claims[i].start_date,
                   claims[i].end_date);
      continue;
    }
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = claims[a];
    const auto& y = claims[b];
    return std::tie(x.person_id, x.claim_type, x.provider_id, x.start_date, x.end_date) <
           std::tie(y.person_id, y.claim_type, y.provider_id, y.start_date, y.end_date);
  });

  auto open_episode = [&](std::size_t i) {
    const auto& c = claims[i];
    EpisodeRecord e;
    e.person_id = c.person_id;
    e.provider_id = c.provider_id;
    e.claim_type = c.claim_type;
    e.discharge_status = c.discharge_status;
    e.admit_date = c.start_date;
    e.discharge_date = c.end_date;
    e.placement = c.placement;
    e.unplanned = c.unplanned;
    e.cohort = c.cohort;
    e.claim_ids = {i};
    return e;
  };

  std::vector<EpisodeRecord> episodes;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t i = order[pos];
    const auto& c = claims[i];
    if (!episodes.empty()) {
      auto& running = episodes.back();
      const bool same_stream = running.person_id == c.person_id &&
                               running.claim_type == c.claim_type &&
                               running.provider_id == c.provider_id;
      const bool overlaps = c.start_date <= running.discharge_date;
      if (same_stream && overlaps && running.discharge_status != DischargeStatus::home) {
        running.claim_ids.push_back(i);
        if (c.end_date >= running.discharge_date) {
          // The claim that ends last determines the episode's discharge attributes.
          running.discharge_date = c.end_date;
          running.discharge_status = c.discharge_status;
          running.placement = c.placement;
          running.cohort = c.cohort;
        }
        running.unplanned = running.unplanned || c.unplanned;
        continue;
      }
    }
    episodes.push_back(open_episode(i));
  }

  std::stable_sort(episodes.begin(), episodes.end(), [](const auto& a, const auto& b) {
    return std::tie(a.person_id, a.admit_date, a.discharge_date, a.claim_type, a.provider_id) <
           std::tie(b.person_id, b.admit_date, b.discharge_date, b.claim_type, b.provider_id);
  });
  result.episodes = std::move(episodes);
  return result;
}

std::vector<ClaimRecord> episodes_as_claims(std::span<const EpisodeRecord> episodes) {
  std::vector<ClaimRecord> claims;
  claims.reserve(episodes.size());
  for (const auto& e : episodes) {
    ClaimRecord c;
    c.person_id = e.person_id;
    c.provider_id = e.provider_id;
    c.start_date = e.admit_date;
    c.end_date = e.discharge_date;
    c.claim_type = e.claim_type;
    c.discharge_status = e.discharge_status;
    c.placement = e.placement;
    c.unplanned = e.unplanned;
    c.cohort = e.cohort;
    claims.push_back(std::move(c));
  }
  return claims;
}

std::vector<EpisodeRecord> compute_wait(std::span<const EpisodeRecord> episodes,
                                        std::span<const bool> unplanned_flags,
                                        const std::map<std::string, int>& death_dates,
                                        int observation_end) {
  if (unplanned_flags.size() != episodes.size())
    throw DataError("one unplanned flag per episode is required");
  // Unplanned acute admission dates per person, sorted.
  std::map<std::string, std::vector<std::pair<int, std::size_t>>> acute;
  for (std::size_t i = 0; i < episodes.size(); ++i)
    if (unplanned_flags[i] && episodes[i].claim_type == ClaimType::inpatient)
      acute[episodes[i].person_id].emplace_back(episodes[i].admit_date, i);
  for (auto& [_, dates] : acute) std::sort(dates.begin(), dates.end());

  std::vector<EpisodeRecord> out(episodes.begin(), episodes.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& e = out[i];
    if (observation_end < e.discharge_date)
      throw DataError("observation_end " + std::to_string(observation_end) +
                      " precedes discharge date " + std::to_string(e.discharge_date) +
                      " of person " + e.person_id);
    int event_date = observation_end + 1;
    if (auto it = acute.find(e.person_id); it != acute.end()) {
      // Next admission on or after the discharge day, other than this episode itself.
      for (const auto& [d, j] : it->second) {
        if (d < e.discharge_date || j == i) continue;
        event_date = d;
        break;
      }
    }
    if (auto it = death_dates.find(e.person_id);
        it != death_dates.end() && it->second >= e.discharge_date)
      event_date = std::min(event_date, it->second);
    if (event_date <= observation_end) {
      e.wait_days = event_date - e.discharge_date;
      e.event = true;
    } else {
      e.wait_days = observation_end - e.discharge_date;
      e.event = false;
    }
  }
  return out;
}

TemporalSplit temporal_split(std::span<const EpisodeRecord> episodes, int cutoff_date) {
  TemporalSplit split;
  for (const auto& e : episodes)
    (e.discharge_date < cutoff_date ? split.train : split.test).push_back(e);
  if (split.train.empty()) spdlog::warn("temporal split: training side is empty");
  if (split.test.empty()) spdlog::warn("temporal split: test side is empty");
  return split;
}

nlohmann::json episode_to_json(const EpisodeRecord& e) {
  return {{"person_id", e.person_id},
          {"provider_id", e.provider_id},
          {"claim_type", to_string(e.claim_type)},
          {"discharge_status", to_string(e.discharge_status)},
          {"admit_date", e.admit_date},
          {"discharge_date", e.discharge_date},
          {"placement", e.placement},
          {"covariates", e.covariates},
          {"cohort", e.cohort},
          {"wait_days", e.wait_days},
          {"event", e.event}};
}

EpisodeRecord episode_from_json(const nlohmann::json& j) {
  EpisodeRecord e;
  try {
    e.person_id = j.at("person_id").get<std::string>();
    e.provider_id = j.value("provider_id", std::string{});
    e.claim_type = claim_type_from_string(j.value("claim_type", std::string("inpatient")));
    e.discharge_status = discharge_status_from_string(j.value("discharge_status", std::string("home")));
    e.admit_date = j.value("admit_date", 0);
    e.discharge_date = j.at("discharge_date").get<int>();
    e.placement = j.at("placement").get<int>();
    e.covariates = j.value("covariates", std::vector<std::uint8_t>{});
    e.cohort = j.at("cohort").get<std::vector<int>>();
    e.wait_days = j.at("wait_days").get<double>();
    e.event = j.at("event").get<bool>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed episode record: ") + ex.what());
  }
  if (e.placement < 0 || e.placement > 5) throw DataError("placement outside 0..5");
  if (!(e.wait_days >= 0.0) || !std::isfinite(e.wait_days)) throw DataError("wait_days must be >= 0");
  for (auto v : e.covariates)
    if (v > 1) throw DataError("covariates must be binary");
  return e;
}

void write_episodes(const std::filesystem::path& path, std::span<const EpisodeRecord> episodes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& e : episodes) out << episode_to_json(e).dump() << '\n';
}

std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path) {
  std::vector<EpisodeRecord> out;
  for (const auto& j : io::read_json_lines(path)) out.push_back(episode_from_json(j));
  return out;
}

namespace {

int parse_int(const std::string& s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw DataError("bad integer '" + s + "'");
  return v;
}

bool parse_flag(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false" || s.empty()) return false;
  throw DataError("bad boolean '" + s + "'");
}

}  // namespace

ClaimLoad load_claims(const std::filesystem::path& path, std::span<const std::string> cohort_axes) {
  ClaimLoad load;
  auto reject = [&](std::size_t row, const std::string& why) {
    load.rejected.push_back({row, why});
    spdlog::warn("{}: record {} rejected: {}", path.string(), row, why);
  };
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") {
    const auto lines = io::read_json_lines(path);
    for (std::size_t r = 0; r < lines.size(); ++r) {
      const auto& j = lines[r];
      try {
        ClaimRecord c;
        c.person_id = j.at("person_id").get<std::string>();
        c.provider_id = j.at("provider_id").get<std::string>();
        c.start_date = io::parse_iso_date(j.at("start_date").get<std::string>());
        c.end_date = io::parse_iso_date(j.at("end_date").get<std::string>());
        c.claim_type = claim_type_from_string(j.at("claim_type").get<std::string>());
        c.discharge_status = discharge_status_from_string(j.at("discharge_status").get<std::string>());
        c.placement = j.value("placement", 0);
        c.unplanned = j.value("unplanned", false);
        for (const auto& axis : cohort_axes) c.cohort.push_back(j.value(axis, 0));
        load.claims.push_back(std::move(c));
      } catch (const std::exception& e) {
        reject(r, e.what());
      }
    }
    return load;
  }
  const auto table = io::read_csv(path);
  const int person = table.require_column("person_id");
  const int provider = table.require_column("provider_id");
  const int start = table.require_column("start_date");
  const int end = table.require_column("end_date");
  const int type = table.require_column("claim_type");
  const int status = table.require_column("discharge_status");
  const int placement = table.column("placement");
  const int unplanned = table.column("unplanned");
  std::vector<int> axis_cols;
  for (const auto& axis : cohort_axes) axis_cols.push_back(table.column(axis));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    try {
      ClaimRecord c;
      c.person_id = row[static_cast<std::size_t>(person)];
      c.provider_id = row[static_cast<std::size_t>(provider)];
      c.start_date = io::parse_iso_date(row[static_cast<std::size_t>(start)]);
      c.end_date = io::parse_iso_date(row[static_cast<std::size_t>(end)]);
      c.claim_type = claim_type_from_string(row[static_cast<std::size_t>(type)]);
      c.discharge_status = discharge_status_from_string(row[static_cast<std::size_t>(status)]);
      if (placement >= 0) c.placement = parse_int(row[static_cast<std::size_t>(placement)]);
      if (c.placement < 0 || c.placement > 5) throw DataError("placement outside 0..5");
      if (unplanned >= 0) c.unplanned = parse_flag(row[static_cast<std::size_t>(unplanned)]);
      for (int col : axis_cols)
        c.cohort.push_back(col >= 0 ? parse_int(row[static_cast<std::size_t>(col)]) : 0);
      load.claims.push_back(std::move(c));
    } catch (const std::exception& e) {
      reject(r, e.what());
    }
  }
  return load;
}

}  // namespace quiltsurv
