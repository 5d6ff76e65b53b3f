#include <array>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "quiltsurv/common.hpp"
#include "quiltsurv/ingest.hpp"

using namespace quiltsurv;

namespace {

ClaimRecord claim(std::string person, std::string provider, int start, int end,
                  DischargeStatus status, ClaimType type = ClaimType::inpatient) {
  ClaimRecord c;
  c.person_id = std::move(person);
  c.provider_id = std::move(provider);
  c.start_date = start;
  c.end_date = end;
  c.discharge_status = status;
  c.claim_type = type;
  return c;
}

EpisodeRecord episode(std::string person, int admit, int discharge) {
  EpisodeRecord e;
  e.person_id = std::move(person);
  e.admit_date = admit;
  e.discharge_date = discharge;
  return e;
}

}  // namespace

TEST_CASE("transfer claims from one provider merge") {
  std::vector<ClaimRecord> claims{claim("p", "h1", 1, 5, DischargeStatus::transfer),
                                  claim("p", "h1", 5, 9, DischargeStatus::home)};
  const auto r = group_claims(claims);
  REQUIRE(r.episodes.size() == 1);
  CHECK(r.episodes[0].admit_date == 1);
  CHECK(r.episodes[0].discharge_date == 9);
  CHECK(r.episodes[0].discharge_status == DischargeStatus::home);
  CHECK(r.episodes[0].claim_ids.size() == 2);
}

TEST_CASE("home discharge ends the episode") {
  std::vector<ClaimRecord> claims{claim("p", "h1", 1, 5, DischargeStatus::home),
                                  claim("p", "h1", 5, 9, DischargeStatus::home)};
  auto r = group_claims(claims);
  REQUIRE(r.episodes.size() == 2);
  std::array<bool, 2> flags{false, true};
  const auto w = compute_wait(r.episodes, flags, {}, 100);
  CHECK(w[0].wait_days == 0.0);
  CHECK(w[0].event);
}

TEST_CASE("different providers and types stay separate") {
  std::vector<ClaimRecord> claims{claim("p", "h1", 1, 6, DischargeStatus::transfer),
                                  claim("p", "h2", 3, 9, DischargeStatus::home),
                                  claim("p", "h1", 4, 8, DischargeStatus::home, ClaimType::snf)};
  CHECK(group_claims(claims).episodes.size() == 3);
}

TEST_CASE("malformed claims are rejected individually") {
  std::vector<ClaimRecord> claims{claim("p", "h1", 9, 5, DischargeStatus::home),
                                  claim("q", "h1", 1, 2, DischargeStatus::home)};
  const auto r = group_claims(claims);
  CHECK(r.episodes.size() == 1);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].index == 0);
}

TEST_CASE("regrouping is idempotent") {
  std::vector<ClaimRecord> claims{claim("p", "h1", 1, 5, DischargeStatus::transfer),
                                  claim("p", "h1", 4, 9, DischargeStatus::other),
                                  claim("p", "h1", 20, 25, DischargeStatus::home),
                                  claim("q", "h2", 2, 3, DischargeStatus::death)};
  const auto once = group_claims(claims);
  const auto as_claims = episodes_as_claims(once.episodes);
  const auto twice = group_claims(as_claims);
  REQUIRE(twice.episodes.size() == once.episodes.size());
  for (std::size_t i = 0; i < once.episodes.size(); ++i) {
    CHECK(twice.episodes[i].admit_date == once.episodes[i].admit_date);
    CHECK(twice.episodes[i].discharge_date == once.episodes[i].discharge_date);
  }
}

TEST_CASE("wait times and censoring") {
  std::vector<EpisodeRecord> eps{episode("a", 5, 10), episode("a", 17, 20), episode("b", 1, 10),
                                 episode("c", 2, 10)};
  std::array<bool, 4> flags{false, true, false, false};
  std::map<std::string, int> deaths{{"b", 13}};
  const auto w = compute_wait(eps, flags, deaths, 50);
  CHECK(w[0].wait_days == 7.0);
  CHECK(w[0].event);
  CHECK(w[1].wait_days == 30.0);
  CHECK_FALSE(w[1].event);
  CHECK(w[2].wait_days == 3.0);
  CHECK(w[2].event);
  CHECK(w[3].wait_days == 40.0);
  CHECK_FALSE(w[3].event);
  for (const auto& e : w) CHECK(e.wait_days >= 0.0);
  CHECK_THROWS_AS(compute_wait(eps, flags, deaths, 15), DataError);
}

TEST_CASE("planned readmission is not an event") {
  std::vector<EpisodeRecord> eps{episode("a", 5, 10), episode("a", 17, 20)};
  std::array<bool, 2> flags{false, false};
  const auto w = compute_wait(eps, flags, {}, 50);
  CHECK_FALSE(w[0].event);
  CHECK(w[0].wait_days == 40.0);
}

TEST_CASE("temporal split") {
  std::vector<EpisodeRecord> eps{episode("a", 1, 10), episode("b", 1, 20), episode("c", 1, 30)};
  CHECK(temporal_split(eps, 100).train.size() == 3);
  CHECK(temporal_split(eps, 100).test.empty());
  CHECK(temporal_split(eps, 0).test.size() == 3);
  const auto mixed = temporal_split(eps, 20);
  CHECK(mixed.train.size() == 1);
  CHECK(mixed.test.size() == 2);
  for (const auto& e : mixed.train) CHECK(e.discharge_date < 20);
}

TEST_CASE("episode and claim files") {
  const auto dir = std::filesystem::temp_directory_path() / "ingest_unit";
  std::filesystem::create_directories(dir);
  EpisodeRecord e = episode("x", 3, 8);
  e.placement = 4;
  e.covariates = {1, 0, 1};
  e.cohort = {2, 7, 1, 0};
  e.wait_days = 12;
  e.event = true;
  std::vector<EpisodeRecord> eps{e};
  write_episodes(dir / "eps.jsonl", eps);
  const auto back = read_episodes(dir / "eps.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].placement == 4);
  CHECK(back[0].covariates == e.covariates);
  CHECK(back[0].cohort == e.cohort);
  CHECK(back[0].event);

  {
    std::ofstream out(dir / "claims.csv");
    out << "person_id,provider_id,start_date,end_date,claim_type,discharge_status,mdc\n"
        << "p,h,2010-01-01,2010-01-05,inpatient,transfer,3\n"
        << "p,h,2010-01-05,2010-01-09,inpatient,home,3\n"
        << "q,h,not-a-date,2010-01-09,inpatient,home,1\n"
        << "r,h,2010-01-01,2010-01-02,spaceship,home,1\n";
  }
  std::vector<std::string> axes{"mdc"};
  const auto load = load_claims(dir / "claims.csv", axes);
  CHECK(load.claims.size() == 2);
  CHECK(load.rejected.size() == 2);
  CHECK(load.claims[0].cohort == std::vector<int>{3});
  CHECK(load.claims[1].start_date - load.claims[0].start_date == 4);
  std::filesystem::remove_all(dir);
}
