// Genre broadclass mapping.

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "polyphone/genre.hpp"

using namespace polyphone;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string &name, const std::string &content) {
  fs::path dir = fs::temp_directory_path() / "polyphone_genre_test";
  fs::create_directories(dir);
  fs::path p = dir / name;
  std::ofstream out(p, std::ios::trunc);
  out << content;
  return p;
}

}  // namespace

TEST_CASE("builtin table maps every printed genre to its broadclass") {
  GenreMap map;
  const std::vector<std::pair<std::string, GenreBroadclass>> table = {
      {"Rap", GenreBroadclass::hiphop},      {"Hip Hop", GenreBroadclass::hiphop},
      {"R&B", GenreBroadclass::hiphop},      {"Metal", GenreBroadclass::metal},
      {"Hard Rock", GenreBroadclass::metal}, {"Electro", GenreBroadclass::metal},
      {"Alternative", GenreBroadclass::metal}, {"Dance", GenreBroadclass::metal},
      {"Disco", GenreBroadclass::metal},     {"Rock", GenreBroadclass::metal},
      {"Indie", GenreBroadclass::metal},     {"Country", GenreBroadclass::pop},
      {"Pop", GenreBroadclass::pop},         {"Jazz", GenreBroadclass::pop},
      {"Soul", GenreBroadclass::pop},        {"Reggae", GenreBroadclass::pop},
      {"Blues", GenreBroadclass::pop},       {"Classical", GenreBroadclass::pop},
  };
  for (const auto &[raw, expect] : table) {
    CAPTURE(raw);
    CHECK(classify_genre(raw, map) == expect);
  }
}

TEST_CASE("tag normalization: case, whitespace, ampersand") {
  GenreMap map;
  CHECK(classify_genre("HARD ROCK", map) == GenreBroadclass::metal);
  CHECK(classify_genre("  hard   rock  ", map) == GenreBroadclass::metal);
  CHECK(classify_genre("r&b", map) == GenreBroadclass::hiphop);
  CHECK(classify_genre("R & B", map) == GenreBroadclass::hiphop);
  CHECK(normalize_genre_tag("R&B") == normalize_genre_tag(" r  &  b "));
}

TEST_CASE("unknown tags fall back to pop with a warning") {
  GenreMap map;
  WarningLog warnings;
  CHECK(classify_genre("Vaporwave", map, &warnings) == GenreBroadclass::pop);
  CHECK(warnings.count("unmapped-genre") == 1);
  // total and deterministic, warning channel optional
  CHECK(classify_genre("Vaporwave", map) == GenreBroadclass::pop);
  CHECK(classify_genre("", map) == GenreBroadclass::pop);
}

TEST_CASE("load_genre_map") {
  SUBCASE("empty file yields the builtin table") {
    GenreMap map = load_genre_map(write_temp("empty.tsv", ""));
    CHECK(map.entries() == GenreMap::builtin_entries());
  }
  SUBCASE("file entries override the builtin table") {
    GenreMap map = load_genre_map(write_temp("override.tsv", "Disco\tpop\n"));
    CHECK(classify_genre("Disco", map) == GenreBroadclass::pop);
    CHECK(classify_genre("Metal", map) == GenreBroadclass::metal);  // defaults kept
  }
  SUBCASE("unknown broadclass is rejected") {
    auto p = write_temp("bad_class.tsv", "Grunge\trock\n");
    CHECK_THROWS_AS(load_genre_map(p), DataError);
  }
  SUBCASE("wrong column count is rejected") {
    auto p = write_temp("bad_cols.tsv", "Grunge metal\n");
    CHECK_THROWS_AS(load_genre_map(p), DataError);
  }
}

TEST_CASE("genre name round trip") {
  for (auto g : kAllGenres) CHECK(parse_genre(genre_name(g)) == g);
  CHECK_THROWS_AS(parse_genre("ska"), DataError);
}
