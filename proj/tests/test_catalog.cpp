// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "quakecast/catalog.hpp"

using namespace quakecast;

namespace {

ParsedCatalog parse(const std::string& text) {
    std::istringstream in(text);
    return parse_catalog(in);
}

CatalogEvent event(const std::string& t, double lat, double lon, double mag, std::optional<double> depth = 10.0) {
    return {*parse_time(t), lat, lon, depth, mag};
}

}  // namespace

TEST(Time, ParsesCommonForms) {
    const auto a = parse_time("1966-03-07T21:29:14Z");
    ASSERT_TRUE(a);
    EXPECT_EQ(format_time(*a), "1966-03-07T21:29:14Z");
    EXPECT_EQ(parse_time("1966-03-07 21:29:14"), a);
    EXPECT_EQ(parse_time("1966-03-07T21:29:14.250Z"), a);
    EXPECT_EQ(parse_time("1966-03-07T21:29:14+00:00"), a);
    EXPECT_EQ(format_time(*parse_time("2000-02-29T01:02")), "2000-02-29T01:02:00Z");
    EXPECT_FALSE(parse_time("2001-02-29T00:00:00Z"));
    EXPECT_FALSE(parse_time("1966-13-01T00:00:00Z"));
    EXPECT_FALSE(parse_time("yesterday"));
}

TEST(ParseCatalog, SingleRow) {
    const auto p = parse("time,latitude,longitude,depth,mag\n1966-03-07T21:29:14Z,37.35,114.92,9,7.0\n");
    ASSERT_EQ(p.events.size(), 1u);
    EXPECT_TRUE(p.rejects.empty());
    const auto& e = p.events[0];
    EXPECT_EQ(e.latitude, 37.35);
    EXPECT_EQ(e.longitude, 114.92);
    EXPECT_EQ(e.depth, 9.0);
    EXPECT_EQ(e.magnitude, 7.0);
}

TEST(ParseCatalog, HeaderOnlyAndEmpty) {
    EXPECT_TRUE(parse("time,latitude,longitude,depth,mag\n").events.empty());
    EXPECT_TRUE(parse("").events.empty());
}

TEST(ParseCatalog, BadMagnitudeIsRejectedWithLine) {
    const auto p = parse("time,latitude,longitude,depth,mag\n1966-03-07T21:29:14Z,37.35,114.92,9,abc\n");
    EXPECT_TRUE(p.events.empty());
    ASSERT_EQ(p.rejects.size(), 1u);
    EXPECT_EQ(p.rejects[0].line, 2u);
    EXPECT_NE(p.rejects[0].reason.find("abc"), std::string::npos);
}

TEST(ParseCatalog, RejectReasons) {
    const auto p = parse(
        "time,latitude,longitude,depth,mag\n"
        "1899-12-31T00:00:00Z,30,80,1,4\n"
        "2000-01-01T00:00:00Z,95,80,1,4\n"
        "2000-01-01T00:00:00Z,30,190,1,4\n"
        "2000-01-01T00:00:00Z,30,80,-3,4\n"
        "2000-01-01T00:00:00Z,30,80,1,-1\n"
        "2000-01-01T00:00:00Z,30\n"
        "2000-01-01T00:00:00Z,30,80,,4\n");
    EXPECT_EQ(p.rejects.size(), 6u);
    ASSERT_EQ(p.events.size(), 1u);
    EXPECT_FALSE(p.events[0].depth);
}

TEST(ParseCatalog, MissingColumnIsAConfigError) {
    EXPECT_THROW(parse("time,latitude,depth,mag\n"), ConfigError);
}

TEST(ParseCatalog, QuotedFieldsAndCrlf) {
    const auto p = parse("time,place,latitude,longitude,depth,mag\r\n"
                         "2000-01-01T00:00:00Z,\"a, \"\"b\"\"\",30,80,1,4\r\n");
    EXPECT_EQ(p.events.size(), 1u);
}

TEST(ParseCatalog, FixtureFile) {
    std::ifstream in(QC_FIXTURES "/catalog_small.csv");
    const auto p = parse_catalog(in);
    EXPECT_EQ(p.events.size(), 10u);
    EXPECT_EQ(deduplicate(p.events).size(), 9u);
}

TEST(Deduplicate, Cases) {
    const auto a = event("2000-01-01T00:00:00Z", 30, 80, 4.0);
    const auto b = event("2000-01-01T00:00:00Z", 30, 80, 4.5);
    EXPECT_EQ(deduplicate({a, a}).size(), 1u);
    EXPECT_EQ(deduplicate({a, b}).size(), 2u);
    EXPECT_TRUE(deduplicate({}).empty());
}

TEST(Deduplicate, IsIdempotentAndKeepsFirst) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> pick(0, 4);
    std::vector<CatalogEvent> events;
    for (int i = 0; i < 200; ++i) {
        auto e = event("2000-01-01T00:00:00Z", 30 + pick(rng), 80, 4.0 + pick(rng), static_cast<double>(i));
        events.push_back(e);
    }
    const auto once = deduplicate(events);
    EXPECT_EQ(deduplicate(once), once);
    EXPECT_EQ(once.front().depth, 0.0);
}

TEST(Filter, Boundaries) {
    const RegionGrid grid;
    const auto range = default_time_range();
    const auto kept = filter_events({event("2000-01-01T00:00:00Z", 30, 80, 3.5), event("2000-01-01T00:00:00Z", 22.9, 80, 5),
                                     event("2000-01-01T00:00:00Z", 45.0, 80, 5), event("2000-01-01T00:00:00Z", 30, 80, 3.49),
                                     event("1966-01-14T23:59:59Z", 30, 80, 5), event("1966-01-15T00:00:00Z", 30, 80, 5),
                                     event("2021-05-22T23:59:59Z", 30, 80, 5), event("2021-05-23T00:00:00Z", 30, 80, 5)},
                                    3.5, range, grid);
    ASSERT_EQ(kept.size(), 4u);
    EXPECT_EQ(kept[0].magnitude, 3.5);
    EXPECT_EQ(kept[1].latitude, 45.0);
}

TEST(Filter, IsIdempotent) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> lat(20, 48), lon(70, 125), mag(2, 7);
    std::vector<CatalogEvent> events;
    for (int i = 0; i < 500; ++i) events.push_back(event("1990-06-01T00:00:00Z", lat(rng), lon(rng), mag(rng)));
    const RegionGrid grid;
    const auto once = filter_events(events, 3.5, default_time_range(), grid);
    EXPECT_EQ(filter_events(once, 3.5, default_time_range(), grid), once);
}

TEST(Grid, EdgesMatchHandValues) {
    const RegionGrid g;
    EXPECT_DOUBLE_EQ(g.lat_edge(1), 23.0 + 22.0 / 3.0);  // 30.333
    EXPECT_DOUBLE_EQ(g.lat_edge(2), 23.0 + 44.0 / 3.0);  // 37.667
    EXPECT_DOUBLE_EQ(g.lon_edge(1), 75.0 + 44.0 / 3.0);  // 89.667
    EXPECT_DOUBLE_EQ(g.lon_edge(2), 75.0 + 88.0 / 3.0);  // 104.333
}

TEST(Grid, AssignRegionExamples) {
    const RegionGrid g;
    EXPECT_EQ(assign_region(44.0, 76.0, g).index, 1);
    EXPECT_EQ(assign_region(23.0, 75.0, g).index, 7);
    EXPECT_EQ(assign_region(45.0, 119.0, g).index, 3);
    EXPECT_EQ(assign_region(30.0, 90.0, g).index, 8);
    EXPECT_EQ(assign_region(35.0, 110.0, g).index, 6);
    EXPECT_EQ(assign_region(23.0 + 22.0 / 3.0, 75.0 + 44.0 / 3.0, g).index, 5);  // lower edges belong to the upper cell
    EXPECT_THROW(assign_region(22.99, 80.0, g), DomainError);
}

TEST(Grid, LatticeCoverHitsEveryRegionOnce) {
    const RegionGrid g;
    std::array<int, 9> hits{};
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) {
            const double lat = 23.0 + 22.0 * i / 99.0, lon = 75.0 + 44.0 * j / 99.0;
            const int r = assign_region(lat, lon, g).index;
            ASSERT_GE(r, 1);
            ASSERT_LE(r, 9);
            ++hits[static_cast<std::size_t>(r - 1)];
            const auto [row, col] = g.cell_of(RegionId{r});
            EXPECT_GE(lat, g.lat_edge(g.rows - 1 - row));
            EXPECT_LE(lat, g.lat_edge(g.rows - row));
            EXPECT_GE(lon, g.lon_edge(col));
            EXPECT_LE(lon, g.lon_edge(col + 1));
        }
    int total = 0;
    for (int h : hits) {
        EXPECT_GT(h, 0);
        total += h;
    }
    EXPECT_EQ(total, 10000);
}

TEST(Grid, Validation) {
    RegionGrid g;
    g.labels = {1, 2, 3, 4, 5, 6, 7, 8, 8};
    EXPECT_THROW(g.validate(), ConfigError);
    g = RegionGrid{};
    g.rows = 4;
    EXPECT_THROW(g.validate(), ConfigError);
    g = RegionGrid{};
    g.lat_min = 50;
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Serialize, RoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lat(23, 45), lon(75, 119), mag(3.5, 8), dep(0, 700);
    std::vector<CatalogEvent> events;
    for (int i = 0; i < 300; ++i) {
        const auto t = catalog_epoch() + std::chrono::seconds(static_cast<long>(rng() % 3'000'000'000ULL) + 1);
        events.push_back({t, lat(rng), lon(rng), i % 7 == 0 ? std::nullopt : std::optional<double>(dep(rng)), mag(rng)});
    }
    std::stringstream buf;
    serialize_catalog(buf, events);
    const auto back = parse_catalog(buf);
    EXPECT_TRUE(back.rejects.empty());
    EXPECT_EQ(back.events, events);
}
