#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vcf/field_grid.hpp"
#include "vcf/rng.hpp"

using namespace vcf;

namespace {

FieldGrid random_grid(Rng& rng) {
    const int h = rng.uniform_int(1, 24);
    const int w = rng.uniform_int(1, 24);
    const int c = rng.uniform_int(1, 6);
    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) names.push_back("ch" + std::to_string(i));
    FieldGrid g(h, w, std::move(names));
    for (auto& v : g.data()) {
        switch (rng.uniform_int(0, 9)) {
        case 0: v = 0.0f; break;
        case 1: v = -0.0f; break;
        case 2: v = std::numeric_limits<float>::denorm_min(); break;
        case 3: v = std::numeric_limits<float>::max(); break;
        default: v = float(rng.uniform(-1e6, 1e6));
        }
    }
    return g;
}

std::string write_to_string(const FieldGrid& g) {
    std::ostringstream out(std::ios::binary);
    write_field_grid(g, out);
    return out.str();
}

FieldGrid read_from_string(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return read_field_grid(in);
}

} // namespace

TEST_CASE("field grid invariants") {
    CHECK_THROWS_AS(FieldGrid(0, 4, {"a"}), schema_error);
    CHECK_THROWS_AS(FieldGrid(4, 4, {"a", "a"}), schema_error);
    CHECK_THROWS_AS(FieldGrid(4, 4, {""}), schema_error);

    FieldGrid g(2, 3, {"a", "b"});
    CHECK(g.data().size() == 2u * 3u * 2u);
    CHECK(g.channel_index("b") == 1);
    CHECK(g.channel_index("zz") == -1);
    CHECK_THROWS_AS(g.require_channel("zz"), schema_error);

    g.at(1, 0, 2) = 5.0f;
    CHECK(g.plane(1)[2] == 5.0f);
    CHECK(g.all_finite());
    g.at(0, 1, 1) = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(g.all_finite());
}

TEST_CASE("single value grid serializes to header plus four zero bytes") {
    FieldGrid g(1, 1, {"v"});
    const std::string bytes = write_to_string(g);
    // magic + 3 u32 dims + (u16 len + 1 name byte) + 1 float
    REQUIRE(bytes.size() == 4 + 12 + 3 + 4);
    CHECK(bytes.substr(0, 4) == "VCF1");
    CHECK(bytes.substr(bytes.size() - 4) == std::string(4, '\0'));
    CHECK(read_from_string(bytes) == g);
}

TEST_CASE("exact VCF1 byte layout") {
    FieldGrid g(1, 2, {"a", "b"});
    g.at(0, 0, 0) = 1.0f;  // 0x3f800000
    g.at(0, 0, 1) = -2.0f; // 0xc0000000
    g.at(1, 0, 0) = 0.5f;  // 0x3f000000
    g.at(1, 0, 1) = 0.0f;
    const std::string expected = {
        'V', 'C', 'F', '1',
        1, 0, 0, 0, // height
        2, 0, 0, 0, // width
        2, 0, 0, 0, // channels
        1, 0, 'a',
        1, 0, 'b',
        0, 0, char(0x80), char(0x3f),
        0, 0, 0, char(0xc0),
        0, 0, 0, char(0x3f),
        0, 0, 0, 0};
    CHECK(write_to_string(g) == expected);
}

TEST_CASE("large heatmap-shaped grid round-trips bit-exactly") {
    Rng rng(7);
    std::vector<std::string> names;
    for (int i = 0; i < 17; ++i) names.push_back("hm/kp" + std::to_string(i));
    FieldGrid g(101, 101, std::move(names));
    for (auto& v : g.data()) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    CHECK(read_from_string(write_to_string(g)) == g);
}

TEST_CASE("random grids round-trip bit-exactly") {
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        const FieldGrid g = random_grid(rng);
        CHECK(read_from_string(write_to_string(g)) == g);
    }
}

TEST_CASE("grid with NaN is rejected before write") {
    FieldGrid g(2, 2, {"a"});
    g.at(0, 1, 1) = std::numeric_limits<float>::quiet_NaN();
    std::ostringstream out;
    CHECK_THROWS_AS(write_field_grid(g, out), schema_error);
    CHECK(out.str().empty());
}

TEST_CASE("reader rejects malformed streams") {
    SECTION("bad magic") {
        CHECK_THROWS_AS(read_from_string("XXXX............"), format_error);
    }
    SECTION("truncated header") {
        CHECK_THROWS_AS(read_from_string("VCF1"), length_error);
    }
    SECTION("payload shorter than declared") {
        FieldGrid g(2, 2, {"a"});
        std::string bytes = write_to_string(g);
        bytes.resize(bytes.size() - 4); // declared 2x2x1 with 3 floats present
        CHECK_THROWS_AS(read_from_string(bytes), length_error);
    }
    SECTION("duplicate channel names") {
        FieldGrid g(1, 1, {"a", "b"});
        std::string bytes = write_to_string(g);
        const auto pos = bytes.find('b');
        bytes[pos] = 'a';
        CHECK_THROWS_AS(read_from_string(bytes), schema_error);
    }
}

TEST_CASE("golden field file parses to frozen values") {
    const char* dir = std::getenv("VCF_TEST_DATA");
    REQUIRE(dir != nullptr);
    std::ifstream in(std::string(dir) + "/golden.vcf1", std::ios::binary);
    REQUIRE(in.good());
    const FieldGrid g = read_field_grid(in);
    CHECK(g.height() == 3);
    CHECK(g.width() == 4);
    CHECK(g.channel_names() == std::vector<std::string>{"hm/nose", "kc/nose/dx"});
    CHECK(g.at(0, 0, 0) == 1.0f);
    CHECK(g.at(0, 2, 3) == 0.25f);
    CHECK(g.at(1, 1, 2) == -0.125f);
    CHECK(g.at(1, 2, 0) == 1024.0f);
}
