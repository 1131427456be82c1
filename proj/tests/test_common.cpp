#include "ehrsum/common.hpp"

#include <doctest.h>

using namespace ehrsum;

TEST_CASE("partial dates resolve to the start of the period") {
    CHECK(format_instant(*parse_fhir_datetime("2019")) == "2019-01-01T00:00:00Z");
    CHECK(format_instant(*parse_fhir_datetime("2019-06")) == "2019-06-01T00:00:00Z");
    CHECK(format_instant(*parse_fhir_datetime("2019-06-15")) == "2019-06-15T00:00:00Z");
}

TEST_CASE("offsets convert to UTC") {
    CHECK(format_instant(*parse_fhir_datetime("2024-03-01T08:30:00+02:00")) == "2024-03-01T06:30:00Z");
    CHECK(format_instant(*parse_fhir_datetime("2024-03-01T23:30:00-05:00")) == "2024-03-02T04:30:00Z");
    CHECK(format_instant(*parse_fhir_datetime("2024-03-01T08:30:00.250Z")) == "2024-03-01T08:30:00.250Z");
    CHECK(format_instant(*parse_fhir_datetime("2024-03-01T08:30Z")) == "2024-03-01T08:30:00Z");
}

TEST_CASE("malformed dates are rejected") {
    for (const char* bad : {"", "19", "2019-13", "2019-02-30", "2019-06-01T10:00:00", "yesterday", "2019-06-01T25:00:00Z"}) {
        CAPTURE(bad);
        CHECK_FALSE(parse_fhir_datetime(bad).has_value());
    }
}

TEST_CASE("partial-date rule agrees with an independent calendar computation") {
    // days_from_civil, written out separately from the parser
    auto days = [](int y, unsigned m, unsigned d) {
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<int>(doe) - 719468;
    };
    for (int y = 1900; y <= 2100; y += 7) {
        for (unsigned m = 1; m <= 12; ++m) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%04d-%02u", y, m);
            const auto parsed = parse_fhir_datetime(buf);
            REQUIRE(parsed);
            const auto expected = static_cast<long long>(days(y, m, 1)) * 86400000LL;
            CHECK(parsed->time_since_epoch().count() == expected);
        }
    }
}

TEST_CASE("canonical numbers") {
    CHECK(*canonical_number("7.20") == "7.2");
    CHECK(*canonical_number("200") == "200");
    CHECK(*canonical_number("-0.5") == "-0.5");
    CHECK(*canonical_number("1e2") == "100");
    CHECK_FALSE(canonical_number("7.2%").has_value());
    CHECK_FALSE(canonical_number("nan").has_value());
    CHECK(canonical_number(0.1 + 0.2) == "0.30000000000000004");
}

TEST_CASE("sha256 and tokenizer") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(tokenize("HbA1c 7.2%") == std::vector<std::string>{"hba1c", "7", "2"});
    CHECK(format_date(*parse_fhir_datetime("2024-06-01T23:59:59Z")) == "2024-06-01");
    CHECK(format_instant(floor_to_day(*parse_fhir_datetime("2024-06-01T23:59:59Z"))) == "2024-06-01T00:00:00Z");
}
