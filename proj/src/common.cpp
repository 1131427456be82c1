/**
 * @file common.cpp
 */

#include "ehrsum/common.hpp"

#include <openssl/sha.h>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace ehrsum {

namespace {

bool read_digits(std::string_view text, std::size_t pos, std::size_t count, int& out) {
    if (pos + count > text.size()) return false;
    int value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
        value = value * 10 + (text[i] - '0');
    }
    out = value;
    return true;
}

}  // namespace

std::optional<Instant> parse_fhir_datetime(std::string_view text) {
    using namespace std::chrono;
    int y = 0, mo = 1, d = 1, h = 0, mi = 0, s = 0, ms = 0;
    if (!read_digits(text, 0, 4, y)) return std::nullopt;
    std::size_t pos = 4;
    if (pos < text.size()) {
        if (text[pos] != '-' || !read_digits(text, pos + 1, 2, mo)) return std::nullopt;
        pos += 3;
    }
    if (pos < text.size()) {
        if (text[pos] != '-' || !read_digits(text, pos + 1, 2, d)) return std::nullopt;
        pos += 3;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;

    minutes offset{0};
    if (pos < text.size()) {
        if (text[pos] != 'T' || !read_digits(text, pos + 1, 2, h) || pos + 3 >= text.size() ||
            text[pos + 3] != ':' || !read_digits(text, pos + 4, 2, mi)) {
            return std::nullopt;
        }
        pos += 6;
        if (pos < text.size() && text[pos] == ':') {
            if (!read_digits(text, pos + 1, 2, s)) return std::nullopt;
            pos += 3;
            if (pos < text.size() && text[pos] == '.') {
                ++pos;
                int digits = 0;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                    if (digits < 3) ms = ms * 10 + (text[pos] - '0');
                    ++digits;
                    ++pos;
                }
                if (digits == 0) return std::nullopt;
                for (int i = digits; i < 3; ++i) ms *= 10;
            }
        }
        if (h > 23 || mi > 59 || s > 60) return std::nullopt;
        if (pos >= text.size()) return std::nullopt;  // time requires a zone
        if (text[pos] == 'Z') {
            ++pos;
        } else if (text[pos] == '+' || text[pos] == '-') {
            int oh = 0, om = 0;
            if (!read_digits(text, pos + 1, 2, oh) || pos + 3 >= text.size() || text[pos + 3] != ':' ||
                !read_digits(text, pos + 4, 2, om)) {
                return std::nullopt;
            }
            offset = hours{oh} + minutes{om};
            if (text[pos] == '-') offset = -offset;
            pos += 6;
        } else {
            return std::nullopt;
        }
        if (pos != text.size()) return std::nullopt;
    }

    return Instant{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms} - offset;
}

std::string format_instant(Instant at) {
    using namespace std::chrono;
    const auto day_start = floor<days>(at);
    const year_month_day ymd{day_start};
    const hh_mm_ss tod{at - day_start};
    char buf[40];
    const auto ms = tod.subseconds().count();
    if (ms != 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                      static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                      static_cast<long>(tod.seconds().count()), static_cast<long>(ms));
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                      static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                      static_cast<long>(tod.seconds().count()));
    }
    return buf;
}

std::string format_date(Instant at) {
    return format_instant(at).substr(0, 10);
}

Instant floor_to_day(Instant at) {
    return std::chrono::floor<std::chrono::days>(at);
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (unsigned char byte : digest) {
        out.push_back(kHex[byte >> 4]);
        out.push_back(kHex[byte & 0x0f]);
    }
    return out;
}

std::optional<double> parse_number(std::string_view text) {
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::string canonical_number(double value) {
    if (value == 0) value = 0;  // drop negative zero
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::optional<std::string> canonical_number(std::string_view text) {
    const auto value = parse_number(text);
    if (!value) return std::nullopt;
    return canonical_number(*value);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace ehrsum
