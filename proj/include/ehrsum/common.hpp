/**
 * @file common.hpp
 * @brief Shared vocabulary: JSON alias, UTC instants, hashing and small text helpers.
 */

#pragma once

#include <json.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ehrsum {

using Json = nlohmann::json;

/// UTC instant with millisecond resolution.
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;

/**
 * Parses a FHIR date, dateTime or instant.
 *
 * Accepts YYYY, YYYY-MM, YYYY-MM-DD and YYYY-MM-DDThh:mm[:ss[.fff]](Z|+hh:mm|-hh:mm).
 * Partial dates resolve to the first instant of the period. Offsets are
 * converted to UTC. Returns nullopt for anything else.
 */
std::optional<Instant> parse_fhir_datetime(std::string_view text);

/// "2024-06-01T08:30:00Z"; milliseconds are appended only when non-zero.
std::string format_instant(Instant at);

/// "2024-06-01"
std::string format_date(Instant at);

/// Start of the UTC day containing `at`.
Instant floor_to_day(Instant at);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/**
 * Shortest round-trip decimal form of a number ("7.2", "200", "-0.5").
 * Returns nullopt if `text` is not entirely a finite number.
 */
std::optional<std::string> canonical_number(std::string_view text);
std::string canonical_number(double value);

/// Parses the whole of `text` as a finite double.
std::optional<double> parse_number(std::string_view text);

std::string to_lower(std::string_view text);

/// Lowercased alphanumeric runs of `text` ("HbA1c 7.2%" -> {"hba1c", "7", "2"}).
std::vector<std::string> tokenize(std::string_view text);

}  // namespace ehrsum
