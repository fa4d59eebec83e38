#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dfarag {

using DialogueId = std::uint64_t;

enum class Role : std::uint8_t { user, system, start };

std::string_view role_name(Role role) noexcept;

/// Accepts user/system case-insensitively; "agent" maps to system.
/// "start" is accepted only when `allow_start` is set (persisted automata).
Role parse_role(std::string_view text, bool allow_start = false);

inline Role other_role(Role role) noexcept { return role == Role::user ? Role::system : Role::user; }

// Errors. Everything derives from dfarag::Error so callers can catch the family.

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line)
    {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

/// Transport or output-format failure from an external completion service.
/// Retriable; carries the raw response text when one was received.
class ServiceError : public Error {
  public:
    ServiceError(const std::string& what, std::string raw = {}) : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

  private:
    std::string raw_;
};

class TaggerError : public ServiceError {
  public:
    using ServiceError::ServiceError;
};

class GeneratorError : public ServiceError {
  public:
    using ServiceError::ServiceError;
};

class UnsupportedStrategyError : public Error {
  public:
    using Error::Error;
};

class UndefinedMetricError : public Error {
  public:
    using Error::Error;
};

/// Seeded generator with bit-reproducible draws across standard libraries.
/// std::uniform_int_distribution is implementation-defined, so bounded
/// draws are done here by rejection on the raw 64-bit engine output.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// k distinct indices from [0, n), uniform, in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  private:
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent sub-seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

}  // namespace dfarag
