#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace igaiva {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t value);

/// Combine two hashes / seeds (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

/// Seeded random source with platform-independent output.
///
/// std::uniform_int_distribution and friends are implementation-defined, so
/// every draw that feeds a persisted artifact goes through this wrapper.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Uniform double in [0, 1).
    double uniform01();
    double normal();

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace igaiva
