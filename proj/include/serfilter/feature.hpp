#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace serfilter {

/// Boolean abstraction of a class: one bit per feature.
///   1 uses-reflection      2 overrides-readObject  3 overrides-hashCode
///   4 has-generic-field    5 implements-Map        6 implements-Comparator
///   7 calls-hashCode       8 calls-compare
struct FeatureVector {
    static constexpr std::size_t kWidth = 8;

    std::array<bool, kWidth> bits{};

    bool operator==(const FeatureVector&) const = default;

    // Serialized form: 8 chars from {0,1}, feature 1 leftmost.
    std::string to_string() const;
    static std::optional<FeatureVector> parse(std::string_view s);

    static FeatureVector all_false() { return {}; }
};

struct FeatureVectorHash {
    std::size_t operator()(const FeatureVector& v) const noexcept {
        std::size_t h = 0;
        for (bool b : v.bits) h = h * 2 + (b ? 1 : 0);
        return h;
    }
};

/// Maps observed feature vectors to dense state indices. One extra state,
/// OTHER, is always present at index size()-1 and absorbs every vector not
/// seen during training. Immutable after construction.
class StateCatalog {
public:
    StateCatalog() = default;

    // Distinct vectors kept in first-occurrence order, OTHER appended last.
    static StateCatalog build(const std::vector<FeatureVector>& training_vectors);

    std::size_t encode(const FeatureVector& v) const;

    std::size_t other_index() const { return states_.size(); }
    std::size_t size() const { return states_.size() + 1; }  // includes OTHER
    const std::vector<FeatureVector>& states() const { return states_; }
    std::size_t width() const { return FeatureVector::kWidth; }

    bool operator==(const StateCatalog& o) const { return states_ == o.states_; }

    nlohmann::json to_json() const;
    static StateCatalog from_json(const nlohmann::json& j);

private:
    std::vector<FeatureVector> states_;
    std::unordered_map<FeatureVector, std::size_t, FeatureVectorHash> index_;
};

}  // namespace serfilter
