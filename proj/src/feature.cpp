#include "serfilter/feature.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace serfilter {

std::string FeatureVector::to_string() const {
    std::string s(kWidth, '0');
    for (std::size_t i = 0; i < kWidth; ++i)
        if (bits[i]) s[i] = '1';
    return s;
}

std::optional<FeatureVector> FeatureVector::parse(std::string_view s) {
    if (s.size() != kWidth) return std::nullopt;
    FeatureVector v;
    for (std::size_t i = 0; i < kWidth; ++i) {
        if (s[i] == '1')
            v.bits[i] = true;
        else if (s[i] != '0')
            return std::nullopt;
    }
    return v;
}

StateCatalog StateCatalog::build(const std::vector<FeatureVector>& training_vectors) {
    StateCatalog c;
    for (const auto& v : training_vectors) {
        if (c.index_.emplace(v, c.states_.size()).second) c.states_.push_back(v);
    }
    return c;
}

std::size_t StateCatalog::encode(const FeatureVector& v) const {
    auto it = index_.find(v);
    return it != index_.end() ? it->second : other_index();
}

nlohmann::json StateCatalog::to_json() const {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& v : states_) states.push_back(v.to_string());
    return nlohmann::json{{"width", width()}, {"states", std::move(states)}};
}

StateCatalog StateCatalog::from_json(const nlohmann::json& j) {
    if (j.at("width").get<std::size_t>() != FeatureVector::kWidth)
        throw std::runtime_error("catalog: unsupported feature width");
    std::vector<FeatureVector> vs;
    for (const auto& s : j.at("states")) {
        auto v = FeatureVector::parse(s.get<std::string>());
        if (!v) throw std::runtime_error("catalog: bad state string");
        vs.push_back(*v);
    }
    StateCatalog c = build(vs);
    if (c.states().size() != vs.size())
        throw std::runtime_error("catalog: duplicate state strings");
    return c;
}

}  // namespace serfilter
