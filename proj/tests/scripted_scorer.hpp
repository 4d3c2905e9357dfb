#pragma once

#include <map>
#include <string>

#include "lexqa/reranker.hpp"

namespace lexqa::testing {

/// Scores from a fixed table; unknown articles get `fallback`.
class ScriptedScorer final : public RelevanceScorer {
public:
    explicit ScriptedScorer(std::map<std::string, double> scores, double fallback = 0.0)
        : scores_(std::move(scores)), fallback_(fallback) {}

    std::vector<double> score(std::string_view, std::span<const std::string> ids) const override {
        std::vector<double> out;
        for (const auto& id : ids) {
            auto it = scores_.find(id);
            out.push_back(it == scores_.end() ? fallback_ : it->second);
        }
        return out;
    }

    std::string fingerprint() const override { return "scripted"; }

private:
    std::map<std::string, double> scores_;
    double fallback_;
};

}  // namespace lexqa::testing
