#pragma once

#include <istream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lexqa/error.hpp"

namespace lexqa {

/// A question with its non-empty set of relevant articles.
struct GoldQuery {
    std::string question_id;
    std::string question;
    std::set<std::string> gold_article_ids;

    friend bool operator==(const GoldQuery&, const GoldQuery&) = default;
};

/// Reads {"question_id", "question", "gold": [ids]} JSON lines.
inline std::vector<GoldQuery> read_gold_queries(std::istream& in) {
    std::vector<GoldQuery> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        GoldQuery q;
        try {
            auto j = nlohmann::json::parse(line);
            q.question_id = j.at("question_id").get<std::string>();
            q.question = j.at("question").get<std::string>();
            for (const auto& id : j.at("gold")) q.gold_article_ids.insert(id.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("malformed gold query: ") + e.what());
        }
        if (q.gold_article_ids.empty()) throw ParseError(line_no, "gold query has no relevant articles");
        if (!ids.insert(q.question_id).second) throw ParseError(line_no, "duplicate question id '" + q.question_id + "'");
        out.push_back(std::move(q));
    }
    return out;
}

inline void write_gold_queries(std::ostream& out, const std::vector<GoldQuery>& queries) {
    for (const auto& q : queries) {
        out << nlohmann::json{{"question_id", q.question_id}, {"question", q.question}, {"gold", q.gold_article_ids}}.dump()
            << '\n';
    }
}

}  // namespace lexqa
