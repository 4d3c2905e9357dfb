#pragma once

// Synthetic statute corpora shared by the unit and acceptance suites.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lexqa/corpus.hpp"
#include "lexqa/queries.hpp"

namespace lexqa::testing {

inline const std::vector<std::string>& syllables() {
    static const std::vector<std::string> words{
        "quyền",  "nghĩa", "vụ",    "hợp",   "đồng",  "tài",   "sản",  "thừa",   "kế",    "bồi",
        "thường", "thiệt", "hại",   "dân",   "sự",    "hình",  "phạt", "lao",    "động",  "đất",
        "đai",    "nhà",   "ở",     "thuế",  "giá",   "trị",   "gia",  "tăng",   "doanh", "nghiệp",
        "cổ",     "phần",  "vốn",   "điều",  "lệ",    "hôn",   "nhân", "ly",     "hôn",   "con",
        "nuôi",   "giám",  "hộ",    "bảo",   "hiểm",  "xã",    "hội",  "y",      "tế",    "môi",
        "trường", "rừng",  "biển",  "giao",  "thông", "đường", "bộ",   "sắt",    "hàng",  "không",
        "ngân",   "sách",  "kiểm",  "toán",  "công",  "chứng", "luật", "sư",     "tòa",   "án",
        "khiếu",  "nại",   "tố",    "cáo",   "thanh", "tra",   "cán",  "viên",   "chức",  "quốc",
        "tịch",   "cư",    "trú",   "hộ",    "tịch",  "đăng",  "ký",   "sở",     "hữu",   "trí",
        "tuệ",    "phát",  "minh",  "sáng",  "chế",   "nhãn",  "hiệu", "cạnh",   "tranh", "tiêu"};
    return words;
}

inline std::string random_phrase(std::mt19937_64& rng, std::size_t len) {
    const auto& w = syllables();
    std::uniform_int_distribution<std::size_t> pick(0, w.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        if (i) s += ' ';
        s += w[pick(rng)];
    }
    return s;
}

/// `n` articles across documents of 10. Titles are unique 4-syllable phrases
/// plus an article marker; contents are a few sentences mentioning some title
/// words. Every `untitled_every`-th article (0 = never) has no title.
inline std::vector<Article> make_corpus(std::size_t n, std::uint64_t seed, std::size_t untitled_every = 0) {
    std::mt19937_64 rng(seed);
    std::set<std::string> titles;
    std::vector<Article> out;
    for (std::size_t i = 0; i < n; ++i) {
        Article a;
        a.doc_id = "doc" + std::to_string(i / 10);
        char id[32];
        std::snprintf(id, sizeof id, "%s#%03zu", a.doc_id.c_str(), i);
        a.article_id = id;

        std::string title;
        do {
            title = random_phrase(rng, 4);
        } while (!titles.insert(title).second);

        std::uniform_int_distribution<int> sentences(2, 5);
        std::uniform_int_distribution<std::size_t> len(6, 14);
        const int ns = sentences(rng);
        for (int s = 0; s < ns; ++s) {
            a.content += random_phrase(rng, len(rng));
            if (s == 0) a.content += " " + title.substr(0, title.find(' '));
            a.content += s % 2 ? ";\n" : ". ";
        }
        if (untitled_every == 0 || (i + 1) % untitled_every != 0) a.title = "Điều " + std::to_string(i + 1) + ". " + title;
        out.push_back(std::move(a));
    }
    return out;
}

/// One gold query per titled article: the title text itself.
inline std::vector<GoldQuery> title_queries(const std::vector<Article>& articles) {
    std::vector<GoldQuery> out;
    for (const auto& a : articles) {
        if (!a.title) continue;
        out.push_back({"q-" + a.article_id, *a.title, {a.article_id}});
    }
    return out;
}

inline std::vector<std::string> tokens_of(const std::string& raw) {
    return analyze(raw, TokenizerConfig{});
}

}  // namespace lexqa::testing

namespace lexqa::testing {

struct ParaphraseFixture {
    std::vector<Article> articles;
    /// One question per titled article: three of its four title words in a
    /// shuffled order, wrapped in filler shared by every question.
    std::vector<GoldQuery> queries;
};

inline ParaphraseFixture paraphrase_fixture(std::size_t n, std::uint64_t seed) {
    static const std::vector<std::string> openers{"quy định về", "pháp luật quy định", "trường hợp nào về", "thủ tục"};
    static const std::vector<std::string> closers{"như thế nào", "ra sao", "được không", "gồm những gì"};
    ParaphraseFixture fx;
    fx.articles = make_corpus(n, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<std::size_t> pick(0, openers.size() - 1);
    for (const auto& a : fx.articles) {
        const std::string phrase = a.title->substr(a.title->find(". ") + 2);
        std::vector<std::string> words;
        for (std::size_t p = 0, q; p < phrase.size(); p = q + 1) {
            q = phrase.find(' ', p);
            if (q == std::string::npos) q = phrase.size();
            words.push_back(phrase.substr(p, q - p));
        }
        std::shuffle(words.begin(), words.end(), rng);
        words.pop_back();
        std::string question = openers[pick(rng)];
        for (const auto& w : words) question += " " + w;
        question += " " + closers[pick(rng)];
        fx.queries.push_back({"p-" + a.article_id, question, {a.article_id}});
    }
    return fx;
}

}  // namespace lexqa::testing
