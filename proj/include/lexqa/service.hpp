#pragma once

// Read-only HTTP query service over a loaded Engine.
//
//   GET /answer?q=<question>&k=<top_k>[&id=<question_id>]
//   GET /healthz

#include <charconv>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "lexqa/pipeline.hpp"

namespace lexqa {

inline constexpr const char* kDefaultQuestionId = "query";

inline std::unique_ptr<httplib::Server> make_service(const Engine& engine) {
    auto server = std::make_unique<httplib::Server>();
    auto reply = [](httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };

    server->Get("/healthz", [&engine, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, engine.health());
    });

    server->Get("/answer", [&engine, reply](const httplib::Request& req, httplib::Response& res) {
        const std::string q = req.get_param_value("q");
        if (q.size() > engine.config().max_question_bytes) {
            return reply(res, 413, {{"error", "question longer than " + std::to_string(engine.config().max_question_bytes) + " bytes"}});
        }
        if (clean_text(q).empty()) return reply(res, 400, {{"error", "missing or empty question parameter 'q'"}});
        std::optional<std::size_t> k;
        if (req.has_param("k")) {
            const std::string raw = req.get_param_value("k");
            std::size_t v = 0;
            auto [end, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
            if (ec != std::errc() || end != raw.data() + raw.size() || v < 1) {
                return reply(res, 400, {{"error", "parameter 'k' must be a positive integer"}});
            }
            k = v;
        }
        const std::string id = req.has_param("id") ? req.get_param_value("id") : kDefaultQuestionId;
        try {
            reply(res, 200, to_json(engine.answer(id, q, k)));
        } catch (const std::exception& e) {
            reply(res, 500, {{"error", e.what()}});
        }
    });
    return server;
}

}  // namespace lexqa
