// Copyright 2026 The hiltta Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hiltta/http_service.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace hiltta
{
namespace
{
using nlohmann::json;

constexpr const char* kFallbackPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>hiltta annotation</title></head>"
    "<body><p>Console assets are not installed. Set <code>assets_dir</code> to the built console, "
    "or use the JSON API under <code>/api/</code>.</p></body></html>";

void reply(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void reply_error(httplib::Response& res, int status, const std::string& message)
{
    reply(res, status, json{{"error", message}});
}

json to_json(const AnnotationRequest& r)
{
    json top = json::array();
    for (const auto& [c, p] : r.top) top.push_back({{"class", c}, {"prob", p}});
    json background = json::array();
    for (const auto& pt : r.background) background.push_back({pt[0], pt[1]});
    return {{"sample_id", r.sample_id},
            {"batch_index", r.batch_index},
            {"point", {r.point[0], r.point[1]}},
            {"background", std::move(background)},
            {"top", std::move(top)}};
}

}  // namespace

struct AnnotationServer::Impl
{
    AnnotationSession& session;
    std::filesystem::path assets;
    httplib::Server server;
    std::thread worker;
    bool bound = false;

    Impl(AnnotationSession& s, std::filesystem::path a) : session(s), assets(std::move(a))
    {
        // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which
        // would let a second server share a busy port silently.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
        });
        routes();
    }

    void routes()
    {
        server.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) {
            const SessionInfo info = session.info();
            reply(res, 200,
                  json{{"session_id", info.session_id},
                       {"num_classes", info.num_classes},
                       {"class_names", info.class_names},
                       {"batch_index", info.batch_index},
                       {"timeout_s", info.timeout_s}});
        });

        server.Get("/api/pending", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& r : session.pending()) list.push_back(to_json(r));
            reply(res, 200, list);
        });

        server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
            const Progress p = session.progress();
            reply(res, 200,
                  json{{"labeled", p.labeled},
                       {"pending", p.pending},
                       {"batch_index", p.batch_index},
                       {"overall_error_so_far", p.overall_error_so_far}});
        });

        server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try
            {
                body = json::parse(req.body);
            }
            catch (const json::parse_error& e)
            {
                return reply_error(res, 400, std::string("malformed JSON: ") + e.what());
            }
            if (!body.is_object() || !body.contains("sample_id") || !body.contains("label") ||
                !body["sample_id"].is_number_integer() || !body["label"].is_number_integer())
                return reply_error(res, 400, "body must be {\"sample_id\": <int>, \"label\": <int>}");
            const auto id = body["sample_id"].get<SampleId>();
            const auto label = body["label"].get<long long>();
            const int clamped = label < -1 ? -1 : (label > 1'000'000 ? 1'000'000 : static_cast<int>(label));
            switch (session.submit(id, clamped))
            {
                case SubmitResult::Accepted: return reply(res, 202, json{{"sample_id", id}, {"status", "accepted"}});
                case SubmitResult::Duplicate: return reply_error(res, 409, "sample already labeled; first label kept");
                case SubmitResult::UnknownSample: return reply_error(res, 404, "sample is not pending");
                case SubmitResult::LabelOutOfRange: return reply_error(res, 422, "label out of range");
            }
        });

        server.Get("/", [this](const httplib::Request&, httplib::Response& res) {
            const auto index = assets / "index.html";
            std::ifstream in(index, std::ios::binary);
            if (assets.empty() || !in)
            {
                res.set_content(kFallbackPage, "text/html; charset=utf-8");
                return;
            }
            std::ostringstream ss;
            ss << in.rdbuf();
            res.set_content(ss.str(), "text/html; charset=utf-8");
        });
        if (!assets.empty() && std::filesystem::is_directory(assets)) server.set_mount_point("/static", assets.string());
    }
};

AnnotationServer::AnnotationServer(AnnotationSession& session, std::filesystem::path assets_dir)
    : impl_(std::make_unique<Impl>(session, std::move(assets_dir)))
{
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port)
{
    int bound = port;
    if (port == 0)
        bound = impl_->server.bind_to_any_port(host);
    else if (!impl_->server.bind_to_port(host, port))
        bound = -1;
    if (bound <= 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    impl_->bound = true;
    return bound;
}

void AnnotationServer::start()
{
    if (!impl_->bound) throw std::logic_error("AnnotationServer::start before bind");
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void AnnotationServer::listen()
{
    if (!impl_->bound) throw std::logic_error("AnnotationServer::listen before bind");
    impl_->server.listen_after_bind();
}

void AnnotationServer::stop()
{
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace hiltta
