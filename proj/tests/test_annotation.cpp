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


#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "hiltta/annotation.hpp"
#include "hiltta/harness.hpp"
#include "hiltta/http_service.hpp"
#include "support.hpp"

using namespace hiltta;
using nlohmann::json;
using namespace std::chrono_literals;

namespace
{
AnnotationSession::Options session_options(int classes, int dim, double timeout_s, FallbackPolicy policy)
{
    AnnotationSession::Options o;
    o.session_id = "test";
    for (int c = 0; c < classes; ++c) o.class_names.push_back("c" + std::to_string(c));
    o.projection = AnnotationSession::make_projection(dim, 1);
    o.timeout_s = timeout_s;
    o.fallback = policy;
    return o;
}

/// Tiny run with three intervention batches of K=3 labels each.
RunConfig short_config()
{
    RunConfig c = test::tiny_config(3);
    c.engine.intervention_frequency = 4;
    return c;
}

RunResult oracle_run(const EngineConfig& e, const Workspace& ws)
{
    OracleLabeler oracle(ws.stream.truth);
    return run_stream(e, ws.model, ws.stream.batches, oracle, &ws.stream.truth);
}

void expect_same_reports(const RunResult& a, const RunResult& b)
{
    ASSERT_EQ(a.reports.size(), b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) EXPECT_TRUE(a.reports[i].same_outcome(b.reports[i])) << i;
}
}  // namespace

TEST(Session, ProjectionIsOrthonormal)
{
    const Matrix p = AnnotationSession::make_projection(16, 4);
    ASSERT_EQ(p.rows, 2u);
    ASSERT_EQ(p.cols, 16u);
    EXPECT_LT(orthogonality_error(Matrix(matmul_nt(p, p))), 1e-12);
}

TEST(Session, SubmitOrderingAndProgress)
{
    const RunConfig c = short_config();
    const Workspace ws = build_workspace(c);
    AnnotationSession session(session_options(3, 6, 5.0, FallbackPolicy::Oracle));
    EXPECT_TRUE(session.pending().empty());

    const Batch& b = ws.stream.batches[0];
    LabelRequest req;
    req.batch_index = 0;
    req.batch = b.samples;
    req.selected = {b.samples[1].id, b.samples[4].id, b.samples[9].id};
    req.posteriors = {{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}, {0.3, 0.3, 0.4}};

    LabelResponse resp;
    std::thread engine([&] { resp = session.request_labels(req, &ws.stream.truth); });
    ASSERT_TRUE(session.wait_for_pending(3, 2000ms));
    const auto pending = session.pending();
    ASSERT_EQ(pending.size(), 3u);
    EXPECT_EQ(pending[0].top.size(), 3u);
    EXPECT_EQ(pending[0].top[0], (std::pair<int, double>{0, 0.7}));
    EXPECT_EQ(pending[0].top[2], (std::pair<int, double>{2, 0.1}));
    EXPECT_EQ(pending[0].background.size(), b.samples.size());

    EXPECT_EQ(session.submit(b.samples[1].id, -1), SubmitResult::LabelOutOfRange);
    EXPECT_EQ(session.submit(b.samples[1].id, 3), SubmitResult::LabelOutOfRange);
    EXPECT_EQ(session.submit(12345, 0), SubmitResult::UnknownSample);
    EXPECT_EQ(session.submit(b.samples[1].id, 2), SubmitResult::Accepted);
    EXPECT_EQ(session.submit(b.samples[1].id, 0), SubmitResult::Duplicate);
    Progress p = session.progress();
    EXPECT_EQ(p.labeled, 1u);
    EXPECT_EQ(p.labeled + p.pending, 3u);
    EXPECT_EQ(session.submit(b.samples[4].id, 1), SubmitResult::Accepted);
    EXPECT_EQ(session.submit(b.samples[9].id, 0), SubmitResult::Accepted);
    engine.join();
    EXPECT_FALSE(resp.fallback);
    EXPECT_EQ(resp.labels, (std::vector<std::optional<int>>{2, 1, 0}));  // first write wins
    EXPECT_TRUE(session.pending().empty());
}

TEST(Session, TimeoutPolicies)
{
    const RunConfig c = short_config();
    const Workspace ws = build_workspace(c);
    const Batch& b = ws.stream.batches[0];
    LabelRequest req;
    req.batch = b.samples;
    req.selected = {b.samples[0].id, b.samples[1].id};
    {
        AnnotationSession s(session_options(3, 6, 0.05, FallbackPolicy::Oracle));
        const auto r = s.request_labels(req, &ws.stream.truth);
        EXPECT_TRUE(r.fallback);
        EXPECT_EQ(*r.labels[1], ws.stream.truth.at(b.samples[1].id));
    }
    {
        AnnotationSession s(session_options(3, 6, 0.05, FallbackPolicy::SkipSupervised));
        const auto r = s.request_labels(req, &ws.stream.truth);
        EXPECT_TRUE(r.fallback);
        EXPECT_FALSE(r.labels[0].has_value());
    }
    EXPECT_EQ(parse_fallback("skip_supervised"), FallbackPolicy::SkipSupervised);
    EXPECT_THROW(parse_fallback("ask_again"), std::invalid_argument);
}

class HttpTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        config = short_config();
        ws = build_workspace(config);
        engine = make_engine_config(config);
    }
    RunConfig config;
    Workspace ws;
    EngineConfig engine;
};

TEST_F(HttpTest, ProtocolAndHumanEqualsOracle)
{
    AnnotationSession session(session_options(3, 6, 30.0, FallbackPolicy::Oracle));
    AnnotationServer server(session);
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    httplib::Client cli("127.0.0.1", port);

    auto res = cli.Get("/api/session");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const json info = json::parse(res->body);
    EXPECT_EQ(info["num_classes"], 3);
    EXPECT_EQ(info["class_names"].size(), 3u);
    res = cli.Get("/api/pending");
    ASSERT_TRUE(res);
    EXPECT_EQ(json::parse(res->body), json::array());
    res = cli.Get("/");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);

    RunResult human;
    std::atomic<bool> done{false};
    std::thread runner([&] {
        HumanLabeler labeler(session, &ws.stream.truth);
        human = run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
        done = true;
    });

    int answered = 0;
    bool probed = false;
    while (!done)
    {
        res = cli.Get("/api/pending");
        ASSERT_TRUE(res);
        const json pending = json::parse(res->body);
        if (pending.empty())
        {
            std::this_thread::sleep_for(2ms);
            continue;
        }
        if (!probed)
        {
            probed = true;
            const auto progress = json::parse(cli.Get("/api/progress")->body);
            EXPECT_EQ(progress["labeled"].get<int>() + progress["pending"].get<int>(), 3);
            const std::string id = std::to_string(pending[0]["sample_id"].get<SampleId>());
            EXPECT_EQ(cli.Post("/api/labels", "{\"sample_id\": " + id + ", \"label\": -1}", "application/json")->status,
                      422);
            EXPECT_EQ(cli.Post("/api/labels", "{\"sample_id\": " + id + ", \"label\": 3}", "application/json")->status,
                      422);
            EXPECT_EQ(cli.Post("/api/labels", "{\"sample_id\": 999999, \"label\": 0}", "application/json")->status, 404);
            EXPECT_EQ(cli.Post("/api/labels", "{not json", "application/json")->status, 400);
            EXPECT_EQ(cli.Post("/api/labels", "{\"label\": 0}", "application/json")->status, 400);
        }
        for (const auto& req : pending)
        {
            const auto id = req["sample_id"].get<SampleId>();
            EXPECT_EQ(req["top"].size(), 3u);
            EXPECT_EQ(req["point"].size(), 2u);
            const json body{{"sample_id", id}, {"label", ws.stream.truth.at(id)}};
            auto post = cli.Post("/api/labels", body.dump(), "application/json");
            ASSERT_TRUE(post);
            if (post->status == 202)
            {
                ++answered;
                // a second answer for the same sample is refused, first wins
                const json other{{"sample_id", id}, {"label", (ws.stream.truth.at(id) + 1) % 3}};
                EXPECT_EQ(cli.Post("/api/labels", other.dump(), "application/json")->status, 409);
            }
        }
    }
    runner.join();
    EXPECT_EQ(answered, 9);
    res = cli.Get("/api/pending");
    EXPECT_EQ(json::parse(res->body), json::array());
    session.close();
    server.stop();

    const RunResult oracle = oracle_run(engine, ws);
    expect_same_reports(human, oracle);
    for (const auto& r : human.reports) EXPECT_FALSE(r.fallback);
}

TEST_F(HttpTest, TimeoutWithOracleFallbackMatchesOracle)
{
    AnnotationSession session(session_options(3, 6, 0.02, FallbackPolicy::Oracle));
    HumanLabeler labeler(session, &ws.stream.truth);
    const RunResult timed_out = run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
    const RunResult oracle = oracle_run(engine, ws);
    EXPECT_EQ(timed_out.summary.overall.error_pct(), oracle.summary.overall.error_pct());
    EXPECT_EQ(timed_out.summary.fallback_batches, 3u);
    for (const auto& r : timed_out.reports) EXPECT_EQ(r.fallback, r.intervention);
}

TEST_F(HttpTest, SkipSupervisedFallbackSkipsFineTuning)
{
    AnnotationSession session(session_options(3, 6, 0.02, FallbackPolicy::SkipSupervised));
    HumanLabeler labeler(session, &ws.stream.truth);
    const RunResult r = run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
    for (const auto& rep : r.reports) EXPECT_FALSE(rep.supervised);
    EXPECT_EQ(r.summary.fallback_batches, 3u);
}

TEST_F(HttpTest, BusyPortIsReported)
{
    AnnotationSession session(session_options(3, 6, 1.0, FallbackPolicy::Oracle));
    AnnotationServer first(session);
    const int port = first.bind("127.0.0.1", 0);
    AnnotationServer second(session);
    EXPECT_THROW(second.bind("127.0.0.1", port), std::runtime_error);
}
