#include "gsamp/session.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

using namespace gsamp;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> scene_png(Index h, Index w, std::uint64_t seed = 1)
{
    return encode_png(to_raster(synthetic_two_region(h, w, seed).image));
}

json small_request(const std::vector<std::uint8_t>& png, Index n_superpixels = 12)
{
    return json{{"image", base64_encode(png)}, {"n_superpixels", n_superpixels}, {"k0", 3}, {"order", 20}, {"seed", 4}};
}

/// Service mounted on a live server bound to an ephemeral local port.
class LiveService : public ::testing::Test {
protected:
    void SetUp() override
    {
        service_.mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(120, 0);
    }

    void TearDown() override
    {
        server_.stop();
        thread_.join();
    }

    std::pair<int, json> post(const std::string& path, const json& body)
    {
        auto res = client_->Post(path, body.dump(), "application/json");
        if (!res) {
            return {-1, json()};
        }
        return {res->status, res->body.empty() ? json() : json::parse(res->body)};
    }

    std::pair<int, json> get(const std::string& path)
    {
        auto res = client_->Get(path);
        if (!res) {
            return {-1, json()};
        }
        return {res->status, json::parse(res->body)};
    }

    std::string create_ready(const json& request)
    {
        auto [code, body] = post("/v1/sessions", request);
        EXPECT_EQ(code, 202) << body.dump();
        const std::string id = body.value("session_id", std::string());
        for (int i = 0; i < 6000; ++i) {
            auto [sc, st] = get("/v1/sessions/" + id + "/status");
            if (st.value("state", std::string()) != "building") {
                EXPECT_EQ(st["state"], "ready") << st.dump();
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        return id;
    }

    httplib::Server server_;
    SessionService service_;
    int port_ = 0;
    std::thread thread_;
    std::unique_ptr<httplib::Client> client_;
};

} // namespace

TEST(Base64, RoundTrip)
{
    for (std::size_t len : {0u, 1u, 2u, 3u, 4u, 100u}) {
        std::vector<std::uint8_t> v(len);
        for (std::size_t i = 0; i < len; ++i) {
            v[i] = static_cast<std::uint8_t>(i * 37 + 11);
        }
        EXPECT_EQ(base64_decode(base64_encode(v)), v);
    }
    EXPECT_EQ(base64_encode({'h', 'i'}), "aGk=");
    EXPECT_THROW(base64_decode("abc"), ParseError);
}

TEST(SessionHandlers, RejectsBadUploads)
{
    SessionService svc;
    const auto tiny = svc.create(scene_png(1, 1), {});
    EXPECT_EQ(tiny.status, 422);
    EXPECT_NE(tiny.body["error"].get<std::string>().find("pixels"), std::string::npos);
    EXPECT_EQ(svc.create({1, 2, 3, 4}, {}).status, 422);
    EXPECT_EQ(svc.create(std::vector<std::uint8_t>(max_image_bytes + 1, 0), {}).status, 413);
    EXPECT_EQ(svc.create_json("{\"image\": \"@@@@\"}").status, 422);
    EXPECT_EQ(svc.create_json("{not json").status, 400);
    SessionParams p;
    p.n_superpixels = 10000;
    EXPECT_EQ(svc.create(scene_png(8, 8), p).status, 422);
    EXPECT_EQ(svc.status("nope").status, 404);
}

TEST_F(LiveService, UploadValidationOverHttp)
{
    auto [code, body] = post("/v1/sessions", small_request(scene_png(1, 1)));
    EXPECT_EQ(code, 422);
    EXPECT_TRUE(body.contains("error"));
    const std::string huge(max_image_bytes * 4 / 3 + (2u << 20), 'A');
    auto res = client_->Post("/v1/sessions", json{{"image", huge}}.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 413);
    EXPECT_EQ(get("/v1/sessions/unknown/status").first, 404);
}

TEST_F(LiveService, DuplicateUploadsGetDistinctSessions)
{
    const auto png = scene_png(16, 24);
    auto [c1, b1] = post("/v1/sessions", small_request(png));
    auto [c2, b2] = post("/v1/sessions", small_request(png));
    EXPECT_EQ(c1, 202);
    EXPECT_EQ(c2, 202);
    EXPECT_NE(b1["session_id"], b2["session_id"]);
}

TEST_F(LiveService, OverlayContents)
{
    const std::string id = create_ready(small_request(scene_png(24, 32)));
    auto [code, ov] = get("/v1/sessions/" + id + "/overlay");
    ASSERT_EQ(code, 200);
    const Index n = ov["N"];
    EXPECT_EQ(ov["boundaries"].size(), static_cast<std::size_t>(n));
    EXPECT_EQ(ov["labels"].size(), 24u * 32u);
    double total = 0.0;
    for (double v : ov["distribution"]) {
        EXPECT_GE(v, 0.0);
        total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_EQ(ov["distribution_kind"], "q_bar");
}

TEST_F(LiveService, ProposalsAreSeededAndCountMultiplicity)
{
    const std::string id = create_ready(small_request(scene_png(24, 32)));
    auto [c1, p1] = post("/v1/sessions/" + id + "/proposals", json{{"s", 50}, {"seed", 9}});
    auto [c2, p2] = post("/v1/sessions/" + id + "/proposals", json{{"s", 50}, {"seed", 9}});
    ASSERT_EQ(c1, 200);
    EXPECT_EQ(p1["group_ids"], p2["group_ids"]);
    EXPECT_EQ(p1["multiplicity"], p2["multiplicity"]);
    Index total = 0;
    for (Index m : p1["multiplicity"]) {
        total += m;
    }
    EXPECT_EQ(total, 50);
    EXPECT_EQ(post("/v1/sessions/" + id + "/proposals", json{{"s", 0}}).first, 422);
}

TEST_F(LiveService, SingleGroupProposalRepeats)
{
    const std::string id = create_ready(small_request(scene_png(12, 12), 1));
    auto [code, p] = post("/v1/sessions/" + id + "/proposals", json{{"s", 7}, {"seed", 1}});
    ASSERT_EQ(code, 200);
    EXPECT_EQ(p["group_ids"], json::array({1}));
    EXPECT_EQ(p["multiplicity"], json::array({7}));
}

TEST_F(LiveService, LabelRules)
{
    const std::string id = create_ready(small_request(scene_png(24, 32)));
    const std::string path = "/v1/sessions/" + id + "/labels";
    EXPECT_EQ(post(path, json::object()).second["accepted"], 0);
    auto [c1, b1] = post(path, json{{"1", 1}, {"2", 0}});
    EXPECT_EQ(c1, 200);
    EXPECT_EQ(b1["accepted"], 2);
    auto [c2, b2] = post(path, json{{"1", 0}});
    EXPECT_EQ(b2["labeled"], 2);
    EXPECT_EQ(post(path, json{{"9999", 1}}).first, 422);
    EXPECT_EQ(post(path, json{{"1", 2}}).first, 422);
    EXPECT_EQ(post(path, json{{"x", 1}}).first, 422);
    // a rejected request leaves earlier labels untouched
    EXPECT_EQ(post(path, json{{"3", 1}, {"9999", 1}}).first, 422);
    EXPECT_EQ(get("/v1/sessions/" + id + "/status").second["labeled"], 2);
}

TEST_F(LiveService, ReconstructRequiresLabels)
{
    const std::string id = create_ready(small_request(scene_png(24, 32)));
    EXPECT_EQ(post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", "fast"}}).first, 409);
    post("/v1/sessions/" + id + "/labels", json{{"1", 1}});
    EXPECT_EQ(post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", "bogus"}}).first, 422);
}

TEST_F(LiveService, FullLabelingRecoversPiecewiseMask)
{
    const std::string id = create_ready(small_request(scene_png(24, 32)));
    const auto ov = get("/v1/sessions/" + id + "/overlay").second;
    const Index n = ov["N"];
    const std::vector<Index> pix = ov["labels"];
    json labels = json::object();
    for (Index g = 1; g <= n; ++g) {
        labels[std::to_string(g)] = g % 2;
    }
    EXPECT_EQ(post("/v1/sessions/" + id + "/labels", labels).second["accepted"], n);
    for (const char* dec : {"fast", "full"}) {
        auto [code, r] = post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", dec}});
        ASSERT_EQ(code, 200) << r.dump();
        const auto mask = decode_png(base64_decode(r["mask_png"].get<std::string>()));
        ASSERT_EQ(mask.samples.size(), pix.size());
        for (std::size_t i = 0; i < pix.size(); ++i) {
            ASSERT_EQ(mask.samples[i], pix[i] % 2 ? 255 : 0) << dec << " pixel " << i;
        }
        EXPECT_GE(r["timing_ms"].get<double>(), 0.0);
    }
    auto [pc, pr] = post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", "fast"}, {"gamma", 1e-3}});
    EXPECT_EQ(pc, 200);
    EXPECT_EQ(pr["gamma"], 1e-3);
}

TEST_F(LiveService, InteractiveLoopIsReproducible)
{
    const auto t0 = std::chrono::steady_clock::now();
    const std::string id = create_ready(small_request(scene_png(64, 96), 60));
    const std::string other = create_ready(small_request(scene_png(64, 96), 60));
    auto [pc, prop] = post("/v1/sessions/" + id + "/proposals", json{{"s", 30}, {"seed", 2}});
    ASSERT_EQ(pc, 200);
    ASSERT_GE(prop["group_ids"].size(), 10u);
    json labels = json::object();
    for (std::size_t i = 0; i < prop["group_ids"].size(); ++i) {
        labels[std::to_string(prop["group_ids"][i].get<Index>())] = static_cast<int>(i % 3 == 0);
    }
    post("/v1/sessions/" + id + "/labels", labels);
    const auto first = post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", "fast"}});
    ASSERT_EQ(first.first, 200);
    post("/v1/sessions/" + id + "/labels", labels);
    const auto t1 = std::chrono::steady_clock::now();
    const auto second = post("/v1/sessions/" + id + "/reconstruct", json{{"decoder", "fast"}});
    const double round_trip = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    EXPECT_EQ(first.second["mask_png"], second.second["mask_png"]);
    EXPECT_LE(round_trip, 2.0);
    // the second session never saw these labels
    EXPECT_EQ(get("/v1/sessions/" + other + "/status").second["labeled"], 0);
    EXPECT_EQ(post("/v1/sessions/" + other + "/reconstruct", json::object()).first, 409);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 120.0);
}

TEST_F(LiveService, LargeParametersAccepted)
{
    auto [code, body] = post("/v1/sessions", json{{"image", base64_encode(scene_png(64, 96))},
                                                  {"n_superpixels", 600},
                                                  {"k0", 50},
                                                  {"order", 75}});
    EXPECT_EQ(code, 202) << body.dump();
    EXPECT_TRUE(body.contains("session_id"));
}
