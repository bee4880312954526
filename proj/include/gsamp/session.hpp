#pragma once

#include "gsamp/coherence.hpp"
#include "gsamp/error.hpp"
#include "gsamp/image.hpp"
#include "gsamp/random.hpp"
#include "gsamp/segmentation.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace gsamp {

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                    static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(len));
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string in)
{
    in.erase(std::remove_if(in.begin(), in.end(), [](unsigned char c) { return std::isspace(c); }), in.end());
    if (in.size() % 4 != 0) {
        throw ParseError("base64 payload length is not a multiple of 4", 0);
    }
    std::vector<std::uint8_t> out(3 * (in.size() / 4));
    const int len = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(in.data()),
                                    static_cast<int>(in.size()));
    if (len < 0) {
        throw ParseError("invalid base64 payload", 0);
    }
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding
    std::size_t pad = 0;
    for (auto it = in.rbegin(); it != in.rend() && *it == '='; ++it) {
        ++pad;
    }
    out.resize(static_cast<std::size_t>(len) - pad);
    return out;
}

/// Largest accepted image upload.
inline constexpr std::size_t max_image_bytes = 16u << 20;

struct SessionParams {
    Index n_superpixels = 600;
    Index k0 = 50;
    int order = 75;
    std::uint64_t seed = 0;
    bool p_bar = false; ///< q-bar unless set
    unsigned threads = 0;
};

enum class SessionState { building, ready, failed };

inline std::string to_string(SessionState s)
{
    switch (s) {
    case SessionState::building: return "building";
    case SessionState::ready: return "ready";
    case SessionState::failed: return "failed";
    }
    return "unknown";
}

/// One labeling session. Everything but labels, proposals and the latest
/// mask is fixed once the build finishes; `mutex` serializes all access.
struct Session {
    std::string id;
    SessionParams params;
    ImageTensor image;
    std::mutex mutex;
    SessionState state = SessionState::building;
    std::string stage = "queued";
    double progress = 0.0;
    std::string error;
    std::optional<SegmentationModel> model;
    std::optional<SamplingDistribution> distribution;
    std::map<Index, int> labels; ///< 0-based group -> 0/1
    std::vector<std::vector<Index>> proposals;
    std::vector<std::uint8_t> mask_png;
};

namespace detail {

inline void set_stage(Session& s, const char* stage, double progress)
{
    std::lock_guard lock(s.mutex);
    s.stage = stage;
    s.progress = progress;
}

/// Builds superpixels, the pixel graph and the sampling distribution.
inline void build_session(Session& s)
{
    try {
        set_stage(s, "superpixels", 0.05);
        SegmentationModelOptions mo;
        mo.superpixels = s.params.n_superpixels;
        mo.threads = s.params.threads;
        auto model = build_segmentation_model(s.image, mo);
        set_stage(s, "distribution", 0.5);
        const Index k = std::min(s.params.k0, model.partition->node_count());
        EstimatorOptions eo;
        eo.order = s.params.order;
        eo.threads = s.params.threads;
        eo.lambda_max = model.lambda_max;
        const auto dist = s.params.p_bar ? estimate_p_bar(*model.laplacian, *model.partition, k, s.params.seed, eo)
                                         : estimate_q_bar(*model.laplacian, *model.partition, k, s.params.seed, eo);
        std::lock_guard lock(s.mutex);
        s.model = std::move(model);
        s.distribution = dist;
        s.state = SessionState::ready;
        s.stage = "ready";
        s.progress = 1.0;
    } catch (const std::exception& e) {
        std::lock_guard lock(s.mutex);
        s.state = SessionState::failed;
        s.stage = "failed";
        s.error = e.what();
    }
}

} // namespace detail

/// HTTP reply: status code plus JSON body.
struct Reply {
    int status = 200;
    nlohmann::json body;
};

inline Reply error_reply(int status, const std::string& message)
{
    return {status, nlohmann::json{{"error", message}}};
}

/// In-memory session registry and the /v1 request handlers. Handlers are
/// plain functions of the request body so they can be driven without a socket.
class SessionService {
public:
    SessionService() = default;
    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    ~SessionService()
    {
        stop();
        std::lock_guard lock(mutex_);
        for (auto& t : builders_) {
            if (t.joinable()) {
                t.join();
            }
        }
    }

    /// Images below this many pixels are rejected at upload.
    static constexpr Index min_pixels = 10;

    /// POST /v1/sessions with raw image bytes and parameters.
    Reply create(const std::vector<std::uint8_t>& image_bytes, const SessionParams& params)
    {
        if (image_bytes.size() > max_image_bytes) {
            return error_reply(413, "image exceeds 16 MB");
        }
        ImageTensor img;
        try {
            img = to_image(decode_raster(image_bytes));
        } catch (const std::exception& e) {
            return error_reply(422, std::string("unreadable image: ") + e.what());
        }
        if (img.size() < min_pixels) {
            return error_reply(422, "image has " + std::to_string(img.size()) + " pixels; at least " +
                                        std::to_string(min_pixels) + " are needed to build the 9-NN graph");
        }
        if (params.n_superpixels < 1 || params.n_superpixels > img.size()) {
            return error_reply(422, "n_superpixels must lie in [1, pixel count]");
        }
        if (params.k0 < 1 || params.order < 1) {
            return error_reply(422, "k0 and order must be positive");
        }
        auto s = std::make_shared<Session>();
        s->params = params;
        s->image = std::move(img);
        {
            std::lock_guard lock(mutex_);
            s->id = next_id();
            sessions_[s->id] = s;
            builders_.emplace_back([s] { detail::build_session(*s); });
        }
        return {202, nlohmann::json{{"session_id", s->id}, {"state", "building"}}};
    }

    /// POST /v1/sessions with a JSON body {image: base64, n_superpixels, k0, order, seed, distribution}.
    Reply create_json(const std::string& body)
    {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const std::exception& e) {
            return error_reply(400, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("image") || !j["image"].is_string()) {
            return error_reply(422, "missing base64 'image' field");
        }
        SessionParams p;
        try {
            p = params_from_json(j);
        } catch (const std::exception& e) {
            return error_reply(422, e.what());
        }
        std::vector<std::uint8_t> bytes;
        try {
            bytes = base64_decode(j["image"].get<std::string>());
        } catch (const std::exception& e) {
            return error_reply(422, e.what());
        }
        return create(bytes, p);
    }

    static SessionParams params_from_json(const nlohmann::json& j)
    {
        SessionParams p;
        p.n_superpixels = j.value("n_superpixels", p.n_superpixels);
        p.k0 = j.value("k0", p.k0);
        p.order = j.value("order", p.order);
        p.seed = j.value("seed", p.seed);
        const std::string dist = j.value("distribution", std::string("q_bar"));
        if (dist != "q_bar" && dist != "p_bar") {
            throw ValidationError("distribution must be q_bar or p_bar");
        }
        p.p_bar = dist == "p_bar";
        return p;
    }

    Reply status(const std::string& id)
    {
        auto s = find(id);
        if (!s) {
            return error_reply(404, "unknown session " + id);
        }
        std::lock_guard lock(s->mutex);
        nlohmann::json j{{"session_id", s->id},
                         {"state", to_string(s->state)},
                         {"stage", s->stage},
                         {"progress", s->progress},
                         {"width", s->image.width},
                         {"height", s->image.height}};
        if (s->model) {
            j["N"] = s->model->superpixels.count;
            j["labeled"] = s->labels.size();
        }
        if (!s->error.empty()) {
            j["error"] = s->error;
        }
        return {200, j};
    }

    Reply overlay(const std::string& id)
    {
        return with_ready(id, [](Session& s) -> Reply {
            const auto& sp = s.model->superpixels;
            nlohmann::json bounds = nlohmann::json::array();
            const auto b = sp.boundaries();
            for (std::size_t g = 0; g < b.size(); ++g) {
                nlohmann::json pts = nlohmann::json::array();
                for (const auto& p : b[g]) {
                    pts.push_back({p[0], p[1]});
                }
                bounds.push_back({{"group_id", g + 1}, {"pixels", std::move(pts)}});
            }
            const auto& probs = s.distribution->probs();
            std::vector<double> dist(probs.data(), probs.data() + probs.size());
            return {200, nlohmann::json{{"session_id", s.id},
                                        {"N", sp.count},
                                        {"width", sp.width},
                                        {"height", sp.height},
                                        {"labels", sp.labels},
                                        {"boundaries", std::move(bounds)},
                                        {"distribution", dist},
                                        {"distribution_kind", to_string(s.distribution->provenance())}}};
        });
    }

    Reply proposals(const std::string& id, const std::string& body)
    {
        nlohmann::json j;
        try {
            j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
        } catch (const std::exception& e) {
            return error_reply(400, std::string("malformed JSON: ") + e.what());
        }
        return with_ready(id, [&](Session& s) -> Reply {
            Index count = 50;
            std::uint64_t seed = 0;
            try {
                count = j.value("s", count);
                seed = j.value("seed", seed);
            } catch (const std::exception& e) {
                return error_reply(422, e.what());
            }
            if (count < 1) {
                return error_reply(422, "s must be positive");
            }
            const auto draw = draw_groups(*s.distribution, count, seed);
            std::vector<Index> order;
            std::map<Index, Index> mult;
            for (Index g : draw.omega) {
                if (mult[g]++ == 0) {
                    order.push_back(g);
                }
            }
            nlohmann::json ids = nlohmann::json::array();
            nlohmann::json multiplicity = nlohmann::json::array();
            for (Index g : order) {
                ids.push_back(g + 1);
                multiplicity.push_back(mult[g]);
            }
            s.proposals.push_back(draw.omega);
            return {200, nlohmann::json{{"group_ids", std::move(ids)},
                                        {"multiplicity", std::move(multiplicity)},
                                        {"s", count},
                                        {"seed", seed},
                                        {"round", s.proposals.size()}}};
        });
    }

    /// Body {"<group_id>": 0|1, ...}; rejected as a whole on any invalid entry.
    Reply labels(const std::string& id, const std::string& body)
    {
        nlohmann::json j;
        try {
            j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
        } catch (const std::exception& e) {
            return error_reply(400, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) {
            return error_reply(422, "labels must be a JSON object of group_id: 0|1");
        }
        return with_ready(id, [&](Session& s) -> Reply {
            std::vector<std::pair<Index, int>> updates;
            for (const auto& [key, value] : j.items()) {
                Index g = 0;
                try {
                    std::size_t used = 0;
                    g = std::stol(key, &used);
                    if (used != key.size()) {
                        throw std::invalid_argument(key);
                    }
                } catch (const std::exception&) {
                    return error_reply(422, "group id '" + key + "' is not an integer");
                }
                if (g < 1 || g > s.model->superpixels.count) {
                    return error_reply(422, "unknown group id " + key);
                }
                if (!value.is_number_integer() || (value.get<int>() != 0 && value.get<int>() != 1)) {
                    return error_reply(422, "label for group " + key + " must be 0 or 1");
                }
                updates.emplace_back(g - 1, value.get<int>());
            }
            for (const auto& [g, v] : updates) {
                s.labels[g] = v;
            }
            return {200, nlohmann::json{{"accepted", updates.size()}, {"labeled", s.labels.size()}}};
        });
    }

    /// Body {decoder: fast|full, gamma: number, constrained: bool}; the full
    /// decoder starts from the lifted fast solution.
    Reply reconstruct(const std::string& id, const std::string& body)
    {
        nlohmann::json j;
        try {
            j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
        } catch (const std::exception& e) {
            return error_reply(400, std::string("malformed JSON: ") + e.what());
        }
        return with_ready(id, [&](Session& s) -> Reply {
            if (s.labels.empty()) {
                return error_reply(409, "no labels recorded; nothing to reconstruct");
            }
            SegmentationDecodeOptions opt;
            std::string decoder;
            try {
                decoder = j.value("decoder", std::string("fast"));
                const bool constrained = j.value("constrained", !j.contains("gamma"));
                opt.gamma = constrained ? 0.0 : j.value("gamma", 1e-3);
            } catch (const std::exception& e) {
                return error_reply(422, e.what());
            }
            if (decoder != "fast" && decoder != "full") {
                return error_reply(422, "decoder must be fast or full");
            }
            if (opt.gamma < 0.0) {
                return error_reply(422, "gamma must be nonnegative");
            }
            opt.decoder = decoder == "fast" ? SegmentationDecoder::fast : SegmentationDecoder::fast_then_full;
            const auto [draw, vals] = draw_from_labels(s.labels, *s.distribution);
            detail::Stopwatch sw;
            SegmentationDecode res;
            try {
                res = decode_labels(*s.model, draw, vals, opt);
            } catch (const std::exception& e) {
                return error_reply(500, std::string("reconstruction failed: ") + e.what());
            }
            const double ms = sw.millis();
            const auto& sp = s.model->superpixels;
            s.mask_png = encode_png(mask_to_raster(threshold_mask(res.estimate()), sp.height, sp.width));
            nlohmann::json out{{"mask_png", base64_encode(s.mask_png)},
                               {"timing_ms", ms},
                               {"decoder", decoder},
                               {"labeled", s.labels.size()},
                               {"gamma", opt.gamma}};
            if (res.fast) {
                out["fast_ms"] = res.fast->millis;
            }
            if (res.full) {
                out["full_ms"] = res.full->millis;
            }
            return {200, out};
        });
    }

    /// Registers the /v1 routes on an httplib server.
    void mount(httplib::Server& svr)
    {
        // base64 inflates the 16 MB image limit by 4/3
        svr.set_payload_max_length(max_image_bytes * 4 / 3 + (1u << 20));
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        svr.Post("/v1/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
            if (req.is_multipart_form_data()) {
                if (!req.has_file("image")) {
                    send(res, error_reply(422, "multipart upload lacks an 'image' part"));
                    return;
                }
                const auto file = req.get_file_value("image");
                nlohmann::json j = nlohmann::json::object();
                for (const char* key : {"n_superpixels", "k0", "order", "seed"}) {
                    if (req.has_file(key)) {
                        j[key] = std::stoll(req.get_file_value(key).content);
                    }
                }
                SessionParams p;
                try {
                    p = params_from_json(j);
                } catch (const std::exception& e) {
                    send(res, error_reply(422, e.what()));
                    return;
                }
                send(res, create(std::vector<std::uint8_t>(file.content.begin(), file.content.end()), p));
                return;
            }
            send(res, create_json(req.body));
        });
        svr.Get(R"(/v1/sessions/([^/]+)/status)",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, status(req.matches[1])); });
        svr.Get(R"(/v1/sessions/([^/]+)/overlay)",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, overlay(req.matches[1])); });
        svr.Post(R"(/v1/sessions/([^/]+)/proposals)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, proposals(req.matches[1], req.body));
        });
        svr.Post(R"(/v1/sessions/([^/]+)/labels)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, labels(req.matches[1], req.body));
        });
        svr.Post(R"(/v1/sessions/([^/]+)/reconstruct)",
                 [this, send](const httplib::Request& req, httplib::Response& res) {
                     send(res, reconstruct(req.matches[1], req.body));
                 });
        svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                const std::string msg = res.status == 413 ? "payload too large" : httplib::status_message(res.status);
                res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
            }
        });
        svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                msg = e.what();
            } catch (...) {
            }
            res.status = 500;
            res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
        });
        server_ = &svr;
    }

    void stop()
    {
        if (server_) {
            server_->stop();
            server_ = nullptr;
        }
    }

    /// Blocks until the session leaves the building state or the timeout passes.
    bool wait_ready(const std::string& id, std::chrono::milliseconds timeout)
    {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            auto s = find(id);
            if (!s) {
                return false;
            }
            {
                std::lock_guard lock(s->mutex);
                if (s->state != SessionState::building) {
                    return s->state == SessionState::ready;
                }
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        return false;
    }

private:
    std::shared_ptr<Session> find(const std::string& id)
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    template <class Fn>
    Reply with_ready(const std::string& id, Fn&& fn)
    {
        auto s = find(id);
        if (!s) {
            return error_reply(404, "unknown session " + id);
        }
        std::lock_guard lock(s->mutex);
        if (s->state == SessionState::building) {
            return error_reply(409, "session is still building (" + s->stage + ")");
        }
        if (s->state == SessionState::failed) {
            return error_reply(409, "session build failed: " + s->error);
        }
        return fn(*s);
    }

    /// Opaque id: a counter mixed with a per-process random salt.
    std::string next_id()
    {
        std::ostringstream out;
        out << std::hex << mix64(salt_ ^ ++counter_);
        return out.str();
    }

    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::vector<std::thread> builders_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_ = std::random_device{}();
    httplib::Server* server_ = nullptr;
};

} // namespace gsamp
