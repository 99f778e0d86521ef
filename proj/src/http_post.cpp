#include "http_post.hpp"

#include <httplib.h>

#include <thread>

namespace tseg::detail {

std::string post_json(const seg::HttpClientConfig& cfg, std::string_view path, const std::string& body)
{
    if (cfg.endpoint.empty()) throw PreconditionError("service endpoint is empty");
    if (cfg.max_attempts < 1) throw PreconditionError("max_attempts must be >= 1");

    httplib::Client client(cfg.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const std::string target(path);
    std::string last_error;
    auto backoff = cfg.backoff;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        auto res = client.Post(target, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (res->status >= 200 && res->status < 300) {
            return res->body;
        } else if (res->status < 500) {
            throw ServiceError(cfg.endpoint + target + " answered HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200));
        } else {
            last_error = "HTTP " + std::to_string(res->status);
        }
        if (attempt < cfg.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw ServiceError(cfg.endpoint + target + " failed after " + std::to_string(cfg.max_attempts) +
                       " attempts (" + last_error + ")");
}

} // namespace tseg::detail

namespace tseg::seg {

HttpSegBackend::HttpSegBackend(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}

std::vector<WireMask> HttpSegBackend::segment(const ImageRGB& image, std::string_view prompt)
{
    const auto reply = detail::post_json(cfg_, "/v1/segment", encode_segment_request(image, prompt));
    return parse_segment_response(reply, image.width, image.height);
}

} // namespace tseg::seg
