#pragma once

#include "tseg/image.hpp"
#include "tseg/mesh.hpp"
#include "tseg/render.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tseg::seg {

/// Binary mask, one byte (0/1) per pixel, row-major.
struct Bitmask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Bitmask() = default;
    Bitmask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t count() const;
    bool operator==(const Bitmask&) const = default;
};

/// Alternating run lengths, row-major, starting with the zero run (which may be 0).
std::vector<std::uint32_t> rle_encode(const Bitmask& mask);
Bitmask rle_decode(std::span<const std::uint32_t> rle, int width, int height);

struct MaskProposal {
    std::string view_tag;
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> rle;
    double score = 0.0;

    Bitmask decode() const { return rle_decode(rle, width, height); }
    bool operator==(const MaskProposal&) const = default;
};

/// Descending score, then ascending RLE sequence.
void canonicalize(std::vector<MaskProposal>& proposals);

/// Noise modes of the mock segmenter: over-segmentation, papilla blobs, gingiva masks.
struct SegNoiseConfig {
    double p_split = 0.0;
    double p_papilla = 0.0;
    double p_gum = 0.0;
    int boundary_jitter_px = 0;
    std::uint64_t seed = 0;

    bool is_zero() const { return p_split == 0.0 && p_papilla == 0.0 && p_gum == 0.0 && boundary_jitter_px == 0; }
};

void validate(const SegNoiseConfig& cfg);

constexpr double kTrueMaskScore = 0.9;
constexpr double kInjectedMaskScore = 0.5;

/// Which noise mode produced a proposal; only the mock knows this.
enum class MaskOrigin { instance, split_half, papilla, gum };

struct OracleMask {
    MaskProposal proposal;
    MaskOrigin origin = MaskOrigin::instance;
    int gt_instance = 0; ///< source instance for instance/split masks
};

/// Masks derived from ground-truth face labels seen through a render. The noise stream is
/// seeded with derive_seed(noise.seed, view_tag).
std::vector<OracleMask> mock_oracle_masks(const render::RenderOutput& out, const FaceLabeling& gt,
                                          const SegNoiseConfig& noise);
std::vector<MaskProposal> mock_oracle_segment(const render::RenderOutput& out, const FaceLabeling& gt,
                                              const SegNoiseConfig& noise);

/// Square structuring element, out-of-image pixels ignored.
Bitmask dilate(const Bitmask& m, int radius);
Bitmask erode(const Bitmask& m, int radius);

// ----------------------------------------------------------------- service side

/// One mask as carried on the wire.
struct WireMask {
    std::vector<std::uint32_t> rle;
    int width = 0;
    int height = 0;
    double score = 0.0;
};

class SegBackend {
public:
    virtual ~SegBackend() = default;
    virtual std::vector<WireMask> segment(const ImageRGB& image, std::string_view prompt) = 0;
};

/// Request/response codecs for POST /v1/segment.
std::string encode_segment_request(const ImageRGB& image, std::string_view prompt);
std::string encode_segment_response(const std::vector<WireMask>& masks);
/// Strict parse; throws ServiceError quoting an excerpt of the payload.
std::vector<WireMask> parse_segment_response(std::string_view body, int expect_width, int expect_height);

struct HttpClientConfig {
    std::string endpoint; ///< e.g. http://127.0.0.1:8101
    std::chrono::milliseconds timeout{60'000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{250}; ///< doubled after each failed attempt
};

class HttpSegBackend final : public SegBackend {
public:
    explicit HttpSegBackend(HttpClientConfig cfg);
    std::vector<WireMask> segment(const ImageRGB& image, std::string_view prompt) override;

private:
    HttpClientConfig cfg_;
};

/// Mock segmentation service: renders are registered up front, incoming images are matched
/// by pixel hash and answered by the oracle.
class MockSegService {
public:
    MockSegService(FaceLabeling gt, SegNoiseConfig noise);

    void register_view(const render::RenderOutput& out);
    std::size_t view_count() const;

    /// Throws PreconditionError for unregistered images.
    std::vector<WireMask> segment(const ImageRGB& image) const;

    /// Serves one HTTP request body; returns (status, response body).
    std::pair<int, std::string> handle(std::string_view request_body) const;

private:
    FaceLabeling gt_;
    SegNoiseConfig noise_;
    mutable std::mutex mutex_;
    std::map<std::uint64_t, std::shared_ptr<const render::RenderOutput>> views_;
};

class InProcessSegBackend final : public SegBackend {
public:
    explicit InProcessSegBackend(const MockSegService& service) : service_(service) {}
    std::vector<WireMask> segment(const ImageRGB& image, std::string_view prompt) override;

private:
    const MockSegService& service_;
};

/// Calls the backend, validates every mask against the image and returns proposals in
/// canonical order. Mask bits are never touched.
std::vector<MaskProposal> segment_image(SegBackend& backend, const ImageRGB& image, std::string_view view_tag,
                                        std::string_view prompt = "tooth");

} // namespace tseg::seg
