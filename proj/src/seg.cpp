#include "tseg/seg.hpp"

#include "tseg/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace tseg::seg {

using nlohmann::json;

std::size_t Bitmask::count() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<std::uint32_t> rle_encode(const Bitmask& mask)
{
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (auto b : mask.bits) {
        const std::uint8_t v = b ? 1 : 0;
        if (v != current) {
            runs.push_back(run);
            run = 0;
            current = v;
        }
        ++run;
    }
    runs.push_back(run);
    return runs;
}

Bitmask rle_decode(std::span<const std::uint32_t> rle, int width, int height)
{
    if (width <= 0 || height <= 0) throw ParseError("RLE mask with non-positive dimensions");
    Bitmask m(width, height);
    std::size_t pos = 0;
    std::uint8_t v = 0;
    for (auto run : rle) {
        if (pos + run > m.bits.size()) throw ParseError("RLE runs exceed width*height");
        std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, v);
        pos += run;
        v ^= 1;
    }
    if (pos != m.bits.size()) throw ParseError("RLE runs do not cover width*height");
    return m;
}

void canonicalize(std::vector<MaskProposal>& proposals)
{
    std::stable_sort(proposals.begin(), proposals.end(), [](const MaskProposal& a, const MaskProposal& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::lexicographical_compare(a.rle.begin(), a.rle.end(), b.rle.begin(), b.rle.end());
    });
}

void validate(const SegNoiseConfig& cfg)
{
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError(std::string(name) + " must lie in [0,1]");
    };
    prob(cfg.p_split, "p_split");
    prob(cfg.p_papilla, "p_papilla");
    prob(cfg.p_gum, "p_gum");
    if (cfg.boundary_jitter_px < 0) throw PreconditionError("boundary_jitter_px must be >= 0");
}

namespace {

// 1D running max/min over a window of +-r, ignoring out-of-range samples.
void morph_pass(const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out, int w, int h, int r,
                bool horizontal, bool is_max)
{
    const int len = horizontal ? w : h;
    const int lines = horizontal ? h : w;
    std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
    for (int l = 0; l < lines; ++l) {
        auto at = [&](int i) -> std::size_t {
            return horizontal ? static_cast<std::size_t>(l) * w + i : static_cast<std::size_t>(i) * w + l;
        };
        prefix[0] = 0;
        for (int i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + in[at(i)];
        for (int i = 0; i < len; ++i) {
            const int lo = std::max(0, i - r);
            const int hi = std::min(len - 1, i + r);
            const int ones = prefix[hi + 1] - prefix[lo];
            out[at(i)] = is_max ? (ones > 0) : (ones == hi - lo + 1);
        }
    }
}

Bitmask morph(const Bitmask& m, int radius, bool is_max)
{
    if (radius <= 0) return m;
    Bitmask tmp(m.width, m.height);
    Bitmask out(m.width, m.height);
    morph_pass(m.bits, tmp.bits, m.width, m.height, radius, true, is_max);
    morph_pass(tmp.bits, out.bits, m.width, m.height, radius, false, is_max);
    return out;
}

MaskProposal to_proposal(const Bitmask& m, const std::string& tag, double score)
{
    return MaskProposal{tag, m.width, m.height, rle_encode(m), score};
}

} // namespace

Bitmask dilate(const Bitmask& m, int radius) { return morph(m, radius, true); }
Bitmask erode(const Bitmask& m, int radius) { return morph(m, radius, false); }

std::vector<OracleMask> mock_oracle_masks(const render::RenderOutput& out, const FaceLabeling& gt,
                                          const SegNoiseConfig& noise)
{
    validate(noise);
    const int w = out.width();
    const int h = out.height();
    const auto& tag = out.camera.view_tag;
    Rng rng(derive_seed(noise.seed, tag));

    // per-pixel gt instance, -1 = empty pixel
    std::vector<int> inst(static_cast<std::size_t>(w) * h, -1);
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto f = out.face_id[i];
        if (f >= 0) {
            if (static_cast<std::size_t>(f) >= gt.size()) throw PreconditionError("ground truth does not match render");
            inst[i] = gt.labels[f];
        }
    }

    std::map<int, Bitmask> clean;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        if (inst[i] <= 0) continue;
        auto [it, fresh] = clean.try_emplace(inst[i], w, h);
        it->second.bits[i] = 1;
    }

    struct Pending {
        Bitmask mask;
        MaskOrigin origin;
        int gt_instance;
    };
    std::vector<Pending> pending;

    // 1. instance masks, optionally split across the minor axis through the pixel centroid
    for (const auto& [id, m] : clean) {
        const bool split = rng.bernoulli(noise.p_split);
        if (!split) {
            pending.push_back({m, MaskOrigin::instance, id});
            continue;
        }
        double n = 0, sx = 0, sy = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m.bits[static_cast<std::size_t>(y) * w + x]) {
                    n += 1;
                    sx += x;
                    sy += y;
                }
        const double cx = sx / n, cy = sy / n;
        double cxx = 0, cxy = 0, cyy = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m.bits[static_cast<std::size_t>(y) * w + x]) {
                    cxx += (x - cx) * (x - cx);
                    cxy += (x - cx) * (y - cy);
                    cyy += (y - cy) * (y - cy);
                }
        // major-axis direction of the 2x2 covariance
        const double theta = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
        const double ux = std::cos(theta), uy = std::sin(theta);
        Bitmask a(w, h), b(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (!m.bits[i]) continue;
                ((x - cx) * ux + (y - cy) * uy < 0.0 ? a : b).bits[i] = 1;
            }
        if (a.count() == 0 || b.count() == 0) {
            pending.push_back({m, MaskOrigin::instance, id});
        } else {
            pending.push_back({std::move(a), MaskOrigin::split_half, id});
            pending.push_back({std::move(b), MaskOrigin::split_half, id});
        }
    }

    // 2. papilla blobs at boundary points between adjacent instances
    constexpr int kAdjacencyGap = 12;
    std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> boundary;
    auto scan = [&](bool rows) {
        const int lines = rows ? h : w;
        const int len = rows ? w : h;
        for (int l = 0; l < lines; ++l) {
            int last_pos = -1, last_id = 0;
            for (int i = 0; i < len; ++i) {
                const int x = rows ? i : l;
                const int y = rows ? l : i;
                const int id = inst[static_cast<std::size_t>(y) * w + x];
                if (id <= 0) continue;
                if (last_id > 0 && id != last_id && i - last_pos <= kAdjacencyGap) {
                    const int m = (last_pos + i) / 2;
                    boundary[{std::min(id, last_id), std::max(id, last_id)}].emplace_back(rows ? m : l, rows ? l : m);
                }
                last_pos = i;
                last_id = id;
            }
        }
    };
    scan(true);
    scan(false);
    for (const auto& [pair, points] : boundary) {
        if (!rng.bernoulli(noise.p_papilla)) continue;
        const auto [px, py] = points[rng.below(points.size())];
        const int r = 3 + static_cast<int>(rng.below(4));
        Bitmask disc(w, h);
        for (int y = std::max(0, py - r); y <= std::min(h - 1, py + r); ++y)
            for (int x = std::max(0, px - r); x <= std::min(w - 1, px + r); ++x)
                if ((x - px) * (x - px) + (y - py) * (y - py) <= r * r) disc.bits[static_cast<std::size_t>(y) * w + x] = 1;
        pending.push_back({std::move(disc), MaskOrigin::papilla, 0});
    }

    // 3. gingiva: every visible background-labeled pixel
    if (rng.bernoulli(noise.p_gum)) {
        Bitmask gum(w, h);
        for (std::size_t i = 0; i < inst.size(); ++i) gum.bits[i] = inst[i] == 0;
        if (gum.count() > 0) pending.push_back({std::move(gum), MaskOrigin::gum, 0});
    }

    std::vector<OracleMask> result;
    for (auto& p : pending) {
        Bitmask m = noise.boundary_jitter_px > 0 ? erode(dilate(p.mask, noise.boundary_jitter_px), noise.boundary_jitter_px)
                                                 : std::move(p.mask);
        if (m.count() == 0) continue;
        const bool injected = p.origin == MaskOrigin::papilla || p.origin == MaskOrigin::gum;
        result.push_back({to_proposal(m, tag, injected ? kInjectedMaskScore : kTrueMaskScore), p.origin, p.gt_instance});
    }
    return result;
}

std::vector<MaskProposal> mock_oracle_segment(const render::RenderOutput& out, const FaceLabeling& gt,
                                              const SegNoiseConfig& noise)
{
    std::vector<MaskProposal> props;
    for (auto& m : mock_oracle_masks(out, gt, noise)) props.push_back(std::move(m.proposal));
    return props;
}

// ----------------------------------------------------------------- wire codecs

std::string encode_segment_request(const ImageRGB& image, std::string_view prompt)
{
    json j;
    j["image_png_b64"] = base64_encode(encode_png(image));
    j["prompt"] = prompt;
    return j.dump();
}

std::string encode_segment_response(const std::vector<WireMask>& masks)
{
    json arr = json::array();
    for (const auto& m : masks) arr.push_back({{"rle", m.rle}, {"width", m.width}, {"height", m.height}, {"score", m.score}});
    return json{{"masks", arr}}.dump();
}

namespace {

[[noreturn]] void malformed(std::string_view what, std::string_view body)
{
    std::string excerpt(body.substr(0, 200));
    if (body.size() > 200) excerpt += "...";
    throw ServiceError("malformed segmentation response (" + std::string(what) + "); payload: " + excerpt);
}

} // namespace

std::vector<WireMask> parse_segment_response(std::string_view body, int expect_width, int expect_height)
{
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        malformed(e.what(), body);
    }
    if (!j.is_object() || !j.contains("masks") || !j["masks"].is_array()) malformed("missing 'masks' array", body);
    std::vector<WireMask> out;
    for (const auto& m : j["masks"]) {
        if (!m.is_object()) malformed("mask is not an object", body);
        for (const char* key : {"rle", "width", "height", "score"})
            if (!m.contains(key)) malformed(std::string("mask lacks '") + key + "'", body);
        if (!m["rle"].is_array() || !m["width"].is_number_integer() || !m["height"].is_number_integer() ||
            !m["score"].is_number())
            malformed("mask field has the wrong type", body);
        WireMask wm;
        wm.width = m["width"].get<int>();
        wm.height = m["height"].get<int>();
        wm.score = m["score"].get<double>();
        if (wm.width != expect_width || wm.height != expect_height) malformed("mask dimensions differ from the image", body);
        if (!(wm.score >= 0.0 && wm.score <= 1.0)) malformed("score outside [0,1]", body);
        std::uint64_t total = 0;
        for (const auto& r : m["rle"]) {
            if (!r.is_number_unsigned() && !(r.is_number_integer() && r.get<long long>() >= 0))
                malformed("RLE entry is not a non-negative integer", body);
            const auto v = r.get<std::uint64_t>();
            if (v > 0xFFFFFFFFull) malformed("RLE entry too large", body);
            wm.rle.push_back(static_cast<std::uint32_t>(v));
            total += v;
        }
        if (total != static_cast<std::uint64_t>(wm.width) * wm.height) malformed("RLE does not sum to width*height", body);
        out.push_back(std::move(wm));
    }
    return out;
}

// ----------------------------------------------------------------- mock service

MockSegService::MockSegService(FaceLabeling gt, SegNoiseConfig noise) : gt_(std::move(gt)), noise_(noise)
{
    validate(noise_);
}

void MockSegService::register_view(const render::RenderOutput& out)
{
    auto copy = std::make_shared<render::RenderOutput>(out);
    std::lock_guard lock(mutex_);
    views_[image_hash(out.rgb)] = std::move(copy);
}

std::size_t MockSegService::view_count() const
{
    std::lock_guard lock(mutex_);
    return views_.size();
}

std::vector<WireMask> MockSegService::segment(const ImageRGB& image) const
{
    std::shared_ptr<const render::RenderOutput> view;
    {
        std::lock_guard lock(mutex_);
        auto it = views_.find(image_hash(image));
        if (it == views_.end()) throw PreconditionError("mock segmenter: image was not registered");
        view = it->second;
    }
    std::vector<WireMask> out;
    for (auto& p : mock_oracle_segment(*view, gt_, noise_)) out.push_back({std::move(p.rle), p.width, p.height, p.score});
    return out;
}

std::pair<int, std::string> MockSegService::handle(std::string_view request_body) const
{
    ImageRGB image;
    try {
        const auto j = json::parse(request_body);
        image = decode_png(base64_decode(j.at("image_png_b64").get<std::string>()));
        (void)j.at("prompt").get<std::string>();
    } catch (const std::exception& e) {
        return {400, json{{"error", std::string("bad request: ") + e.what()}}.dump()};
    }
    try {
        return {200, encode_segment_response(segment(image))};
    } catch (const PreconditionError& e) {
        return {422, json{{"error", e.what()}}.dump()};
    }
}

std::vector<WireMask> InProcessSegBackend::segment(const ImageRGB& image, std::string_view)
{
    return service_.segment(image);
}

std::vector<MaskProposal> segment_image(SegBackend& backend, const ImageRGB& image, std::string_view view_tag,
                                        std::string_view prompt)
{
    if (image.empty()) throw PreconditionError("segment_image: empty image");
    auto masks = backend.segment(image, prompt);
    std::vector<MaskProposal> out;
    out.reserve(masks.size());
    for (auto& m : masks) {
        if (m.width != image.width || m.height != image.height)
            throw ServiceError("segmentation mask dimensions differ from the image");
        (void)rle_decode(m.rle, m.width, m.height); // validates run totals
        out.push_back({std::string(view_tag), m.width, m.height, std::move(m.rle), m.score});
    }
    canonicalize(out);
    return out;
}

} // namespace tseg::seg
