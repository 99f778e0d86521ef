#include "tseg/fusion.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>

namespace tseg::fusion {

void validate(const FusionConfig& cfg)
{
    auto unit = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) throw PreconditionError(std::string(name) + " must lie in (0,1]");
    };
    unit(cfg.tau_merge, "tau_merge");
    unit(cfg.tau_contain, "tau_contain");
    if (!(cfg.min_pixel_fraction >= 0.0 && cfg.min_pixel_fraction < 1.0))
        throw PreconditionError("min_pixel_fraction must lie in [0,1)");
    if (!(cfg.min_instance_area_mm2 >= 0.0)) throw PreconditionError("min_instance_area_mm2 must be >= 0");
    if (cfg.smoothing_iters < 0) throw PreconditionError("smoothing_iters must be >= 0");
}

ViewIndex::ViewIndex(const render::RenderOutput& out)
    : width_(out.width()), height_(out.height()), face_id_(&out.face_id)
{
    for (auto f : out.face_id)
        if (f >= 0) ++counts_[f];
}

std::int64_t ViewIndex::visible_pixels(std::int32_t face) const
{
    auto it = counts_.find(face);
    return it == counts_.end() ? 0 : it->second;
}

FaceMask backproject(const seg::MaskProposal& mask, const ViewIndex& view, std::span<const double> face_areas,
                     const FusionConfig& cfg)
{
    if (mask.width != view.width() || mask.height != view.height())
        throw PreconditionError("backproject: mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                " does not match render " + std::to_string(view.width()) + "x" +
                                std::to_string(view.height()));
    const auto bits = mask.decode();
    const auto& ids = view.face_ids();
    std::unordered_map<std::int32_t, std::int64_t> inside;
    for (std::size_t i = 0; i < bits.bits.size(); ++i)
        if (bits.bits[i] && ids[i] >= 0) ++inside[ids[i]];

    FaceMask fm;
    fm.view_tag = mask.view_tag;
    for (const auto& [face, n] : inside) {
        const auto visible = view.visible_pixels(face);
        if (static_cast<double>(n) > cfg.min_pixel_fraction * static_cast<double>(visible)) fm.faces.push_back(face);
    }
    std::sort(fm.faces.begin(), fm.faces.end());
    for (auto f : fm.faces) {
        if (static_cast<std::size_t>(f) >= face_areas.size()) throw PreconditionError("backproject: face index beyond mesh");
        fm.area += face_areas[f];
    }
    return fm;
}

FaceMask backproject(const seg::MaskProposal& mask, const render::RenderOutput& out,
                     std::span<const double> face_areas, const FusionConfig& cfg)
{
    return backproject(mask, ViewIndex(out), face_areas, cfg);
}

namespace {

double intersection_area(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b,
                         std::span<const double> areas)
{
    double s = 0.0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            s += areas[*i];
            ++i;
            ++j;
        }
    }
    return s;
}

MaskOverlap overlap_from(double inter, double area_a, double area_b)
{
    MaskOverlap o;
    const double uni = area_a + area_b - inter;
    o.iou = uni > 0.0 ? inter / uni : 0.0;
    o.contain_a = area_a > 0.0 ? inter / area_a : 0.0;
    o.contain_b = area_b > 0.0 ? inter / area_b : 0.0;
    return o;
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    bool unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (b < a) std::swap(a, b);
        parent_[b] = a; // smallest index stays the root
        return true;
    }

private:
    std::vector<std::size_t> parent_;
};

struct Link {
    std::size_t a, b; // mask indices
};

} // namespace

MaskOverlap mask_iou(const FaceMask& a, const FaceMask& b, std::span<const double> face_areas)
{
    return overlap_from(intersection_area(a.faces, b.faces, face_areas), a.area, b.area);
}

FaceLabeling merge_masks(std::span<const FaceMask> input, std::span<const double> face_areas, std::size_t face_count,
                         const FusionConfig& cfg)
{
    validate(cfg);
    if (face_areas.size() < face_count) throw PreconditionError("merge_masks: face_areas shorter than face_count");

    // Canonical order makes everything below independent of the input order.
    std::vector<const FaceMask*> masks;
    for (const auto& m : input) {
        if (m.empty()) continue;
        if (static_cast<std::size_t>(m.faces.back()) >= face_count || m.faces.front() < 0)
            throw PreconditionError("merge_masks: face index out of range");
        masks.push_back(&m);
    }
    std::sort(masks.begin(), masks.end(), [](const FaceMask* x, const FaceMask* y) {
        if (x->faces != y->faces) return x->faces < y->faces;
        return x->view_tag < y->view_tag;
    });
    const std::size_t n = masks.size();

    FaceLabeling result;
    result.labels.assign(face_count, 0);
    if (n == 0) return result;

    // views as dense ids so voting never looks at tag text
    std::map<std::string, int> view_ids;
    for (auto* m : masks) view_ids.emplace(m->view_tag, 0);
    int next_view = 0;
    for (auto& [tag, id] : view_ids) id = next_view++;
    std::vector<int> view_of(n);
    for (std::size_t i = 0; i < n; ++i) view_of[i] = view_ids.at(masks[i]->view_tag);

    UnionFind uf(n);
    std::vector<Link> links;  // cross-view containment
    std::vector<Link> nested; // same-view containment
    std::vector<std::vector<std::size_t>> containers(n); // cross-view masks holding mask i
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double inter = intersection_area(masks[i]->faces, masks[j]->faces, face_areas);
            if (inter <= 0.0) continue;
            const auto o = overlap_from(inter, masks[i]->area, masks[j]->area);
            const bool contained = std::max(o.contain_a, o.contain_b) > cfg.tau_contain;
            if (view_of[i] == view_of[j]) {
                if (contained) nested.push_back({i, j});
                continue;
            }
            if (o.contain_a > cfg.tau_contain) containers[i].push_back(j);
            if (o.contain_b > cfg.tau_contain) containers[j].push_back(i);
            if (o.iou > cfg.tau_merge) {
                uf.unite(i, j);
            } else if (contained) {
                links.push_back({i, j});
            }
        }
    }

    // Cluster-level consensus; merging can create new cluster pairs, so iterate.
    std::set<std::pair<std::size_t, std::size_t>> contains; // (container root, contained root)
    std::vector<double> cluster_area;
    for (;;) {
        std::vector<std::vector<std::int32_t>> cluster_faces(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& cf = cluster_faces[uf.find(i)];
            cf.insert(cf.end(), masks[i]->faces.begin(), masks[i]->faces.end());
        }
        cluster_area.assign(n, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            auto& cf = cluster_faces[c];
            std::sort(cf.begin(), cf.end());
            cf.erase(std::unique(cf.begin(), cf.end()), cf.end());
            for (auto f : cf) cluster_area[c] += face_areas[f];
        }
        std::vector<std::set<int>> views_of(n);
        std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> members; // (root, view) -> masks
        for (std::size_t i = 0; i < n; ++i) {
            views_of[uf.find(i)].insert(view_of[i]);
            members[{uf.find(i), view_of[i]}].push_back(i);
        }
        // one mask of another view holds a mask of each cluster seen in view v
        auto bridged = [&](std::size_t x, std::size_t y, int v) {
            const auto& xs = members.at({x, v});
            const auto& ys = members.at({y, v});
            for (auto a : xs)
                for (auto m : containers[a])
                    for (auto b : ys)
                        if (std::find(containers[b].begin(), containers[b].end(), m) != containers[b].end()) return true;
            return false;
        };

        using Key = std::pair<std::size_t, std::size_t>;
        auto key_of = [&](const Link& l) -> std::optional<Key> {
            const auto ca = uf.find(l.a);
            const auto cb = uf.find(l.b);
            if (ca == cb) return std::nullopt;
            return Key{std::min(ca, cb), std::max(ca, cb)};
        };
        std::map<Key, std::set<int>> linked_views;
        for (const auto& l : links)
            if (auto k = key_of(l)) {
                linked_views[*k].insert(view_of[l.a]);
                linked_views[*k].insert(view_of[l.b]);
            }
        std::map<Key, std::set<int>> nested_views;
        for (const auto& l : nested)
            if (auto k = key_of(l)) nested_views[*k].insert(view_of[l.a]);

        // one union per pass, strongest consensus first, so a small mask linked to two distinct
        // objects cannot chain them together
        contains.clear();
        std::optional<Key> best;
        int best_margin = 0, best_same = 0;
        for (const auto& [pair, lviews] : linked_views) {
            const auto [x, y] = pair;
            const auto nit = nested_views.find(pair);
            int distinct = 0, same = 0;
            std::set<int> all = views_of[x];
            all.insert(views_of[y].begin(), views_of[y].end());
            for (int v : all) {
                const bool hx = views_of[x].count(v) > 0;
                const bool hy = views_of[y].count(v) > 0;
                if (hx && hy) {
                    const bool nested_here = nit != nested_views.end() && nit->second.count(v);
                    if (!nested_here && bridged(x, y, v))
                        ++same;
                    else
                        ++distinct;
                } else if (lviews.count(v)) {
                    ++same;
                }
            }
            const int margin = same - distinct;
            if (margin > 0 && (!best || margin > best_margin || (margin == best_margin && same > best_same))) {
                best = pair;
                best_margin = margin;
                best_same = same;
            }
            if (margin <= 0) {
                const bool x_bigger = cluster_area[x] > cluster_area[y] || (cluster_area[x] == cluster_area[y] && x < y);
                contains.insert(x_bigger ? std::pair{x, y} : std::pair{y, x});
            }
        }
        const bool merged = best && uf.unite(best->first, best->second);
        if (!merged) break;
    }

    // Face support: number of masks of each cluster covering the face.
    std::vector<std::pair<std::int32_t, std::size_t>> entries;
    for (std::size_t i = 0; i < n; ++i)
        for (auto f : masks[i]->faces) entries.emplace_back(f, uf.find(i));
    std::sort(entries.begin(), entries.end());

    std::vector<int> assigned(face_count, -1);
    std::vector<std::pair<std::size_t, int>> cand;
    for (std::size_t k = 0; k < entries.size();) {
        const auto face = entries[k].first;
        cand.clear();
        while (k < entries.size() && entries[k].first == face) {
            const auto c = entries[k].second;
            if (!cand.empty() && cand.back().first == c)
                ++cand.back().second;
            else
                cand.emplace_back(c, 1);
            ++k;
        }
        auto better = [&](const std::pair<std::size_t, int>& p, const std::pair<std::size_t, int>& q) {
            if (p.second != q.second) return p.second > q.second;
            if (cluster_area[p.first] != cluster_area[q.first]) return cluster_area[p.first] < cluster_area[q.first];
            return p.first < q.first;
        };
        auto win = *std::min_element(cand.begin(), cand.end(), better);
        // contained clusters take precedence over their containers
        std::set<std::size_t> seen{win.first};
        for (;;) {
            const std::pair<std::size_t, int>* next = nullptr;
            for (const auto& c : cand)
                if (contains.count({win.first, c.first}) && !seen.count(c.first) && (!next || better(c, *next)))
                    next = &c;
            if (!next) break;
            win = *next;
            seen.insert(win.first);
        }
        assigned[face] = static_cast<int>(win.first);
    }

    // dense ids by descending assigned area, ties by smallest face
    std::map<int, std::pair<double, std::int32_t>> stats;
    for (std::size_t f = 0; f < face_count; ++f) {
        if (assigned[f] < 0) continue;
        auto [it, fresh] = stats.try_emplace(assigned[f], 0.0, static_cast<std::int32_t>(f));
        it->second.first += face_areas[f];
    }
    std::vector<std::pair<int, std::pair<double, std::int32_t>>> order(stats.begin(), stats.end());
    std::sort(order.begin(), order.end(), [](const auto& p, const auto& q) {
        if (p.second.first != q.second.first) return p.second.first > q.second.first;
        return p.second.second < q.second.second;
    });
    std::map<int, int> new_id;
    for (std::size_t i = 0; i < order.size(); ++i) new_id[order[i].first] = static_cast<int>(i) + 1;
    for (std::size_t f = 0; f < face_count; ++f)
        if (assigned[f] >= 0) result.labels[f] = new_id.at(assigned[f]);
    return result;
}

FaceLabeling densify(const FaceLabeling& labeling)
{
    const auto ids = instance_ids(labeling);
    std::map<int, int> remap;
    for (std::size_t i = 0; i < ids.size(); ++i) remap[ids[i]] = static_cast<int>(i) + 1;
    FaceLabeling out = labeling;
    for (auto& l : out.labels)
        if (l != 0) l = remap.at(l);
    return out;
}

FaceLabeling cleanup(const FaceLabeling& labeling, const TriMesh& mesh, const FusionConfig& cfg)
{
    validate(cfg);
    if (labeling.size() != mesh.face_count()) throw PreconditionError("cleanup: labeling size differs from face count");
    const auto geom = face_geometry(mesh);

    FaceLabeling cur = labeling;
    std::map<int, double> area;
    for (std::size_t f = 0; f < cur.size(); ++f)
        if (cur[f] != 0) area[cur[f]] += geom.areas[f];
    for (auto& l : cur.labels)
        if (l != 0 && area[l] < cfg.min_instance_area_mm2) l = 0;

    const auto nbrs = face_edge_neighbors(mesh);
    const auto max_sweeps = cfg.smoothing_iters == 0 ? std::size_t{0} : std::max<std::size_t>(cfg.smoothing_iters, cur.size());
    for (std::size_t it = 0; it < max_sweeps; ++it) {
        FaceLabeling next = cur;
        bool changed = false;
        for (std::size_t f = 0; f < cur.size(); ++f) {
            int best = cur[f], best_n = 1;
            std::map<int, int> counts;
            for (auto g : nbrs[f])
                if (cur[g] != 0 && cur[g] != cur[f]) ++counts[cur[g]];
            for (const auto& [label, c] : counts)
                if (c >= 2 && c > best_n) {
                    best = label;
                    best_n = c;
                }
            if (best != cur[f]) {
                next[f] = best;
                changed = true;
            }
        }
        cur = std::move(next);
        if (!changed) break;
    }
    return densify(cur);
}

std::string labeling_to_json(const FaceLabeling& labeling)
{
    return nlohmann::json{{"labels", labeling.labels}}.dump();
}

FaceLabeling labeling_from_json(std::string_view text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        FaceLabeling out;
        out.labels = j.at("labels").get<std::vector<int>>();
        for (auto l : out.labels)
            if (l < 0) throw ParseError("negative label");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("labeling JSON: ") + e.what());
    }
}

} // namespace tseg::fusion
