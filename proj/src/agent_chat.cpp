#include "tseg/agent.hpp"

#include "http_post.hpp"
#include "prompt_templates.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tseg::agent {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Role role)
{
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& s)
{
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw ParseError("unknown chat role '" + s + "'");
}

std::string format_code(int code) { return code == kNonTooth ? "NON_TOOTH" : std::to_string(code); }

// ------------------------------------------------------------------ wire format

std::string encode_chat_request(std::span<const ChatTurn> history)
{
    ordered_json msgs = ordered_json::array();
    for (const auto& t : history) {
        ordered_json images = ordered_json::array();
        for (const auto& img : t.images) images.push_back(base64_encode(encode_png(img)));
        msgs.push_back({{"role", to_string(t.role)}, {"text", t.text}, {"images_png_b64", images}});
    }
    return ordered_json{{"messages", msgs}}.dump();
}

std::vector<ChatTurn> parse_chat_request(std::string_view body)
{
    try {
        const auto j = json::parse(body);
        std::vector<ChatTurn> out;
        for (const auto& m : j.at("messages")) {
            ChatTurn t;
            t.role = role_from_string(m.at("role").get<std::string>());
            t.text = m.at("text").get<std::string>();
            if (m.contains("images_png_b64"))
                for (const auto& b : m["images_png_b64"]) t.images.push_back(decode_png(base64_decode(b.get<std::string>())));
            if (t.role == Role::assistant && !t.images.empty()) throw ParseError("assistant turns carry no images");
            out.push_back(std::move(t));
        }
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("chat request: ") + e.what());
    }
}

std::string encode_chat_response(std::string_view text) { return json{{"text", text}}.dump(); }

std::string parse_chat_response(std::string_view body)
{
    try {
        const auto j = json::parse(body);
        if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
            throw ServiceError("chat response lacks a 'text' string; payload: " + std::string(body.substr(0, 200)));
        return j["text"].get<std::string>();
    } catch (const json::exception& e) {
        throw ServiceError(std::string("malformed chat response (") + e.what() +
                           "); payload: " + std::string(body.substr(0, 200)));
    }
}

HttpChatBackend::HttpChatBackend(seg::HttpClientConfig cfg) : cfg_(std::move(cfg)) {}

std::string HttpChatBackend::complete(std::span<const ChatTurn> history)
{
    return parse_chat_response(tseg::detail::post_json(cfg_, "/v1/chat", encode_chat_request(history)));
}

std::string chat(ChatBackend& backend, std::span<const ChatTurn> history, std::size_t max_images)
{
    std::size_t images = 0;
    for (const auto& t : history) {
        if (t.role == Role::assistant && !t.images.empty()) throw PreconditionError("assistant turns carry no images");
        images += t.images.size();
    }
    if (images > max_images)
        throw PreconditionError("chat request carries " + std::to_string(images) + " images; the limit is " +
                                std::to_string(max_images));
    auto reply = backend.complete(history);
    if (reply.find_first_not_of(" \t\r\n") == std::string::npos) throw ServiceError("chat service returned an empty reply");
    return reply;
}

// ------------------------------------------------------------------ transcript

void Transcript::add(const std::string& task, const ChatTurn& turn)
{
    TranscriptEntry e{task, turn.role, turn.text, {}};
    for (const auto& img : turn.images) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(image_hash(img)));
        e.image_hashes.emplace_back(buf);
    }
    entries_.push_back(std::move(e));
}

std::string Transcript::to_jsonl() const
{
    std::string out;
    for (const auto& e : entries_) {
        ordered_json j{{"task", e.task}, {"role", to_string(e.role)}, {"text", e.text}, {"images", e.image_hashes}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

Transcript Transcript::from_jsonl(std::string_view text)
{
    Transcript t;
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            TranscriptEntry e;
            e.task = j.at("task").get<std::string>();
            e.role = role_from_string(j.at("role").get<std::string>());
            e.text = j.at("text").get<std::string>();
            e.image_hashes = j.value("images", std::vector<std::string>{});
            t.entries_.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ParseError("transcript line " + std::to_string(n) + ": " + ex.what());
        }
    }
    return t;
}

// ------------------------------------------------------------------ templates

std::string prompt_template(std::string_view name)
{
    for (const auto& t : detail::kPromptTemplates)
        if (t.name == name) return std::string(t.text);
    throw PreconditionError("no prompt template named '" + std::string(name) + "'");
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find("}}", open);
        if (close == std::string_view::npos) throw PreconditionError("unterminated template placeholder");
        out.append(tmpl.substr(pos, open - pos));
        const std::string key(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(key);
        if (it == values.end()) throw PreconditionError("template placeholder '" + key + "' has no value");
        out += it->second;
        pos = close + 2;
    }
    out.append(tmpl.substr(pos));
    return out;
}

// ------------------------------------------------------------------ dossier table

namespace {

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") s = "0.0000";
    return s;
}

std::vector<std::string> split_cells(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cur;
    for (std::size_t i = 1; i < line.size(); ++i) {
        if (line[i] == '|') {
            const auto b = cur.find_first_not_of(' ');
            const auto e = cur.find_last_not_of(' ');
            cells.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
            cur.clear();
        } else {
            cur += line[i];
        }
    }
    return cells;
}

double to_double(const std::string& s)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw ParseError("not a number: '" + s + "'");
    return v;
}

int to_int(const std::string& s)
{
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(s, &used);
    } catch (const std::exception&) {
        throw ParseError("not an integer: '" + s + "'");
    }
    if (used != s.size()) throw ParseError("not an integer: '" + s + "'");
    return v;
}

} // namespace

std::string format_dossier_table(std::span<const ToothDossier> dossiers)
{
    std::string out = "| id | param | cx | cy | cz | ext1 | ext2 | ext3 | volume | residual | prev | next |\n"
                      "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& d : dossiers) {
        out += "| " + std::to_string(d.id) + " | " + fmt(d.arch_parameter) + " | " + fmt(d.centroid.x()) + " | " +
               fmt(d.centroid.y()) + " | " + fmt(d.centroid.z()) + " | " + fmt(d.extents[0]) + " | " +
               fmt(d.extents[1]) + " | " + fmt(d.extents[2]) + " | " + fmt(d.volume) + " | " + fmt(d.residual) +
               " | " + (d.predecessor ? std::to_string(*d.predecessor) : "-") + " | " +
               (d.successor ? std::to_string(*d.successor) : "-") + " |\n";
    }
    return out;
}

std::vector<ToothDossier> parse_dossier_table(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<ToothDossier> out;
    bool in_table = false;
    while (std::getline(in, line)) {
        if (line.rfind("| id |", 0) == 0) {
            in_table = true;
            continue;
        }
        if (!in_table) continue;
        if (line.rfind("|---", 0) == 0) continue;
        if (line.empty() || line[0] != '|') break;
        const auto c = split_cells(line);
        if (c.size() != 12) throw ParseError("dossier row has " + std::to_string(c.size()) + " cells");
        ToothDossier d;
        d.id = to_int(c[0]);
        d.arch_parameter = to_double(c[1]);
        d.centroid = Vec3(to_double(c[2]), to_double(c[3]), to_double(c[4]));
        d.extents = {to_double(c[5]), to_double(c[6]), to_double(c[7])};
        d.volume = to_double(c[8]);
        d.residual = to_double(c[9]);
        if (c[10] != "-") d.predecessor = to_int(c[10]);
        if (c[11] != "-") d.successor = to_int(c[11]);
        out.push_back(d);
    }
    if (!in_table) throw ParseError("no dossier table found");
    return out;
}

// ------------------------------------------------------------------ reply parsing

std::string extract_json_block(std::string_view reply)
{
    const auto b = reply.find_first_not_of(" \t\r\n");
    const auto e = reply.find_last_not_of(" \t\r\n");
    if (b == std::string_view::npos) throw ParseError("empty reply");
    const auto body = reply.substr(b, e - b + 1);
    constexpr std::string_view open = "```json";
    if (body.substr(0, open.size()) != open) throw ParseError("reply does not start with a ```json fence");
    if (body.size() < open.size() + 3 || body.substr(body.size() - 3) != "```")
        throw ParseError("reply does not end with a closing ``` fence");
    const auto inner = body.substr(open.size(), body.size() - open.size() - 3);
    if (inner.find("```") != std::string_view::npos) throw ParseError("reply holds more than one fenced block");
    return std::string(inner);
}

namespace {

json parse_object(std::string_view reply, std::initializer_list<const char*> allowed)
{
    json j;
    try {
        j = json::parse(extract_json_block(reply));
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("JSON reply is not an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            throw ParseError("unexpected key '" + k + "'");
    }
    return j;
}

std::vector<int> id_list(const json& j, const char* key, const std::set<int>& known)
{
    if (!j.contains(key) || !j[key].is_array()) throw ParseError(std::string("missing '") + key + "' array");
    std::vector<int> ids;
    for (const auto& v : j[key]) {
        if (!v.is_number_integer()) throw ParseError(std::string("'") + key + "' must hold integer ids");
        const int id = v.get<int>();
        if (!known.count(id)) throw ProtocolError("reply names unknown instance " + std::to_string(id));
        ids.push_back(id);
    }
    return ids;
}

} // namespace

std::set<int> parse_non_tooth(std::string_view reply, const std::set<int>& known_ids)
{
    const auto j = parse_object(reply, {"non_tooth"});
    const auto ids = id_list(j, "non_tooth", known_ids);
    return {ids.begin(), ids.end()};
}

std::vector<int> parse_central_incisors(std::string_view reply, const std::set<int>& known_ids)
{
    const auto j = parse_object(reply, {"central_incisors"});
    auto ids = id_list(j, "central_incisors", known_ids);
    if (ids.empty() || ids.size() > 2) throw ParseError("central_incisors must hold one or two ids");
    std::sort(ids.begin(), ids.end());
    if (ids.size() == 2 && ids[0] == ids[1]) throw ParseError("central_incisors repeats an id");
    return ids;
}

FullArchReply parse_assignment(std::string_view reply, const std::set<int>& known_ids, bool expect_jaw)
{
    const auto j = expect_jaw ? parse_object(reply, {"assignment", "jaw"}) : parse_object(reply, {"assignment"});
    if (!j.contains("assignment") || !j["assignment"].is_object()) throw ParseError("missing 'assignment' object");
    FullArchReply out;
    for (const auto& [key, value] : j["assignment"].items()) {
        int id = 0;
        try {
            id = to_int(key);
        } catch (const ParseError&) {
            throw ParseError("assignment key '" + key + "' is not an instance id");
        }
        if (!known_ids.count(id)) throw ProtocolError("assignment names unknown instance " + key);
        if (!value.is_string()) throw ParseError("assignment values must be strings");
        const auto s = value.get<std::string>();
        int code = kNonTooth;
        if (s != "NON_TOOTH") {
            try {
                code = to_int(s);
            } catch (const ParseError&) {
                throw ParseError("'" + s + "' is neither an FDI code nor NON_TOOTH");
            }
            if (!is_valid_fdi(code)) throw ParseError("'" + s + "' is not a valid FDI code");
        }
        out.assignment.codes[id] = code;
    }
    for (int id : known_ids)
        if (!out.assignment.codes.count(id)) throw ParseError("assignment omits instance " + std::to_string(id));
    if (expect_jaw) {
        if (!j.contains("jaw") || !j["jaw"].is_string()) throw ParseError("missing 'jaw'");
        const auto s = j["jaw"].get<std::string>();
        if (s != "upper" && s != "lower") throw ParseError("jaw must be 'upper' or 'lower'");
        out.jaw = jaw_from_string(s);
    }
    return out;
}

} // namespace tseg::agent
