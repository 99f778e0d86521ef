#include "tseg/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tseg {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view tok, std::string_view what)
{
    T value{};
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError("malformed " + std::string(what) + " '" + std::string(tok) + "'");
    return value;
}

void append_double(std::string& out, double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

// Drops degenerate faces and keeps face-level attributes aligned.
LoadedMesh finalize(TriMesh mesh, MeshAttributes attrs)
{
    validate_topology(mesh);
    if (attrs.vertex_fdi && attrs.vertex_fdi->size() != mesh.vertex_count())
        throw ParseError("vertex attribute length mismatch");
    const std::size_t before = mesh.face_count();
    const auto kept = drop_degenerate_faces(mesh);
    auto filter = [&](std::optional<std::vector<int>>& a) {
        if (!a) return;
        std::vector<int> v;
        v.reserve(kept.size());
        for (auto f : kept) v.push_back((*a)[f]);
        *a = std::move(v);
    };
    filter(attrs.face_label);
    filter(attrs.face_fdi);
    if (mesh.faces.empty()) throw ParseError("mesh has no faces");
    LoadedMesh out;
    out.mesh = std::move(mesh);
    out.attributes = std::move(attrs);
    out.dropped_faces = before - out.mesh.face_count();
    return out;
}

// ---------------------------------------------------------------- PLY

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(std::string_view name)
{
    if (name == "char" || name == "int8") return PlyType::i8;
    if (name == "uchar" || name == "uint8") return PlyType::u8;
    if (name == "short" || name == "int16") return PlyType::i16;
    if (name == "ushort" || name == "uint16") return PlyType::u16;
    if (name == "int" || name == "int32") return PlyType::i32;
    if (name == "uint" || name == "uint32") return PlyType::u32;
    if (name == "float" || name == "float32") return PlyType::f32;
    if (name == "double" || name == "float64") return PlyType::f64;
    throw ParseError("unknown PLY property type '" + std::string(name) + "'");
}

std::size_t ply_size(PlyType t)
{
    switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::f32;
    bool is_list = false;
    PlyType count_type = PlyType::u8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

template <typename T>
T load_le(const char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void store_le(std::string& out, T v)
{
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(b, b + sizeof(T));
    out.append(b, sizeof(T));
}

class PlyCursor {
public:
    PlyCursor(std::string_view data, bool binary) : data_(data), binary_(binary) {}

    double read(PlyType t)
    {
        if (!binary_) return parse_number<double>(next_token(), "PLY value");
        const std::size_t n = ply_size(t);
        if (pos_ + n > data_.size()) throw ParseError("truncated binary PLY body");
        const char* p = data_.data() + pos_;
        pos_ += n;
        switch (t) {
        case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(*p));
        case PlyType::u8: return static_cast<double>(static_cast<std::uint8_t>(*p));
        case PlyType::i16: return load_le<std::int16_t>(p);
        case PlyType::u16: return load_le<std::uint16_t>(p);
        case PlyType::i32: return load_le<std::int32_t>(p);
        case PlyType::u32: return load_le<std::uint32_t>(p);
        case PlyType::f32: return load_le<float>(p);
        case PlyType::f64: return load_le<double>(p);
        }
        return 0.0;
    }

    std::int64_t read_int(PlyType t)
    {
        const double v = read(t);
        if (v != std::floor(v)) throw ParseError("non-integer PLY index/label value");
        return static_cast<std::int64_t>(v);
    }

private:
    std::string_view next_token()
    {
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        const std::size_t b = pos_;
        while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        if (b == pos_) throw ParseError("truncated ASCII PLY body");
        return data_.substr(b, pos_ - b);
    }

    std::string_view data_;
    bool binary_;
    std::size_t pos_ = 0;
};

} // namespace

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

LoadedMesh parse_obj(std::string_view text)
{
    TriMesh mesh;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto tok = split_ws(line);
        try {
            if (tok[0] == "v") {
                if (tok.size() < 4) throw ParseError("vertex needs 3 coordinates");
                mesh.vertices.emplace_back(parse_number<double>(tok[1], "coordinate"),
                                           parse_number<double>(tok[2], "coordinate"),
                                           parse_number<double>(tok[3], "coordinate"));
            } else if (tok[0] == "f") {
                if (tok.size() < 4) throw ParseError("face needs at least 3 vertices");
                std::vector<std::int32_t> idx;
                for (std::size_t k = 1; k < tok.size(); ++k) {
                    const auto head = tok[k].substr(0, tok[k].find('/'));
                    auto i = parse_number<std::int64_t>(head, "face index");
                    if (i < 0) i += static_cast<std::int64_t>(mesh.vertices.size()) + 1;
                    if (i <= 0) throw ParseError("face index out of range");
                    idx.push_back(static_cast<std::int32_t>(i - 1));
                }
                for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
            }
            // vt, vn, g, o, s, usemtl, mtllib: ignored
        } catch (const ParseError& e) {
            throw ParseError("OBJ line " + std::to_string(line_no) + ": " + e.what());
        }
        if (nl == text.size()) break;
    }
    return finalize(std::move(mesh), {});
}

LoadedMesh parse_ply(std::string_view bytes)
{
    const auto header_end = bytes.find("end_header");
    if (bytes.substr(0, 3) != "ply" || header_end == std::string_view::npos)
        throw ParseError("not a PLY file");
    auto body_start = bytes.find('\n', header_end);
    if (body_start == std::string_view::npos) throw ParseError("PLY header not terminated");
    ++body_start;

    bool binary = false;
    std::vector<PlyElement> elements;
    std::size_t pos = 0;
    while (pos < header_end) {
        const auto nl = bytes.find('\n', pos);
        const auto line = trim(bytes.substr(pos, nl - pos));
        pos = nl + 1;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "format") {
            if (tok.size() < 2) throw ParseError("bad PLY format line");
            if (tok[1] == "ascii")
                binary = false;
            else if (tok[1] == "binary_little_endian")
                binary = true;
            else
                throw ParseError("unsupported PLY format '" + std::string(tok[1]) + "'");
        } else if (tok[0] == "element") {
            if (tok.size() < 3) throw ParseError("bad PLY element line");
            elements.push_back({std::string(tok[1]), parse_number<std::size_t>(tok[2], "element count"), {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) throw ParseError("PLY property before element");
            PlyProperty p;
            if (tok.size() >= 5 && tok[1] == "list") {
                p.is_list = true;
                p.count_type = ply_type(tok[2]);
                p.type = ply_type(tok[3]);
                p.name = tok[4];
            } else if (tok.size() >= 3) {
                p.type = ply_type(tok[1]);
                p.name = tok[2];
            } else {
                throw ParseError("bad PLY property line");
            }
            elements.back().props.push_back(std::move(p));
        }
    }

    TriMesh mesh;
    MeshAttributes attrs;
    PlyCursor cur(bytes.substr(body_start), binary);
    for (const auto& el : elements) {
        const bool is_vertex = el.name == "vertex";
        const bool is_face = el.name == "face";
        bool has_normals = false;
        if (is_vertex) {
            mesh.vertices.reserve(el.count);
            for (const auto& p : el.props) {
                if (p.name == "fdi") attrs.vertex_fdi.emplace();
                if (p.name == "nx") has_normals = true;
            }
        }
        if (is_face) {
            for (const auto& p : el.props) {
                if (p.name == "label") attrs.face_label.emplace();
                if (p.name == "fdi") attrs.face_fdi.emplace();
            }
        }
        for (std::size_t i = 0; i < el.count; ++i) {
            Vec3 v = Vec3::Zero();
            Vec3 n = Vec3::Zero();
            std::vector<std::int32_t> poly;
            int label = 0;
            int fdi = 0;
            for (const auto& p : el.props) {
                if (p.is_list) {
                    const auto count = cur.read_int(p.count_type);
                    if (count < 0) throw ParseError("negative PLY list length");
                    const bool indices = is_face && (p.name == "vertex_indices" || p.name == "vertex_index");
                    for (std::int64_t k = 0; k < count; ++k) {
                        if (indices) {
                            const auto idx = cur.read_int(p.type);
                            if (idx < 0 || idx > INT32_MAX) throw ParseError("PLY face index out of range");
                            poly.push_back(static_cast<std::int32_t>(idx));
                        } else {
                            cur.read(p.type);
                        }
                    }
                    continue;
                }
                const double val = cur.read(p.type);
                if (is_vertex) {
                    if (p.name == "x") v.x() = val;
                    else if (p.name == "y") v.y() = val;
                    else if (p.name == "z") v.z() = val;
                    else if (p.name == "nx") n.x() = val;
                    else if (p.name == "ny") n.y() = val;
                    else if (p.name == "nz") n.z() = val;
                    else if (p.name == "fdi") fdi = static_cast<int>(val);
                } else if (is_face) {
                    if (p.name == "label") label = static_cast<int>(val);
                    else if (p.name == "fdi") fdi = static_cast<int>(val);
                }
            }
            if (is_vertex) {
                mesh.vertices.push_back(v);
                if (has_normals) mesh.normals.push_back(n);
                if (attrs.vertex_fdi) attrs.vertex_fdi->push_back(fdi);
            } else if (is_face) {
                if (poly.size() < 3) throw ParseError("PLY face with fewer than 3 vertices");
                for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                    mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
                    if (attrs.face_label) attrs.face_label->push_back(label);
                    if (attrs.face_fdi) attrs.face_fdi->push_back(fdi);
                }
            }
        }
    }
    return finalize(std::move(mesh), std::move(attrs));
}

LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format)
{
    const auto bytes = read_file(path);
    try {
        return format == MeshFormat::obj ? parse_obj(bytes) : parse_ply(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

LoadedMesh load_mesh(const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return load_mesh(path, MeshFormat::obj);
    if (ext == ".ply") return load_mesh(path, MeshFormat::ply);
    throw ParseError("unknown mesh extension '" + ext + "'");
}

std::string format_obj(const TriMesh& mesh)
{
    std::string out;
    out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 24);
    for (const auto& v : mesh.vertices) {
        out += "v ";
        append_double(out, v.x());
        out += ' ';
        append_double(out, v.y());
        out += ' ';
        append_double(out, v.z());
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
    }
    return out;
}

std::string format_ply(const TriMesh& mesh, const MeshAttributes& attrs, PlyEncoding encoding)
{
    const bool binary = encoding == PlyEncoding::binary_little_endian;
    const bool normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
    if (attrs.vertex_fdi && attrs.vertex_fdi->size() != mesh.vertex_count())
        throw PreconditionError("vertex fdi length mismatch");
    if (attrs.face_label && attrs.face_label->size() != mesh.face_count())
        throw PreconditionError("face label length mismatch");
    if (attrs.face_fdi && attrs.face_fdi->size() != mesh.face_count())
        throw PreconditionError("face fdi length mismatch");

    std::string out = "ply\nformat ";
    out += binary ? "binary_little_endian 1.0\n" : "ascii 1.0\n";
    out += "element vertex " + std::to_string(mesh.vertex_count()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
    if (attrs.vertex_fdi) out += "property int fdi\n";
    out += "element face " + std::to_string(mesh.face_count()) + "\n";
    out += "property list uchar int vertex_indices\n";
    if (attrs.face_label) out += "property int label\n";
    if (attrs.face_fdi) out += "property int fdi\n";
    out += "end_header\n";

    auto put_d = [&](double v, bool last) {
        if (binary) {
            store_le<double>(out, v);
        } else {
            append_double(out, v);
            out += last ? '\n' : ' ';
        }
    };
    auto put_i = [&](std::int32_t v, bool last) {
        if (binary) {
            store_le<std::int32_t>(out, v);
        } else {
            out += std::to_string(v);
            out += last ? '\n' : ' ';
        }
    };

    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        const auto& v = mesh.vertices[i];
        const bool tail = normals || attrs.vertex_fdi;
        put_d(v.x(), false);
        put_d(v.y(), false);
        put_d(v.z(), !tail);
        if (normals) {
            put_d(mesh.normals[i].x(), false);
            put_d(mesh.normals[i].y(), false);
            put_d(mesh.normals[i].z(), !attrs.vertex_fdi);
        }
        if (attrs.vertex_fdi) put_i((*attrs.vertex_fdi)[i], true);
    }
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const bool tail = attrs.face_label || attrs.face_fdi;
        if (binary)
            out += static_cast<char>(3);
        else
            out += "3 ";
        put_i(mesh.faces[f][0], false);
        put_i(mesh.faces[f][1], false);
        put_i(mesh.faces[f][2], !tail);
        if (attrs.face_label) put_i((*attrs.face_label)[f], !attrs.face_fdi);
        if (attrs.face_fdi) put_i((*attrs.face_fdi)[f], true);
    }
    return out;
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) { write_file(path, format_obj(mesh)); }

void save_ply(const std::filesystem::path& path, const TriMesh& mesh, const MeshAttributes& attrs,
              PlyEncoding encoding)
{
    write_file(path, format_ply(mesh, attrs, encoding));
}

} // namespace tseg
