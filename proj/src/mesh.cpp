#include "horoforge/mesh.hpp"

#include <boost/polygon/voronoi.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace horoforge {

namespace {

using V3 = std::array<double, 3>;

V3 to_v3(const HalfSpacePoint& p) { return {p.x1, p.x2, p.x3}; }
V3 sub(const V3& a, const V3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
V3 cross(const V3& a, const V3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const V3& a, const V3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double len(const V3& a) { return std::sqrt(dot(a, a)); }

} // namespace

std::vector<Tri> delaunay(const std::vector<cplx>& pts) {
    if (pts.size() < 3) return {};
    double ext = 0;
    for (const auto& p : pts) ext = std::max({ext, std::abs(p.real()), std::abs(p.imag())});
    const double scale = (1 << 28) / std::max(ext, 1e-12);
    using IP = boost::polygon::point_data<int>;
    std::vector<IP> ip;
    ip.reserve(pts.size());
    for (const auto& p : pts)
        ip.emplace_back(static_cast<int>(std::lround(p.real() * scale)), static_cast<int>(std::lround(p.imag() * scale)));
    boost::polygon::voronoi_diagram<double> vd;
    boost::polygon::construct_voronoi(ip.begin(), ip.end(), &vd);

    std::vector<Tri> tris;
    std::vector<int> ring;
    for (const auto& v : vd.vertices()) {
        ring.clear();
        const auto* e = v.incident_edge();
        do {
            ring.push_back(static_cast<int>(e->cell()->source_index()));
            e = e->rot_next();
        } while (e != v.incident_edge());
        for (std::size_t k = 1; k + 1 < ring.size(); ++k) {
            Tri t{ring[0], ring[k], ring[k + 1]};
            const cplx a = pts[t[0]], b = pts[t[1]], c = pts[t[2]];
            const double area2 = std::imag(std::conj(b - a) * (c - a));
            if (area2 < 0) std::swap(t[1], t[2]);
            tris.push_back(t);
        }
    }
    return tris;
}

double triangle_area(const HalfSpacePoint& a, const HalfSpacePoint& b, const HalfSpacePoint& c) {
    return 0.5 * len(cross(sub(to_v3(b), to_v3(a)), sub(to_v3(c), to_v3(a))));
}

int count_degenerate(const MeshPatch& p) {
    int bad = 0;
    for (const auto& t : p.triangles) {
        const V3 a = to_v3(p.vertices[t[0]]), b = to_v3(p.vertices[t[1]]), c = to_v3(p.vertices[t[2]]);
        const double e = std::max({len(sub(a, b)), len(sub(b, c)), len(sub(c, a))});
        const double area = 0.5 * len(cross(sub(b, a), sub(c, a)));
        if (!(area > 1e-12 * e * e) || e == 0.0) ++bad;
    }
    return bad;
}

MeshPatch merge_patches(const std::vector<MeshPatch>& parts, const std::string& name) {
    MeshPatch out;
    out.name = name;
    if (!parts.empty()) out.chart = parts.front().chart;
    std::unordered_map<long, int> seen;
    for (const auto& p : parts) {
        std::vector<int> local(p.size());
        for (std::size_t v = 0; v < p.size(); ++v) {
            const auto it = seen.find(p.gid[v]);
            if (it != seen.end()) {
                local[v] = it->second;
                continue;
            }
            local[v] = static_cast<int>(out.vertices.size());
            seen.emplace(p.gid[v], local[v]);
            out.vertices.push_back(p.vertices[v]);
            out.params.push_back(p.params[v]);
            out.gid.push_back(p.gid[v]);
        }
        for (const auto& t : p.triangles) out.triangles.push_back({local[t[0]], local[t[1]], local[t[2]]});
    }
    return out;
}

namespace {

// Open segment a-b against the open triangle t.
bool segment_hits(const V3& a, const V3& b, const std::array<V3, 3>& t) {
    const V3 d = sub(b, a);
    const V3 e1 = sub(t[1], t[0]), e2 = sub(t[2], t[0]);
    const V3 pv = cross(d, e2);
    const double det = dot(e1, pv);
    if (std::abs(det) <= 1e-14 * len(d) * len(e1) * len(e2)) return false;
    const double inv = 1.0 / det;
    const V3 tv = sub(a, t[0]);
    const double u = dot(tv, pv) * inv;
    if (!(u > 0.0 && u < 1.0)) return false;
    const V3 qv = cross(tv, e1);
    const double v = dot(d, qv) * inv;
    if (!(v > 0.0 && u + v < 1.0)) return false;
    const double s = dot(e2, qv) * inv;
    return s > 0.0 && s < 1.0;
}

} // namespace

bool triangles_intersect(const std::array<std::array<double, 3>, 3>& p,
                         const std::array<std::array<double, 3>, 3>& q) {
    for (int k = 0; k < 3; ++k) {
        if (segment_hits(p[k], p[(k + 1) % 3], q)) return true;
        if (segment_hits(q[k], q[(k + 1) % 3], p)) return true;
    }
    return false;
}

namespace {

struct Box {
    V3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    void add(const V3& p) {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }
    void add(const Box& b) {
        add(b.lo);
        add(b.hi);
    }
    bool overlaps(const Box& b) const {
        for (int k = 0; k < 3; ++k)
            if (hi[k] < b.lo[k] || b.hi[k] < lo[k]) return false;
        return true;
    }
};

struct FlatTri {
    int patch, tri;
    std::array<V3, 3> v;
    std::array<long, 3> g;
    Box box;
};

struct BvhNode {
    Box box;
    int left = -1, right = -1;
    int begin = 0, end = 0;
};

class Bvh {
public:
    explicit Bvh(const std::vector<FlatTri>& tris) : tris_(tris), order_(tris.size()) {
        std::iota(order_.begin(), order_.end(), 0);
        if (!tris.empty()) build(0, static_cast<int>(tris.size()));
    }

    template <class Fn>
    void query(const Box& b, Fn&& fn) const {
        if (nodes_.empty()) return;
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const BvhNode& n = nodes_[stack.back()];
            stack.pop_back();
            if (!n.box.overlaps(b)) continue;
            if (n.left < 0) {
                for (int k = n.begin; k < n.end; ++k) fn(order_[k]);
            } else {
                stack.push_back(n.left);
                stack.push_back(n.right);
            }
        }
    }

private:
    int build(int begin, int end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        Box box, cbox;
        for (int k = begin; k < end; ++k) {
            const auto& t = tris_[order_[k]];
            box.add(t.box);
            cbox.add(centroid(t));
        }
        nodes_[id].box = box;
        if (end - begin <= 4) {
            nodes_[id].begin = begin;
            nodes_[id].end = end;
            return id;
        }
        int axis = 0;
        for (int k = 1; k < 3; ++k)
            if (cbox.hi[k] - cbox.lo[k] > cbox.hi[axis] - cbox.lo[axis]) axis = k;
        const int mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int a, int b) { return centroid(tris_[a])[axis] < centroid(tris_[b])[axis]; });
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    static V3 centroid(const FlatTri& t) {
        return {(t.v[0][0] + t.v[1][0] + t.v[2][0]) / 3, (t.v[0][1] + t.v[1][1] + t.v[2][1]) / 3,
                (t.v[0][2] + t.v[1][2] + t.v[2][2]) / 3};
    }

    const std::vector<FlatTri>& tris_;
    std::vector<int> order_;
    std::vector<BvhNode> nodes_;
};

} // namespace

ProbeReport embeddedness_probe(const std::vector<MeshPatch>& patches) {
    std::vector<FlatTri> flat;
    for (int p = 0; p < static_cast<int>(patches.size()); ++p) {
        const auto& P = patches[p];
        for (int t = 0; t < static_cast<int>(P.triangles.size()); ++t) {
            FlatTri f;
            f.patch = p;
            f.tri = t;
            for (int k = 0; k < 3; ++k) {
                f.v[k] = to_v3(P.vertices[P.triangles[t][k]]);
                f.g[k] = P.gid[P.triangles[t][k]];
                f.box.add(f.v[k]);
            }
            flat.push_back(f);
        }
    }
    ProbeReport rep;
    rep.triangles = static_cast<long>(flat.size());
    const Bvh bvh(flat);
    for (int a = 0; a < static_cast<int>(flat.size()); ++a) {
        const FlatTri& A = flat[a];
        bvh.query(A.box, [&](int b) {
            if (b <= a) return;
            const FlatTri& B = flat[b];
            if (!A.box.overlaps(B.box)) return;
            for (long ga : A.g)
                for (long gb : B.g)
                    if (ga == gb) return;
            ++rep.candidate_pairs;
            if (triangles_intersect(A.v, B.v)) {
                ++rep.intersections;
                if (rep.examples.size() < 20) rep.examples.push_back({A.patch, A.tri, B.patch, B.tri});
            }
        });
    }
    return rep;
}

MeshPatch rotated_copy(const MeshPatch& p, int pivot, double angle, long gid_offset) {
    int nb = -1;
    for (const auto& t : p.triangles) {
        for (int k = 0; k < 3; ++k)
            if (t[k] == pivot) nb = t[(k + 1) % 3];
        if (nb >= 0) break;
    }
    if (nb < 0) throw ValidationError("pivot vertex is not used by any triangle");
    const V3 o = to_v3(p.vertices[pivot]);
    V3 axis = sub(to_v3(p.vertices[nb]), o);
    const double l = len(axis);
    for (auto& x : axis) x /= l;
    const double c = std::cos(angle), s = std::sin(angle);
    MeshPatch out = p;
    out.name = p.name + "_rotated";
    for (std::size_t v = 0; v < p.size(); ++v) {
        const V3 r = sub(to_v3(p.vertices[v]), o);
        const V3 kxr = cross(axis, r);
        const double kr = dot(axis, r);
        V3 q;
        for (int k = 0; k < 3; ++k) q[k] = o[k] + r[k] * c + kxr[k] * s + axis[k] * kr * (1 - c);
        out.vertices[v] = {q[0], q[1], q[2]};
        out.gid[v] = p.gid[v] + gid_offset;
    }
    return out;
}

MeshPatch shifted_copy(const MeshPatch& p, double dx, double dy, double dz, long gid_offset) {
    MeshPatch out = p;
    out.name = p.name + "_shifted";
    for (std::size_t v = 0; v < p.size(); ++v) {
        out.vertices[v] = {p.vertices[v].x1 + dx, p.vertices[v].x2 + dy, p.vertices[v].x3 + dz};
        out.gid[v] = p.gid[v] + gid_offset;
    }
    return out;
}

ExportModel parse_export_model(const std::string& s) {
    if (s == "halfspace") return ExportModel::HalfSpace;
    if (s == "ball") return ExportModel::Ball;
    throw ValidationError("model must be 'halfspace' or 'ball', got '" + s + "'");
}

namespace {

struct GlobalMesh {
    std::vector<V3> verts;
    std::vector<std::vector<Tri>> faces;
};

GlobalMesh flatten(const std::vector<MeshPatch>& patches, ExportModel model) {
    if (patches.empty()) throw ValidationError("no patches to export");
    GlobalMesh g;
    std::unordered_map<long, int> index;
    for (const auto& p : patches) {
        std::vector<int> local(p.size());
        for (std::size_t v = 0; v < p.size(); ++v) {
            const auto [it, fresh] = index.emplace(p.gid[v], static_cast<int>(g.verts.size()));
            local[v] = it->second;
            if (!fresh) continue;
            if (model == ExportModel::Ball) {
                double b[3];
                half_space_to_ball(p.vertices[v], b);
                g.verts.push_back({b[0], b[1], b[2]});
            } else {
                g.verts.push_back(to_v3(p.vertices[v]));
            }
        }
        std::vector<Tri> f;
        f.reserve(p.triangles.size());
        for (const auto& t : p.triangles) f.push_back({local[t[0]], local[t[1]], local[t[2]]});
        g.faces.push_back(std::move(f));
    }
    return g;
}

void append_fmt(std::string& out, const char* fmt, double a, double b, double c) {
    char buf[128];
    const int n = std::snprintf(buf, sizeof buf, fmt, a, b, c);
    out.append(buf, static_cast<std::size_t>(n));
}

const char* model_name(ExportModel m) { return m == ExportModel::Ball ? "ball" : "halfspace"; }

} // namespace

std::string mesh_to_obj(const std::vector<MeshPatch>& patches, ExportModel model) {
    const GlobalMesh g = flatten(patches, model);
    std::string out = "# horoforge surface mesh\n# model ";
    out += model_name(model);
    out += "\n";
    for (const auto& v : g.verts) append_fmt(out, "v %.12g %.12g %.12g\n", v[0], v[1], v[2]);
    for (std::size_t p = 0; p < patches.size(); ++p) {
        out += "g " + patches[p].name + "\n";
        for (const auto& t : g.faces[p])
            out += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " + std::to_string(t[2] + 1) +
                   "\n";
    }
    return out;
}

std::string mesh_to_ply(const std::vector<MeshPatch>& patches, ExportModel model) {
    const GlobalMesh g = flatten(patches, model);
    std::size_t nf = 0;
    for (const auto& f : g.faces) nf += f.size();
    std::string out = "ply\nformat ascii 1.0\ncomment horoforge surface mesh, model ";
    out += model_name(model);
    out += "\n";
    std::size_t first = 0;
    for (std::size_t p = 0; p < patches.size(); ++p) {
        out += "comment group " + patches[p].name + " faces " + std::to_string(first) + " " +
               std::to_string(first + g.faces[p].size()) + "\n";
        first += g.faces[p].size();
    }
    out += "element vertex " + std::to_string(g.verts.size()) + "\nproperty double x\nproperty double y\n"
           "property double z\nelement face " + std::to_string(nf) + "\nproperty list uchar int vertex_indices\n"
           "end_header\n";
    for (const auto& v : g.verts) append_fmt(out, "%.12g %.12g %.12g\n", v[0], v[1], v[2]);
    for (const auto& f : g.faces)
        for (const auto& t : f)
            out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
    return out;
}

void export_mesh(const std::vector<MeshPatch>& patches, ExportModel model, const std::string& path) {
    const bool ply = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0;
    const std::string text = ply ? mesh_to_ply(patches, model) : mesh_to_obj(patches, model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IOError("write failed for '" + path + "'");
}

nlohmann::json patches_to_json(const std::vector<MeshPatch>& patches) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : patches) {
        nlohmann::json v = nlohmann::json::array(), z = nlohmann::json::array(), t = nlohmann::json::array();
        for (std::size_t k = 0; k < p.size(); ++k) {
            v.push_back({p.vertices[k].x1, p.vertices[k].x2, p.vertices[k].x3});
            z.push_back({p.params[k].real(), p.params[k].imag()});
        }
        for (const auto& tr : p.triangles) t.push_back({tr[0], tr[1], tr[2]});
        arr.push_back({{"name", p.name},
                       {"chart", {{"kind", p.chart.is_plane() ? "plane" : "neck"}, {"index", p.chart.index}}},
                       {"vertices", v},
                       {"params", z},
                       {"gid", p.gid},
                       {"triangles", t}});
    }
    return {{"patches", arr}};
}

std::vector<MeshPatch> patches_from_json(const nlohmann::json& j) {
    try {
        std::vector<MeshPatch> out;
        for (const auto& e : j.at("patches")) {
            MeshPatch p;
            p.name = e.at("name").get<std::string>();
            const std::string kind = e.at("chart").at("kind").get<std::string>();
            const int idx = e.at("chart").at("index").get<int>();
            p.chart = kind == "plane" ? ChartId::plane(idx) : ChartId::neck(idx);
            for (const auto& v : e.at("vertices"))
                p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()});
            for (const auto& z : e.at("params")) p.params.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
            p.gid = e.at("gid").get<std::vector<long>>();
            for (const auto& t : e.at("triangles")) p.triangles.push_back({t.at(0), t.at(1), t.at(2)});
            if (p.params.size() != p.size() || p.gid.size() != p.size())
                throw ValidationError("patch '" + p.name + "' has inconsistent array lengths");
            for (const auto& t : p.triangles)
                for (int k : t)
                    if (k < 0 || k >= static_cast<int>(p.size()))
                        throw ValidationError("patch '" + p.name + "' has an out-of-range triangle index");
            out.push_back(std::move(p));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed patch JSON: ") + e.what());
    }
}

} // namespace horoforge
