#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "horoforge/lin_hyp.hpp"
#include "horoforge/surface_model.hpp"

namespace horoforge {

using Tri = std::array<int, 3>;

struct MeshPatch {
    std::string name;
    ChartId chart;
    // Chart parameter of each vertex.
    std::vector<cplx> params;
    std::vector<HalfSpacePoint> vertices;
    // Surface-wide vertex ids; vertices on patch seams share an id.
    std::vector<long> gid;
    std::vector<Tri> triangles;

    std::size_t size() const { return vertices.size(); }
};

// Delaunay triangulation of distinct planar points, counterclockwise triangles.
std::vector<Tri> delaunay(const std::vector<cplx>& pts);

double triangle_area(const HalfSpacePoint& a, const HalfSpacePoint& b, const HalfSpacePoint& c);
// Triangles whose area is below 1e-12 times the squared longest edge.
int count_degenerate(const MeshPatch& p);

MeshPatch merge_patches(const std::vector<MeshPatch>& parts, const std::string& name);

// Segment-against-triangle formulation; touching contacts do not count.
bool triangles_intersect(const std::array<std::array<double, 3>, 3>& p,
                         const std::array<std::array<double, 3>, 3>& q);

struct ProbeHit {
    int patch_a = 0, tri_a = 0, patch_b = 0, tri_b = 0;
};

struct ProbeReport {
    long triangles = 0;
    long candidate_pairs = 0;
    long intersections = 0;
    std::vector<ProbeHit> examples;
};

// Self-intersection scan over all patches; pairs sharing a vertex id are skipped.
ProbeReport embeddedness_probe(const std::vector<MeshPatch>& patches);

// Copy of a patch rotated by angle about the line through vertex `pivot`
// along the edge to one of its neighbours; fresh vertex ids.
MeshPatch rotated_copy(const MeshPatch& p, int pivot, double angle, long gid_offset);
// Copy translated by (dx, dy, dz), with fresh vertex ids.
MeshPatch shifted_copy(const MeshPatch& p, double dx, double dy, double dz, long gid_offset);

enum class ExportModel { HalfSpace, Ball };
ExportModel parse_export_model(const std::string& s);

std::string mesh_to_obj(const std::vector<MeshPatch>& patches, ExportModel model);
std::string mesh_to_ply(const std::vector<MeshPatch>& patches, ExportModel model);
void export_mesh(const std::vector<MeshPatch>& patches, ExportModel model, const std::string& path);

nlohmann::json patches_to_json(const std::vector<MeshPatch>& patches);
std::vector<MeshPatch> patches_from_json(const nlohmann::json& j);

} // namespace horoforge
