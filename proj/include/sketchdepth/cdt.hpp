#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sketchdepth/core.hpp"
#include "sketchdepth/predicates.hpp"

namespace sketchdepth::cdt {

inline constexpr double kDefaultSnapTolerance = 0.5;

struct Site {
  Vec2 pos;
  double depth = 0;
};

/// Canonicalized triangulation input: no two sites closer than the snap
/// tolerance, no two segments crossing except at shared endpoints.
struct PreparedSites {
  std::vector<Site> sites;
  std::vector<std::pair<int, int>> segments;
};

struct MeshEdge {
  int a = 0, b = 0;  // a < b
  bool constrained = false;
};

using Facet = std::array<int, 3>;

/// Planar triangulation of the convex hull of its vertices. Facets are
/// counter-clockwise; edges are sorted by (a, b).
struct Mesh {
  std::vector<Site> vertices;
  std::vector<MeshEdge> edges;
  std::vector<Facet> facets;

  bool has_edge(int a, int b) const { return find_edge(a, b) != nullptr; }
  bool is_constrained(int a, int b) const {
    const MeshEdge* e = find_edge(a, b);
    return e != nullptr && e->constrained;
  }
  const MeshEdge* find_edge(int a, int b) const {
    if (a > b) std::swap(a, b);
    auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b},
                               [](const MeshEdge& e, const std::pair<int, int>& k) {
                                 return std::pair{e.a, e.b} < k;
                               });
    if (it != edges.end() && it->a == a && it->b == b) return &*it;
    return nullptr;
  }
};

namespace detail {

/// Depth model of an input line feature, used to assign depth to sites
/// created on it.
struct LineModel {
  Vec2 start, end;
  double start_depth = 0, end_depth = 0;

  double depth_at(const Vec2& p) const {
    const Vec2 d = end - start;
    double t = (p - start).dot(d) / d.squaredNorm();
    t = std::clamp(t, 0.0, 1.0);
    return start_depth + t * (end_depth - start_depth);
  }
};

struct SiteAccum {
  Vec2 pos;
  double depth_sum = 0;
  int count = 0;
  double depth() const { return depth_sum / count; }
};

struct Segment {
  int a, b;
  LineModel line;
};

class SitePreparer {
 public:
  explicit SitePreparer(double snap) : snap_(snap) {}

  int add_site(const Vec2& pos, double depth_sum, int count) {
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if ((sites_[i].pos - pos).norm() < snap_) {
        sites_[i].depth_sum += depth_sum;
        sites_[i].count += count;
        return static_cast<int>(i);
      }
    }
    sites_.push_back({pos, depth_sum, count});
    return static_cast<int>(sites_.size() - 1);
  }

  void add_segment(int a, int b, const LineModel& line) {
    if (a == b) return;
    for (const auto& s : segments_)
      if ((s.a == a && s.b == b) || (s.a == b && s.b == a)) return;
    segments_.push_back({a, b, line});
  }

  void resolve() {
    merge_close_sites();
    const std::size_t budget = 64 + 8 * (sites_.size() + segments_.size()) * (segments_.size() + 1);
    for (std::size_t round = 0;; ++round) {
      if (round > budget) throw DegenerateInputError("prepare_sites: could not resolve segment crossings");
      if (snap_one_site()) {
        merge_close_sites();
        continue;
      }
      if (split_one_crossing()) {
        merge_close_sites();
        continue;
      }
      break;
    }
  }

  PreparedSites result() const {
    PreparedSites out;
    out.sites.reserve(sites_.size());
    for (const auto& s : sites_) out.sites.push_back({s.pos, s.depth()});
    for (const auto& s : segments_) out.segments.emplace_back(s.a, s.b);
    return out;
  }

 private:
  // Moves the first site found within snap distance of a segment interior
  // onto that segment and splits the segment there.
  bool snap_one_site() {
    for (std::size_t si = 0; si < segments_.size(); ++si) {
      const Segment seg = segments_[si];
      const Vec2 a = sites_[seg.a].pos, b = sites_[seg.b].pos;
      const Vec2 d = b - a;
      for (std::size_t k = 0; k < sites_.size(); ++k) {
        if (static_cast<int>(k) == seg.a || static_cast<int>(k) == seg.b) continue;
        const Vec2 p = sites_[k].pos;
        const double t = (p - a).dot(d) / d.squaredNorm();
        if (!(t > 0.0 && t < 1.0)) continue;
        const Vec2 proj = a + t * d;
        const bool on_line = predicates::strictly_inside_segment(a, b, p);
        if (!on_line && (p - proj).norm() >= snap_) continue;
        if (!on_line) sites_[k].pos = proj;
        sites_[k].depth_sum += seg.line.depth_at(proj) * sites_[k].count;
        sites_[k].count *= 2;
        split_segment(si, static_cast<int>(k));
        return true;
      }
    }
    return false;
  }

  bool split_one_crossing() {
    using predicates::orient2d;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      for (std::size_t j = i + 1; j < segments_.size(); ++j) {
        const Segment s = segments_[i], q = segments_[j];
        if (s.a == q.a || s.a == q.b || s.b == q.a || s.b == q.b) continue;
        const Vec2 p1 = sites_[s.a].pos, p2 = sites_[s.b].pos;
        const Vec2 q1 = sites_[q.a].pos, q2 = sites_[q.b].pos;
        if (orient2d(p1, p2, q1) * orient2d(p1, p2, q2) >= 0) continue;
        if (orient2d(q1, q2, p1) * orient2d(q1, q2, p2) >= 0) continue;
        const Vec2 r = p2 - p1, w = q2 - q1;
        const double denom = r.x() * w.y() - r.y() * w.x();
        const double t = ((q1.x() - p1.x()) * w.y() - (q1.y() - p1.y()) * w.x()) / denom;
        const Vec2 x = p1 + std::clamp(t, 0.0, 1.0) * r;
        const double depth_sum = s.line.depth_at(x) + q.line.depth_at(x);
        const int k = add_site(x, depth_sum, 2);
        // Split the later segment first so index i stays valid.
        if (k != q.a && k != q.b) split_segment(j, k);
        if (k != s.a && k != s.b) split_segment(i, k);
        return true;
      }
    }
    return false;
  }

  void split_segment(std::size_t si, int k) {
    const Segment seg = segments_[si];
    segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(si));
    add_segment(seg.a, k, seg.line);
    add_segment(k, seg.b, seg.line);
  }

  void merge_close_sites() {
    bool merged = true;
    while (merged) {
      merged = false;
      for (std::size_t i = 0; i < sites_.size() && !merged; ++i) {
        for (std::size_t j = i + 1; j < sites_.size() && !merged; ++j) {
          if ((sites_[i].pos - sites_[j].pos).norm() >= snap_) continue;
          sites_[i].depth_sum += sites_[j].depth_sum;
          sites_[i].count += sites_[j].count;
          sites_.erase(sites_.begin() + static_cast<std::ptrdiff_t>(j));
          remap_after_merge(static_cast<int>(i), static_cast<int>(j));
          merged = true;
        }
      }
    }
  }

  void remap_after_merge(int keep, int removed) {
    auto remap = [&](int v) {
      if (v == removed) return keep;
      return v > removed ? v - 1 : v;
    };
    std::vector<Segment> old;
    old.swap(segments_);
    for (auto s : old) add_segment(remap(s.a), remap(s.b), s.line);
  }

  double snap_;
  std::vector<SiteAccum> sites_;
  std::vector<Segment> segments_;
};

}  // namespace detail

/// Canonicalizes raw features for triangulation: merges sites closer than
/// `snap_tolerance` (averaging depth), splits crossing segments at Steiner
/// sites whose depth averages the two line interpolants, and snaps sites
/// lying near a segment onto it.
inline PreparedSites prepare_sites(const FeatureSet& features, double snap_tolerance = kDefaultSnapTolerance) {
  if (!(snap_tolerance > 0)) throw DomainError("prepare_sites: snap tolerance must be positive");
  detail::SitePreparer prep(snap_tolerance);
  for (const auto& p : features.points) {
    if (!(p.depth > 0)) throw DomainError("prepare_sites: point depth must be positive");
    prep.add_site(p.pixel, p.depth, 1);
  }
  for (const auto& l : features.lines) {
    if (!(l.start_depth > 0) || !(l.end_depth > 0)) throw DomainError("prepare_sites: line depth must be positive");
    if (l.start == l.end) continue;
    const detail::LineModel model{l.start, l.end, l.start_depth, l.end_depth};
    const int a = prep.add_site(l.start, l.start_depth, 1);
    const int b = prep.add_site(l.end, l.end_depth, 1);
    prep.add_segment(a, b, model);
  }
  prep.resolve();
  PreparedSites out = prep.result();

  if (out.sites.size() < 3) throw DegenerateInputError("prepare_sites: fewer than 3 distinct sites");
  bool all_collinear = true;
  for (std::size_t k = 2; k < out.sites.size() && all_collinear; ++k)
    all_collinear = predicates::orient2d(out.sites[0].pos, out.sites[1].pos, out.sites[k].pos) == 0;
  if (all_collinear) throw DegenerateInputError("prepare_sites: all sites are collinear");
  return out;
}

namespace detail {

/// Incremental constrained Delaunay triangulation over a triangle/neighbor
/// structure closed by ghost triangles (one vertex at infinity, index
/// `inf_`), so the hull needs no special casing.
class Triangulator {
 public:
  explicit Triangulator(const PreparedSites& input) : input_(input), inf_(static_cast<int>(input.sites.size())) {
    for (const auto& s : input.sites) pos_.push_back(s.pos);
  }

  Mesh run() {
    build_delaunay();
    for (const auto& [a, b] : input_.segments) {
      if (a < 0 || b < 0 || a >= inf_ || b >= inf_ || a == b)
        throw ContractError("triangulate: segment references an invalid site");
      insert_segment(a, b);
    }
    return export_mesh();
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> n;  // n[i] is the neighbor across the edge opposite v[i]
    bool alive = true;
  };

  static int next(int i) { return i == 2 ? 0 : i + 1; }
  static int prev(int i) { return i == 0 ? 2 : i - 1; }

  bool is_ghost(const Tri& t) const { return t.v[0] == inf_ || t.v[1] == inf_ || t.v[2] == inf_; }

  static int slot_of(const Tri& t, int vertex) {
    for (int i = 0; i < 3; ++i)
      if (t.v[i] == vertex) return i;
    return -1;
  }

  static int neighbor_slot(const Tri& t, int other) {
    for (int i = 0; i < 3; ++i)
      if (t.n[i] == other) return i;
    return -1;
  }

  void replace_neighbor(int tri, int old_nb, int new_nb) {
    if (tri < 0) return;
    const int s = neighbor_slot(tris_[tri], old_nb);
    if (s >= 0) tris_[tri].n[s] = new_nb;
  }

  // Ghost triangles (a, b, inf) own the open half-plane left of a->b plus the
  // open segment ab.
  bool circumcircle_contains(const Tri& t, const Vec2& p) const {
    const int gi = slot_of(t, inf_);
    if (gi >= 0) {
      const Vec2& a = pos_[t.v[next(gi)]];
      const Vec2& b = pos_[t.v[prev(gi)]];
      const int o = predicates::orient2d(a, b, p);
      return o > 0 || (o == 0 && predicates::strictly_inside_segment(a, b, p));
    }
    return predicates::incircle(pos_[t.v[0]], pos_[t.v[1]], pos_[t.v[2]], p) > 0;
  }

  int add_tri(std::array<int, 3> v, std::array<int, 3> n) {
    tris_.push_back({v, n, true});
    return static_cast<int>(tris_.size() - 1);
  }

  void build_delaunay() {
    const int n = inf_;
    int k = -1;
    for (int i = 2; i < n; ++i)
      if (predicates::orient2d(pos_[0], pos_[1], pos_[i]) != 0) {
        k = i;
        break;
      }
    if (k < 0) throw DegenerateInputError("triangulate: all sites are collinear");

    int a = 0, b = 1, c = k;
    if (predicates::orient2d(pos_[a], pos_[b], pos_[c]) < 0) std::swap(b, c);
    // Real triangle 0 plus ghosts across each of its edges.
    tris_.push_back({{a, b, c}, {3, 1, 2}, true});  // placeholder neighbors fixed below
    const int g_ab = add_tri({b, a, inf_}, {-1, -1, 0});
    const int g_bc = add_tri({c, b, inf_}, {-1, -1, 0});
    const int g_ca = add_tri({a, c, inf_}, {-1, -1, 0});
    tris_[0].n = {g_bc, g_ca, g_ab};
    // Ghost (x, y, inf): n[0] opposite x is edge (y, inf), n[1] opposite y is edge (inf, x).
    tris_[g_ab].n[0] = g_ca;  // edge (a, inf) shared with ghost (a, c, inf)
    tris_[g_ab].n[1] = g_bc;  // edge (inf, b) shared with ghost (c, b, inf)
    tris_[g_bc].n[0] = g_ab;  // edge (b, inf)
    tris_[g_bc].n[1] = g_ca;  // edge (inf, c)
    tris_[g_ca].n[0] = g_bc;  // edge (c, inf)
    tris_[g_ca].n[1] = g_ab;  // edge (inf, a)
    last_ = 0;

    for (int i = 2; i < n; ++i) {
      if (i == k) continue;
      insert_point(i);
    }
  }

  int locate_linear(const Vec2& p) const {
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      const Tri& tr = tris_[t];
      if (!tr.alive || is_ghost(tr)) continue;
      if (predicates::in_triangle(pos_[tr.v[0]], pos_[tr.v[1]], pos_[tr.v[2]], p)) return static_cast<int>(t);
    }
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      const Tri& tr = tris_[t];
      if (!tr.alive || !is_ghost(tr)) continue;
      const int gi = slot_of(tr, inf_);
      if (predicates::orient2d(pos_[tr.v[next(gi)]], pos_[tr.v[prev(gi)]], p) > 0) return static_cast<int>(t);
    }
    throw ContractError("triangulate: point location failed");
  }

  // Visibility walk; falls back to a linear scan if it does not settle.
  int locate(const Vec2& p) const {
    int t = last_;
    const std::size_t max_steps = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < max_steps; ++step) {
      const Tri& tr = tris_[t];
      const int gi = slot_of(tr, inf_);
      if (gi >= 0) {
        const int o = predicates::orient2d(pos_[tr.v[next(gi)]], pos_[tr.v[prev(gi)]], p);
        if (o > 0) return t;
        t = tr.n[gi];
        continue;
      }
      int moved = -1;
      for (int i = 0; i < 3; ++i) {
        if (predicates::orient2d(pos_[tr.v[next(i)]], pos_[tr.v[prev(i)]], p) < 0) {
          moved = tr.n[i];
          break;
        }
      }
      if (moved < 0) return t;
      t = moved;
    }
    return locate_linear(p);
  }

  void insert_point(int vi) {
    const Vec2& p = pos_[vi];
    const int t = locate(p);
    const Tri& tr = tris_[t];
    if (is_ghost(tr)) {
      split_triangle(t, vi);
      return;
    }
    int zero_slot = -1, zeros = 0;
    for (int i = 0; i < 3; ++i) {
      if (predicates::orient2d(pos_[tr.v[next(i)]], pos_[tr.v[prev(i)]], p) == 0) {
        zero_slot = i;
        ++zeros;
      }
    }
    if (zeros >= 2) throw ContractError("triangulate: duplicate site");
    if (zeros == 1)
      split_edge(t, zero_slot, vi);
    else
      split_triangle(t, vi);
  }

  void split_triangle(int t, int p) {
    const auto [a, b, c] = tris_[t].v;
    const auto [na, nb, nc] = tris_[t].n;
    const int t1 = add_tri({b, c, p}, {-1, t, na});
    const int t2 = add_tri({c, a, p}, {t, t1, nb});
    tris_[t1].n[0] = t2;
    tris_[t].v = {a, b, p};
    tris_[t].n = {t1, t2, nc};
    replace_neighbor(na, t, t1);
    replace_neighbor(nb, t, t2);
    last_ = t;
    legalize({t, t1, t2}, p);
  }

  // p lies on the edge opposite slot `s` of triangle t.
  void split_edge(int t, int s, int p) {
    const int a = tris_[t].v[s], b = tris_[t].v[next(s)], c = tris_[t].v[prev(s)];
    const int u = tris_[t].n[s];
    const int n_b = tris_[t].n[next(s)];  // across (c, a)
    const int n_c = tris_[t].n[prev(s)];  // across (a, b)
    const Tri& ut = tris_[u];
    const int ds = neighbor_slot(ut, t);
    const int d = ut.v[ds];
    // u = (d, c, b) after rotation to ds.
    const int u_c = ut.n[slot_of(ut, c)];  // across (b, d)
    const int u_b = ut.n[slot_of(ut, b)];  // across (d, c)

    const int t2 = add_tri({a, p, c}, {-1, n_b, t});
    const int u2 = add_tri({d, p, b}, {t, u_c, u});
    tris_[t].v = {a, b, p};
    tris_[t].n = {u2, t2, n_c};
    tris_[u].v = {d, c, p};
    tris_[u].n = {t2, u2, u_b};
    tris_[t2].n[0] = u;
    replace_neighbor(n_b, t, t2);
    replace_neighbor(u_c, u, u2);
    last_ = t;
    legalize({t, t2, u, u2}, p);
  }

  void legalize(std::vector<int> stack, int p) {
    const Vec2& pp = pos_[p];
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      const int i = slot_of(tris_[t], p);
      const int u = tris_[t].n[i];
      if (!circumcircle_contains(tris_[u], pp)) continue;
      flip(t, u, p);
      stack.push_back(t);
      stack.push_back(u);
    }
  }

  // t = (p, q1, q2) and u share edge (q1, q2); afterwards t = (p, q1, d), u = (p, d, q2).
  void flip(int t, int u, int p) {
    const int ip = slot_of(tris_[t], p);
    const int q1 = tris_[t].v[next(ip)], q2 = tris_[t].v[prev(ip)];
    const int A = tris_[t].n[next(ip)];  // across (q2, p)
    const int B = tris_[t].n[prev(ip)];  // across (p, q1)
    const Tri& ut = tris_[u];
    const int id = neighbor_slot(ut, t);
    const int d = ut.v[id];
    const int C = ut.n[slot_of(ut, q2)];  // across (q1, d)
    const int D = ut.n[slot_of(ut, q1)];  // across (d, q2)
    tris_[t].v = {p, q1, d};
    tris_[t].n = {C, u, B};
    tris_[u].v = {p, d, q2};
    tris_[u].n = {D, A, t};
    replace_neighbor(A, t, u);
    replace_neighbor(C, u, t);
  }

  static std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  static std::uint64_t undirected_key(int a, int b) { return a < b ? edge_key(a, b) : edge_key(b, a); }

  void rebuild_adjacency() {
    std::vector<Tri> alive;
    alive.reserve(tris_.size());
    for (const auto& t : tris_)
      if (t.alive) alive.push_back(t);
    tris_.swap(alive);
    std::unordered_map<std::uint64_t, int> directed;
    directed.reserve(tris_.size() * 3);
    for (std::size_t t = 0; t < tris_.size(); ++t)
      for (int i = 0; i < 3; ++i)
        directed[edge_key(tris_[t].v[next(i)], tris_[t].v[prev(i)])] = static_cast<int>(t);
    for (auto& t : tris_)
      for (int i = 0; i < 3; ++i) {
        auto it = directed.find(edge_key(t.v[prev(i)], t.v[next(i)]));
        if (it == directed.end()) throw ContractError("triangulate: broken adjacency after constraint insertion");
        t.n[i] = it->second;
      }
    last_ = 0;
  }

  bool edge_exists(int a, int b) const {
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      const int sa = slot_of(t, a);
      if (sa >= 0 && slot_of(t, b) >= 0) return true;
    }
    return false;
  }

  static void triangulate_pseudo_polygon(const std::vector<Vec2>& pos, int a, int b, std::span<const int> pts,
                                         std::vector<std::array<int, 3>>& out) {
    if (pts.empty()) return;
    std::size_t ci = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (predicates::incircle(pos[a], pos[b], pos[pts[ci]], pos[pts[i]]) > 0) ci = i;
    const int c = pts[ci];
    triangulate_pseudo_polygon(pos, a, c, pts.subspan(0, ci), out);
    triangulate_pseudo_polygon(pos, c, b, pts.subspan(ci + 1), out);
    out.push_back({a, b, c});
  }

  void insert_segment(int a, int b) {
    if (edge_exists(a, b)) {
      constrained_.insert(undirected_key(a, b));
      return;
    }
    const Vec2 pa = pos_[a], pb = pos_[b];
    auto on_segment = [&](int v) {
      return predicates::orient2d(pa, pb, pos_[v]) == 0 && (pos_[v] - pa).dot(pb - pa) > 0;
    };

    // Triangle at a whose opposite edge is crossed by a->b.
    int start = -1, r = -1, l = -1;
    for (std::size_t t = 0; t < tris_.size() && start < 0; ++t) {
      const Tri& tr = tris_[t];
      if (!tr.alive || is_ghost(tr)) continue;
      const int sa = slot_of(tr, a);
      if (sa < 0) continue;
      const int u = tr.v[next(sa)], v = tr.v[prev(sa)];
      if (on_segment(u) || on_segment(v)) {
        const int mid = on_segment(u) ? u : v;
        insert_segment(a, mid);
        insert_segment(mid, b);
        return;
      }
      if (predicates::orient2d(pa, pb, pos_[u]) < 0 && predicates::orient2d(pa, pb, pos_[v]) > 0) {
        start = static_cast<int>(t);
        r = u;
        l = v;
      }
    }
    if (start < 0) throw ContractError("triangulate: segment start not found");

    std::vector<int> cavity{start};
    std::vector<int> left{l}, right{r};
    int cur = start;
    int end = b;
    for (;;) {
      if (constrained_.count(undirected_key(r, l)))
        throw ContractError("triangulate: constraint segments cross");
      const Tri& ct = tris_[cur];
      const int nxt = ct.n[opposite_slot(ct, r, l)];
      const Tri& nt = tris_[nxt];
      const int w = nt.v[opposite_slot(nt, r, l)];
      cavity.push_back(nxt);
      cur = nxt;
      if (w == b) break;
      const int o = predicates::orient2d(pa, pb, pos_[w]);
      if (o == 0) {
        end = w;
        break;
      }
      if (o > 0) {
        left.push_back(w);
        l = w;
      } else {
        right.push_back(w);
        r = w;
      }
    }

    std::vector<std::array<int, 3>> fresh;
    triangulate_pseudo_polygon(pos_, a, end, left, fresh);
    std::vector<int> right_rev(right.rbegin(), right.rend());
    triangulate_pseudo_polygon(pos_, end, a, right_rev, fresh);
    for (int t : cavity) tris_[t].alive = false;
    for (const auto& f : fresh) tris_.push_back({f, {-1, -1, -1}, true});
    rebuild_adjacency();
    constrained_.insert(undirected_key(a, end));
    if (end != b) insert_segment(end, b);
  }

  // Slot of the vertex not on edge {x, y}.
  static int opposite_slot(const Tri& t, int x, int y) {
    for (int i = 0; i < 3; ++i)
      if (t.v[i] != x && t.v[i] != y) return i;
    return -1;
  }

  Mesh export_mesh() const {
    Mesh mesh;
    mesh.vertices = input_.sites;
    std::vector<std::pair<int, int>> edges;
    for (const auto& t : tris_) {
      if (!t.alive || is_ghost(t)) continue;
      mesh.facets.push_back(t.v);
      for (int i = 0; i < 3; ++i) {
        int x = t.v[next(i)], y = t.v[prev(i)];
        if (x > y) std::swap(x, y);
        edges.emplace_back(x, y);
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    mesh.edges.reserve(edges.size());
    for (const auto& [x, y] : edges)
      mesh.edges.push_back({x, y, constrained_.count(undirected_key(x, y)) > 0});
    return mesh;
  }

  const PreparedSites& input_;
  int inf_;
  std::vector<Vec2> pos_;
  std::vector<Tri> tris_;
  std::unordered_set<std::uint64_t> constrained_;
  int last_ = 0;
};

}  // namespace detail

/// Constrained Delaunay triangulation of prepared sites. Every segment is
/// covered by a chain of constrained edges; all other interior edges are
/// locally Delaunay. Deterministic for identical input.
inline Mesh triangulate(const PreparedSites& sites) {
  if (sites.sites.size() < 3) throw DegenerateInputError("triangulate: fewer than 3 sites");
  detail::Triangulator tri(sites);
  return tri.run();
}

/// Facet whose closed region contains `p` (lowest index on ties), or nullopt.
inline std::optional<std::size_t> locate(const Mesh& mesh, const Vec2& p) {
  for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
    const auto& [a, b, c] = mesh.facets[f];
    if (predicates::in_triangle(mesh.vertices[a].pos, mesh.vertices[b].pos, mesh.vertices[c].pos, p)) return f;
  }
  return std::nullopt;
}

/// Bucket-grid accelerated version of locate() with identical results.
class FacetLocator {
 public:
  explicit FacetLocator(const Mesh& mesh, int cells_per_axis = 0) : mesh_(&mesh) {
    if (mesh.facets.empty()) return;
    lo_ = hi_ = mesh.vertices.front().pos;
    for (const auto& v : mesh.vertices) {
      lo_ = lo_.cwiseMin(v.pos);
      hi_ = hi_.cwiseMax(v.pos);
    }
    n_ = cells_per_axis > 0 ? cells_per_axis
                            : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.facets.size()))));
    cell_ = ((hi_ - lo_) / n_).cwiseMax(Vec2(1e-12, 1e-12));
    buckets_.assign(static_cast<std::size_t>(n_) * n_, {});
    for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
      Vec2 flo = mesh.vertices[mesh.facets[f][0]].pos, fhi = flo;
      for (int k = 1; k < 3; ++k) {
        flo = flo.cwiseMin(mesh.vertices[mesh.facets[f][k]].pos);
        fhi = fhi.cwiseMax(mesh.vertices[mesh.facets[f][k]].pos);
      }
      const auto [x0, y0] = cell_of(flo);
      const auto [x1, y1] = cell_of(fhi);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) buckets_[static_cast<std::size_t>(y) * n_ + x].push_back(f);
    }
  }

  std::optional<std::size_t> locate(const Vec2& p) const {
    if (buckets_.empty()) return std::nullopt;
    if (p.x() < lo_.x() || p.y() < lo_.y() || p.x() > hi_.x() || p.y() > hi_.y()) return std::nullopt;
    const auto [x, y] = cell_of(p);
    // Facets touching p may be registered in neighbouring cells when p sits on a cell border.
    std::optional<std::size_t> best;
    for (int yy = std::max(0, y - 1); yy <= std::min(n_ - 1, y + 1); ++yy)
      for (int xx = std::max(0, x - 1); xx <= std::min(n_ - 1, x + 1); ++xx)
        for (std::size_t f : buckets_[static_cast<std::size_t>(yy) * n_ + xx]) {
          if (best && f >= *best) break;
          const auto& [a, b, c] = mesh_->facets[f];
          if (predicates::in_triangle(mesh_->vertices[a].pos, mesh_->vertices[b].pos, mesh_->vertices[c].pos, p))
            best = f;
        }
    return best;
  }

 private:
  std::pair<int, int> cell_of(const Vec2& p) const {
    const int x = std::clamp(static_cast<int>(std::floor((p.x() - lo_.x()) / cell_.x())), 0, n_ - 1);
    const int y = std::clamp(static_cast<int>(std::floor((p.y() - lo_.y()) / cell_.y())), 0, n_ - 1);
    return {x, y};
  }

  const Mesh* mesh_;
  Vec2 lo_ = Vec2::Zero(), hi_ = Vec2::Zero(), cell_ = Vec2::Ones();
  int n_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace sketchdepth::cdt
