//! Triangular mesh construction whose Voronoi dual matches the photo
//! footprints, plus finite-element matrices and interpolation projectors.
//!
//! Photo-node placement: a node at the center of every photo, nodes one
//! photo-height above and below each center, and - for the first and last
//! photo of each transect - one photo-width to the outer side. With
//! contiguous photos this makes the Voronoi cell of each photo node exactly
//! the photo rectangle, so the dual-cell weight can serve as the Poisson
//! exposure of that photo.

pub mod delaunay;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::gmrf::sparse::SparseSpd;
use crate::survey::Survey;

use delaunay::{Triangulation, MERGE_TOL};

/// Triangular mesh: node list, CCW triangles, the rectangular hull it
/// tessellates, and the photo-id -> node map when built from a survey.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub hull: Rect,
    pub photo_node: BTreeMap<String, usize>,
}

/// Per-node dual-cell (Voronoi, clipped to the hull) areas in km^2.
#[derive(Debug, Clone)]
pub struct DualWeights {
    pub weights: Vec<f64>,
}

/// Lumped mass diagonal C and stiffness matrix G of the piecewise-linear
/// finite-element basis.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub c: Vec<f64>,
    pub g: SparseSpd,
}

/// Sparse interpolation matrix: one row per query point holding the
/// barycentric weights of its containing triangle's vertices.
#[derive(Debug, Clone)]
pub struct Projector {
    rows: Vec<[(usize, f64); 3]>,
}

impl Projector {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64); 3] {
        &self.rows[i]
    }

    /// Interpolate a node field at query point i.
    pub fn interpolate(&self, i: usize, field: &[f64]) -> f64 {
        self.rows[i]
            .iter()
            .map(|&(j, w)| w * field[j])
            .sum()
    }
}

/// Mesh construction parameters.
#[derive(Debug, Clone)]
pub struct MeshConfig {
    /// Hull margin as a fraction of the seed bounding-box diagonal, added on
    /// every side (extends the modeled area beyond the data).
    pub margin_frac: f64,
    /// Edge-length bound inside the data region; `None` derives
    /// 2 x median photo height.
    pub max_edge_inner: Option<f64>,
    /// Edge-length bound outside the data region; `None` derives
    /// 10 x median photo height.
    pub max_edge_outer: Option<f64>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            margin_frac: 0.30,
            max_edge_inner: None,
            max_edge_outer: None,
        }
    }
}

/// Seed nodes of the dual-mesh construction, deduplicated (1e-9 km).
pub fn build_photo_nodes(survey: &Survey) -> Vec<Point> {
    let mut nodes: Vec<Point> = Vec::new();
    let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
    let mut push = |p: Point, nodes: &mut Vec<Point>| {
        let key = (
            (p.x / MERGE_TOL).round() as i64,
            (p.y / MERGE_TOL).round() as i64,
        );
        if let Some(&i) = seen.get(&key) {
            if nodes[i].dist(p) <= MERGE_TOL {
                return;
            }
        }
        seen.insert(key, nodes.len());
        nodes.push(p);
    };
    let photos = survey.photos();
    for p in photos {
        push(p.center, &mut nodes);
        push(Point::new(p.center.x, p.center.y + p.height), &mut nodes);
        push(Point::new(p.center.x, p.center.y - p.height), &mut nodes);
    }
    for t in survey.transects() {
        let first = &photos[*t.photo_indices.first().unwrap()];
        let last = &photos[*t.photo_indices.last().unwrap()];
        push(
            Point::new(first.center.x - first.width, first.center.y),
            &mut nodes,
        );
        push(
            Point::new(last.center.x + last.width, last.center.y),
            &mut nodes,
        );
    }
    nodes
}

/// Delaunay triangulation of `seeds` over `hull`, refined so that no edge
/// whose midpoint lies in `inner` exceeds `max_edge_inner` and no other edge
/// exceeds `max_edge_outer`. Returns the mesh (without photo map) and the
/// node index of each seed.
pub fn triangulate(
    seeds: &[Point],
    hull: Rect,
    inner: Option<Rect>,
    max_edge_inner: f64,
    max_edge_outer: f64,
) -> Result<(Mesh, Vec<usize>)> {
    if !(max_edge_inner > 0.0) || max_edge_inner > max_edge_outer {
        return Err(Error::InvalidInput(format!(
            "need 0 < max_edge_inner <= max_edge_outer, got {max_edge_inner}, {max_edge_outer}"
        )));
    }
    let inner = inner
        .or_else(|| Rect::hull_of(seeds))
        .unwrap_or(hull);
    let mut tri = Triangulation::new(hull)?;
    let mut seed_idx = Vec::with_capacity(seeds.len());
    for &s in seeds {
        seed_idx.push(tri.insert(s)?);
    }
    tri.refine(inner, max_edge_inner, max_edge_outer)?;
    let mesh = Mesh {
        nodes: tri.points.clone(),
        triangles: tri.live_triangles(),
        hull,
        photo_node: BTreeMap::new(),
    };
    Ok((mesh, seed_idx))
}

/// Full survey-driven mesh build: photo nodes, expanded hull, refinement
/// bounds from the median photo height, and the photo -> node map.
pub fn build_survey_mesh(survey: &Survey, config: &MeshConfig) -> Result<Mesh> {
    let seeds = build_photo_nodes(survey);
    let bbox = Rect::hull_of(&seeds)
        .ok_or_else(|| Error::Degenerate("survey has no photos".into()))?;
    let hull = bbox.expand(config.margin_frac * bbox.diagonal());

    let mut heights: Vec<f64> = survey.photos().iter().map(|p| p.height).collect();
    heights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_h = heights[heights.len() / 2];
    let inner = config.max_edge_inner.unwrap_or(2.0 * median_h);
    let outer = config.max_edge_outer.unwrap_or(10.0 * median_h);

    let (mut mesh, seed_idx) = triangulate(&seeds, hull, Some(bbox), inner, outer)?;

    // photo centers are the first seeds in build order
    let mut photo_node = BTreeMap::new();
    let mut center_lookup: HashMap<(i64, i64), usize> = HashMap::new();
    for (s, &idx) in seeds.iter().zip(&seed_idx) {
        center_lookup.insert(
            (
                (s.x / MERGE_TOL).round() as i64,
                (s.y / MERGE_TOL).round() as i64,
            ),
            idx,
        );
    }
    for p in survey.photos() {
        let key = (
            (p.center.x / MERGE_TOL).round() as i64,
            (p.center.y / MERGE_TOL).round() as i64,
        );
        let idx = center_lookup.get(&key).copied().ok_or_else(|| {
            Error::Degenerate(format!("photo `{}` center lost during meshing", p.id))
        })?;
        photo_node.insert(p.id.clone(), idx);
    }
    mesh.photo_node = photo_node;
    Ok(mesh)
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Text dump: NODES (index x y), TRIANGLES (i j k), WEIGHTS (index area).
    pub fn write_debug_dump(&self, weights: &DualWeights, mut w: impl Write) -> Result<()> {
        writeln!(w, "NODES")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {} {}", p.x, p.y)?;
        }
        writeln!(w, "TRIANGLES")?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "WEIGHTS")?;
        for (i, a) in weights.weights.iter().enumerate() {
            writeln!(w, "{i} {a}")?;
        }
        Ok(())
    }
}

/// Voronoi cell areas clipped to the mesh hull, one per node.
///
/// Each cell is cut from the hull rectangle by the perpendicular-bisector
/// half-planes against the node's Delaunay neighbors (sufficient: Voronoi
/// neighbors are always Delaunay neighbors, up to zero-measure tie contacts).
pub fn dual_cells(mesh: &Mesh) -> DualWeights {
    let adj = mesh.adjacency();
    let hull_poly = vec![
        Point::new(mesh.hull.xmin, mesh.hull.ymin),
        Point::new(mesh.hull.xmax, mesh.hull.ymin),
        Point::new(mesh.hull.xmax, mesh.hull.ymax),
        Point::new(mesh.hull.xmin, mesh.hull.ymax),
    ];
    let weights = (0..mesh.nodes.len())
        .map(|i| {
            let pi = mesh.nodes[i];
            let mut poly = hull_poly.clone();
            for &j in &adj[i] {
                let pj = mesh.nodes[j];
                // half-plane (x - m) . (pj - pi) <= 0
                let m = Point::new(0.5 * (pi.x + pj.x), 0.5 * (pi.y + pj.y));
                let n = Point::new(pj.x - pi.x, pj.y - pi.y);
                poly = clip_half_plane(&poly, m, n);
                if poly.is_empty() {
                    break;
                }
            }
            polygon_area(&poly)
        })
        .collect();
    DualWeights { weights }
}

/// Sutherland-Hodgman clip of a convex polygon by `(x - m) . n <= 0`.
fn clip_half_plane(poly: &[Point], m: Point, n: Point) -> Vec<Point> {
    let side = |p: Point| (p.x - m.x) * n.x + (p.y - m.y) * n.y;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(a), side(b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    out
}

fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s.abs()
}

/// Lumped mass (area/3 per vertex per triangle) and standard piecewise-linear
/// stiffness assembly.
pub fn fem_matrices(mesh: &Mesh) -> Result<FemMatrices> {
    let n = mesh.nodes.len();
    let mut c = vec![0.0f64; n];
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let p: Vec<Point> = tri.iter().map(|&v| mesh.nodes[v]).collect();
        let area2 = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
        if area2 <= 0.0 {
            return Err(Error::Degenerate(format!(
                "triangle {:?} is degenerate or misoriented",
                tri
            )));
        }
        let area = 0.5 * area2;
        for &v in tri {
            c[v] += area / 3.0;
        }
        // gradients of the barycentric basis: b_r = y_s - y_t, c_r = x_t - x_s
        let mut b = [0.0; 3];
        let mut cc = [0.0; 3];
        for r in 0..3 {
            let s = (r + 1) % 3;
            let t = (r + 2) % 3;
            b[r] = p[s].y - p[t].y;
            cc[r] = p[t].x - p[s].x;
        }
        for r in 0..3 {
            for s in 0..3 {
                entries.push((tri[r], tri[s], (b[r] * b[s] + cc[r] * cc[s]) / (4.0 * area)));
            }
        }
    }
    let g = SparseSpd::from_triplets(n, &entries)?;
    Ok(FemMatrices { c, g })
}

/// Barycentric interpolation rows for arbitrary points inside the hull.
pub fn projector(mesh: &Mesh, points: &[Point]) -> Result<Projector> {
    let index = TriangleIndex::build(mesh);
    let rows = points
        .iter()
        .map(|&p| index.barycentric(mesh, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Projector { rows })
}

/// Uniform-bin spatial index over triangle bounding boxes.
struct TriangleIndex {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    bins: Vec<Vec<usize>>,
}

impl TriangleIndex {
    fn build(mesh: &Mesh) -> Self {
        let n_tri = mesh.triangles.len().max(1);
        let target = (n_tri as f64).sqrt().ceil() as usize;
        let nx = target.clamp(1, 512);
        let ny = target.clamp(1, 512);
        let hull = mesh.hull;
        let dx = hull.width() / nx as f64;
        let dy = hull.height() / ny as f64;
        let mut bins = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let xs = tri.iter().map(|&v| mesh.nodes[v].x);
            let ys = tri.iter().map(|&v| mesh.nodes[v].y);
            let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in xs {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
            }
            let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in ys {
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
            let i0 = (((xmin - hull.xmin) / dx).floor() as isize).clamp(0, nx as isize - 1);
            let i1 = (((xmax - hull.xmin) / dx).floor() as isize).clamp(0, nx as isize - 1);
            let j0 = (((ymin - hull.ymin) / dy).floor() as isize).clamp(0, ny as isize - 1);
            let j1 = (((ymax - hull.ymin) / dy).floor() as isize).clamp(0, ny as isize - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[(j as usize) * nx + i as usize].push(t);
                }
            }
        }
        TriangleIndex {
            nx,
            ny,
            x0: hull.xmin,
            y0: hull.ymin,
            dx,
            dy,
            bins,
        }
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let i = (((p.x - self.x0) / self.dx).floor() as isize).clamp(0, self.nx as isize - 1);
        let j = (((p.y - self.y0) / self.dy).floor() as isize).clamp(0, self.ny as isize - 1);
        &self.bins[(j as usize) * self.nx + i as usize]
    }

    fn barycentric(&self, mesh: &Mesh, p: Point) -> Result<[(usize, f64); 3]> {
        const TOL: f64 = 1e-12;
        let try_triangle = |t: usize| -> Option<[(usize, f64); 3]> {
            let tri = mesh.triangles[t];
            let [a, b, c] = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
            let area2 = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
            let l0 = ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) / area2;
            let l1 = ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) / area2;
            let l2 = 1.0 - l0 - l1;
            let scale = TOL * (1.0 + area2.abs().sqrt());
            if l0 >= -scale && l1 >= -scale && l2 >= -scale {
                let (l0, l1, l2) = (l0.max(0.0), l1.max(0.0), l2.max(0.0));
                let s = l0 + l1 + l2;
                Some([
                    (tri[0], l0 / s),
                    (tri[1], l1 / s),
                    (tri[2], l2 / s),
                ])
            } else {
                None
            }
        };
        for &t in self.candidates(p) {
            if let Some(row) = try_triangle(t) {
                return Ok(row);
            }
        }
        // bins cover bounding boxes, so a miss here usually means outside
        for t in 0..mesh.triangles.len() {
            if let Some(row) = try_triangle(t) {
                return Ok(row);
            }
        }
        Err(Error::OutOfDomain {
            x: p.x,
            y: p.y,
            domain: "mesh hull".into(),
        })
    }
}
