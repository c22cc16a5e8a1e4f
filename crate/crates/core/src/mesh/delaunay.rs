//! Incremental Delaunay triangulation of a rectangular hull with
//! edge-length-bounded Steiner refinement.
//!
//! Bowyer-Watson insertion with exact orientation/incircle predicates
//! (adaptive-precision, via the `robust` crate), so exactly cocircular
//! configurations - which the photo-node placement rule produces in bulk -
//! are resolved deterministically instead of corrupting the cavity.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

/// Merge tolerance for coincident nodes (km).
pub const MERGE_TOL: f64 = 1e-9;

fn coord(p: Point) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

#[derive(Debug)]
pub struct Triangulation {
    pub points: Vec<Point>,
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    /// Directed edge (a, b) -> index of the triangle that contains a->b in
    /// CCW order. The reverse edge belongs to the neighbor (absent on hull).
    edge_map: HashMap<(usize, usize), usize>,
    /// Quantized coordinates -> node index, for duplicate merging.
    key_map: HashMap<(i64, i64), usize>,
    hull: Rect,
    last_tri: usize,
}

fn quantize(p: Point) -> (i64, i64) {
    ((p.x / MERGE_TOL).round() as i64, (p.y / MERGE_TOL).round() as i64)
}

impl Triangulation {
    /// Two CCW triangles covering the hull rectangle.
    pub fn new(hull: Rect) -> Result<Self> {
        if !(hull.width() > 0.0) || !(hull.height() > 0.0) {
            return Err(Error::Degenerate("hull rectangle has no area".into()));
        }
        let points = vec![
            Point::new(hull.xmin, hull.ymin),
            Point::new(hull.xmax, hull.ymin),
            Point::new(hull.xmax, hull.ymax),
            Point::new(hull.xmin, hull.ymax),
        ];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let mut t = Triangulation {
            points,
            tris: Vec::new(),
            alive: Vec::new(),
            edge_map: HashMap::new(),
            key_map: HashMap::new(),
            hull,
            last_tri: 0,
        };
        for i in 0..4 {
            t.key_map.insert(quantize(t.points[i]), i);
        }
        for tri in tris {
            t.push_triangle(tri);
        }
        Ok(t)
    }

    fn push_triangle(&mut self, tri: [usize; 3]) -> usize {
        let idx = self.tris.len();
        self.tris.push(tri);
        self.alive.push(true);
        for e in 0..3 {
            self.edge_map.insert((tri[e], tri[(e + 1) % 3]), idx);
        }
        self.last_tri = idx;
        idx
    }

    fn kill_triangle(&mut self, idx: usize) {
        let tri = self.tris[idx];
        self.alive[idx] = false;
        for e in 0..3 {
            let key = (tri[e], tri[(e + 1) % 3]);
            if self.edge_map.get(&key) == Some(&idx) {
                self.edge_map.remove(&key);
            }
        }
    }

    /// Walk to a triangle containing `p` (inclusive of edges/vertices).
    fn locate(&self, p: Point) -> Result<usize> {
        let mut cur = self.last_tri;
        if !self.alive[cur] {
            cur = (0..self.tris.len())
                .rev()
                .find(|&t| self.alive[t])
                .expect("no live triangles");
        }
        let max_steps = 4 * self.tris.len() + 16;
        for _ in 0..max_steps {
            let tri = self.tris[cur];
            let mut moved = false;
            for e in 0..3 {
                let a = self.points[tri[e]];
                let b = self.points[tri[(e + 1) % 3]];
                if orient2d(coord(a), coord(b), coord(p)) < 0.0 {
                    match self.edge_map.get(&(tri[(e + 1) % 3], tri[e])) {
                        Some(&next) => {
                            cur = next;
                            moved = true;
                            break;
                        }
                        None => {
                            return Err(Error::OutOfDomain {
                                x: p.x,
                                y: p.y,
                                domain: "triangulation hull".into(),
                            })
                        }
                    }
                }
            }
            if !moved {
                return Ok(cur);
            }
        }
        // fall back to a full scan (possible cycling on degenerate walks)
        for t in 0..self.tris.len() {
            if !self.alive[t] {
                continue;
            }
            let tri = self.tris[t];
            let inside = (0..3).all(|e| {
                let a = self.points[tri[e]];
                let b = self.points[tri[(e + 1) % 3]];
                orient2d(coord(a), coord(b), coord(p)) >= 0.0
            });
            if inside {
                return Ok(t);
            }
        }
        Err(Error::OutOfDomain {
            x: p.x,
            y: p.y,
            domain: "triangulation hull".into(),
        })
    }

    /// Insert a point (Bowyer-Watson); coincident points (within the merge
    /// tolerance) return the existing node index.
    pub fn insert(&mut self, p: Point) -> Result<usize> {
        if !self.hull.contains(p) {
            return Err(Error::OutOfDomain {
                x: p.x,
                y: p.y,
                domain: "triangulation hull".into(),
            });
        }
        let key = quantize(p);
        if let Some(&existing) = self.key_map.get(&key) {
            return Ok(existing);
        }
        // also catch neighbors of the quantization cell
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&cand) = self.key_map.get(&(key.0 + dx, key.1 + dy)) {
                    if self.points[cand].dist(p) <= MERGE_TOL {
                        return Ok(cand);
                    }
                }
            }
        }

        let start = self.locate(p)?;
        // cavity: BFS over triangles whose circumcircle strictly contains p
        let mut cavity = vec![start];
        let mut in_cavity = HashMap::new();
        in_cavity.insert(start, true);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            let tri = self.tris[t];
            for e in 0..3 {
                let rev = (tri[(e + 1) % 3], tri[e]);
                if let Some(&nb) = self.edge_map.get(&rev) {
                    if in_cavity.contains_key(&nb) {
                        continue;
                    }
                    let nt = self.tris[nb];
                    let inside = incircle(
                        coord(self.points[nt[0]]),
                        coord(self.points[nt[1]]),
                        coord(self.points[nt[2]]),
                        coord(p),
                    ) > 0.0;
                    in_cavity.insert(nb, inside);
                    if inside {
                        cavity.push(nb);
                        stack.push(nb);
                    }
                }
            }
        }

        // boundary edges: directed edges of cavity triangles whose twin is
        // outside the cavity (or absent, on the hull)
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let twin_in = self
                    .edge_map
                    .get(&(b, a))
                    .map(|nb| in_cavity.get(nb) == Some(&true))
                    .unwrap_or(false);
                if !twin_in {
                    boundary.push((a, b));
                }
            }
        }

        for &t in &cavity {
            self.kill_triangle(t);
        }
        let v = self.points.len();
        self.points.push(p);
        self.key_map.insert(key, v);
        for (a, b) in boundary {
            // a degenerate fan face means p lies exactly on a hull edge;
            // skipping it splits that edge at p
            if orient2d(coord(self.points[a]), coord(self.points[b]), coord(p)) > 0.0 {
                self.push_triangle([a, b, v]);
            }
        }
        Ok(v)
    }

    pub fn live_triangles(&self) -> Vec<[usize; 3]> {
        self.tris
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(t, _)| *t)
            .collect()
    }

    /// Undirected live edges (a < b).
    pub fn live_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .edge_map
            .keys()
            .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Split every edge that exceeds its length bound (inner bound where the
    /// edge midpoint falls inside `inner`, outer bound elsewhere) until no
    /// edge is left over the limit. Longest edge first.
    pub fn refine(&mut self, inner: Rect, max_edge_inner: f64, max_edge_outer: f64) -> Result<()> {
        loop {
            let mut offending: Vec<(f64, usize, usize)> = Vec::new();
            for (a, b) in self.live_edges() {
                let pa = self.points[a];
                let pb = self.points[b];
                let mid = Point::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
                let bound = if inner.contains(mid) {
                    max_edge_inner
                } else {
                    max_edge_outer
                };
                let len = pa.dist(pb);
                if len > bound {
                    offending.push((len, a, b));
                }
            }
            if offending.is_empty() {
                return Ok(());
            }
            offending.sort_by(|x, y| {
                y.0.partial_cmp(&x.0)
                    .unwrap()
                    .then(x.1.cmp(&y.1))
                    .then(x.2.cmp(&y.2))
            });
            let before = self.points.len();
            for (_, a, b) in offending {
                // the edge may have been destroyed by an earlier split
                if !self.edge_map.contains_key(&(a, b)) && !self.edge_map.contains_key(&(b, a)) {
                    continue;
                }
                let pa = self.points[a];
                let pb = self.points[b];
                let mid = Point::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
                self.insert(mid)?;
            }
            if self.points.len() == before {
                return Err(Error::Degenerate(
                    "mesh refinement stalled: offending edges cannot be split".into(),
                ));
            }
            if self.points.len() > 2_000_000 {
                return Err(Error::InvalidInput(
                    "mesh refinement exceeded 2e6 nodes; edge bounds too small".into(),
                ));
            }
        }
    }

    /// Max incircle violation over live triangles and points: how far the
    /// triangulation is from Delaunay (0 for exact, small values are ties).
    #[cfg(test)]
    pub fn worst_incircle_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for tri in self.live_triangles() {
            for (v, p) in self.points.iter().enumerate() {
                if tri.contains(&v) {
                    continue;
                }
                let val = incircle(
                    coord(self.points[tri[0]]),
                    coord(self.points[tri[1]]),
                    coord(self.points[tri[2]]),
                    coord(*p),
                );
                // normalize by the scale of the determinant
                let d = self.points[tri[0]].dist(*p).max(1e-30);
                worst = worst.max(val / d.powi(4));
            }
        }
        worst
    }
}
