//! Planar geometry primitives. All coordinates are kilometers in a local
//! projected frame; there is no geodesy anywhere in this crate.

/// A point in the planar (km) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Axis-aligned rectangle, edges inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn from_center(c: Point, width: f64, height: f64) -> Self {
        Rect {
            xmin: c.x - width / 2.0,
            ymin: c.y - height / 2.0,
            xmax: c.x + width / 2.0,
            ymax: c.y + height / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Grow the rectangle by `margin` on every side.
    pub fn expand(&self, margin: f64) -> Rect {
        Rect {
            xmin: self.xmin - margin,
            ymin: self.ymin - margin,
            xmax: self.xmax + margin,
            ymax: self.ymax + margin,
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Bounding box of a point set; `None` for an empty slice.
    pub fn hull_of(points: &[Point]) -> Option<Rect> {
        let first = points.first()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for p in &points[1..] {
            r.xmin = r.xmin.min(p.x);
            r.ymin = r.ymin.min(p.y);
            r.xmax = r.xmax.max(p.x);
            r.ymax = r.ymax.max(p.y);
        }
        Some(r)
    }
}

/// Area of the union of axis-aligned rectangles, overlaps counted once.
///
/// Sweep over compressed x-coordinates; within each slab, merge the
/// y-intervals of the rectangles spanning it.
pub fn union_area(rects: &[Rect]) -> f64 {
    let mut xs: Vec<f64> = rects
        .iter()
        .flat_map(|r| [r.xmin, r.xmax])
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();

    let mut total = 0.0;
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let xm = 0.5 * (x0 + x1);
        let mut intervals: Vec<(f64, f64)> = rects
            .iter()
            .filter(|r| r.xmin <= xm && xm <= r.xmax)
            .map(|r| (r.ymin, r.ymax))
            .collect();
        intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut covered = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (lo, hi) in intervals {
            match cur {
                None => cur = Some((lo, hi)),
                Some((clo, chi)) => {
                    if lo <= chi {
                        cur = Some((clo, chi.max(hi)));
                    } else {
                        covered += chi - clo;
                        cur = Some((lo, hi));
                    }
                }
            }
        }
        if let Some((clo, chi)) = cur {
            covered += chi - clo;
        }
        total += covered * (x1 - x0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_area_disjoint_and_overlapping() {
        let a = Rect::new(0.0, 0.0, 2.0, 1.0);
        let b = Rect::new(5.0, 0.0, 7.0, 1.0);
        assert!((union_area(&[a, b]) - 4.0).abs() < 1e-12);

        let c = Rect::new(1.0, 0.0, 3.0, 1.0); // overlaps a by 1x1
        assert!((union_area(&[a, c]) - 3.0).abs() < 1e-12);

        // identical rectangles count once
        assert!((union_area(&[a, a]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rect_contains_edges() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert!(r.contains(Point::new(0.0, 0.5)));
        assert!(r.contains(Point::new(1.0, 1.0)));
        assert!(!r.contains(Point::new(1.0 + 1e-12, 0.5)));
    }
}
