//! Survey ingestion: photo-count tables, covariate rasters, and the
//! whelping-region geometry derived from the transect layout.
//!
//! Conventions: transects run along the x-axis, so a photo's `width` is its
//! along-transect extent and `height` its cross-transect extent. Coordinates
//! are planar kilometers (the survey data is assumed to live in a local
//! projected frame; no reprojection is performed).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{union_area, Point, Rect};

/// One aerial photo: a rectangle with per-species pup counts.
#[derive(Debug, Clone)]
pub struct Photo {
    pub id: String,
    pub transect_id: String,
    pub center: Point,
    /// Along-transect extent (km).
    pub width: f64,
    /// Cross-transect extent (km).
    pub height: f64,
    pub counts: BTreeMap<String, u64>,
}

impl Photo {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn rect(&self) -> Rect {
        Rect::from_center(self.center, self.width, self.height)
    }

    pub fn count(&self, species: &str) -> Result<u64> {
        self.counts.get(species).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "photo {} has no count column for species `{species}`",
                self.id
            ))
        })
    }
}

/// A transect: ordered member photos (along-transect order, i.e. by x).
#[derive(Debug, Clone)]
pub struct Transect {
    pub id: String,
    /// Indices into `Survey::photos`, sorted by photo center x.
    pub photo_indices: Vec<usize>,
}

/// A full survey: photos in file order plus derived transect membership.
#[derive(Debug, Clone)]
pub struct Survey {
    photos: Vec<Photo>,
    transects: Vec<Transect>,
    species: Vec<String>,
}

impl Survey {
    /// Build a survey from photos, deriving transects in first-appearance
    /// order. Validates id uniqueness, positive dimensions, and pairwise
    /// non-overlap within each transect.
    pub fn new(photos: Vec<Photo>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &photos {
            if !seen.insert(p.id.clone()) {
                return Err(Error::SurveyFormat(format!("duplicate photo id `{}`", p.id)));
            }
            if !(p.width > 0.0) || !(p.height > 0.0) {
                return Err(Error::SurveyFormat(format!(
                    "photo `{}` has non-positive dimensions {}x{}",
                    p.id, p.width, p.height
                )));
            }
            if !p.center.x.is_finite() || !p.center.y.is_finite() {
                return Err(Error::SurveyFormat(format!(
                    "photo `{}` has non-finite center",
                    p.id
                )));
            }
        }

        let mut order: Vec<String> = Vec::new();
        let mut members: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in photos.iter().enumerate() {
            members
                .entry(p.transect_id.clone())
                .or_insert_with(|| {
                    order.push(p.transect_id.clone());
                    Vec::new()
                })
                .push(i);
        }

        let mut transects = Vec::with_capacity(order.len());
        for id in order {
            let mut idx = members.remove(&id).unwrap();
            idx.sort_by(|&a, &b| {
                photos[a]
                    .center
                    .x
                    .partial_cmp(&photos[b].center.x)
                    .unwrap()
                    .then(photos[a].id.cmp(&photos[b].id))
            });
            // photos within a transect must not overlap (touching is fine)
            for i in 0..idx.len() {
                for j in (i + 1)..idx.len() {
                    let (a, b) = (&photos[idx[i]], &photos[idx[j]]);
                    let ox = 0.5 * (a.width + b.width) - (a.center.x - b.center.x).abs();
                    let oy = 0.5 * (a.height + b.height) - (a.center.y - b.center.y).abs();
                    if ox > 1e-9 && oy > 1e-9 {
                        return Err(Error::SurveyFormat(format!(
                            "photos `{}` and `{}` overlap within transect `{}`",
                            a.id, b.id, id
                        )));
                    }
                }
            }
            transects.push(Transect {
                id,
                photo_indices: idx,
            });
        }

        let mut species: Vec<String> = photos
            .first()
            .map(|p| p.counts.keys().cloned().collect())
            .unwrap_or_default();
        species.sort();

        Ok(Survey {
            photos,
            transects,
            species,
        })
    }

    pub fn photos(&self) -> &[Photo] {
        &self.photos
    }

    pub fn transects(&self) -> &[Transect] {
        &self.transects
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn total_count(&self, species: &str) -> Result<u64> {
        self.photos.iter().map(|p| p.count(species)).sum()
    }

    pub fn total_photo_area(&self) -> f64 {
        self.photos.iter().map(|p| p.area()).sum()
    }

    /// Survey restricted to the photos whose index passes `keep`.
    /// Transect membership is re-derived; empty transects disappear.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<Survey> {
        let photos: Vec<Photo> = self
            .photos
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| p.clone())
            .collect();
        Survey::new(photos)
    }

    pub fn photo_index(&self, id: &str) -> Option<usize> {
        self.photos.iter().position(|p| p.id == id)
    }
}

/// Load a survey from a delimited text file.
///
/// Required columns: `id, transect_id, center_x_km, center_y_km, width_km,
/// height_km`; every remaining column is read as a per-species count.
pub fn load_survey(path: impl AsRef<Path>) -> Result<Survey> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::SurveyFormat(format!("{}: {e}", path.display())))?;

    let headers = rdr
        .headers()
        .map_err(|e| Error::SurveyFormat(format!("reading header: {e}")))?
        .clone();
    let required = [
        "id",
        "transect_id",
        "center_x_km",
        "center_y_km",
        "width_km",
        "height_km",
    ];
    let mut col = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        col.insert(h.to_string(), i);
    }
    for r in required {
        if !col.contains_key(r) {
            return Err(Error::SurveyFormat(format!("missing column `{r}`")));
        }
    }
    let species_cols: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !required.contains(h))
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    if species_cols.is_empty() {
        return Err(Error::SurveyFormat(
            "no species count columns found".into(),
        ));
    }

    let parse_f64 = |field: &str, name: &str, row: usize| -> Result<f64> {
        field.parse::<f64>().map_err(|_| {
            Error::SurveyFormat(format!("row {row}: cannot parse `{field}` as {name}"))
        })
    };

    let mut photos = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1; // 1-based data row
        let rec = rec.map_err(|e| Error::SurveyFormat(format!("row {row}: {e}")))?;
        let get = |name: &str| -> &str { rec.get(col[name]).unwrap_or("") };
        let width = parse_f64(get("width_km"), "width_km", row)?;
        let height = parse_f64(get("height_km"), "height_km", row)?;
        if !(width > 0.0) || !(height > 0.0) {
            return Err(Error::SurveyFormat(format!(
                "row {row}: non-positive photo dimension ({width} x {height})"
            )));
        }
        let mut counts = BTreeMap::new();
        for (name, i) in &species_cols {
            let field = rec.get(*i).unwrap_or("");
            let v: i64 = field.parse().map_err(|_| {
                Error::SurveyFormat(format!(
                    "row {row}: cannot parse count `{field}` for species `{name}`"
                ))
            })?;
            if v < 0 {
                return Err(Error::SurveyFormat(format!(
                    "row {row}: negative count {v} for species `{name}`"
                )));
            }
            counts.insert(name.clone(), v as u64);
        }
        photos.push(Photo {
            id: get("id").to_string(),
            transect_id: get("transect_id").to_string(),
            center: Point::new(
                parse_f64(get("center_x_km"), "center_x_km", row)?,
                parse_f64(get("center_y_km"), "center_y_km", row)?,
            ),
            width,
            height,
            counts,
        });
    }
    Survey::new(photos)
}

/// Write a survey in the same delimited format accepted by [`load_survey`].
pub fn write_survey(survey: &Survey, mut w: impl Write) -> Result<()> {
    let species = survey.species();
    write!(w, "id,transect_id,center_x_km,center_y_km,width_km,height_km")?;
    for s in species {
        write!(w, ",{s}")?;
    }
    writeln!(w)?;
    for p in survey.photos() {
        write!(
            w,
            "{},{},{},{},{},{}",
            p.id, p.transect_id, p.center.x, p.center.y, p.width, p.height
        )?;
        for s in species {
            write!(w, ",{}", p.counts.get(s).copied().unwrap_or(0))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Covariate raster: values on the nodes of a regular lattice.
/// Node (i, j) sits at (x0 + i dx, y0 + j dy); row j = 0 is southernmost.
#[derive(Debug, Clone)]
pub struct CovariateRaster {
    pub origin: Point,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    values: Vec<f64>, // row-major, ny rows of nx
}

impl CovariateRaster {
    pub fn new(
        origin: Point,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(dx > 0.0) || !(dy > 0.0) {
            return Err(Error::RasterFormat("cell spacing must be positive".into()));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::RasterFormat("raster needs at least 2x2 nodes".into()));
        }
        if values.len() != nx * ny {
            return Err(Error::RasterFormat(format!(
                "expected {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::RasterFormat(format!("non-finite value {v}")));
        }
        Ok(CovariateRaster {
            origin,
            dx,
            dy,
            nx,
            ny,
            values,
        })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn bounding_box(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + (self.nx - 1) as f64 * self.dx,
            self.origin.y + (self.ny - 1) as f64 * self.dy,
        )
    }

    fn bilinear(&self, px: f64, py: f64) -> f64 {
        let u = (px - self.origin.x) / self.dx;
        let v = (py - self.origin.y) / self.dy;
        let i0 = (u.floor() as isize).clamp(0, self.nx as isize - 2) as usize;
        let j0 = (v.floor() as isize).clamp(0, self.ny as isize - 2) as usize;
        let s = (u - i0 as f64).clamp(0.0, 1.0);
        let t = (v - j0 as f64).clamp(0.0, 1.0);
        let v00 = self.value(i0, j0);
        let v10 = self.value(i0 + 1, j0);
        let v01 = self.value(i0, j0 + 1);
        let v11 = self.value(i0 + 1, j0 + 1);
        (1.0 - s) * (1.0 - t) * v00 + s * (1.0 - t) * v10 + (1.0 - s) * t * v01 + s * t * v11
    }

    /// Bilinear interpolation of the four surrounding nodes.
    /// Errors for points outside the raster bounding box.
    pub fn covariate_at(&self, p: Point) -> Result<f64> {
        if !self.bounding_box().contains(p) {
            return Err(Error::OutOfDomain {
                x: p.x,
                y: p.y,
                domain: "covariate raster".into(),
            });
        }
        Ok(self.bilinear(p.x, p.y))
    }

    /// Like [`covariate_at`](Self::covariate_at), but points outside the
    /// bounding box take the nearest boundary value. Used when evaluating
    /// mesh nodes or prediction grids that extend past the raster footprint.
    pub fn covariate_at_clamped(&self, p: Point) -> f64 {
        let bb = self.bounding_box();
        self.bilinear(p.x.clamp(bb.xmin, bb.xmax), p.y.clamp(bb.ymin, bb.ymax))
    }
}

/// Load a raster from plain text: header `nx ny x0 y0 dx dy`, then ny
/// whitespace-separated rows of nx reals (row 0 = southernmost).
pub fn load_raster(path: impl AsRef<Path>) -> Result<CovariateRaster> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::RasterFormat(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::RasterFormat("empty file".into()))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(Error::RasterFormat(format!(
            "header must be `nx ny x0 y0 dx dy`, got {} fields",
            h.len()
        )));
    }
    let nx: usize = h[0]
        .parse()
        .map_err(|_| Error::RasterFormat(format!("bad nx `{}`", h[0])))?;
    let ny: usize = h[1]
        .parse()
        .map_err(|_| Error::RasterFormat(format!("bad ny `{}`", h[1])))?;
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::RasterFormat(format!("bad number `{s}`")))
    };
    let (x0, y0, dx, dy) = (parse(h[2])?, parse(h[3])?, parse(h[4])?, parse(h[5])?);

    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            let v = parse(tok)?;
            if !v.is_finite() {
                return Err(Error::RasterFormat(format!("non-finite value `{tok}`")));
            }
            values.push(v);
        }
    }
    if values.len() != nx * ny {
        return Err(Error::RasterFormat(format!(
            "expected {} values ({nx} x {ny}), got {}",
            nx * ny,
            values.len()
        )));
    }
    CovariateRaster::new(Point::new(x0, y0), dx, dy, nx, ny, values)
}

/// Write a raster in the format accepted by [`load_raster`].
pub fn write_raster(raster: &CovariateRaster, mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "{} {} {} {} {} {}",
        raster.nx, raster.ny, raster.origin.x, raster.origin.y, raster.dx, raster.dy
    )?;
    for j in 0..raster.ny {
        let row: Vec<String> = (0..raster.nx)
            .map(|i| format!("{}", raster.value(i, j)))
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// The whelping region: a union of axis-aligned bands, one per transect.
#[derive(Debug, Clone)]
pub struct Region {
    bands: Vec<Rect>,
    area: f64,
}

impl Region {
    pub fn bands(&self) -> &[Rect] {
        &self.bands
    }

    /// Union area, overlaps counted once.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bands.iter().any(|b| b.contains(p))
    }

    pub fn bounding_box(&self) -> Rect {
        let mut it = self.bands.iter();
        let first = *it.next().expect("region has at least one band");
        it.fold(first, |acc, b| {
            Rect::new(
                acc.xmin.min(b.xmin),
                acc.ymin.min(b.ymin),
                acc.xmax.max(b.xmax),
                acc.ymax.max(b.ymax),
            )
        })
    }

    /// One `xmin ymin xmax ymax` line per band.
    pub fn write_bands(&self, mut w: impl Write) -> Result<()> {
        for b in &self.bands {
            writeln!(w, "{} {} {} {}", b.xmin, b.ymin, b.xmax, b.ymax)?;
        }
        Ok(())
    }
}

/// Build the region as one band per transect: the transect's photo extent
/// along x, widened to `half_width` on both sides of the photo centers in y.
pub fn build_region(survey: &Survey, half_width: f64) -> Result<Region> {
    if !(half_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    let mut bands = Vec::new();
    for t in survey.transects() {
        if t.photo_indices.is_empty() {
            return Err(Error::Degenerate(format!(
                "transect `{}` has no photos",
                t.id
            )));
        }
        let photos = survey.photos();
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for &i in &t.photo_indices {
            let p = &photos[i];
            xmin = xmin.min(p.center.x - p.width / 2.0);
            xmax = xmax.max(p.center.x + p.width / 2.0);
            ymin = ymin.min(p.center.y);
            ymax = ymax.max(p.center.y);
        }
        bands.push(Rect::new(xmin, ymin - half_width, xmax, ymax + half_width));
    }
    let area = union_area(&bands);
    if !(area > 0.0) {
        return Err(Error::Degenerate("region area is zero".into()));
    }
    Ok(Region { bands, area })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const VALID_SURVEY: &str = "\
id,transect_id,center_x_km,center_y_km,width_km,height_km,harp,hooded
p1,T1,0.113,0.0,0.226,0.346,2,0
p2,T1,0.339,0.0,0.226,0.346,0,1
p3,T2,0.113,5.6,0.226,0.346,5,0
p4,T2,0.339,5.6,0.226,0.346,1,2
";

    #[test]
    fn load_valid_survey() {
        let f = write_temp(VALID_SURVEY);
        let s = load_survey(f.path()).unwrap();
        assert_eq!(s.photos().len(), 4);
        assert_eq!(s.transects().len(), 2);
        assert_eq!(s.species(), &["harp".to_string(), "hooded".to_string()]);
        assert_eq!(s.total_count("harp").unwrap(), 8);
        assert_eq!(s.transects()[0].photo_indices, vec![0, 1]);
    }

    #[test]
    fn negative_count_names_row() {
        let f = write_temp(
            "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp\n\
             p1,T1,0.0,0.0,0.2,0.3,1\n\
             p2,T1,0.2,0.0,0.2,0.3,-1\n",
        );
        let err = load_survey(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "message was: {msg}");
        assert!(msg.contains("negative count"));
    }

    #[test]
    fn duplicate_id_names_id() {
        let f = write_temp(
            "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp\n\
             p1,T1,0.0,0.0,0.2,0.3,1\n\
             p1,T1,0.2,0.0,0.2,0.3,0\n",
        );
        let err = load_survey(f.path()).unwrap_err();
        assert!(err.to_string().contains("`p1`"));
    }

    #[test]
    fn missing_column_is_error() {
        let f =
            write_temp("id,transect_id,center_x_km,center_y_km,width_km,harp\np1,T1,0,0,0.2,1\n");
        let err = load_survey(f.path()).unwrap_err();
        assert!(err.to_string().contains("height_km"));
    }

    #[test]
    fn non_positive_dimension_names_row() {
        let f = write_temp(
            "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp\n\
             p1,T1,0.0,0.0,0.0,0.3,1\n",
        );
        let err = load_survey(f.path()).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn overlapping_photos_rejected() {
        let f = write_temp(
            "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp\n\
             p1,T1,0.0,0.0,0.2,0.3,1\n\
             p2,T1,0.1,0.0,0.2,0.3,0\n",
        );
        assert!(load_survey(f.path()).is_err());
        // exactly touching photos are fine
        let f = write_temp(
            "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp\n\
             p1,T1,0.0,0.0,0.2,0.3,1\n\
             p2,T1,0.2,0.0,0.2,0.3,0\n",
        );
        assert!(load_survey(f.path()).is_ok());
    }

    #[test]
    fn survey_roundtrip() {
        let f = write_temp(VALID_SURVEY);
        let s = load_survey(f.path()).unwrap();
        let mut buf = Vec::new();
        write_survey(&s, &mut buf).unwrap();
        let f2 = write_temp(std::str::from_utf8(&buf).unwrap());
        let s2 = load_survey(f2.path()).unwrap();
        assert_eq!(s2.photos().len(), s.photos().len());
        assert_eq!(s2.total_count("hooded").unwrap(), 3);
    }

    #[test]
    fn load_small_raster() {
        let f = write_temp("2 2 0 0 1 1\n0.5 0.5\n0.5 0.5\n");
        let r = load_raster(f.path()).unwrap();
        assert_eq!((r.nx, r.ny), (2, 2));
        for p in [
            Point::new(0.0, 0.0),
            Point::new(0.3, 0.8),
            Point::new(1.0, 1.0),
        ] {
            assert!((r.covariate_at(p).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn raster_wrong_value_count() {
        let f = write_temp("3 2 0 0 1 1\n0.1 0.2\n0.3 0.4\n");
        assert!(load_raster(f.path()).is_err());
    }

    #[test]
    fn raster_nan_rejected() {
        let f = write_temp("2 2 0 0 1 1\n0.1 nan\n0.3 0.4\n");
        assert!(load_raster(f.path()).is_err());
    }

    #[test]
    fn covariate_at_node_and_center() {
        // values: row j=0 -> (0,0)=0, (1,0)=0 ; row j=1 -> (0,1)=1, (1,1)=1
        let r = CovariateRaster::new(
            Point::new(0.0, 0.0),
            1.0,
            1.0,
            2,
            2,
            vec![0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(r.covariate_at(Point::new(1.0, 0.0)).unwrap(), 0.0);
        assert_eq!(r.covariate_at(Point::new(0.0, 1.0)).unwrap(), 1.0);
        assert!((r.covariate_at(Point::new(0.5, 0.5)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covariate_out_of_domain() {
        let r = CovariateRaster::new(
            Point::new(0.0, 0.0),
            1.0,
            1.0,
            2,
            2,
            vec![0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        assert!(r.covariate_at(Point::new(-0.1, 0.5)).is_err());
        // clamped lookup takes the nearest boundary value
        assert_eq!(r.covariate_at_clamped(Point::new(-5.0, 2.0)), 1.0);
    }

    #[test]
    fn covariate_continuous_across_cell_edges() {
        let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let r = CovariateRaster::new(Point::new(0.0, 0.0), 0.5, 0.5, 4, 3, vals).unwrap();
        // approach the interior node line x = 0.5 from both sides
        for k in 0..20 {
            let y = 0.05 * k as f64;
            let left = r.covariate_at(Point::new(0.5 - 1e-13, y)).unwrap();
            let right = r.covariate_at(Point::new(0.5 + 1e-13, y)).unwrap();
            assert!((left - right).abs() < 1e-12);
        }
    }

    #[test]
    fn region_single_band_dimensions() {
        // one transect spanning 10 km of photos, half width 2.778 km
        let mut photos = Vec::new();
        for i in 0..10 {
            photos.push(Photo {
                id: format!("p{i}"),
                transect_id: "T1".into(),
                center: Point::new(0.5 + i as f64, 0.0),
                width: 1.0,
                height: 0.346,
                counts: BTreeMap::from([("harp".to_string(), 0)]),
            });
        }
        let s = Survey::new(photos).unwrap();
        let r = build_region(&s, 2.778).unwrap();
        assert_eq!(r.bands().len(), 1);
        let b = r.bands()[0];
        assert!((b.width() - 10.0).abs() < 1e-12);
        assert!((b.height() - 5.556).abs() < 1e-12);
        assert!((r.area() - 55.56).abs() < 1e-10);
    }

    fn two_band_survey(y2: f64) -> Survey {
        let mut photos = Vec::new();
        for (t, y) in [("T1", 0.0), ("T2", y2)] {
            for i in 0..5 {
                photos.push(Photo {
                    id: format!("{t}p{i}"),
                    transect_id: t.to_string(),
                    center: Point::new(0.5 + i as f64, y),
                    width: 1.0,
                    height: 0.3,
                    counts: BTreeMap::from([("harp".to_string(), 0)]),
                });
            }
        }
        Survey::new(photos).unwrap()
    }

    #[test]
    fn region_disjoint_bands_add() {
        let s = two_band_survey(10.0);
        let r = build_region(&s, 1.0).unwrap();
        assert!((r.area() - 2.0 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn region_fully_overlapping_bands_count_once() {
        // two transects covering the same extent (overlap across transects is
        // legal; the non-overlap rule applies within a transect only)
        let s = two_band_survey(0.0);
        let r = build_region(&s, 1.0).unwrap();
        let single = build_region(&two_band_survey(50.0), 1.0).unwrap().area() / 2.0;
        assert!((r.area() - single).abs() < 1e-12);
    }

    #[test]
    fn region_permutation_invariant() {
        let s = two_band_survey(7.0);
        let mut photos: Vec<Photo> = s.photos().to_vec();
        photos.reverse();
        let s_rev = Survey::new(photos).unwrap();
        let a = build_region(&s, 1.3).unwrap().area();
        let b = build_region(&s_rev, 1.3).unwrap().area();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn photo_areas_within_band_area() {
        let s = two_band_survey(8.0);
        let r = build_region(&s, 0.5).unwrap();
        for (t, band) in s.transects().iter().zip(r.bands()) {
            let photo_area: f64 = t
                .photo_indices
                .iter()
                .map(|&i| s.photos()[i].area())
                .sum();
            assert!(photo_area <= band.area() + 1e-12);
        }
    }
}
