//! Synthetic survey generation with known ground truth: a Gaussian Markov
//! random field is sampled on a fine lattice, the log-linear intensity is
//! integrated cell by cell, and Poisson counts are drawn on a simulation
//! grid strictly finer than the photos, so photo counts are exact sums of
//! cell counts and the true regional total is available.

use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::gmrf::{assemble_precision, standard_normals, stream_rng, Hyper};
use crate::mesh::{fem_matrices, Mesh};
use crate::survey::{build_region, CovariateRaster, Photo, Region, Survey};

/// Covariate raster specification for simulated surveys.
#[derive(Debug, Clone)]
pub enum RasterSpec {
    Constant(f64),
    /// Linear ramp in x across the survey extent.
    GradientX { from: f64, to: f64 },
}

/// Ground-truth generator configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_transects: usize,
    pub transect_spacing_km: f64,
    pub photos_per_transect: usize,
    pub photo_width_km: f64,
    pub photo_height_km: f64,
    /// True intercept of the log intensity.
    pub alpha: f64,
    /// True coefficients for (q, s1, s2, sqrt(s1^2+s2^2)).
    pub beta: [f64; 4],
    /// True Matern scale; the range is sqrt(8)/kappa.
    pub kappa: f64,
    /// True marginal variance of the field (0 disables the field).
    pub sigma2: f64,
    pub raster: RasterSpec,
    pub half_width_km: f64,
    pub species: String,
    /// Simulation cells per photo dimension (>= 2).
    pub refine: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Survey layout shaped like the motivating aerial survey: parallel
    /// transects 5.6 km apart, photo footprints 0.226 x 0.346 km, region
    /// bands of half-width 2.778 km.
    pub fn paper_like(n_transects: usize, photos_per_transect: usize, seed: u64) -> Self {
        SimConfig {
            n_transects,
            transect_spacing_km: 5.6,
            photos_per_transect,
            photo_width_km: 0.226,
            photo_height_km: 0.346,
            alpha: 2.4,
            beta: [1.5, 0.0, 0.0, 0.0],
            kappa: 8f64.sqrt() / 3.0, // range 3 km
            sigma2: 0.4,
            raster: RasterSpec::GradientX { from: 0.0, to: 1.0 },
            half_width_km: 2.778,
            species: "sim".into(),
            refine: 4,
            seed,
        }
    }
}

/// One simulated cell of the fine grid (center point and drawn count).
#[derive(Debug, Clone, Copy)]
pub struct SimCell {
    pub center: Point,
    pub count: u64,
    /// Photo index when the cell lies inside a photo footprint.
    pub photo: Option<usize>,
}

/// Ground truth bundle for one simulated survey.
pub struct SimResult {
    pub survey: Survey,
    pub raster: CovariateRaster,
    pub region: Region,
    pub true_total: u64,
    /// Field values on the simulation lattice (empty for sigma2 = 0).
    pub true_field: Option<CovariateRaster>,
    pub true_hyper: Option<Hyper>,
    /// Fine simulation cells (center-in-region only).
    pub cells: Vec<SimCell>,
}

fn build_raster(spec: &RasterSpec, bbox: Rect) -> Result<CovariateRaster> {
    let bbox = bbox.expand(0.25 * bbox.diagonal());
    match spec {
        RasterSpec::Constant(v) => CovariateRaster::new(
            Point::new(bbox.xmin, bbox.ymin),
            bbox.width(),
            bbox.height(),
            2,
            2,
            vec![*v; 4],
        ),
        RasterSpec::GradientX { from, to } => {
            let nx = 33;
            let ny = 9;
            let dx = bbox.width() / (nx - 1) as f64;
            let dy = bbox.height() / (ny - 1) as f64;
            let mut values = Vec::with_capacity(nx * ny);
            for _j in 0..ny {
                for i in 0..nx {
                    values.push(from + (to - from) * i as f64 / (nx - 1) as f64);
                }
            }
            CovariateRaster::new(Point::new(bbox.xmin, bbox.ymin), dx, dy, nx, ny, values)
        }
    }
}

/// Regular right-triangle lattice mesh over a rectangle.
fn lattice_mesh(bbox: Rect, spacing: f64) -> Mesh {
    let nx = (bbox.width() / spacing).ceil() as usize + 1;
    let ny = (bbox.height() / spacing).ceil() as usize + 1;
    let dx = bbox.width() / (nx - 1) as f64;
    let dy = bbox.height() / (ny - 1) as f64;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(Point::new(
                bbox.xmin + i as f64 * dx,
                bbox.ymin + j as f64 * dy,
            ));
        }
    }
    let idx = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh {
        nodes,
        triangles,
        hull: bbox,
        photo_node: Default::default(),
    }
}

/// Sample the true field on a lattice covering the region with margin.
fn sample_field(
    region_bbox: Rect,
    hyper: &Hyper,
    seed: u64,
) -> Result<(CovariateRaster, Vec<f64>)> {
    let range = hyper.range();
    let margin = (2.0 * range).max(0.15 * region_bbox.diagonal());
    let bbox = region_bbox.expand(margin);
    let spacing = (range / 5.0).clamp(0.2, 2.5);
    let mesh = lattice_mesh(bbox, spacing);
    let fem = fem_matrices(&mesh)?;
    let q = assemble_precision(&fem, hyper)?;
    let factor = q.factorize()?;
    let mut rng = stream_rng(seed, 0);
    let u = standard_normals(&mut rng, mesh.n_nodes());
    let f = factor.sample_zero_mean(&u);

    // the lattice doubles as a raster of node values for fast lookup
    let nx = ((bbox.width() / spacing).ceil() as usize) + 1;
    let ny = ((bbox.height() / spacing).ceil() as usize) + 1;
    let dx = bbox.width() / (nx - 1) as f64;
    let dy = bbox.height() / (ny - 1) as f64;
    let raster = CovariateRaster::new(Point::new(bbox.xmin, bbox.ymin), dx, dy, nx, ny, f.clone())?;
    Ok((raster, f))
}

/// Generate a synthetic survey with its true total.
pub fn simulate_lgcp_survey(cfg: &SimConfig) -> Result<SimResult> {
    if cfg.n_transects == 0 || cfg.photos_per_transect == 0 {
        return Err(Error::InvalidInput("empty survey layout".into()));
    }
    if !(cfg.photo_width_km > 0.0) || !(cfg.photo_height_km > 0.0) {
        return Err(Error::InvalidInput("photo dimensions must be positive".into()));
    }
    if cfg.refine < 2 {
        return Err(Error::InvalidInput(
            "simulation grid must be at least 2x finer than photos".into(),
        ));
    }
    if cfg.sigma2 < 0.0 {
        return Err(Error::InvalidInput("sigma2 must be nonnegative".into()));
    }
    if cfg.n_transects > 1 && cfg.transect_spacing_km < 2.0 * cfg.half_width_km - 1e-9 {
        return Err(Error::InvalidInput(
            "transect spacing below twice the half-width would overlap the bands".into(),
        ));
    }

    let (w, h) = (cfg.photo_width_km, cfg.photo_height_km);
    let mut photos = Vec::with_capacity(cfg.n_transects * cfg.photos_per_transect);
    for t in 0..cfg.n_transects {
        let y = t as f64 * cfg.transect_spacing_km;
        for i in 0..cfg.photos_per_transect {
            photos.push(Photo {
                id: format!("t{t}p{i}"),
                transect_id: format!("T{t}"),
                center: Point::new((i as f64 + 0.5) * w, y),
                width: w,
                height: h,
                counts: [(cfg.species.clone(), 0u64)].into_iter().collect(),
            });
        }
    }
    let survey = Survey::new(photos)?;
    let region = build_region(&survey, cfg.half_width_km)?;
    let bbox = region.bounding_box();
    let raster = build_raster(&cfg.raster, bbox)?;

    let (field_raster, hyper) = if cfg.sigma2 > 0.0 {
        let hyper = Hyper::from_kappa_sigma2(cfg.kappa, cfg.sigma2);
        let (r, _) = sample_field(bbox, &hyper, cfg.seed)?;
        (Some(r), Some(hyper))
    } else {
        (None, None)
    };

    // fine cells per band; bands are disjoint by the spacing precondition
    let (cw, ch) = (w / cfg.refine as f64, h / cfg.refine as f64);
    let cell_area = cw * ch;
    let n_cols = cfg.photos_per_transect * cfg.refine;
    let n_extra = ((cfg.half_width_km - h / 2.0) / ch).ceil().max(0.0) as usize;
    let n_rows = cfg.refine + 2 * n_extra;

    let mut rng = stream_rng(cfg.seed, 1);
    let mut cells = Vec::new();
    let mut photo_counts = vec![0u64; survey.photos().len()];
    let mut true_total: u64 = 0;
    for t in 0..cfg.n_transects {
        let yk = t as f64 * cfg.transect_spacing_km;
        let y_bot = yk - h / 2.0 - n_extra as f64 * ch;
        for r in 0..n_rows {
            let yc = y_bot + (r as f64 + 0.5) * ch;
            let in_photo_strip = (yc - yk).abs() < h / 2.0;
            for c in 0..n_cols {
                let xc = (c as f64 + 0.5) * cw;
                let center = Point::new(xc, yc);
                if !region.contains(center) {
                    continue;
                }
                let q = raster.covariate_at_clamped(center);
                let mut eta = cfg.alpha
                    + cfg.beta[0] * q
                    + cfg.beta[1] * center.x
                    + cfg.beta[2] * center.y
                    + cfg.beta[3] * center.norm();
                if let Some(f) = &field_raster {
                    eta += f.covariate_at_clamped(center);
                }
                let mean = eta.exp() * cell_area;
                let count = if mean > 0.0 {
                    rand_distr::Poisson::new(mean)
                        .map_err(|_| Error::Diverged(format!("invalid Poisson mean {mean}")))?
                        .sample(&mut rng) as u64
                } else {
                    0
                };
                let photo = if in_photo_strip {
                    let pi = (c / cfg.refine).min(cfg.photos_per_transect - 1);
                    Some(t * cfg.photos_per_transect + pi)
                } else {
                    None
                };
                if let Some(p) = photo {
                    photo_counts[p] += count;
                }
                true_total += count;
                cells.push(SimCell {
                    center,
                    count,
                    photo,
                });
            }
        }
    }

    // write the drawn counts back into the survey photos
    let photos: Vec<Photo> = survey
        .photos()
        .iter()
        .zip(&photo_counts)
        .map(|(p, &c)| {
            let mut p = p.clone();
            p.counts.insert(cfg.species.clone(), c);
            p
        })
        .collect();
    let survey = Survey::new(photos)?;

    Ok(SimResult {
        survey,
        raster,
        region,
        true_total,
        true_field: field_raster,
        true_hyper: hyper,
        cells,
    })
}
