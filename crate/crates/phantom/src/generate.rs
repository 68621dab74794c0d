use onh_geometry::{BoundaryRole, BoundarySurface, Point, Tissue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anatomy::{Anatomy, Perturbation};
use crate::error::{invalid, PhantomError, Result};
use crate::grid::VolumeGrid;
use crate::params::{CouplingConfig, LayerThickness, ParamRanges, PhantomParams, Range, ScanPose};
use crate::volume::{DisplacementField, SegmentedVolume};

pub const BMO_POINT_COUNT: usize = 48;

const STREAM_PARAMS: u64 = 0;
const STREAM_PHANTOM: u64 = 1;
const STREAM_LOAD: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Rasterises the anatomy and samples its boundary surfaces.
///
/// Surfaces come back in tissue order, anterior before posterior, for every
/// tissue from RNFL+PLT to LC. Points are the exact boundaries sampled on a
/// lattice with the in-plane voxel spacing, expressed in scan coordinates,
/// keeping only points within one voxel diagonal of a voxel of their tissue.
pub fn generate_phantom(params: &PhantomParams, seed: u64) -> Result<(SegmentedVolume, Vec<BoundarySurface>)> {
    let pert = Perturbation::draw(&mut rng(seed, STREAM_PHANTOM));
    let anatomy = Anatomy::new(params, pert)?;
    let grid = params.grid;
    let analytic = boundary_surfaces(&anatomy, &grid)?;

    let mut labels = Vec::with_capacity(grid.len());
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            for k in 0..grid.dims[2] {
                labels.push(anatomy.label(&anatomy.to_anatomical(&grid.position(i, j, k))));
            }
        }
    }
    let bmo_points = (0..BMO_POINT_COUNT)
        .map(|n| {
            let t = n as f64 / BMO_POINT_COUNT as f64 * std::f64::consts::TAU;
            anatomy.to_scan(&Point::new(anatomy.r * t.cos(), anatomy.r * t.sin(), 0.0))
        })
        .collect();
    let volume = SegmentedVolume::new(grid, labels, bmo_points)?;
    let mut surfaces = Vec::with_capacity(analytic.len());
    for s in analytic {
        let pts: Vec<Point> = s.points.into_iter().filter(|p| resolved(&volume, p, s.tissue.id())).collect();
        if pts.len() < 3 {
            return Err(PhantomError::Impossible(format!(
                "{} {:?} boundary is not resolved by the raster",
                s.tissue.name(),
                s.role
            )));
        }
        surfaces.push(BoundarySurface::new(s.tissue, s.role, pts)?);
    }
    Ok((volume, surfaces))
}

/// Whether a voxel labelled `label` lies within one voxel diagonal of `p`.
/// Drops boundary slivers thinner than the raster can show.
fn resolved(v: &SegmentedVolume, p: &Point, label: u8) -> bool {
    let g = &v.grid;
    let diag = g.voxel_diagonal();
    let c = [
        p.x / g.spacing_mm[0] + (g.dims[0] - 1) as f64 / 2.0,
        p.y / g.spacing_mm[1] + (g.dims[1] - 1) as f64 / 2.0,
        -p.z / g.spacing_mm[2],
    ];
    let range = |a: usize| {
        let lo = (c[a].floor() as i64 - 1).max(0) as usize;
        let hi = ((c[a].ceil() as i64 + 1).max(0) as usize).min(g.dims[a] - 1);
        lo..=hi
    };
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                if v.label(i, j, k) == label && (g.position(i, j, k) - p).norm() <= diag {
                    return true;
                }
            }
        }
    }
    false
}

fn boundary_surfaces(a: &Anatomy, grid: &VolumeGrid) -> Result<Vec<BoundarySurface>> {
    let (hx, hy) = grid.half_extent_xy();
    let (sx, sy) = (grid.spacing_mm[0], grid.spacing_mm[1]);
    let margin = 0.3;
    let mx = ((hx + margin) / sx).ceil() as i64;
    let my = ((hy + margin) / sy).ceil() as i64;
    let bottom = grid.bottom_z();
    let mut out = Vec::with_capacity(14);
    for tissue in Tissue::ALL.into_iter().skip(1) {
        for role in [BoundaryRole::Anterior, BoundaryRole::Posterior] {
            let mut pts = Vec::new();
            for u in -mx..=mx {
                for v in -my..=my {
                    let (x, y) = (u as f64 * sx, v as f64 * sy);
                    let Some(z) = a.boundary_height(tissue, role, x.hypot(y), y.atan2(x)) else {
                        continue;
                    };
                    let p = a.to_scan(&Point::new(x, y, z));
                    if p.x.abs() > hx || p.y.abs() > hy {
                        continue;
                    }
                    if p.z > 0.0 || p.z < bottom {
                        return Err(PhantomError::Impossible(format!(
                            "{} {:?} boundary leaves the scan depth range at z = {:.3} mm",
                            tissue.name(),
                            role,
                            p.z
                        )));
                    }
                    pts.push(p);
                }
            }
            if pts.len() < 3 {
                return Err(PhantomError::Impossible(format!(
                    "{} {:?} boundary has no extent inside the scan",
                    tissue.name(),
                    role
                )));
            }
            out.push(BoundarySurface::new(tissue, role, pts)?);
        }
    }
    Ok(out)
}

/// Pressure-load displacement: posterior bowing about the canal axis plus a
/// small seeded rigid translation. The mask marks every LC voxel.
pub fn generate_displacement(
    volume: &SegmentedVolume,
    params: &PhantomParams,
    coupling: &CouplingConfig,
    seed: u64,
) -> Result<DisplacementField> {
    coupling.validate()?;
    if volume.grid != params.grid {
        return Err(invalid("grid", "volume grid differs from the parameter grid"));
    }
    let anatomy = Anatomy::new(params, Perturbation::default())?;
    let amp = coupling.amplitude_mm(params);
    let w = coupling.width_factor * params.bmo_radius_mm;
    let mut r = rng(seed, STREAM_LOAD);
    let t = coupling.translation_max_mm;
    let translation = if t > 0.0 {
        [r.random_range(-t..=t), r.random_range(-t..=t), r.random_range(-t..=t)]
    } else {
        [0.0; 3]
    };
    let dir = anatomy.rotation * Point::new(0.0, 0.0, -1.0);
    let (t0, t1) = (coupling.taper_start_mm, coupling.taper_end_mm);
    let taper = |rho: f64| {
        if rho <= t0 {
            1.0
        } else if rho >= t1 {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (rho - t0) / (t1 - t0)).cos())
        }
    };
    let grid = volume.grid;
    let mut u = Vec::with_capacity(grid.len());
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            for k in 0..grid.dims[2] {
                let q = anatomy.to_anatomical(&grid.position(i, j, k));
                let rho = q.x.hypot(q.y);
                let m = amp * (-rho * rho / (2.0 * w * w)).exp() * taper(rho);
                u.push([
                    dir.x * m + translation[0],
                    dir.y * m + translation[1],
                    dir.z * m + translation[2],
                ]);
            }
        }
    }
    let mask = volume.labels.iter().map(|&l| l == Tissue::Lc.id()).collect();
    DisplacementField::new(grid, u, mask, translation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub n: usize,
    pub target_fragile_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub ranges: ParamRanges,
    #[serde(default = "VolumeGrid::desk")]
    pub grid: VolumeGrid,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n: 336,
            target_fragile_fraction: 0.5,
            seed: 0,
            ranges: ParamRanges::default(),
            grid: VolumeGrid::desk(),
            coupling: CouplingConfig::default(),
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("cohort of {} needs at least 2 members", self.n)));
        }
        if !(0.0..=1.0).contains(&self.target_fragile_fraction) {
            return Err(invalid("target_fragile_fraction", "must lie in [0, 1]"));
        }
        self.ranges.validate()?;
        self.grid.validate()?;
        self.coupling.validate()
    }
}

/// Parameters and seed of one cohort member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub id: usize,
    pub seed: u64,
    /// Geometry score the latent fragility was derived from.
    pub score: f64,
    pub params: PhantomParams,
}

pub struct CohortMember {
    pub entry: CohortEntry,
    pub volume: SegmentedVolume,
    pub surfaces: Vec<BoundarySurface>,
    pub field: DisplacementField,
}

fn draw(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    if r.max > r.min {
        rng.random_range(r.min..=r.max)
    } else {
        r.min
    }
}

fn standardise(v: f64, r: Range) -> f64 {
    let s = r.std();
    if s > 0.0 {
        (v - r.mid()) / s
    } else {
        0.0
    }
}

fn draw_params(rng: &mut ChaCha8Rng, ranges: &ParamRanges, grid: VolumeGrid) -> PhantomParams {
    PhantomParams {
        bmo_radius_mm: draw(rng, ranges.bmo_radius_mm),
        cup_depth_mm: draw(rng, ranges.cup_depth_mm),
        lc_depth_mm: draw(rng, ranges.lc_depth_mm),
        lc_curvature_radius_mm: draw(rng, ranges.lc_curvature_radius_mm),
        thickness: LayerThickness {
            rnfl_mm: draw(rng, ranges.rnfl_mm),
            gcl_ipl_mm: draw(rng, ranges.gcl_ipl_mm),
            orl_mm: draw(rng, ranges.orl_mm),
            rpe_mm: draw(rng, ranges.rpe_mm),
            choroid_mm: draw(rng, ranges.choroid_mm),
            sclera_mm: draw(rng, ranges.sclera_mm),
            lc_mm: draw(rng, ranges.lc_thickness_mm),
        },
        canal_wall_angle_deg: draw(rng, ranges.canal_wall_angle_deg),
        fragility: 0.0,
        pose: ScanPose {
            tilt_x_deg: draw(rng, ranges.tilt_deg),
            tilt_y_deg: draw(rng, ranges.tilt_deg),
            offset_x_mm: draw(rng, ranges.offset_mm),
            offset_y_mm: draw(rng, ranges.offset_mm),
            bmo_depth_mm: draw(rng, ranges.bmo_depth_mm),
        },
        grid,
    }
}

/// Draws member parameters. Member `i` uses its own generator seeded with
/// `seed + i`; draws that violate the anatomy constraints are redrawn from
/// the same generator.
pub fn sample_cohort(cfg: &CohortConfig) -> Result<Vec<CohortEntry>> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.coupling.score_noise).map_err(|e| invalid("coupling.score_noise", e.to_string()))?;
    let mut entries = Vec::with_capacity(cfg.n);
    for id in 0..cfg.n {
        let seed = cfg.seed.wrapping_add(id as u64);
        let mut r = rng(seed, STREAM_PARAMS);
        let mut attempt = 0;
        let params = loop {
            let p = draw_params(&mut r, &cfg.ranges, cfg.grid);
            if Anatomy::new(&p, Perturbation::default()).is_ok() {
                break p;
            }
            attempt += 1;
            if attempt == 100 {
                return Err(PhantomError::Impossible(format!(
                    "member {id}: no valid anatomy in 100 draws from the configured ranges"
                )));
            }
        };
        let score = standardise(params.bmo_radius_mm, cfg.ranges.bmo_radius_mm)
            + standardise(params.lc_depth_mm, cfg.ranges.lc_depth_mm)
            + noise.sample(&mut r);
        entries.push(CohortEntry {
            id,
            seed,
            score,
            params,
        });
    }

    let mut sorted: Vec<f64> = entries.iter().map(|e| e.score).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let robust = n - ((cfg.target_fragile_fraction * n as f64).round() as usize).min(n);
    let cut = match robust {
        0 => sorted[0] - 1.0,
        m if m == n => sorted[n - 1] + 1.0,
        m => 0.5 * (sorted[m - 1] + sorted[m]),
    };
    for e in &mut entries {
        e.params.fragility = 1.0 / (1.0 + (-cfg.coupling.logistic_slope * (e.score - cut)).exp());
    }
    Ok(entries)
}

pub fn generate_member(entry: &CohortEntry, coupling: &CouplingConfig) -> Result<CohortMember> {
    let (volume, surfaces) = generate_phantom(&entry.params, entry.seed)?;
    let field = generate_displacement(&volume, &entry.params, coupling, entry.seed)?;
    Ok(CohortMember {
        entry: entry.clone(),
        volume,
        surfaces,
        field,
    })
}

/// Whole cohort in memory. Large cohorts should stream
/// [`sample_cohort`] through [`generate_member`] instead.
pub fn generate_cohort(cfg: &CohortConfig) -> Result<Vec<CohortMember>> {
    sample_cohort(cfg)?
        .iter()
        .map(|e| generate_member(e, &cfg.coupling))
        .collect()
}
