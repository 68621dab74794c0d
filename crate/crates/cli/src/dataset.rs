use anyhow::{Context, Result};
use onh_baselines::{central_section, extract_structural_parameters, SectionRaster, StructuralParameterVector};
use onh_geometry::{canonical_transform, canonicalize, extract_point_cloud, fit_bmo_plane, OnhPointCloud};
use onh_phantom::{generate_member, generate_phantom, sample_cohort, CohortConfig, CohortEntry, CohortMember};
use onh_strain::{label, lc_average_effective_strain, RobustnessLabel};
use rayon::prelude::*;

/// Everything the classifiers need from one cohort member. Volumes and
/// displacement fields are dropped once these are measured.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub entry: CohortEntry,
    /// Canonical frame.
    pub cloud: OnhPointCloud,
    pub structural: StructuralParameterVector,
    pub label: RobustnessLabel,
    pub section: Vec<u8>,
    /// Mean distance of the canonical BMO points from the canal axis.
    pub r_bmo: f64,
}

impl Sample {
    pub fn class(&self) -> usize {
        self.label.label.class_index()
    }
}

pub fn member_id(index: usize) -> String {
    format!("onh_{index:04}")
}

pub fn measure(
    member: &CohortMember,
    points: usize,
    threshold: f64,
    raster: SectionRaster,
) -> Result<Sample> {
    let id = member_id(member.entry.id);
    let plane = fit_bmo_plane(&member.volume.bmo_points).with_context(|| format!("{id}: BMO plane"))?;
    let raw = extract_point_cloud(&member.surfaces, points, member.entry.seed)
        .with_context(|| format!("{id}: point cloud"))?;
    let cloud = canonicalize(&raw, &plane);
    let structural = extract_structural_parameters(&member.volume, &member.surfaces, &plane)
        .with_context(|| format!("{id}: structural parameters"))?;
    let e = lc_average_effective_strain(&member.field).with_context(|| format!("{id}: LC strain"))?;
    let label = label(e, threshold)?;
    let section = central_section(&member.volume, raster)?;
    let t = canonical_transform(&plane);
    let bmo = &member.volume.bmo_points;
    let r_bmo = bmo.iter().map(|p| t.apply(p)).map(|p| p.x.hypot(p.y)).sum::<f64>() / bmo.len() as f64;
    Ok(Sample {
        id,
        entry: member.entry.clone(),
        cloud,
        structural,
        label,
        section,
        r_bmo,
    })
}

/// Generates and measures the cohort on the current rayon pool. Each member
/// depends only on its own seed, so the result is independent of the pool
/// size.
pub fn build_dataset(cohort: &CohortConfig, points: usize, threshold: f64, raster: SectionRaster) -> Result<Vec<Sample>> {
    let entries = sample_cohort(cohort).context("sampling cohort")?;
    entries
        .par_iter()
        .map(|e| {
            let member = generate_member(e, &cohort.coupling).with_context(|| format!("generating {}", member_id(e.id)))?;
            measure(&member, points, threshold, raster)
        })
        .collect()
}

/// Central sections of an unlabeled cohort, for autoencoder pretraining.
pub fn pretraining_sections(cohort: &CohortConfig, raster: SectionRaster) -> Result<Vec<Vec<u8>>> {
    let entries = sample_cohort(cohort).context("sampling pretraining cohort")?;
    entries
        .par_iter()
        .map(|e| {
            let (volume, _) = generate_phantom(&e.params, e.seed)?;
            Ok(central_section(&volume, raster)?)
        })
        .collect()
}

pub fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building thread pool")?;
    Ok(pool.install(f))
}
