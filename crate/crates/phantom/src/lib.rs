//! Synthetic optic-nerve-head phantoms.
//!
//! A phantom is an analytic layered anatomy (retinal layers over an RPE with
//! a circular opening, choroid, sclera with a conical canal, and a
//! spherical-cap lamina cribrosa under a cupped inner limiting membrane),
//! placed in the scan with a small tilt and offset and rasterised into a
//! label volume. A pressure load is modelled as posterior bowing about the
//! canal axis whose amplitude grows with a latent fragility score; the
//! score is coupled to canal radius and LC depth so the geometry carries
//! the class signal.

mod anatomy;
mod error;
mod generate;
mod grid;
pub mod io;
mod params;
mod volume;

pub use anatomy::Perturbation;
pub use error::{PhantomError, Result};
pub use generate::{
    generate_cohort, generate_displacement, generate_member, generate_phantom, sample_cohort, CohortConfig,
    CohortEntry, CohortMember, BMO_POINT_COUNT,
};
pub use grid::VolumeGrid;
pub use params::{
    CouplingConfig, GroundTruth, LayerThickness, ParamRanges, PhantomParams, Range, ScanPose, AMPLITUDE_MAX_MM,
};
pub use volume::{DisplacementField, SegmentedVolume};
