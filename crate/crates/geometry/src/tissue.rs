use serde::{Deserialize, Serialize};

/// Segmentation classes, numbered as in the voxel label files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    /// Retinal nerve fibre layer plus prelaminar tissue.
    RnflPlt = 1,
    GclIpl = 2,
    /// All other retinal layers.
    Orl = 3,
    RpeBm = 4,
    Choroid = 5,
    Sclera = 6,
    /// Lamina cribrosa.
    Lc = 7,
}

impl Tissue {
    pub const ALL: [Tissue; 8] = [
        Tissue::Background,
        Tissue::RnflPlt,
        Tissue::GclIpl,
        Tissue::Orl,
        Tissue::RpeBm,
        Tissue::Choroid,
        Tissue::Sclera,
        Tissue::Lc,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Tissue> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Background => "background",
            Tissue::RnflPlt => "rnfl_plt",
            Tissue::GclIpl => "gcl_ipl",
            Tissue::Orl => "orl",
            Tissue::RpeBm => "rpe_bm",
            Tissue::Choroid => "choroid",
            Tissue::Sclera => "sclera",
            Tissue::Lc => "lc",
        }
    }
}
