//! Comparison classifiers for ONH robustness: a random forest on 29
//! structural parameters and an autoencoder whose frozen latent code feeds a
//! small classifier, plus the Dice overlap used to judge reconstructions.

mod autoencoder;
mod dice;
mod error;
mod forest;
mod structural;

pub use autoencoder::{
    ae_classify, central_section, train_ae_classifier, train_autoencoder, AutoencoderConfig, AutoencoderModel,
    ClassifierConfig, SectionRaster, SECTION_CLASSES,
};
pub use dice::dice;
pub use error::{BaselineError, Result};
pub use forest::{
    best_split, gini, gini_gain, rf_predict, train_random_forest, DecisionTree, ForestConfig, RandomForest, Split,
    TreeNode,
};
pub use structural::{
    csv_header, extract_structural_parameters, feature_names, fit_quadric, octant, principal_curvatures,
    shape_index, shoelace_area, StructuralParameterVector, FEATURE_COUNT, OCTANTS,
};
