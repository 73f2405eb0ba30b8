//! Feature vector fed to the forest: per-channel statistics followed by CSP
//! normalized log-variances.

use crate::ModelError;
use nalgebra::DMatrix;
use neuroarm_core::csp::{csp_features, stat_features, CspModel};

pub fn forest_features(csp: &CspModel, window: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
    let mut f = stat_features(window);
    f.extend(csp_features(csp, window)?);
    Ok(f)
}

pub fn feature_dim(csp: &CspModel) -> usize {
    5 * csp.n_channels() + csp.n_filters()
}
