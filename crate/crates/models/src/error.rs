use neuroarm_core::csp::CspError;
use neuroarm_core::dsp::DspError;
use neuroarm_core::ica::IcaError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least 2 classes in the training labels, got {0}")]
    TooFewClasses(usize),
    #[error("empty training set")]
    Empty,
    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_finite:?}, gradient norm {grad_norm})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_finite: Option<f64>, grad_norm: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("meta-classifier rows overlap base training rows ({0} shared indices)")]
    FoldLeakage(usize),
    #[error("dataset too small: {0}")]
    Dataset(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("bundle version {found} is not supported (expected {expected})")]
    BundleVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Ica(#[from] IcaError),
    #[error(transparent)]
    Csp(#[from] CspError),
}

/// Checks that every window has the same shape and every label is in range.
pub(crate) fn check_batch(
    windows: &[nalgebra::DMatrix<f64>],
    labels: &[usize],
    n_classes: usize,
) -> Result<(usize, usize), ModelError> {
    let first = windows.first().ok_or(ModelError::Empty)?;
    if windows.len() != labels.len() {
        return Err(ModelError::Shape(format!("{} windows but {} labels", windows.len(), labels.len())));
    }
    let shape = first.shape();
    if let Some(w) = windows.iter().find(|w| w.shape() != shape) {
        return Err(ModelError::Shape(format!("window {:?} differs from {:?}", w.shape(), shape)));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::Label { label, n_classes });
    }
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    let present = seen.iter().filter(|&&s| s).count();
    if present < 2 {
        return Err(ModelError::TooFewClasses(present));
    }
    Ok(shape)
}
