/// Channel order for the 16-channel montage. The first six sites are the ones
/// the headset layout names explicitly; the rest complete a standard 10-20
/// set covering frontal, temporal, parietal and occipital regions.
pub const MONTAGE_10_20: [&str; 16] = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T7", "T8", "Cz", "Pz",
];

// Azimuthal projection on a unit head: x grows to the right, y to the nose.
const POSITIONS: [(f64, f64); 16] = [
    (-0.31, 0.95),
    (0.31, 0.95),
    (-0.45, 0.55),
    (0.45, 0.55),
    (-0.5, 0.0),
    (0.5, 0.0),
    (-0.45, -0.55),
    (0.45, -0.55),
    (-0.31, -0.95),
    (0.31, -0.95),
    (-0.81, 0.59),
    (0.81, 0.59),
    (-1.0, 0.0),
    (1.0, 0.0),
    (0.0, 0.0),
    (0.0, -0.5),
];

pub fn channel_name(i: usize) -> String {
    MONTAGE_10_20
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("X{}", i + 1))
}

pub fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(channel_name).collect()
}

/// Scalp position of channel `i`; channels past the montage sit on a ring
/// just outside the head.
pub(crate) fn position(i: usize, n: usize) -> (f64, f64) {
    POSITIONS.get(i).copied().unwrap_or_else(|| {
        let k = (i - POSITIONS.len()) as f64;
        let m = (n - POSITIONS.len()).max(1) as f64;
        let a = 2.0 * std::f64::consts::PI * k / m;
        (1.1 * a.cos(), 1.1 * a.sin())
    })
}

/// Indices of the channels that play a role in the signal model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelRoles {
    /// Fp1/Fp2 (blink pickup).
    pub frontal: Vec<usize>,
    /// Left motor cortex (ERD during RIGHT imagery).
    pub c3: usize,
    /// Right motor cortex (ERD during LEFT imagery).
    pub c4: usize,
    /// T7/T8 (EMG pickup).
    pub emg: Vec<usize>,
}

impl ChannelRoles {
    pub fn for_count(n: usize) -> Self {
        let find = |name: &str| MONTAGE_10_20.iter().position(|&s| s == name).filter(|&i| i < n);
        let frontal = match (find("Fp1"), find("Fp2")) {
            (Some(a), Some(b)) => vec![a, b],
            _ => vec![0],
        };
        let c3 = find("C3").unwrap_or(n.saturating_sub(2));
        let c4 = find("C4").unwrap_or(n - 1);
        let emg = match (find("T7"), find("T8")) {
            (Some(a), Some(b)) => vec![a, b],
            _ => vec![n - 1],
        };
        Self { frontal, c3, c4, emg }
    }
}
