//! Signal path and control law for an EEG-driven prosthetic arm.
//!
//! The crate covers everything upstream of classification plus the actuator
//! side:
//!
//! - [`acquisition`]: synthetic labeled EEG sessions, programmable gain and
//!   the on-disk recording format.
//! - [`transport`]: a timestamped outlet/inlet streaming layer with drop and
//!   rate accounting.
//! - [`dsp`]: Butterworth/notch biquad cascades and Welch PSD.
//! - [`ica`]: whitening, FastICA, component scoring and artifact rejection.
//! - [`csp`]: epoching, common spatial patterns, feature extraction and the
//!   sliding-window scheduler.
//! - [`control`]: the human-in-the-loop control law, voice mode switching and
//!   the serial command protocol.

pub mod acquisition;
pub mod clock;
pub mod control;
pub mod csp;
pub mod dsp;
pub mod ica;
pub mod labels;
pub mod linalg;
pub mod transport;

pub use labels::ClassLabel;
