//! Offline replay comparing the controller with and without oracle label
//! corrections.

use crate::error::{HarnessError, Result};
use neuroarm_core::acquisition::Recording;
use neuroarm_core::control::{label_action, map_prediction, ArmState, Controller, ControllerConfig};
use neuroarm_core::csp::{WindowSpec, Windower};
use neuroarm_core::ClassLabel;
use neuroarm_models::Ensemble;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitlTick {
    pub tick: u64,
    pub t: f64,
    pub truth: ClassLabel,
    pub predicted: ClassLabel,
    /// The oracle replaced a wrong prediction with the true label.
    pub corrected: bool,
    pub acc_plain: f64,
    pub acc_hitl: f64,
    pub theta_plain: [f64; 3],
    pub theta_hitl: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitlExperimentResult {
    pub p_correct: f64,
    pub ticks: Vec<HitlTick>,
}

impl HitlExperimentResult {
    pub fn plain_series(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.acc_plain).collect()
    }

    pub fn hitl_series(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.acc_hitl).collect()
    }

    pub fn final_accuracy(&self) -> (f64, f64) {
        self.ticks.last().map_or((0.0, 0.0), |t| (t.acc_plain, t.acc_hitl))
    }

    pub fn n_corrected(&self) -> usize {
        self.ticks.iter().filter(|t| t.corrected).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "tick,t,truth,predicted,corrected,acc_plain,acc_hitl,plain_base,plain_elbow,plain_fingers,hitl_base,hitl_elbow,hitl_fingers\n",
        );
        for r in &self.ticks {
            let [pb, pe, pf] = r.theta_plain;
            let [hb, he, hf] = r.theta_hitl;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{pb},{pe},{pf},{hb},{he},{hf}",
                r.tick, r.t, r.truth, r.predicted, r.corrected as u8, r.acc_plain, r.acc_hitl
            )
            .unwrap();
        }
        s
    }
}

/// Classifies every sliding window of `rec` and drives two controllers: one
/// from the predictions alone and one where each wrong prediction is
/// replaced by the true label with probability `p_correct`. The truth of a
/// window is the label of its newest sample.
pub fn hitl_experiment(
    ens: &Ensemble,
    rec: &Recording,
    window: WindowSpec,
    control: ControllerConfig,
    p_correct: f64,
    seed: u64,
) -> Result<HitlExperimentResult> {
    if !(0.0..=1.0).contains(&p_correct) {
        return Err(HarnessError::Config(format!("p_correct must lie in [0, 1], got {p_correct}")));
    }
    if window.window_len != ens.config.window_len {
        return Err(HarnessError::Config(format!(
            "window.window_len is {}, bundle was trained with {}",
            window.window_len, ens.config.window_len
        )));
    }
    let ch = ens.config.n_channels;
    if rec.n_channels() != ch {
        return Err(HarnessError::Runtime(format!("recording has {} channels, bundle expects {ch}", rec.n_channels())));
    }
    let fs = rec.fs();
    let mut front = ens.config.front_end.stream(ch)?;
    let mut windower = Windower::<f64>::new(ch, window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4171_0002);
    let mut plain = Controller::new(ArmState::default(), control);
    let mut hitl = Controller::new(ArmState::default(), control);
    let (mut right_plain, mut right_hitl) = (0usize, 0usize);
    let mut ticks = Vec::new();
    let n = rec.n_samples();
    let mut c0 = 0;
    while c0 < n {
        let len = window.step.min(n - c0);
        let block = rec.samples.columns(c0, len).into_owned();
        c0 += len;
        for sw in windower.push(&front.process(&block)?, None)? {
            let p = ens.predict(&sw.samples)?;
            let truth = rec.labels[(sw.end - 1) as usize];
            let wrong = p.label != truth;
            let corrected = wrong && rng.gen::<f64>() < p_correct;
            let t = sw.end as f64 / fs;
            let a_plain = map_prediction(&p.p_final);
            let a_hitl = if corrected { label_action(truth) } else { a_plain };
            plain.tick(a_plain, t);
            hitl.tick(a_hitl, t);
            right_plain += !wrong as usize;
            right_hitl += (!wrong || corrected) as usize;
            let k = ticks.len() as u64;
            ticks.push(HitlTick {
                tick: k,
                t,
                truth,
                predicted: p.label,
                corrected,
                acc_plain: right_plain as f64 / (k + 1) as f64,
                acc_hitl: right_hitl as f64 / (k + 1) as f64,
                theta_plain: plain.state.theta,
                theta_hitl: hitl.state.theta,
            });
        }
    }
    Ok(HitlExperimentResult { p_correct, ticks })
}
