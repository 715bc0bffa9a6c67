//! Scalar `x = x + 1` demonstration of how the Kalman weights react to
//! Gaussian and then impulsive measurement noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_gaussian::{
    information_weights, kf_predict, kf_update_with_r, GaussianBelief, StateSpaceModel,
};
use crate::noise_lab::{sample_gaussian, RandomStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDemoSpec {
    pub gauss_steps: usize,
    pub impulse_steps: usize,
    /// Standard deviation of the Gaussian segment.
    pub gauss_std: f64,
    /// Standard deviation of the impulsive segment.
    pub impulse_std: f64,
    /// Process-noise variance of the drifting state.
    pub process_var: f64,
    /// Number of recent noise samples whose mean square sets the per-step R.
    /// Before the window fills, missing samples count as `gauss_std²`.
    pub window: usize,
}

impl Default for WeightDemoSpec {
    fn default() -> Self {
        Self {
            gauss_steps: 100,
            impulse_steps: 100,
            gauss_std: 1.0,
            impulse_std: 10.0,
            process_var: 0.5,
            window: 10,
        }
    }
}

impl WeightDemoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gauss_steps + self.impulse_steps == 0 {
            return Err(Error::invalid("steps", "need at least one step"));
        }
        for (name, v) in [
            ("gauss_std", self.gauss_std),
            ("impulse_std", self.impulse_std),
            ("process_var", self.process_var),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.window < 1 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDemoStep {
    /// 1-based step index.
    pub step: usize,
    pub noise: f64,
    /// Measurement variance used at this step.
    pub r: f64,
    pub a_p: f64,
    pub a_r: f64,
    pub truth: f64,
    pub estimate: f64,
}

/// Runs the demonstration, returning the weights at every step.
pub fn run_weight_demo(spec: &WeightDemoSpec, stream: RandomStream) -> Result<Vec<WeightDemoStep>> {
    spec.validate()?;
    let steps = spec.gauss_steps + spec.impulse_steps;
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let model = StateSpaceModel::new(
        one(1.0),
        one(1.0),
        one(spec.process_var),
        one(spec.gauss_std.powi(2)),
    )?
    .with_control(DVector::from_element(1, 1.0))?;

    let unit = sample_gaussian(&one(1.0), steps, stream.substream(1))?;
    let noise: Vec<f64> = unit
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v[0] * if k < spec.gauss_steps {
                spec.gauss_std
            } else {
                spec.impulse_std
            }
        })
        .collect();
    let process = sample_gaussian(&model.q, steps, stream.substream(0))?;

    let mut truth = 0.0;
    let mut belief = GaussianBelief::new(DVector::zeros(1), one(1.0))?;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        truth += 1.0 + process[k][0];
        let z = DVector::from_element(1, truth + noise[k]);
        let recent = &noise[(k + 1).saturating_sub(spec.window)..=k];
        // Until the window fills, the missing samples count at the nominal variance.
        let padding = (spec.window - recent.len()) as f64 * spec.gauss_std.powi(2);
        let r =
            ((recent.iter().map(|v| v * v).sum::<f64>() + padding) / spec.window as f64).max(1e-12);
        let r = one(r);

        let prior = kf_predict(&model, &belief)?;
        let weights = information_weights(&model, &prior.cov, &r)?;
        belief = kf_update_with_r(&model, &prior, &z, &r)?;
        out.push(WeightDemoStep {
            step: k + 1,
            noise: noise[k],
            r: r[(0, 0)],
            a_p: weights.a_p[(0, 0)],
            a_r: weights.a_r[(0, 0)],
            truth,
            estimate: belief.mean[0],
        });
    }
    Ok(out)
}
