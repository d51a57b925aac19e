use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invariant("adam", "betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invariant("adam.eps", "must be positive"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam update of one variable block in place. `step` is
/// the 1-based count of updates applied to this block.
pub fn adam_step(x: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], rate: f64, adam: &AdamParams, step: u64) -> Result<()> {
    if step == 0 {
        return Err(Error::invalid("Adam step index starts at 1"));
    }
    if x.len() != g.len() || m.len() != g.len() || v.len() != g.len() {
        return Err(Error::dim("Adam moments must match the variables and gradients"));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i}")));
    }
    let AdamParams { beta1, beta2, eps } = *adam;
    let c1 = 1.0 - beta1.powi(step as i32);
    let c2 = 1.0 - beta2.powi(step as i32);
    for i in 0..x.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        x[i] -= rate * mh / (vh.sqrt() + eps);
    }
    Ok(())
}
