use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const DEFAULT_HIDDEN_WIDTH: usize = 64;
const DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Four-layer coordinate MLP `R³ → R³` with ReLU between layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub layers: Vec<Layer>,
}

impl DisplacementField {
    /// All parameters zero: the field is identically zero.
    pub fn zeros(width: usize) -> Self {
        let dims = Self::dims(width);
        DisplacementField { layers: dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect() }
    }

    /// Hidden layers uniform in ±1/√fan_in, last layer zero.
    pub fn init<R: Rng>(width: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(width);
        let last = f.layers.len() - 1;
        for layer in &mut f.layers[..last] {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        f
    }

    fn dims(width: usize) -> [usize; DEPTH + 1] {
        [3, width, width, width, 3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != DEPTH {
            return Err(Error::invariant("displacement.layers", format!("expected {DEPTH} layers")));
        }
        let mut prev = 3;
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != prev || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::invariant(format!("displacement.layers[{i}]"), "inconsistent shape"));
            }
            prev = l.outputs;
        }
        if prev != 3 {
            return Err(Error::invariant("displacement.layers", "output width must be 3"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.layers[0].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Flattened as `[W0, b0, W1, b1, …]`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }

    pub fn eval(&self, p: Vec3) -> Vec3 {
        let mut cur = p.to_array().to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.forward(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Vec3::new(cur[0], cur[1], cur[2])
    }

    /// Vector-Jacobian product at each input point. Returns the gradient
    /// with respect to each input point and the accumulated parameter
    /// gradient (same layout as [`Self::params`]).
    pub fn backward(&self, points: &[Vec3], out_grads: &[Vec3]) -> (Vec<Vec3>, Vec<f64>) {
        let mut gparams = vec![0.0; self.num_params()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        let last = self.layers.len() - 1;
        let mut gpoints = Vec::with_capacity(points.len());
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len() + 1];
        for (p, g) in points.iter().zip(out_grads) {
            acts[0] = p.to_array().to_vec();
            for (i, l) in self.layers.iter().enumerate() {
                let (head, tail) = acts.split_at_mut(i + 1);
                l.forward(&head[i], &mut tail[0]);
                if i < last {
                    tail[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            let mut delta = g.to_array().to_vec();
            for i in (0..self.layers.len()).rev() {
                let l = &self.layers[i];
                if i < last {
                    // ReLU gate on this layer's output
                    for (d, a) in delta.iter_mut().zip(&acts[i + 1]) {
                        if *a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let input = &acts[i];
                let base = offsets[i];
                let gw = &mut gparams[base..base + l.weights.len()];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (gwv, x) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                        *gwv += d * x;
                    }
                }
                let gb = &mut gparams[base + l.weights.len()..base + l.num_params()];
                for (gbv, d) in gb.iter_mut().zip(&delta) {
                    *gbv += d;
                }
                let mut prev = vec![0.0; l.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (pv, w) in prev.iter_mut().zip(&l.weights[o * l.inputs..(o + 1) * l.inputs]) {
                        *pv += d * w;
                    }
                }
                delta = prev;
            }
            gpoints.push(Vec3::new(delta[0], delta[1], delta[2]));
        }
        (gpoints, gparams)
    }
}

impl DisplacementField {
    /// Sign of every hidden pre-activation at every point, flattened.
    pub(crate) fn relu_pattern(&self, points: &[Vec3]) -> Vec<bool> {
        let last = self.layers.len() - 1;
        let mut out = Vec::new();
        let mut next = Vec::new();
        for p in points {
            let mut cur = p.to_array().to_vec();
            for l in &self.layers[..last] {
                l.forward(&cur, &mut next);
                out.extend(next.iter().map(|v| *v > 0.0));
                next.iter_mut().for_each(|v| *v = v.max(0.0));
                std::mem::swap(&mut cur, &mut next);
            }
        }
        out
    }
}

/// `v ↦ u·v + V(u·v)` for every vertex.
pub fn apply_displacement(vertices: &[Vec3], field: &DisplacementField, scale: f64) -> Vec<Vec3> {
    vertices
        .iter()
        .map(|v| {
            let x = *v * scale;
            x + field.eval(x)
        })
        .collect()
}
