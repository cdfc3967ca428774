//! Differentiable binary classifiers: a linear-logit GLM and a tanh MLP.
//!
//! Both architectures emit a single logit; the label convention is
//! `1 <=> logit > 0`. Reverse-mode gradients are written out by hand:
//! parameter gradients for the optimizer, input gradients for inner
//! maximizations, and input gradients chained through the Jacobian of
//! `T^{-1}` for the semi-latent continuous coordinates.
//!
//! A model may carry an affine input scaler (recorded standardization
//! parameters); all gradients and the `as_linear` view account for it.

use crate::error::{Error, Result};
use crate::expr::logistic;
use crate::metric::continuous_jacobian;
use crate::rng;
use crate::scm::{Instance, ScmSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    Glm { input_dim: usize },
    /// Hidden layers use tanh so input gradients exist everywhere.
    Mlp { input_dim: usize, hidden: Vec<usize> },
}

impl ModelSpec {
    /// The three-hidden-layer, width-100 configuration used by the bench.
    pub fn default_mlp(input_dim: usize) -> ModelSpec {
        ModelSpec::Mlp { input_dim, hidden: vec![100, 100, 100] }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Glm { input_dim } | ModelSpec::Mlp { input_dim, .. } => *input_dim,
        }
    }

    /// (rows, cols) of each layer, in forward order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        match self {
            ModelSpec::Glm { input_dim } => vec![(1, *input_dim)],
            ModelSpec::Mlp { input_dim, hidden } => {
                let mut dims = Vec::with_capacity(hidden.len() + 1);
                let mut prev = *input_dim;
                for &h in hidden {
                    dims.push((h, prev));
                    prev = h;
                }
                dims.push((1, prev));
                dims
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::InvalidModel("input dimension must be positive".into()));
        }
        if let ModelSpec::Mlp { hidden, .. } = self {
            if hidden.iter().any(|&h| h == 0) {
                return Err(Error::InvalidModel("hidden widths must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(r, c)| r * c + r).sum()
    }
}

/// Row-major affine layer.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Per-feature affine input transform `x_i = (v_i - mean_i) / scale_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineScaler {
    pub fn identity(dim: usize) -> Self {
        AffineScaler { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.scale)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    /// `sigmoid(logit)`, clamped away from 0 and 1.
    pub probability: f64,
    /// 1 iff logit > 0.
    pub label: u8,
}

/// Numerically stable binary cross-entropy from the logit.
pub fn bce_from_logit(logit: f64, y: f64) -> f64 {
    // softplus(z) - y z = -[y ln p + (1-y) ln (1-p)] for p = sigmoid(z).
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    softplus - y * logit
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    spec: ModelSpec,
    layers: Vec<Layer>,
    scaler: Option<AffineScaler>,
}

impl ClassifierModel {
    /// Fresh model with fan-in-scaled symmetric uniform weights and zero
    /// biases. The tanh network uses the `sqrt(6 / fan_in)` bound so its
    /// initial output keeps enough variation to train at small step
    /// budgets; the plain linear model starts near zero (`0.1 / sqrt(fan_in)`)
    /// so short runs are dominated by the training signal, not the draw.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let wide = matches!(spec, ModelSpec::Mlp { .. });
        let mut r = rng::stream(seed, &[0x1417]);
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(rows, cols)| {
                let bound = if wide {
                    (6.0 / cols as f64).sqrt()
                } else {
                    0.1 / (cols as f64).sqrt()
                };
                Layer {
                    rows,
                    cols,
                    w: (0..rows * cols).map(|_| r.gen_range(-bound..bound)).collect(),
                    b: vec![0.0; rows],
                }
            })
            .collect();
        Ok(ClassifierModel { spec, layers, scaler: None })
    }

    /// GLM with `logit = w . v - b` (the sign convention of the linear
    /// unfair-band analysis).
    pub fn glm_from_w_b(w: Vec<f64>, b: f64) -> Self {
        let spec = ModelSpec::Glm { input_dim: w.len() };
        let layer = Layer { rows: 1, cols: w.len(), w, b: vec![-b] };
        ClassifierModel { spec, layers: vec![layer], scaler: None }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn scaler(&self) -> Option<&AffineScaler> {
        self.scaler.as_ref()
    }

    pub fn set_scaler(&mut self, scaler: Option<AffineScaler>) {
        self.scaler = scaler;
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    /// For a GLM, the effective raw-space `(w, b)` with `logit = w . v - b`,
    /// folding in the input scaler. `None` for MLPs.
    pub fn as_linear(&self) -> Option<(Vec<f64>, f64)> {
        match self.spec {
            ModelSpec::Glm { .. } => {
                let layer = &self.layers[0];
                match &self.scaler {
                    None => Some((layer.w.clone(), -layer.b[0])),
                    Some(sc) => {
                        let w: Vec<f64> =
                            layer.w.iter().zip(&sc.scale).map(|(wi, s)| wi / s).collect();
                        let shift: f64 = layer
                            .w
                            .iter()
                            .zip(sc.mean.iter().zip(&sc.scale))
                            .map(|(wi, (m, s))| wi * m / s)
                            .sum();
                        Some((w, -(layer.b[0] - shift)))
                    }
                }
            }
            ModelSpec::Mlp { .. } => None,
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: flat.len() });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.rows * l.cols;
            l.w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            l.b.copy_from_slice(&flat[off..off + l.rows]);
            off += l.rows;
        }
        Ok(())
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: v.len() });
        }
        Ok(())
    }

    /// Raw logit; assumes the input dimension is correct.
    pub fn logit(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.input_dim());
        let x = match &self.scaler {
            Some(sc) => sc.apply(v),
            None => v.to_vec(),
        };
        let mut cur = x;
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut buf);
            if li < last {
                buf.iter_mut().for_each(|z| *z = z.tanh());
            }
            std::mem::swap(&mut cur, &mut buf);
        }
        cur[0]
    }

    pub fn forward(&self, v: &Instance) -> Result<Prediction> {
        self.check_input(&v.values)?;
        let logit = self.logit(&v.values);
        let probability = logistic(logit).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        Ok(Prediction { logit, probability, label: (logit > 0.0) as u8 })
    }

    pub fn predict_label(&self, v: &[f64]) -> u8 {
        (self.logit(v) > 0.0) as u8
    }

    /// Binary cross-entropy of the prediction at `v` against `y`.
    pub fn bce_loss(&self, v: &Instance, y: f64) -> Result<f64> {
        self.check_input(&v.values)?;
        Ok(bce_from_logit(self.logit(&v.values), y))
    }

    /// Forward pass plus requested reverse-mode gradients of
    /// `weight * bce(logit, y)`. Returns (loss, parameter grad, input grad).
    fn backprop(
        &self,
        v: &[f64],
        y: f64,
        weight: f64,
        want_params: bool,
        want_input: bool,
    ) -> (f64, Option<Vec<f64>>, Option<Vec<f64>>) {
        let x = match &self.scaler {
            Some(sc) => sc.apply(v),
            None => v.to_vec(),
        };
        // Forward, caching post-activation values per layer boundary.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().unwrap(), &mut out);
            if li < last {
                out.iter_mut().for_each(|z| *z = z.tanh());
            }
            acts.push(out);
        }
        let logit = acts.last().unwrap()[0];
        let loss = weight * bce_from_logit(logit, y);

        // dE/dlogit for E = weight * bce.
        let dlogit = weight * (logistic(logit) - y);

        let mut param_grad =
            if want_params { Some(vec![0.0; self.n_params()]) } else { None };
        // Gradient w.r.t. the current layer's output, initialized at the top.
        let mut gout = vec![dlogit];
        let mut offsets: Vec<usize> = Vec::with_capacity(self.layers.len());
        {
            let mut off = 0;
            for l in &self.layers {
                offsets.push(off);
                off += l.rows * l.cols + l.rows;
            }
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            if let Some(pg) = param_grad.as_mut() {
                let off = offsets[li];
                for r in 0..layer.rows {
                    let g = gout[r];
                    if g != 0.0 {
                        let row = &mut pg[off + r * layer.cols..off + (r + 1) * layer.cols];
                        for (slot, xi) in row.iter_mut().zip(input) {
                            *slot += g * xi;
                        }
                    }
                    pg[off + layer.rows * layer.cols + r] += g;
                }
            }
            let need_below = li > 0 || want_input;
            if !need_below {
                break;
            }
            let mut gin = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let g = gout[r];
                if g != 0.0 {
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (slot, wi) in gin.iter_mut().zip(row) {
                        *slot += g * wi;
                    }
                }
            }
            if li > 0 {
                // Chain through tanh at the layer below.
                for (slot, a) in gin.iter_mut().zip(&acts[li]) {
                    *slot *= 1.0 - a * a;
                }
            }
            gout = gin;
        }
        let input_grad = if want_input {
            let mut g = gout;
            if let Some(sc) = &self.scaler {
                for (gi, s) in g.iter_mut().zip(&sc.scale) {
                    *gi /= s;
                }
            }
            Some(g)
        } else {
            None
        };
        (loss, param_grad, input_grad)
    }

    /// Loss and flat parameter gradient of `bce(h(v), y)` at one point.
    pub fn loss_and_param_grad(&self, v: &[f64], y: f64) -> (f64, Vec<f64>) {
        let (loss, pg, _) = self.backprop(v, y, 1.0, true, false);
        (loss, pg.unwrap())
    }

    /// Value and flat parameter gradient of a weighted sum of loss terms
    /// `sum_k weight_k * bce(h(point_k), y_k)`.
    pub fn weighted_loss_param_grad(&self, terms: &[(Vec<f64>, f64, f64)]) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut grad = vec![0.0; self.n_params()];
        for (point, y, weight) in terms {
            if *weight == 0.0 {
                continue;
            }
            let (loss, pg, _) = self.backprop(point, *y, *weight, true, false);
            total += loss;
            for (slot, g) in grad.iter_mut().zip(pg.unwrap()) {
                *slot += g;
            }
        }
        (total, grad)
    }

    /// Gradient of the loss with respect to the raw input coordinates.
    pub fn input_grad_loss(&self, v: &[f64], y: f64) -> Vec<f64> {
        let (_, _, ig) = self.backprop(v, y, 1.0, false, true);
        ig.unwrap()
    }

    /// Gradient of the logit with respect to the raw input coordinates.
    pub fn input_grad_logit(&self, v: &[f64]) -> Vec<f64> {
        // bce'(z, y) = sigmoid(z) - y; choosing y = sigmoid(z) - 1 makes the
        // chain coefficient exactly 1.
        let logit = self.logit(v);
        let y = logistic(logit) - 1.0;
        let (_, _, ig) = self.backprop(v, y, 1.0, false, true);
        ig.unwrap()
    }

    /// Gradient of `δ -> bce(h(T^{-1}(T(v) + δ)), y)` at `δ = 0`, restricted
    /// to the continuous semi-latent coordinates.
    pub fn grad_input_continuous(&self, scm: &ScmSpec, v: &Instance, y: f64) -> Result<Vec<f64>> {
        self.check_input(&v.values)?;
        let grad_v = self.input_grad_loss(&v.values, y);
        let jac = continuous_jacobian(scm, v);
        let cont = scm.continuous_indices();
        let mut out = vec![0.0; cont.len()];
        for (i, row) in jac.iter().enumerate() {
            let g = grad_v[i];
            if g != 0.0 {
                for (k, jik) in row.iter().enumerate() {
                    out[k] += g * jik;
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = ModelWire {
            spec: self.spec.clone(),
            params: self.params_flat(),
            scaler: self.scaler.clone(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ModelWire = serde_json::from_str(text)?;
        wire.spec.validate()?;
        let mut model = ClassifierModel::init(wire.spec, 0)?;
        model.set_params_flat(&wire.params)?;
        model.scaler = wire.scaler;
        Ok(model)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    spec: ModelSpec,
    params: Vec<f64>,
    scaler: Option<AffineScaler>,
}

impl Serialize for ClassifierModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelWire {
            spec: self.spec.clone(),
            params: self.params_flat(),
            scaler: self.scaler.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassifierModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ModelWire::deserialize(d)?;
        wire.spec.validate().map_err(serde::de::Error::custom)?;
        let mut model =
            ClassifierModel::init(wire.spec, 0).map_err(serde::de::Error::custom)?;
        model.set_params_flat(&wire.params).map_err(serde::de::Error::custom)?;
        model.scaler = wire.scaler;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::builtin;
    use approx::assert_relative_eq;

    fn random_mlp(input_dim: usize, hidden: Vec<usize>, seed: u64) -> ClassifierModel {
        ClassifierModel::init(ModelSpec::Mlp { input_dim, hidden }, seed).unwrap()
    }

    #[test]
    fn glm_forward_example() {
        let model = ClassifierModel::glm_from_w_b(vec![0.0, 1.0, 1.0], 5.0);
        let pred = model.forward(&Instance::new(vec![0.0, 1.0, -0.5])).unwrap();
        assert_relative_eq!(pred.logit, -4.5);
        assert_eq!(pred.label, 0);
    }

    #[test]
    fn zero_weights_give_probability_half() {
        let model = ClassifierModel::glm_from_w_b(vec![0.0, 0.0, 0.0], 0.0);
        let pred = model.forward(&Instance::new(vec![3.0, -1.0, 7.0])).unwrap();
        assert_relative_eq!(pred.probability, 0.5);
    }

    #[test]
    fn mlp_with_zero_final_layer_is_constant_half() {
        let mut model = random_mlp(3, vec![8, 8], 7);
        let mut flat = model.params_flat();
        let n = flat.len();
        // Final layer: 8 weights + 1 bias.
        for slot in flat[n - 9..].iter_mut() {
            *slot = 0.0;
        }
        model.set_params_flat(&flat).unwrap();
        for v in [[0.0, 0.0, 0.0], [5.0, -2.0, 1.0]] {
            let pred = model.forward(&Instance::new(v.to_vec())).unwrap();
            assert_relative_eq!(pred.probability, 0.5);
        }
    }

    #[test]
    fn bce_values() {
        assert_relative_eq!(bce_from_logit(0.0, 0.0), std::f64::consts::LN_2);
        assert_relative_eq!(bce_from_logit(0.0, 1.0), std::f64::consts::LN_2);
        // p = 0.9, y = 0 -> -ln(0.1)
        let logit = (0.9f64 / 0.1).ln();
        assert_relative_eq!(bce_from_logit(logit, 0.0), -(0.1f64.ln()), max_relative = 1e-12);
        // p -> y drives the loss to zero.
        assert!(bce_from_logit(30.0, 1.0) < 1e-12);
        assert!(bce_from_logit(-30.0, 0.0) < 1e-12);
    }

    #[test]
    fn glm_param_grad_closed_form() {
        let model = ClassifierModel::glm_from_w_b(vec![0.5, -1.0], 0.3);
        let v = [1.5, 2.0];
        let y = 1.0;
        let (loss, grad) = model.loss_and_param_grad(&v, y);
        let p = logistic(model.logit(&v));
        assert_relative_eq!(loss, bce_from_logit(model.logit(&v), y));
        // d/dw = (p - y) v, d/db_raw = (p - y).
        assert_relative_eq!(grad[0], (p - y) * v[0], max_relative = 1e-12);
        assert_relative_eq!(grad[1], (p - y) * v[1], max_relative = 1e-12);
        assert_relative_eq!(grad[2], p - y, max_relative = 1e-12);
    }

    fn fd_check_params(model: &ClassifierModel, v: &[f64], y: f64) -> f64 {
        let (_, grad) = model.loss_and_param_grad(v, y);
        let flat = model.params_flat();
        let h = 1e-6;
        let mut fd = vec![0.0; flat.len()];
        let mut m = model.clone();
        for i in 0..flat.len() {
            let mut hi = flat.clone();
            hi[i] += h;
            m.set_params_flat(&hi).unwrap();
            let up = bce_from_logit(m.logit(v), y);
            let mut lo = flat.clone();
            lo[i] -= h;
            m.set_params_flat(&lo).unwrap();
            let dn = bce_from_logit(m.logit(v), y);
            fd[i] = (up - dn) / (2.0 * h);
        }
        let num: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den = crate::metric::PNorm::Two.norm(&fd).max(crate::metric::PNorm::Two.norm(&grad));
        num / den.max(1e-8)
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let mut r = crate::rng::stream(71, &[]);
        for trial in 0..5 {
            let model = random_mlp(3, vec![6, 5], 100 + trial);
            let v: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
            let y = if r.gen_bool(0.5) { 1.0 } else { 0.0 };
            assert!(fd_check_params(&model, &v, y) < 1e-5);
        }
    }

    #[test]
    fn input_grads_match_finite_differences() {
        let mut r = crate::rng::stream(72, &[]);
        for trial in 0..5 {
            let mut model = random_mlp(4, vec![7, 6], 200 + trial);
            if trial % 2 == 0 {
                model.set_scaler(Some(AffineScaler {
                    mean: vec![0.1, -0.2, 0.3, 0.0],
                    scale: vec![1.5, 0.7, 2.0, 1.0],
                }));
            }
            let v: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
            let y = 1.0;
            let grad = model.input_grad_loss(&v, y);
            let h = 1e-6;
            for i in 0..4 {
                let mut hi = v.clone();
                hi[i] += h;
                let mut lo = v.clone();
                lo[i] -= h;
                let fd =
                    (bce_from_logit(model.logit(&hi), y) - bce_from_logit(model.logit(&lo), y))
                        / (2.0 * h);
                assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn logit_grad_is_loss_grad_scaled() {
        let model = random_mlp(3, vec![5], 42);
        let v = [0.4, -1.0, 0.2];
        let logit = model.logit(&v);
        let p = logistic(logit);
        let gl = model.input_grad_logit(&v);
        let gy0 = model.input_grad_loss(&v, 0.0);
        // d loss / d v = (p - y) * d logit / d v.
        for (a, b) in gl.iter().zip(&gy0) {
            assert_relative_eq!(b, &(p * a), max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn continuous_grad_on_imf_is_masked_loss_grad() {
        let scm = builtin::by_name("imf").unwrap();
        let model = ClassifierModel::glm_from_w_b(vec![0.3, 1.0, -2.0], 0.1);
        let v = Instance::new(vec![1.0, 0.5, -0.25]);
        let g = model.grad_input_continuous(&scm, &v, 0.0).unwrap();
        let p = logistic(model.logit(&v.values));
        // T is the identity on IMF, so the chain is (p - y) w on X1, X2.
        assert_relative_eq!(g[0], p * 1.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], p * -2.0, max_relative = 1e-12);
    }

    #[test]
    fn continuous_grad_on_lin_uses_reduced_form() {
        let scm = builtin::by_name("lin").unwrap();
        let model = ClassifierModel::glm_from_w_b(vec![0.0, 1.0, 1.0], 5.0);
        let v = Instance::new(vec![0.0, 1.0, -0.5]);
        let y = 1.0;
        let g = model.grad_input_continuous(&scm, &v, y).unwrap();
        let p = logistic(model.logit(&v.values));
        // w_{-1}^T F_{-1} with F_{-1} = [[1,0],[-1,1]] gives (0, 1).
        assert_relative_eq!(g[0], (p - y) * 0.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], (p - y) * 1.0, max_relative = 1e-12);
    }

    #[test]
    fn continuous_grad_matches_finite_differences_through_t_inverse() {
        use crate::metric::{from_semi_latent, to_semi_latent};
        let scm = builtin::by_name("nlm").unwrap();
        let model = random_mlp(3, vec![6, 5], 77);
        let v = Instance::new(vec![1.0, 1.7, -2.1]);
        let y = 0.0;
        let g = model.grad_input_continuous(&scm, &v, y).unwrap();
        let q = to_semi_latent(&scm, &v).unwrap();
        let h = 1e-6;
        for (k, &qk) in scm.continuous_indices().iter().enumerate() {
            let mut hi = q.clone();
            hi.values[qk] += h;
            let mut lo = q.clone();
            lo.values[qk] -= h;
            let vh = from_semi_latent(&scm, &hi).unwrap();
            let vl = from_semi_latent(&scm, &lo).unwrap();
            let fd = (model.bce_loss(&vh, y).unwrap() - model.bce_loss(&vl, y).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let mut model = random_mlp(5, vec![9, 4], 3);
        model.set_scaler(Some(AffineScaler {
            mean: vec![0.0, 1.0, -0.5, 0.25, 0.0],
            scale: vec![1.0, 2.0, 0.5, 1.0, 3.0],
        }));
        let back = ClassifierModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.params_flat(), model.params_flat());
        assert_eq!(back.spec(), model.spec());
        assert_eq!(back.scaler(), model.scaler());
    }

    #[test]
    fn as_linear_folds_the_scaler() {
        let mut model = ClassifierModel::glm_from_w_b(vec![2.0, -1.0], 0.5);
        model.set_scaler(Some(AffineScaler { mean: vec![1.0, -2.0], scale: vec![2.0, 4.0] }));
        let (w, b) = model.as_linear().unwrap();
        for v in [[0.3, 0.7], [-1.0, 2.0]] {
            let direct = model.logit(&v);
            let linear = w[0] * v[0] + w[1] * v[1] - b;
            assert_relative_eq!(direct, linear, max_relative = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = ClassifierModel::glm_from_w_b(vec![1.0, 1.0], 0.0);
        assert!(model.forward(&Instance::new(vec![1.0])).is_err());
    }

    use rand::Rng;
}
