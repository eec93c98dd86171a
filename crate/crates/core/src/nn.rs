//! Dense layers with exact backpropagation and Adam.
//!
//! Activations are row-major batches: one sample per row. A layer computes
//! `h = f(x Wᵀ + b)` with `W` stored `out × in`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Identity,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.random_range(-limit..limit));
        DenseLayer {
            weights,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    /// `Σ W² + Σ b²`.
    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().chain(self.bias.iter()).map(|v| v * v).sum()
    }

    /// `Σ W + Σ b`.
    pub fn raw_sum(&self) -> f64 {
        self.weights.iter().chain(self.bias.iter()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                x.ncols(),
            ));
        }
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        self.activation.apply(&mut z);
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }

    /// Adds `scale · ∂(Σ W² + Σ b²)` or, for the raw-sum penalty, `scale`.
    pub fn add_penalty(&mut self, layer: &DenseLayer, scale: f64, squared: bool) {
        if squared {
            self.weights.scaled_add(2.0 * scale, &layer.weights);
            self.bias.scaled_add(2.0 * scale, &layer.bias);
        } else {
            self.weights += scale;
            self.bias += scale;
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend(self.weights.iter());
        out.extend(self.bias.iter());
    }
}

/// Forward-pass state needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    /// Activation outputs before dropout.
    activations: Vec<Array2<f64>>,
    /// Scaled keep masks (`0` or `1/(1−rate)`), when dropout was applied.
    masks: Vec<Option<Array2<f64>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("empty cache")
    }
}

/// A stack of dense layers with optional dropout after each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    /// Dropout rate applied to the output of each layer in training mode.
    pub dropout: Vec<f64>,
}

impl Mlp {
    /// Builds layers `dims[0] → dims[1] → …` with the same activation.
    pub fn new<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        let layers: Vec<_> = dims
            .windows(2)
            .map(|w| DenseLayer::xavier(w[0], w[1], activation, rng))
            .collect();
        let dropout = vec![0.0; layers.len()];
        Mlp { layers, dropout }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Self {
        let dropout = vec![0.0; layers.len()];
        Mlp { layers, dropout }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.input_dim()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output_dim()).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.squared_norm()).sum()
    }

    pub fn raw_sum(&self) -> f64 {
        self.layers.iter().map(|l| l.raw_sum()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    pub fn forward<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardCache> {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            activations: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.to_owned();
        for (layer, &rate) in self.layers.iter().zip(&self.dropout) {
            let h = layer.forward(current.view())?;
            let (next, mask) = if mode == Mode::Train && rate > 0.0 {
                let keep = 1.0 - rate;
                let mask = Array2::from_shape_fn(h.raw_dim(), |_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                (&h * &mask, Some(mask))
            } else {
                (h.clone(), None)
            };
            cache.inputs.push(current);
            cache.activations.push(h);
            cache.masks.push(mask);
            current = next;
        }
        // The last activation is reported after dropout, so store it that way.
        if let (Some(last), Some(Some(mask))) = (cache.activations.last(), cache.masks.last()) {
            let dropped = last * mask;
            cache.activations.push(dropped);
            cache.masks.push(None);
            cache.inputs.push(Array2::zeros((0, 0)));
        }
        Ok(cache)
    }

    /// Evaluation-mode forward pass without a cache.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut current = x.to_owned();
        for layer in &self.layers {
            current = layer.forward(current.view())?;
        }
        Ok(current)
    }

    /// Single-vector evaluation-mode forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.predict(row)?.into_raw_vec_and_offset().0)
    }

    /// Backpropagates `∂L/∂output` and returns parameter gradients together
    /// with `∂L/∂input`.
    ///
    /// Per layer: `δ = ∂L/∂h ⊙ f'(z)`, `∂L/∂W = δᵀ x`, `∂L/∂b = Σ_rows δ`,
    /// and `∂L/∂x = δ W`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
    ) -> Result<(Vec<LayerGrad>, Array2<f64>)> {
        let n = self.layers.len();
        let expected = cache.output().raw_dim();
        if output_grad.raw_dim() != expected {
            return Err(Error::shape(
                format!("{:?}", expected),
                format!("{:?}", output_grad.shape()),
            ));
        }
        let mut grad = output_grad.to_owned();
        // A trailing dropout entry wraps the final layer's output.
        if cache.activations.len() > n {
            let mask = cache.masks[n - 1]
                .as_ref()
                .expect("trailing dropout without mask");
            grad *= mask;
        }
        let mut grads = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if k < n - 1 {
                if let Some(mask) = &cache.masks[k] {
                    grad *= mask;
                }
            }
            let act = layer.activation;
            Zip::from(&mut grad)
                .and(&cache.activations[k])
                .for_each(|g, &h| *g *= act.derivative_from_output(h));
            let dw = grad.t().dot(&cache.inputs[k]);
            let db = grad.sum_axis(Axis(0));
            let dx = grad.dot(&layer.weights);
            grads.push(LayerGrad {
                weights: dw,
                bias: db,
            });
            grad = dx;
        }
        grads.reverse();
        Ok((grads, grad))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::shape(self.n_params(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }
}

/// Inverted dropout on a single vector.
pub fn dropout<R: Rng>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> Vec<f64> {
    if mode == Mode::Eval || rate == 0.0 {
        return x.to_vec();
    }
    let scale = 1.0 / (1.0 - rate);
    x.iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v * scale })
        .collect()
}

/// Reconstruction weights: `rho` where the target entry is positive, else 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyMatrix {
    pub rho: f64,
}

impl PenaltyMatrix {
    pub fn new(rho: f64) -> Self {
        PenaltyMatrix { rho }
    }

    pub fn weight(&self, target: f64) -> f64 {
        if target > 0.0 {
            self.rho
        } else {
            1.0
        }
    }

    pub fn mask(&self, target: ArrayView2<'_, f64>) -> Array2<f64> {
        target.mapv(|t| self.weight(t))
    }
}

fn check_same_shape(target: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<()> {
    if target.shape() != recon.shape() {
        return Err(Error::shape(
            format!("{:?}", target.shape()),
            format!("{:?}", recon.shape()),
        ));
    }
    Ok(())
}

/// `‖(target − recon) ⊙ mask‖²_F`.
pub fn penalized_recon_loss(
    target: ArrayView2<'_, f64>,
    recon: ArrayView2<'_, f64>,
    penalty: PenaltyMatrix,
) -> Result<f64> {
    check_same_shape(target, recon)?;
    let mut total = 0.0;
    Zip::from(target).and(recon).for_each(|&t, &r| {
        let d = (t - r) * penalty.weight(t);
        total += d * d;
    });
    Ok(total)
}

/// Gradient of [`penalized_recon_loss`] with respect to `recon`:
/// `−2 (target − recon) ⊙ mask²`.
pub fn penalized_recon_grad(
    target: ArrayView2<'_, f64>,
    recon: ArrayView2<'_, f64>,
    penalty: PenaltyMatrix,
) -> Result<Array2<f64>> {
    check_same_shape(target, recon)?;
    let mut g = Array2::zeros(recon.raw_dim());
    Zip::from(&mut g)
        .and(target)
        .and(recon)
        .for_each(|g, &t, &r| {
            let w = penalty.weight(t);
            *g = -2.0 * (t - r) * w * w;
        });
    Ok(g)
}

/// `‖target − recon‖²_F`.
pub fn recon_loss(target: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<f64> {
    penalized_recon_loss(target, recon, PenaltyMatrix::new(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamConfig {
            alpha,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            config,
        }
    }

    /// One Adam update of `params` in place.
    pub fn step<'a, P, G>(&mut self, params: P, grads: G) -> Result<()>
    where
        P: ExactSizeIterator<Item = &'a mut f64>,
        G: ExactSizeIterator<Item = &'a f64>,
    {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                self.m.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.t += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (((theta, &g), m), v) in params
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *theta -= alpha * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Slice form of one Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    state.step(params.iter_mut(), grads.iter())
}

/// Adam states for every weight matrix and bias of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpAdam {
    pub states: Vec<(AdamState, AdamState)>,
}

impl MlpAdam {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        MlpAdam {
            states: mlp
                .layers
                .iter()
                .map(|l| {
                    (
                        AdamState::new(l.weights.len(), config),
                        AdamState::new(l.bias.len(), config),
                    )
                })
                .collect(),
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &[LayerGrad]) -> Result<()> {
        if grads.len() != mlp.layers.len() || self.states.len() != mlp.layers.len() {
            return Err(Error::shape(mlp.layers.len(), grads.len()));
        }
        for ((layer, g), (sw, sb)) in mlp.layers.iter_mut().zip(grads).zip(&mut self.states) {
            sw.step(layer.weights.iter_mut(), g.weights.iter())?;
            sb.step(layer.bias.iter_mut(), g.bias.iter())?;
        }
        Ok(())
    }
}

/// Finite-difference utilities for checking analytic gradients.
pub mod gradcheck {
    /// Central differences `(f(x + h e_k) − f(x − h e_k)) / 2h` for every k.
    pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|k| {
                let orig = probe[k];
                probe[k] = orig + h;
                let up = f(&probe);
                probe[k] = orig - h;
                let down = f(&probe);
                probe[k] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Fourth-order differences
    /// `(−f(x + 2h) + 8f(x + h) − 8f(x − h) + f(x − 2h)) / 12h`.
    pub fn five_point_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|k| {
                let orig = probe[k];
                let mut at = |d: f64| {
                    probe[k] = orig + d;
                    f(&probe)
                };
                let v = -at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h);
                probe[k] = orig;
                v / (12.0 * h)
            })
            .collect()
    }

    /// `|a − n| / max(|a|, |n|, floor)` for one entry.
    pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
    }

    pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
        assert_eq!(analytic.len(), numeric.len());
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| relative_error(a, n, floor))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::*;
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        layer.weights = Array2::eye(3);
        let out = Mlp::from_layers(vec![layer]).forward_one(&[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mlp = Mlp::from_layers(vec![DenseLayer::zeros(4, 2, Activation::Sigmoid)]);
        assert_eq!(mlp.forward_one(&[0.0; 4]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn two_layer_net_matches_scalar_evaluation() {
        let mut r = rng();
        let mlp = Mlp::new(&[3, 2, 2], Activation::Sigmoid, &mut r);
        let x = [0.3, -1.2, 0.8];
        // Straight-line evaluation with explicit loops.
        let mut h = x.to_vec();
        for l in &mlp.layers {
            let mut next = Vec::new();
            for o in 0..l.output_dim() {
                let mut z = l.bias[o];
                for i in 0..l.input_dim() {
                    z += l.weights[[o, i]] * h[i];
                }
                next.push(1.0 / (1.0 + (-z).exp()));
            }
            h = next;
        }
        let out = mlp.forward_one(&x).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mlp = Mlp::new(&[3, 2], Activation::Sigmoid, &mut rng());
        assert!(matches!(
            mlp.forward_one(&[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn recon_losses() {
        let t = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(recon_loss(t.view(), t.view()).unwrap(), 0.0);
        let r = array![[3.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            penalized_recon_loss(t.view(), r.view(), PenaltyMatrix::new(3.0)).unwrap(),
            36.0
        );
        let ones = Array2::<f64>::ones((2, 3));
        let zeros = Array2::<f64>::zeros((2, 3));
        assert_eq!(recon_loss(zeros.view(), ones.view()).unwrap(), 6.0);
        assert_eq!(
            recon_loss(t.view(), r.view()).unwrap(),
            penalized_recon_loss(t.view(), r.view(), PenaltyMatrix::new(1.0)).unwrap()
        );
        assert!(recon_loss(t.view(), ones.view()).is_err());
    }

    #[test]
    fn toy_concatenation_shape_is_accepted() {
        let concat = array![
            [0.0, 1.0, 0.0, 2.0, 1.0],
            [1.0, 0.0, 1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 1.0]
        ];
        let recon = Array2::<f64>::zeros((3, 5));
        let loss = penalized_recon_loss(concat.view(), recon.view(), PenaltyMatrix::new(5.0)).unwrap();
        // 4 ones + 2² weighted by 25, plus 4 more ones: Σ (t·5)²
        let expected: f64 = concat.iter().map(|&t| (t * 5.0f64).powi(2)).sum();
        assert_eq!(loss, expected);
    }

    #[test]
    fn penalty_mask_entries() {
        let a = array![[0.0, 2.0], [0.5, 0.0]];
        let m = PenaltyMatrix::new(5.0).mask(a.view());
        assert_eq!(m, array![[1.0, 5.0], [5.0, 1.0]]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut r = rng();
        let mlp = Mlp::new(&[4, 3, 2], Activation::Sigmoid, &mut r);
        let x = Array2::from_shape_fn((5, 4), |_| r.random_range(-1.0..1.0));
        let cache = mlp.forward(x.view(), Mode::Eval, &mut r).unwrap();
        let (grads, dx) = mlp.backward(&cache, Array2::zeros((5, 2)).view()).unwrap();
        assert!(grads.iter().all(|g| g.weights.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_squared_loss_closed_form() {
        let mut r = rng();
        let mlp = Mlp::new(&[3, 2], Activation::Identity, &mut r);
        let x = array![[0.5, -1.0, 2.0]];
        let y = array![[0.25, 1.5]];
        let cache = mlp.forward(x.view(), Mode::Eval, &mut r).unwrap();
        let out = cache.output().clone();
        let dout = penalized_recon_grad(y.view(), out.view(), PenaltyMatrix::new(1.0)).unwrap();
        let (grads, _) = mlp.backward(&cache, dout.view()).unwrap();
        let l = &mlp.layers[0];
        for o in 0..2 {
            let pred = l.weights.row(o).dot(&x.row(0)) + l.bias[o];
            let resid = 2.0 * (pred - y[[0, o]]);
            for i in 0..3 {
                assert!((grads[0].weights[[o, i]] - resid * x[[0, i]]).abs() < 1e-12);
            }
            assert!((grads[0].bias[o] - resid).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut r = rng();
        for dims in [vec![4, 3, 2], vec![5, 6, 3, 5], vec![2, 7, 1]] {
            let mlp = Mlp::new(&dims, Activation::Sigmoid, &mut r);
            let x = Array2::from_shape_fn((6, dims[0]), |_| r.random_range(-1.0..1.0));
            let y = Array2::from_shape_fn((6, *dims.last().unwrap()), |_| r.random_range(0.0..1.0));
            let penalty = PenaltyMatrix::new(3.0);
            let cache = mlp.forward(x.view(), Mode::Eval, &mut r).unwrap();
            let dout = penalized_recon_grad(y.view(), cache.output().view(), penalty).unwrap();
            let (grads, _) = mlp.backward(&cache, dout.view()).unwrap();
            let mut analytic = Vec::new();
            grads.iter().for_each(|g| g.flatten_into(&mut analytic));

            let numeric = central_difference(
                |p| {
                    let mut m = mlp.clone();
                    m.set_flat_params(p).unwrap();
                    let out = m.predict(x.view()).unwrap();
                    penalized_recon_loss(y.view(), out.view(), penalty).unwrap()
                },
                &mlp.flat_params(),
                1e-6,
            );
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "dims {dims:?}: max relative error {err}");
        }
    }

    #[test]
    fn dropout_gradient_uses_the_same_mask() {
        let mut r = rng();
        let mut mlp = Mlp::new(&[4, 6, 6, 3], Activation::Sigmoid, &mut r);
        mlp.dropout = vec![0.3, 0.3, 0.0];
        let x = Array2::from_shape_fn((5, 4), |_| r.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((5, 3), |_| r.random_range(0.0..1.0));
        let seed = ChaCha8Rng::seed_from_u64(99);
        let cache = mlp.forward(x.view(), Mode::Train, &mut seed.clone()).unwrap();
        let dout = penalized_recon_grad(y.view(), cache.output().view(), PenaltyMatrix::new(1.0)).unwrap();
        let (grads, _) = mlp.backward(&cache, dout.view()).unwrap();
        let mut analytic = Vec::new();
        grads.iter().for_each(|g| g.flatten_into(&mut analytic));
        let numeric = central_difference(
            |p| {
                let mut m = mlp.clone();
                m.set_flat_params(p).unwrap();
                let c = m.forward(x.view(), Mode::Train, &mut seed.clone()).unwrap();
                recon_loss(y.view(), c.output().view()).unwrap()
            },
            &mlp.flat_params(),
            1e-6,
        );
        assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-4);
    }

    #[test]
    fn adam_first_step_on_square() {
        let mut theta = [1.0];
        let mut state = AdamState::new(1, AdamConfig::with_alpha(0.01));
        let grad = [2.0 * theta[0]];
        adam_step(&mut theta, &grad, &mut state).unwrap();
        assert!((theta[0] - 0.99).abs() < 1e-9);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = [0.3, -2.0, 5.0];
        let mut state = AdamState::new(3, AdamConfig::default());
        for _ in 0..50 {
            adam_step(&mut p, &[0.0; 3], &mut state).unwrap();
        }
        assert_eq!(p, [0.3, -2.0, 5.0]);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut state = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut state).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut r = rng();
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut r), x);
        assert_eq!(dropout(&x, 0.7, Mode::Eval, &mut r), x);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut r = rng();
        let x: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let trials = 20_000;
        let mut mean = vec![0.0; x.len()];
        for _ in 0..trials {
            for (m, v) in mean.iter_mut().zip(dropout(&x, 0.2, Mode::Train, &mut r)) {
                *m += v / trials as f64;
            }
        }
        for (m, v) in mean.iter().zip(&x) {
            assert!((m - v).abs() / v < 0.02, "{m} vs {v}");
        }
    }

    #[test]
    fn layer_roundtrips_through_json() {
        let layer = DenseLayer::xavier(3, 2, Activation::Sigmoid, &mut rng());
        let text = serde_json::to_string(&layer).unwrap();
        let back: DenseLayer = serde_json::from_str(&text).unwrap();
        assert_eq!(layer, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn penalized_dominates_plain(
                vals in proptest::collection::vec((0.0f64..2.0, -1.0f64..3.0), 1..20),
                rho in 1.0f64..10.0,
            ) {
                let n = vals.len();
                let t = Array2::from_shape_vec((1, n), vals.iter().map(|v| v.0).collect()).unwrap();
                let r = Array2::from_shape_vec((1, n), vals.iter().map(|v| v.1).collect()).unwrap();
                let plain = recon_loss(t.view(), r.view()).unwrap();
                let pen = penalized_recon_loss(t.view(), r.view(), PenaltyMatrix::new(rho)).unwrap();
                prop_assert!(pen >= plain);
            }

            #[test]
            fn adam_step_is_about_alpha_at_any_gradient_scale(
                signs in proptest::collection::vec(any::<bool>(), 20..60),
                scale in 1e-4f64..1e6,
            ) {
                let cfg = AdamConfig::with_alpha(0.01);
                let mut state = AdamState::new(1, cfg);
                let mut p = [0.0];
                for (k, &s) in signs.iter().enumerate() {
                    let before = p[0];
                    let g = if s { scale } else { -scale };
                    adam_step(&mut p, &[g], &mut state).unwrap();
                    if k >= 10 {
                        prop_assert!((p[0] - before).abs() <= cfg.alpha * (1.0 + 1e-6));
                    }
                }
            }

            #[test]
            fn adam_steps_respect_the_worst_case_bound(
                grads in proptest::collection::vec(-1e6f64..1e6, 20..60),
            ) {
                let cfg = AdamConfig::with_alpha(0.01);
                let mut state = AdamState::new(1, cfg);
                let mut p = [0.0];
                let bound = cfg.alpha * (1.0 - cfg.beta1) / (1.0 - cfg.beta2).sqrt();
                for g in &grads {
                    let before = p[0];
                    adam_step(&mut p, &[*g], &mut state).unwrap();
                    prop_assert!((p[0] - before).abs() <= bound * (1.0 + 1e-6));
                }
            }
        }
    }
}
