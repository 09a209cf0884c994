//! Dense feedforward networks with hand-derived backpropagation.
//!
//! Each layer stores an `out × (in + 1)` row-major matrix whose last column is
//! the bias, so a layer computes `act(W · [x; 1])`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    activation: Activation,
}

impl Layer {
    /// Builds a layer from a row-major `rows × cols` matrix (`cols = in + 1`).
    pub fn from_weights(rows: usize, cols: usize, weights: Vec<f64>, activation: Activation) -> Result<Self> {
        if rows == 0 || cols < 2 {
            return Err(Error::Dimension(format!("layer shape {rows}x{cols} is empty")));
        }
        if weights.len() != rows * cols {
            return Err(Error::Dimension(format!("layer {rows}x{cols} given {} weights", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("layer weight {w}")));
        }
        Ok(Layer { rows, cols, weights, activation })
    }

    pub fn input_size(&self) -> usize {
        self.cols - 1
    }

    pub fn output_size(&self) -> usize {
        self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Per-layer pre-activations and activations recorded by [`DenseNetwork::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradient matrices shaped like the weights of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradient {
    layers: Vec<Vec<f64>>,
}

impl NetGradient {
    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &NetGradient) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().flatten().all(|&g| g == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network without layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_size() != pair[1].input_size() {
                return Err(Error::Dimension(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].output_size(),
                    k + 1,
                    pair[1].input_size()
                )));
            }
        }
        Ok(DenseNetwork { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].output_size()
    }

    /// Layer sizes `[in, hidden..., out]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_size()).chain(self.layers.iter().map(Layer::output_size)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn zero_gradient(&self) -> NetGradient {
        NetGradient { layers: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect() }
    }

    /// Read access to one parameter; used by gradient checks.
    pub fn parameter(&self, layer: usize, index: usize) -> f64 {
        self.layers[layer].weights[index]
    }

    pub fn set_parameter(&mut self, layer: usize, index: usize, value: f64) {
        self.layers[layer].weights[index] = value;
    }

    pub fn forward(&self, input: &[f64]) -> Result<ActivationTrace> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "network expects input of length {}, got {}",
                self.input_size(),
                input.len()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map(Vec::as_slice).unwrap_or(input);
            let mut z = Vec::with_capacity(layer.rows);
            for i in 0..layer.rows {
                let row = layer.row(i);
                let (w, bias) = row.split_at(layer.cols - 1);
                let mut acc = bias[0];
                for (wj, xj) in w.iter().zip(x) {
                    acc += wj * xj;
                }
                z.push(acc);
            }
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(a);
        }
        Ok(ActivationTrace { input: input.to_vec(), pre, post })
    }

    pub fn output(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward(input)?;
        Ok(trace.post.pop().unwrap_or_default())
    }

    /// Backpropagates `output_gradient` (∂loss/∂output) through the trace.
    ///
    /// Returns ∂loss/∂input together with fresh parameter gradients.
    pub fn backward(&self, trace: &ActivationTrace, output_gradient: &[f64]) -> Result<(Vec<f64>, NetGradient)> {
        let mut grads = self.zero_gradient();
        let input_grad = self.backward_into(trace, output_gradient, &mut grads)?;
        Ok((input_grad, grads))
    }

    /// Like [`DenseNetwork::backward`] but adds parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        trace: &ActivationTrace,
        output_gradient: &[f64],
        grads: &mut NetGradient,
    ) -> Result<Vec<f64>> {
        self.check_trace(trace)?;
        if output_gradient.len() != self.output_size() {
            return Err(Error::Dimension(format!(
                "output gradient of length {} for network output {}",
                output_gradient.len(),
                self.output_size()
            )));
        }
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| g.len() != l.weights.len())
        {
            return Err(Error::Dimension("gradient store shape differs from network".into()));
        }

        let mut upstream = output_gradient.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = if k == 0 { &trace.input } else { &trace.post[k - 1] };
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&trace.post[k])
                .map(|(g, &a)| g * layer.activation.derivative_from_output(a))
                .collect();
            let g = &mut grads.layers[k];
            let mut down = vec![0.0; layer.cols - 1];
            for (i, &di) in delta.iter().enumerate() {
                let row = layer.row(i);
                let grow = &mut g[i * layer.cols..(i + 1) * layer.cols];
                let (gw, gb) = grow.split_at_mut(layer.cols - 1);
                for ((gj, &xj), (dj, &wj)) in gw.iter_mut().zip(x).zip(down.iter_mut().zip(row)) {
                    *gj += di * xj;
                    *dj += di * wj;
                }
                gb[0] += di;
            }
            upstream = down;
        }
        Ok(upstream)
    }

    fn check_trace(&self, trace: &ActivationTrace) -> Result<()> {
        let ok = trace.input.len() == self.input_size()
            && trace.post.len() == self.layers.len()
            && trace.pre.len() == self.layers.len()
            && trace.post.iter().zip(&self.layers).all(|(a, l)| a.len() == l.rows);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("activation trace does not match network".into()))
        }
    }

    /// Gradient descent step `w ← w − lr · (g / count)`.
    ///
    /// The network is left untouched if any updated weight would be non-finite.
    pub fn apply_update(&mut self, grads: &NetGradient, learning_rate: f64, count: usize) -> Result<()> {
        if count == 0 {
            return Err(Error::InvalidArgument("update with example count 0".into()));
        }
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| g.len() != l.weights.len())
        {
            return Err(Error::Dimension("gradient store shape differs from network".into()));
        }
        let n = count as f64;
        let step = |w: f64, g: f64| w - learning_rate * (g / n);
        for (layer, g) in self.layers.iter().zip(&grads.layers) {
            if let Some((w, g)) = layer.weights.iter().zip(g).find(|(&w, &g)| !step(w, g).is_finite()) {
                return Err(Error::NonFinite(format!("update of weight {w} with gradient {g}")));
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, &gi) in layer.weights.iter_mut().zip(g) {
                *w = step(*w, gi);
            }
        }
        Ok(())
    }
}

/// Random network with `dims = [in, hidden..., out]`.
///
/// Hidden layers use tanh; the last layer uses `final_activation`. Weights of
/// layer k are uniform in `±1/√(dims[k] + 1)`.
pub fn init_dense(dims: &[usize], final_activation: Activation, seed: u64) -> Result<DenseNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_dense_with_rng(dims, final_activation, &mut rng)
}

pub fn init_dense_with_rng<R: Rng + ?Sized>(
    dims: &[usize],
    final_activation: Activation,
    rng: &mut R,
) -> Result<DenseNetwork> {
    if dims.len() < 2 {
        return Err(Error::Dimension(format!("need at least 2 layer sizes, got {dims:?}")));
    }
    if dims.contains(&0) {
        return Err(Error::Dimension(format!("layer sizes must be positive, got {dims:?}")));
    }
    let nlayers = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, out) = (w[0], w[1]);
            let cols = fan_in + 1;
            let bound = 1.0 / (cols as f64).sqrt();
            let weights = (0..out * cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
            let act = if k + 1 == nlayers { final_activation } else { Activation::Tanh };
            Layer { rows: out, cols, weights, activation: act }
        })
        .collect();
    DenseNetwork::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_net(dims: &[usize], act: Activation) -> DenseNetwork {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let a = if k + 2 == dims.len() { act } else { Activation::Tanh };
                Layer::from_weights(w[1], w[0] + 1, vec![0.0; w[1] * (w[0] + 1)], a).unwrap()
            })
            .collect();
        DenseNetwork::from_layers(layers).unwrap()
    }

    fn loss_of(net: &DenseNetwork, input: &[f64], target: &[f64]) -> f64 {
        let out = net.output(input).unwrap();
        out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / out.len() as f64
    }

    fn mse_grad(out: &[f64], target: &[f64]) -> Vec<f64> {
        let n = out.len() as f64;
        out.iter().zip(target).map(|(o, t)| 2.0 * (o - t) / n).collect()
    }

    #[test]
    fn init_shapes_follow_dims() {
        let net = init_dense(&[24, 12, 12], Activation::Tanh, 7).unwrap();
        let shapes: Vec<_> = net.layers().iter().map(Layer::shape).collect();
        assert_eq!(shapes, vec![(12, 25), (12, 13)]);
        assert_eq!(net.dims(), vec![24, 12, 12]);
        assert!(net.layers()[0].weights().iter().all(|w| w.abs() <= 1.0 / 25f64.sqrt()));
        assert!(net.layers()[1].weights().iter().all(|w| w.abs() <= 1.0 / 13f64.sqrt()));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_dense(&[12, 4], Activation::Sigmoid, 42).unwrap();
        let b = init_dense(&[12, 4], Activation::Sigmoid, 42).unwrap();
        let bits = |n: &DenseNetwork| -> Vec<u64> {
            n.layers().iter().flat_map(|l| l.weights()).map(|w| w.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = init_dense(&[12, 4], Activation::Sigmoid, 43).unwrap();
        assert_ne!(bits(&a), bits(&c));
        assert_eq!(a.layers()[0].activation(), Activation::Sigmoid);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(init_dense(&[12], Activation::Tanh, 0), Err(Error::Dimension(_))));
        assert!(matches!(init_dense(&[], Activation::Tanh, 0), Err(Error::Dimension(_))));
        assert!(matches!(init_dense(&[3, 0, 2], Activation::Tanh, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_weights_give_activation_of_zero() {
        let net = zero_net(&[3, 5, 4], Activation::Tanh);
        assert_eq!(net.output(&[0.3, -2.0, 9.0]).unwrap(), vec![0.0; 4]);
        let net = zero_net(&[3, 5, 4], Activation::Sigmoid);
        assert_eq!(net.output(&[0.3, -2.0, 9.0]).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn permutation_layer() {
        // Rows pick inputs 2, 0, 1; zero bias.
        let w = vec![
            0.0, 0.0, 1.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        ];
        let net = DenseNetwork::from_layers(vec![Layer::from_weights(3, 4, w, Activation::Tanh).unwrap()]).unwrap();
        let out = net.output(&[0.1, -0.5, 2.0]).unwrap();
        assert_eq!(out, vec![2f64.tanh(), 0.1f64.tanh(), (-0.5f64).tanh()]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let net = init_dense(&[3, 2], Activation::Tanh, 1).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn outputs_stay_in_range_for_huge_inputs() {
        let net = init_dense(&[4, 6, 3], Activation::Sigmoid, 5).unwrap();
        for x in [1e300, -1e300, 1e10, 0.0] {
            let trace = net.forward(&[x, -x, x, 1.0]).unwrap();
            assert!(trace.post[0].iter().all(|a| a.is_finite() && a.abs() <= 1.0));
            assert!(trace.output().iter().all(|a| a.is_finite() && (0.0..=1.0).contains(a)));
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = init_dense(&[3, 4, 2], Activation::Sigmoid, 9).unwrap();
        let trace = net.forward(&[0.2, 0.4, -0.1]).unwrap();
        let (dx, g) = net.backward(&trace, &[0.0, 0.0]).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(g.is_zero());
    }

    #[test]
    fn hand_computed_single_weight_layer() {
        // y = tanh(w·x + b) with w = 0.5, b = -0.25, x = 2; loss gradient g = 0.3.
        let net =
            DenseNetwork::from_layers(vec![Layer::from_weights(1, 2, vec![0.5, -0.25], Activation::Tanh).unwrap()])
                .unwrap();
        let trace = net.forward(&[2.0]).unwrap();
        let y = 0.75f64.tanh();
        assert_eq!(trace.output(), &[y]);
        let (dx, g) = net.backward(&trace, &[0.3]).unwrap();
        let delta = 0.3 * (1.0 - y * y);
        assert!((g.layers()[0][0] - delta * 2.0).abs() < 1e-15);
        assert!((g.layers()[0][1] - delta).abs() < 1e-15);
        assert!((dx[0] - delta * 0.5).abs() < 1e-15);
    }

    #[test]
    fn finite_difference_gradient_check() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for (case, dims) in [[8, 6, 4], [3, 5, 2], [5, 2, 6]].iter().enumerate() {
            for act in [Activation::Tanh, Activation::Sigmoid] {
                let mut net = init_dense_with_rng(dims, act, &mut rng).unwrap();
                let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let target: Vec<f64> = (0..dims[2]).map(|_| rng.gen::<f64>()).collect();
                let trace = net.forward(&input).unwrap();
                let (dx, g) = net.backward(&trace, &mse_grad(trace.output(), &target)).unwrap();
                for k in 0..net.layers().len() {
                    for i in 0..net.layers()[k].weights().len() {
                        let w = net.parameter(k, i);
                        net.set_parameter(k, i, w + h);
                        let lp = loss_of(&net, &input, &target);
                        net.set_parameter(k, i, w - h);
                        let lm = loss_of(&net, &input, &target);
                        net.set_parameter(k, i, w);
                        let numeric = (lp - lm) / (2.0 * h);
                        let analytic = g.layers()[k][i];
                        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7);
                        assert!(rel < 1e-4, "case {case} layer {k} param {i}: {analytic} vs {numeric}");
                    }
                }
                for j in 0..input.len() {
                    let mut xp = input.clone();
                    xp[j] += h;
                    let mut xm = input.clone();
                    xm[j] -= h;
                    let numeric = (loss_of(&net, &xp, &target) - loss_of(&net, &xm, &target)) / (2.0 * h);
                    let rel = (numeric - dx[j]).abs() / numeric.abs().max(dx[j].abs()).max(1e-7);
                    assert!(rel < 1e-4, "case {case} input {j}");
                }
            }
        }
    }

    #[test]
    fn update_steps() {
        let mut net =
            DenseNetwork::from_layers(vec![Layer::from_weights(1, 2, vec![1.0, 0.0], Activation::Tanh).unwrap()])
                .unwrap();
        let mut g = net.zero_gradient();
        g.layers[0][0] = 0.5;
        net.apply_update(&g, 0.02, 1).unwrap();
        assert_eq!(net.parameter(0, 0), 0.99);
        assert_eq!(net.parameter(0, 1), 0.0);

        let before = net.clone();
        net.apply_update(&g, 0.0, 1).unwrap();
        assert_eq!(net, before);
        net.apply_update(&net.zero_gradient(), 0.02, 3).unwrap();
        assert_eq!(net, before);
        assert!(matches!(net.apply_update(&g, 0.02, 0), Err(Error::InvalidArgument(_))));

        g.layers[0][0] = f64::INFINITY;
        assert!(matches!(net.apply_update(&g, 0.02, 1), Err(Error::NonFinite(_))));
        assert_eq!(net, before);
    }

    #[test]
    fn update_divides_by_count() {
        let mut net =
            DenseNetwork::from_layers(vec![Layer::from_weights(1, 2, vec![1.0, 1.0], Activation::Tanh).unwrap()])
                .unwrap();
        let mut g = net.zero_gradient();
        g.layers[0] = vec![4.0, -2.0];
        net.apply_update(&g, 0.5, 4).unwrap();
        assert_eq!(net.layers()[0].weights(), &[0.5, 1.25]);
    }
}
