use std::fmt::Write as _;
use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// Width of both hidden layers.
pub const HIDDEN_UNITS: usize = 128;

/// Affine layer `y = x · W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Dense {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..=bound));
        Dense { weights, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Dense {
        Dense {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Multi-layer perceptron: ReLU between layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Layer inputs recorded by [`Mlp::forward`]; `inputs[0]` is the batch itself.
/// Hidden inputs are post-ReLU, so their sign encodes the ReLU mask.
/// Buffers are reused by [`Mlp::forward_into`] while the batch shape holds.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Reusable per-layer error buffers for backward passes.
#[derive(Debug, Clone, Default)]
pub struct Deltas {
    dz: Vec<Array2<f64>>,
}

fn ensure_shape(a: &mut Array2<f64>, shape: (usize, usize)) {
    if a.dim() != shape {
        *a = Array2::zeros(shape);
    }
}

fn relu_mask(da: &mut Array2<f64>, a: &ArrayView2<f64>) {
    Zip::from(da).and(a).for_each(|d, &act| {
        if act <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Per-layer `(dW, db)` with the same shapes as the network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    out
}

impl Mlp {
    /// Random network with the given layer sizes (`[input, hidden.., output]`).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        })
    }

    /// `input → 128 → 128 → output`.
    pub fn two_hidden<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Mlp> {
        Mlp::new(&[input, HIDDEN_UNITS, HIDDEN_UNITS, output], rng)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Shape {
                    expected: w[0].fan_out(),
                    actual: w[1].fan_in(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Shape {
                    expected: l.fan_out(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].fan_in()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes()
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let mut cache = ForwardCache::default();
        self.forward_into(x, &mut cache)?;
        let out = std::mem::take(&mut cache.output);
        Ok((out, cache))
    }

    /// [`forward`](Self::forward) into a reusable cache; the result is
    /// [`ForwardCache::output`].
    pub fn forward_into(&self, x: ArrayView2<f64>, cache: &mut ForwardCache) -> Result<()> {
        if x.ncols() != self.input_size() {
            return Err(Error::Shape {
                expected: self.input_size(),
                actual: x.ncols(),
            });
        }
        let n = x.nrows();
        let last = self.layers.len() - 1;
        cache
            .inputs
            .resize_with(self.layers.len(), || Array2::zeros((0, 0)));
        ensure_shape(&mut cache.inputs[0], x.dim());
        cache.inputs[0].assign(&x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.inputs.split_at_mut(i + 1);
            let z = if i < last {
                &mut rest[0]
            } else {
                &mut cache.output
            };
            ensure_shape(z, (n, layer.fan_out()));
            general_mat_mul(1.0, &done[i], &layer.weights, 0.0, z);
            *z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(())
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_size() {
            return Err(Error::Shape {
                expected: self.input_size(),
                actual: x.ncols(),
            });
        }
        let mut a = x.dot(&self.layers[0].weights);
        a += &self.layers[0].bias;
        for layer in &self.layers[1..] {
            a.mapv_inplace(|v| v.max(0.0));
            a = a.dot(&layer.weights);
            a += &layer.bias;
        }
        Ok(a)
    }

    /// Single-sample convenience wrapper around [`predict`](Self::predict).
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::Shape {
            expected: self.input_size(),
            actual: x.len(),
        })?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse-mode gradients of a scalar loss whose derivative with respect
    /// to the outputs is `d_out` (same shape as the forward output).
    ///
    /// Uses only cache rows in `rows`, so a single stacked forward pass can
    /// serve several losses.
    pub fn backward_rows(
        &self,
        cache: &ForwardCache,
        rows: Range<usize>,
        d_out: ArrayView2<f64>,
    ) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        self.backward_rows_into(cache, rows, d_out, &mut grads, &mut Deltas::default());
        grads
    }

    /// [`backward_rows`](Self::backward_rows) into reusable buffers.
    pub fn backward_rows_into(
        &self,
        cache: &ForwardCache,
        rows: Range<usize>,
        d_out: ArrayView2<f64>,
        grads: &mut Gradients,
        deltas: &mut Deltas,
    ) {
        let same = grads.layers.len() == self.layers.len()
            && grads
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim());
        if !same {
            *grads = Gradients::zeros_like(self);
        }
        let top = self.seed_deltas(d_out, deltas);
        for i in (0..=top).rev() {
            let a = cache.inputs[i].slice(s![rows.clone(), ..]);
            let (below, here) = deltas.dz.split_at_mut(i);
            let dz = &here[0];
            let g = &mut grads.layers[i];
            general_mat_mul(1.0, &a.t(), dz, 0.0, &mut g.weights);
            g.bias.assign(&dz.sum_axis(Axis(0)));
            if i > 0 {
                let da = &mut below[i - 1];
                ensure_shape(da, (rows.len(), self.layers[i].fan_in()));
                general_mat_mul(1.0, dz, &self.layers[i].weights.t(), 0.0, da);
                relu_mask(da, &a);
            }
        }
    }

    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Gradients {
        self.backward_rows(cache, 0..cache.batch_size(), d_out)
    }

    /// Gradient of the loss with respect to input columns `cols`, for cache
    /// rows `rows`. No parameter gradients are formed.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        rows: Range<usize>,
        cols: Range<usize>,
        d_out: ArrayView2<f64>,
    ) -> Array2<f64> {
        self.input_gradient_with(cache, rows, cols, d_out, &mut Deltas::default())
    }

    /// [`input_gradient`](Self::input_gradient) with reusable error buffers.
    pub fn input_gradient_with(
        &self,
        cache: &ForwardCache,
        rows: Range<usize>,
        cols: Range<usize>,
        d_out: ArrayView2<f64>,
        deltas: &mut Deltas,
    ) -> Array2<f64> {
        let top = self.seed_deltas(d_out, deltas);
        for i in (1..=top).rev() {
            let a = cache.inputs[i].slice(s![rows.clone(), ..]);
            let (below, here) = deltas.dz.split_at_mut(i);
            let da = &mut below[i - 1];
            ensure_shape(da, (rows.len(), self.layers[i].fan_in()));
            general_mat_mul(1.0, &here[0], &self.layers[i].weights.t(), 0.0, da);
            relu_mask(da, &a);
        }
        deltas.dz[0].dot(&self.layers[0].weights.slice(s![cols, ..]).t())
    }

    /// Copy `d_out` into the top delta buffer; returns the top layer index.
    fn seed_deltas(&self, d_out: ArrayView2<f64>, deltas: &mut Deltas) -> usize {
        let top = self.layers.len() - 1;
        deltas
            .dz
            .resize_with(self.layers.len(), || Array2::zeros((0, 0)));
        ensure_shape(&mut deltas.dz[top], d_out.dim());
        deltas.dz[top].assign(&d_out);
        top
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                actual: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .for_each(|w| *w = it.next().unwrap_or_default());
            l.bias
                .iter_mut()
                .for_each(|b| *b = it.next().unwrap_or_default());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for l in &self.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// `θ ← (1 − β)·θ + β·mean(others)`, elementwise. No-op for an empty slice.
    pub fn blend_toward_mean(&mut self, others: &[&Mlp], beta: f64) -> Result<()> {
        if others.is_empty() {
            return Ok(());
        }
        if let Some(bad) = others.iter().find(|o| !self.same_shape(o)) {
            return Err(Error::Protocol(format!(
                "parameter shape mismatch: {:?} vs {:?}",
                self.sizes(),
                bad.sizes()
            )));
        }
        let k = others.len() as f64;
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let mut mean_w = Array2::<f64>::zeros(layer.weights.raw_dim());
            let mut mean_b = Array1::<f64>::zeros(layer.bias.raw_dim());
            for o in others {
                mean_w += &o.layers[li].weights;
                mean_b += &o.layers[li].bias;
            }
            Zip::from(&mut layer.weights)
                .and(&mean_w)
                .for_each(|w, &m| *w += beta * (m / k - *w));
            Zip::from(&mut layer.bias)
                .and(&mean_b)
                .for_each(|b, &m| *b += beta * (m / k - *b));
        }
        Ok(())
    }

    /// Text form: a `sizes,...` header then one parameter per line.
    pub fn to_csv(&self) -> String {
        let sizes: Vec<String> = self.sizes().iter().map(ToString::to_string).collect();
        let mut out = format!("sizes,{}\n", sizes.join(","));
        for v in self.to_flat() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Mlp> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty parameter file".into(),
        })?;
        let sizes = header
            .strip_prefix("sizes,")
            .ok_or(Error::Parse {
                line: 1,
                msg: "missing `sizes,` header".into(),
            })?
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?;
        let values = lines
            .map(|(n, l)| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: n + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut net = Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        };
        net.set_flat(&values)?;
        Ok(net)
    }
}

/// `target ← (1 − τ)·target + τ·online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape {
            expected: target.param_count(),
            actual: online.param_count(),
        });
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::from_layers(vec![
            Dense::zeros(6, 4),
            Dense::zeros(4, 4),
            Dense::zeros(4, 3),
        ])
        .unwrap();
        let x = Array::from_shape_fn((2, 6), |(i, j)| (i + j) as f64);
        let (y, _) = net.forward(x.view()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
        assert_eq!(y.dim(), (2, 3));
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::from_layers(vec![Dense {
            weights: array![[2.0]],
            bias: array![1.0],
        }])
        .unwrap();
        assert_eq!(net.predict_one(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::new(&[4, 3, 2], &mut rng()).unwrap();
        assert!(net.forward(Array2::zeros((1, 5)).view()).is_err());
        assert!(net.predict_one(&[0.0; 3]).is_err());
    }

    #[test]
    fn actor_and_critic_shapes() {
        let actor = Mlp::two_hidden(160, 5, &mut rng()).unwrap();
        let critic = Mlp::two_hidden(176, 1, &mut rng()).unwrap();
        assert_eq!(actor.sizes(), vec![160, 128, 128, 5]);
        assert_eq!(critic.sizes(), vec![176, 128, 128, 1]);
        let y = actor
            .predict(Array2::from_elem((3, 160), 0.5).view())
            .unwrap();
        assert_eq!(y.dim(), (3, 5));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Mlp::new(&[5, 4, 4, 2], &mut rng()).unwrap();
        let x = Array2::from_elem((3, 5), 0.3);
        let (_, cache) = net.forward(x.view()).unwrap();
        let g = net.backward(&cache, Array2::zeros((3, 2)).view());
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // Hidden unit 0 has a large negative bias so it never activates.
        let mut l1 = Dense::zeros(1, 2);
        l1.weights = array![[1.0, 1.0]];
        l1.bias = array![-100.0, 0.0];
        let l2 = Dense {
            weights: array![[3.0], [5.0]],
            bias: array![0.0],
        };
        let net = Mlp::from_layers(vec![l1, l2]).unwrap();
        let (_, cache) = net.forward(array![[2.0]].view()).unwrap();
        let g = net.backward(&cache, array![[1.0]].view());
        assert_eq!(g.layers[0].weights[[0, 0]], 0.0);
        assert_eq!(g.layers[0].bias[0], 0.0);
        assert_eq!(g.layers[0].weights[[0, 1]], 10.0);
        assert_eq!(g.layers[1].weights[[0, 0]], 0.0);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = Mlp::new(&[6, 5, 5, 1], &mut rng()).unwrap();
        let x = Array::from_shape_fn((1, 6), |(_, j)| 0.1 * j as f64 - 0.2);
        let (_, cache) = net.forward(x.view()).unwrap();
        let g = net.input_gradient(&cache, 0..1, 2..5, array![[1.0]].view());
        let h = 1e-6;
        for (k, col) in (2..5).enumerate() {
            let mut xp = x.clone();
            xp[[0, col]] += h;
            let mut xm = x.clone();
            xm[[0, col]] -= h;
            let fd = (net.predict(xp.view()).unwrap()[[0, 0]]
                - net.predict(xm.view()).unwrap()[[0, 0]])
                / (2.0 * h);
            assert!(
                (fd - g[[0, k]]).abs() < 1e-7,
                "col {col}: {fd} vs {}",
                g[[0, k]]
            );
        }
    }

    #[test]
    fn soft_update_endpoints() {
        let online = Mlp::new(&[3, 2], &mut rng()).unwrap();
        let mut target = Mlp::new(&[3, 2], &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let orig = target.clone();
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, orig);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);

        let mut t = Mlp::from_layers(vec![Dense::zeros(1, 1)]).unwrap();
        let o = Mlp::from_layers(vec![Dense {
            weights: array![[1.0]],
            bias: array![1.0],
        }])
        .unwrap();
        soft_update(&mut t, &o, 1e-3).unwrap();
        assert_eq!(t.to_flat(), vec![0.001, 0.001]);
        assert!(soft_update(&mut t, &online, 0.5).is_err());
    }

    #[test]
    fn blend_examples() {
        let mk = |v: &[f64]| {
            let mut n = Mlp::from_layers(vec![Dense::zeros(1, v.len() - 1)]).unwrap();
            n.set_flat(v).unwrap();
            n
        };
        let mut me = mk(&[1.0, 2.0]);
        let peer = mk(&[3.0, 4.0]);
        me.blend_toward_mean(&[&peer], 0.1).unwrap();
        let got = me.to_flat();
        assert_eq!(got, vec![1.2, 2.2]);

        let mut me = mk(&[1.0, 1.0]);
        me.blend_toward_mean(&[&mk(&[0.0, 0.0]), &mk(&[2.0, 2.0])], 0.5)
            .unwrap();
        assert_eq!(me.to_flat(), vec![1.0, 1.0]);

        let mut me = mk(&[1.0, 2.0]);
        let before = me.clone();
        me.blend_toward_mean(&[&peer], 0.0).unwrap();
        assert_eq!(me, before);
        me.blend_toward_mean(&[], 0.7).unwrap();
        assert_eq!(me, before);
        let wider = Mlp::from_layers(vec![Dense::zeros(2, 1)]).unwrap();
        assert!(me.blend_toward_mean(&[&wider], 0.1).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let net = Mlp::new(&[4, 3, 2], &mut rng()).unwrap();
        let back = Mlp::from_csv(&net.to_csv()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.fingerprint(), net.fingerprint());
        assert!(Mlp::from_csv("sizes,4,3\n1.0\n").is_err());
        assert!(Mlp::from_csv("4,3\n").is_err());
    }
}
