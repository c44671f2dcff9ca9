//! Input-derivative jets and parameter gradients.
//!
//! Every activation is carried as a bundle of streams: the value, the first
//! derivative along each input axis and the pure second derivative along each
//! input axis. Mixed partials are never formed. Parameter gradients are
//! obtained by a reverse sweep over the recorded stream activations.

use crate::error::{Error, Result};
use crate::network::{tanh, MlpParams};

/// Network output with its first and pure second input derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    /// `∂u/∂x_i`.
    pub grad: Vec<f64>,
    /// `∂²u/∂x_i²`.
    pub lap_terms: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Self { value, grad: vec![0.0; dim], lap_terms: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}

/// A scalar loss together with its gradient in canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// Points processed per batch. Fixed so that reductions happen in the same
/// order regardless of how many points are evaluated.
pub(crate) const BATCH: usize = 64;

/// Points per register tile. Batches are zero-padded to a multiple of this.
const LANES: usize = 16;
type Lane = [f64; LANES];

/// Reusable buffers for batched stream propagation.
///
/// Buffers are laid out `[stream][neuron][point]` so the innermost loops run
/// over contiguous points.
#[derive(Debug, Default)]
pub(crate) struct JetEngine {
    dim: usize,
    streams: usize,
    /// Live points of the last batch.
    batch: usize,
    /// Padded row length.
    width: usize,
    inputs: Vec<f64>,
    /// Pre-activations of each hidden layer.
    z: Vec<Vec<f64>>,
    /// tanh activations of each hidden layer (all streams).
    a: Vec<Vec<f64>>,
    out: Vec<f64>,
    adj: Vec<f64>,
    adj_prev: Vec<f64>,
    wt: Vec<f64>,
}

impl JetEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    /// Output stream `s` for every point of the last forward batch.
    pub fn output(&self, stream: usize) -> &[f64] {
        &self.out[stream * self.width..stream * self.width + self.batch]
    }

    /// Propagates up to [`BATCH`] points. With `derivs` false only the value
    /// stream is carried.
    pub fn forward<P: AsRef<[f64]>>(&mut self, params: &MlpParams, points: &[P], derivs: bool) -> Result<()> {
        let dim = params.input_dim();
        let batch = points.len();
        let width = batch.div_ceil(LANES) * LANES;
        let streams = if derivs { 1 + 2 * dim } else { 1 };
        self.dim = dim;
        self.streams = streams;
        self.batch = batch;
        self.width = width;

        self.inputs.clear();
        self.inputs.resize(streams * dim * width, 0.0);
        for (b, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::InputShape { expected: dim, got: p.len() });
            }
            for (k, &xk) in p.iter().enumerate() {
                self.inputs[k * width + b] = xk;
            }
        }
        if derivs {
            for i in 0..dim {
                let s = 1 + i;
                self.inputs[(s * dim + i) * width..(s * dim + i) * width + batch].fill(1.0);
            }
        }

        let layers = params.num_layers();
        let sizes = params.layer_sizes();
        self.z.resize_with(layers - 1, Vec::new);
        self.a.resize_with(layers - 1, Vec::new);
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let input: &[f64] = if l == 0 { &self.inputs } else { &self.a[l - 1] };
            let mut z = if l + 1 == layers { std::mem::take(&mut self.out) } else { std::mem::take(&mut self.z[l]) };
            affine_streams(params.weights(l), Some(params.biases(l)), n_in, n_out, streams, width, input, &mut z);
            if l + 1 == layers {
                self.out = z;
            } else {
                let mut a = std::mem::take(&mut self.a[l]);
                tanh_streams(&z, dim, n_out, width, derivs, &mut a);
                self.z[l] = z;
                self.a[l] = a;
            }
        }
        Ok(())
    }

    /// Accumulates `Σ_b Σ_s seeds[s][b] · ∂out_s(b)/∂θ` into `grad`.
    /// `seeds` has the `[stream][point]` layout of the outputs of the
    /// preceding [`JetEngine::forward`] call.
    pub fn backward(&mut self, params: &MlpParams, seeds: &[f64], grad: &mut [f64]) {
        let (streams, batch, width, dim) = (self.streams, self.batch, self.width, self.dim);
        assert_eq!(seeds.len(), streams * batch);
        let derivs = streams > 1;
        let layers = params.num_layers();
        let sizes = params.layer_sizes();

        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        // Padded points carry zero adjoints and so contribute nothing.
        self.adj.clear();
        self.adj.resize(streams * width, 0.0);
        for s in 0..streams {
            self.adj[s * width..s * width + batch].copy_from_slice(&seeds[s * batch..(s + 1) * batch]);
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let input: &[f64] = if l == 0 { &self.inputs } else { &self.a[l - 1] };
            let (gw, gb) = grad[offsets[l]..offsets[l] + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            weight_gradient(&self.adj, input, n_in, n_out, streams, width, gw, gb);
            if l == 0 {
                break;
            }

            // Adjoint of the previous layer's activations.
            let w = params.weights(l);
            self.wt.clear();
            self.wt.extend((0..n_in).flat_map(|k| (0..n_out).map(move |j| w[j * n_in + k])));
            affine_streams(&self.wt, None, n_out, n_in, streams, width, &self.adj, &mut self.adj_prev);
            // Through the tanh stream map of hidden layer l-1 (width n_in).
            tanh_streams_backward(&self.z[l - 1], &self.a[l - 1], dim, n_in, width, derivs, &mut self.adj_prev);
            std::mem::swap(&mut self.adj, &mut self.adj_prev);
        }
    }
}

#[inline(always)]
fn lane(v: &[f64], at: usize) -> &Lane {
    v[at..at + LANES].try_into().unwrap()
}

/// `z[s][j] = bias[j]·[s == 0] + Σ_k w[j][k]·input[s][k]`, summed in `k` order.
#[allow(clippy::too_many_arguments)]
fn affine_streams(
    w: &[f64],
    bias: Option<&[f64]>,
    n_in: usize,
    n_out: usize,
    streams: usize,
    width: usize,
    input: &[f64],
    z: &mut Vec<f64>,
) {
    // Every entry is overwritten below.
    z.resize(streams * n_out * width, 0.0);
    for s in 0..streams {
        let src = &input[s * n_in * width..(s + 1) * n_in * width];
        let dst = &mut z[s * n_out * width..(s + 1) * n_out * width];
        let bias = if s == 0 { bias } else { None };
        let mut j = 0;
        while j + 4 <= n_out {
            affine_tile::<4>(w, bias, n_in, j, width, src, dst);
            j += 4;
        }
        while j < n_out {
            affine_tile::<1>(w, bias, n_in, j, width, src, dst);
            j += 1;
        }
    }
}

#[inline(always)]
fn affine_tile<const J: usize>(w: &[f64], bias: Option<&[f64]>, n_in: usize, j0: usize, width: usize, src: &[f64], dst: &mut [f64]) {
    let rows: [&[f64]; J] = std::array::from_fn(|jj| &w[(j0 + jj) * n_in..(j0 + jj + 1) * n_in]);
    let src = &src[..n_in * width];
    for p in (0..width).step_by(LANES) {
        let mut acc = [[0.0; LANES]; J];
        if let Some(b) = bias {
            for (jj, row) in acc.iter_mut().enumerate() {
                *row = [b[j0 + jj]; LANES];
            }
        }
        for k in 0..n_in {
            let x = lane(src, k * width + p);
            for (row, wr) in acc.iter_mut().zip(&rows) {
                let wk = wr[k];
                for i in 0..LANES {
                    row[i] += wk * x[i];
                }
            }
        }
        for (jj, row) in acc.iter().enumerate() {
            dst[(j0 + jj) * width + p..(j0 + jj) * width + p + LANES].copy_from_slice(row);
        }
    }
}

/// Adds `Σ_s Σ_b adj[s][j][b]·input[s][k][b]` to `gw[j][k]` and the value
/// stream sums of `adj` to `gb`.
#[allow(clippy::too_many_arguments)]
fn weight_gradient(adj: &[f64], input: &[f64], n_in: usize, n_out: usize, streams: usize, width: usize, gw: &mut [f64], gb: &mut [f64]) {
    for j in 0..n_out {
        let mut acc = [0.0; LANES];
        for p in (0..width).step_by(LANES) {
            let g = lane(adj, j * width + p);
            for i in 0..LANES {
                acc[i] += g[i];
            }
        }
        gb[j] += reduce(&acc);

        let mut k = 0;
        while k + 4 <= n_in {
            let sums = gradient_tile::<4>(adj, input, n_in, n_out, streams, width, j, k);
            for (kk, v) in sums.iter().enumerate() {
                gw[j * n_in + k + kk] += v;
            }
            k += 4;
        }
        while k < n_in {
            gw[j * n_in + k] += gradient_tile::<1>(adj, input, n_in, n_out, streams, width, j, k)[0];
            k += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn gradient_tile<const K: usize>(
    adj: &[f64],
    input: &[f64],
    n_in: usize,
    n_out: usize,
    streams: usize,
    width: usize,
    j: usize,
    k0: usize,
) -> [f64; K] {
    let mut acc = [[0.0; LANES]; K];
    for s in 0..streams {
        for p in (0..width).step_by(LANES) {
            let g = lane(adj, (s * n_out + j) * width + p);
            for (kk, row) in acc.iter_mut().enumerate() {
                let x = lane(input, (s * n_in + k0 + kk) * width + p);
                for i in 0..LANES {
                    row[i] += g[i] * x[i];
                }
            }
        }
    }
    let mut out = [0.0; K];
    for (o, row) in out.iter_mut().zip(&acc) {
        *o = reduce(row);
    }
    out
}

#[inline(always)]
fn reduce(v: &Lane) -> f64 {
    // Fixed pairwise tree.
    let mut h = *v;
    let mut n = LANES;
    while n > 1 {
        n /= 2;
        for i in 0..n {
            h[i] += h[i + n];
        }
    }
    h[0]
}

fn tanh_streams(z: &[f64], dim: usize, width: usize, batch: usize, derivs: bool, a: &mut Vec<f64>) {
    let streams = if derivs { 1 + 2 * dim } else { 1 };
    // Every entry is overwritten below.
    a.resize(streams * width * batch, 0.0);
    let plane = width * batch;
    for (t, &zv) in a[..plane].iter_mut().zip(&z[..plane]) {
        *t = tanh(zv);
    }
    if !derivs {
        return;
    }
    let (values, rest) = a.split_at_mut(plane);
    let (grads, laps) = rest.split_at_mut(dim * plane);
    for i in 0..dim {
        let zg = &z[(1 + i) * plane..(2 + i) * plane];
        let zl = &z[(1 + dim + i) * plane..(2 + dim + i) * plane];
        let ag = &mut grads[i * plane..(i + 1) * plane];
        let al = &mut laps[i * plane..(i + 1) * plane];
        for idx in 0..plane {
            let t = values[idx];
            let s1 = 1.0 - t * t;
            let s2 = -2.0 * t * s1;
            ag[idx] = s1 * zg[idx];
            al[idx] = s2 * zg[idx] * zg[idx] + s1 * zl[idx];
        }
    }
}

/// Maps activation adjoints (in place) to pre-activation adjoints.
fn tanh_streams_backward(z: &[f64], a: &[f64], dim: usize, width: usize, batch: usize, derivs: bool, adj: &mut [f64]) {
    let plane = width * batch;
    let (adj_v, rest) = adj.split_at_mut(plane);
    let values = &a[..plane];
    if !derivs {
        for (g, &t) in adj_v.iter_mut().zip(values) {
            *g *= 1.0 - t * t;
        }
        return;
    }
    let (adj_g, adj_l) = rest.split_at_mut(dim * plane);
    // The value adjoint collects contributions from every axis, so it is
    // updated last.
    let mut acc: Vec<f64> = adj_v.iter().zip(values).map(|(g, &t)| g * (1.0 - t * t)).collect();
    for i in 0..dim {
        let zg = &z[(1 + i) * plane..(2 + i) * plane];
        let zl = &z[(1 + dim + i) * plane..(2 + dim + i) * plane];
        let ag = &mut adj_g[i * plane..(i + 1) * plane];
        let al = &mut adj_l[i * plane..(i + 1) * plane];
        for idx in 0..plane {
            let t = values[idx];
            let s1 = 1.0 - t * t;
            let s2 = -2.0 * t * s1;
            let s3 = -2.0 * s1 * s1 + 4.0 * t * t * s1;
            let (g, l, zgi) = (ag[idx], al[idx], zg[idx]);
            acc[idx] += g * s2 * zgi + l * (s3 * zgi * zgi + s2 * zl[idx]);
            ag[idx] = g * s1 + l * 2.0 * s2 * zgi;
            al[idx] = l * s1;
        }
    }
    adj_v.copy_from_slice(&acc);
}

/// Evaluates the network and its input derivatives at one point.
pub fn eval_jet(params: &MlpParams, x: &[f64]) -> Result<Jet2> {
    let mut engine = JetEngine::new();
    engine.forward(params, &[x], true)?;
    Ok(engine_jet(&engine, 0))
}

/// Jets at many points, evaluated in batches.
pub fn eval_jets<P: AsRef<[f64]>>(params: &MlpParams, points: &[P]) -> Result<Vec<Jet2>> {
    let mut engine = JetEngine::new();
    let mut jets = Vec::with_capacity(points.len());
    for chunk in points.chunks(BATCH) {
        engine.forward(params, chunk, true)?;
        jets.extend((0..chunk.len()).map(|b| engine_jet(&engine, b)));
    }
    Ok(jets)
}

/// Network values at many points; bit-identical to [`MlpParams::forward`].
pub fn forward_batch<P: AsRef<[f64]>>(params: &MlpParams, points: &[P]) -> Result<Vec<f64>> {
    let mut engine = JetEngine::new();
    let mut values = Vec::with_capacity(points.len());
    for chunk in points.chunks(BATCH) {
        engine.forward(params, chunk, false)?;
        values.extend_from_slice(engine.output(0));
    }
    Ok(values)
}

fn engine_jet(engine: &JetEngine, b: usize) -> Jet2 {
    let dim = engine.dim;
    Jet2 {
        value: engine.output(0)[b],
        grad: (0..dim).map(|i| engine.output(1 + i)[b]).collect(),
        lap_terms: (0..dim).map(|i| engine.output(1 + dim + i)[b]).collect(),
    }
}

/// Handle to a scalar recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Jet outputs recorded on a tape.
#[derive(Debug, Clone)]
pub struct JetVars {
    pub value: Var,
    pub grad: Vec<Var>,
    pub lap_terms: Vec<Var>,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    /// Constant or network output; network outputs get their parameter
    /// adjoints from the network record that produced them.
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
}

impl Op {
    fn label(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
        }
    }
}

#[derive(Debug)]
struct NetRecord {
    point: Vec<f64>,
    derivs: bool,
    /// Tape slots of the output streams, in engine stream order.
    outputs: Vec<usize>,
}

/// Reverse-mode recorder for scalar losses built from network evaluations.
pub struct Tape<'p> {
    params: &'p MlpParams,
    ops: Vec<Op>,
    values: Vec<f64>,
    records: Vec<NetRecord>,
    engine: JetEngine,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p MlpParams) -> Self {
        Self { params, ops: Vec::new(), values: Vec::new(), records: Vec::new(), engine: JetEngine::new() }
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Leaf, c)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] + self.values[b.0];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] - self.values[b.0];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] * self.values[b.0];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.values[a.0] * c;
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let mut acc = self.constant(0.0);
        for &t in terms {
            acc = self.add(acc, t);
        }
        acc
    }

    /// Records a plain network evaluation at `x`.
    pub fn forward(&mut self, x: &[f64]) -> Result<Var> {
        self.engine.forward(self.params, &[x], false)?;
        let v = self.engine.output(0)[0];
        let var = self.push(Op::Leaf, v);
        self.records.push(NetRecord { point: x.to_vec(), derivs: false, outputs: vec![var.0] });
        Ok(var)
    }

    /// Records a jet evaluation at `x`.
    pub fn jet(&mut self, x: &[f64]) -> Result<JetVars> {
        self.engine.forward(self.params, &[x], true)?;
        let streams = self.engine.streams();
        let outs: Vec<f64> = (0..streams).map(|s| self.engine.output(s)[0]).collect();
        let vars: Vec<Var> = outs.into_iter().map(|v| self.push(Op::Leaf, v)).collect();
        self.records.push(NetRecord { point: x.to_vec(), derivs: true, outputs: vars.iter().map(|v| v.0).collect() });
        let dim = x.len();
        Ok(JetVars { value: vars[0], grad: vars[1..=dim].to_vec(), lap_terms: vars[1 + dim..].to_vec() })
    }

    fn backward(mut self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.ops.len()];
        adj[root.0] = 1.0;
        for i in (0..self.ops.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub(a, b) => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.values[a], self.values[b]);
                    adj[a] += g * vb;
                    adj[b] += g * va;
                }
                Op::Scale(a, c) => adj[a] += g * c,
            }
        }
        let mut grad = vec![0.0; self.params.num_params()];
        for rec in &self.records {
            let seeds: Vec<f64> = rec.outputs.iter().map(|&slot| adj[slot]).collect();
            if seeds.iter().all(|&s| s == 0.0) {
                continue;
            }
            // Point was validated when recorded.
            self.engine.forward(self.params, &[rec.point.as_slice()], rec.derivs).expect("recorded point");
            self.engine.backward(self.params, &seeds, &mut grad);
        }
        grad
    }
}

/// Evaluates the loss built by `build` on a fresh tape and returns it with its
/// exact gradient with respect to every network parameter.
pub fn loss_gradient<F>(params: &MlpParams, build: F) -> Result<LossGrad>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let root = build(&mut tape)?;
    let loss = tape.value(root);
    if !loss.is_finite() {
        let culprit = tape.values.iter().position(|v| !v.is_finite()).unwrap_or(root.0);
        return Err(Error::NonFinite(format!("loss term at tape node {culprit} ({})", tape.ops[culprit].label())));
    }
    let gradient = tape.backward(root);
    Ok(LossGrad { loss, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(dim: usize, depth: usize, width: usize, seed: u64) -> MlpParams {
        // Non-zero biases so that every code path is exercised.
        let p = MlpParams::init(NetworkShape::new(dim, depth, width).unwrap(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let flat: Vec<f64> = p.to_flat().into_iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        MlpParams::from_flat(p.layer_sizes(), &flat).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1.0)
    }

    #[test]
    fn zero_network_jet_is_constant() {
        let shape = NetworkShape::new(2, 2, 3).unwrap();
        let mut flat = vec![0.0; MlpParams::zeros(shape).num_params()];
        *flat.last_mut().unwrap() = 0.75;
        let p = MlpParams::from_flat(&shape.layer_sizes(), &flat).unwrap();
        assert_eq!(eval_jet(&p, &[0.2, 0.4]).unwrap(), Jet2::constant(0.75, 2));
    }

    #[test]
    fn unit_tanh_jet_at_origin() {
        let p = MlpParams::from_parts(vec![1, 1, 1], vec![vec![1.0], vec![1.0]], vec![vec![0.0], vec![0.0]]).unwrap();
        let j = eval_jet(&p, &[0.0]).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad, vec![1.0]);
        assert_eq!(j.lap_terms, vec![0.0]);
    }

    #[test]
    fn jet_value_matches_forward_bitwise() {
        let p = random_net(3, 3, 7, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..150).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let jets = eval_jets(&p, &pts).unwrap();
        let values = forward_batch(&p, &pts).unwrap();
        for ((x, j), v) in pts.iter().zip(&jets).zip(&values) {
            let f = p.forward(x).unwrap();
            assert_eq!(j.value.to_bits(), f.to_bits());
            assert_eq!(v.to_bits(), f.to_bits());
            assert_eq!(eval_jet(&p, x).unwrap(), *j);
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let h = 1e-4;
        for (dim, seed) in [(1usize, 1u64), (2, 2), (3, 3)] {
            let p = random_net(dim, 2, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..50 {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                let j = eval_jet(&p, &x).unwrap();
                let f0 = p.forward(&x).unwrap();
                for i in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let (fp, fm) = (p.forward(&xp).unwrap(), p.forward(&xm).unwrap());
                    assert!(close(j.grad[i], (fp - fm) / (2.0 * h), 1e-5));
                    assert!(close(j.lap_terms[i], (fp - 2.0 * f0 + fm) / (h * h), 1e-5));
                }
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = random_net(1, 2, 4, 9);
        let lg = loss_gradient(&p, |t| Ok(t.constant(3.5))).unwrap();
        assert_eq!(lg.loss, 3.5);
        assert!(lg.gradient.iter().all(|&g| g == 0.0));
        assert_eq!(lg.gradient.len(), p.num_params());
    }

    fn fd_gradient(p: &MlpParams, f: impl Fn(&MlpParams) -> f64) -> Vec<f64> {
        let h = 1e-4;
        let flat = p.to_flat();
        (0..flat.len())
            .map(|i| {
                let mut up = flat.clone();
                let mut dn = flat.clone();
                up[i] += h;
                dn[i] -= h;
                let fp = f(&MlpParams::from_flat(p.layer_sizes(), &up).unwrap());
                let fm = f(&MlpParams::from_flat(p.layer_sizes(), &dn).unwrap());
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn squared_output_gradient_matches_fd() {
        let p = random_net(2, 2, 5, 21);
        let x0 = [0.3, 0.8];
        let lg = loss_gradient(&p, |t| {
            let u = t.forward(&x0)?;
            Ok(t.square(u))
        })
        .unwrap();
        let fd = fd_gradient(&p, |q| q.forward(&x0).unwrap().powi(2));
        for (a, b) in lg.gradient.iter().zip(&fd) {
            assert!(close(*a, *b, 1e-5), "{a} vs {b}");
        }
    }

    #[test]
    fn jet_loss_gradient_matches_fd() {
        // Mixes every stream so each adjoint path is checked.
        let p = random_net(2, 2, 5, 33);
        let pts = [[0.1, 0.7], [0.5, 0.5], [0.9, 0.2]];
        let build = |t: &mut Tape<'_>| -> Result<Var> {
            let mut terms = Vec::new();
            for x in &pts {
                let j = t.jet(x)?;
                let a = t.scale(j.lap_terms[0], -0.1);
                let b = t.scale(j.lap_terms[1], 0.3);
                let c = t.scale(j.grad[0], 0.7);
                let d = t.mul(j.grad[1], j.value);
                let s1 = t.add(a, b);
                let s2 = t.sub(c, d);
                let r = t.add(s1, s2);
                terms.push(t.square(r));
            }
            Ok(t.sum(&terms))
        };
        let lg = loss_gradient(&p, build).unwrap();
        let fd = fd_gradient(&p, |q| loss_gradient(q, build).unwrap().loss);
        for (a, b) in lg.gradient.iter().zip(&fd) {
            assert!(close(*a, *b, 1e-5), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_is_linear_in_loss_scale() {
        let p = random_net(1, 3, 4, 2);
        let base = |t: &mut Tape<'_>| -> Result<Var> {
            let j = t.jet(&[0.4])?;
            let r = t.sub(j.lap_terms[0], j.value);
            Ok(t.square(r))
        };
        let g1 = loss_gradient(&p, base).unwrap();
        let g2 = loss_gradient(&p, |t| {
            let l = base(t)?;
            Ok(t.scale(l, 2.0))
        })
        .unwrap();
        for (a, b) in g1.gradient.iter().zip(&g2.gradient) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let p = random_net(1, 1, 2, 1);
        let err = loss_gradient(&p, |t| {
            let u = t.forward(&[0.5])?;
            Ok(t.scale(u, f64::INFINITY))
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = random_net(2, 1, 2, 1);
        assert!(matches!(eval_jet(&p, &[0.5]), Err(Error::InputShape { .. })));
    }
}
