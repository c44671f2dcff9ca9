//! Fully connected feed-forward network with tanh hidden activations and an
//! affine output layer.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Architecture of a scalar-output network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_layers: usize, hidden_width: usize) -> Result<Self> {
        if !(1..=3).contains(&input_dim) {
            return Err(Error::Config(format!("input_dim must be 1, 2 or 3, got {input_dim}")));
        }
        if hidden_layers == 0 || hidden_width == 0 {
            return Err(Error::Config(
                "network needs at least one hidden layer of positive width".into(),
            ));
        }
        Ok(Self { input_dim, hidden_layers, hidden_width })
    }

    /// `[n_0, n_1, ..., n_s]` with `n_s = 1`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 2);
        sizes.push(self.input_dim);
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// Weights and biases of every affine layer.
///
/// `weights[l]` is stored row-major with shape `layer_sizes[l + 1] x layer_sizes[l]`.
/// The canonical flat ordering used by the optimizer and by gradients is
/// layer by layer, weights (row-major) followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Config(format!(
                "expected {layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].len() != n_in * n_out {
                return Err(Error::InputShape { expected: n_in * n_out, got: weights[l].len() });
            }
            if biases[l].len() != n_out {
                return Err(Error::InputShape { expected: n_out, got: biases[l].len() });
            }
        }
        let params = Self { layer_sizes, weights, biases };
        if !params.weights.iter().chain(&params.biases).flatten().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(params)
    }

    /// All-zero parameters for the given shape.
    pub fn zeros(shape: NetworkShape) -> Self {
        let layer_sizes = shape.layer_sizes();
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self { layer_sizes, weights, biases }
    }

    /// Glorot-uniform weights and zero biases, drawn from a ChaCha8 stream
    /// seeded with `seed`.
    pub fn init(shape: NetworkShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(shape);
        for (l, w) in params.weights.iter_mut().enumerate() {
            let fan_in = params.layer_sizes[l] as f64;
            let fan_out = params.layer_sizes[l + 1] as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Number of affine layers `s`.
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat
    }

    pub fn from_flat(layer_sizes: &[usize], flat: &[f64]) -> Result<Self> {
        let expected = param_count(layer_sizes);
        if flat.len() != expected {
            return Err(Error::InputShape { expected, got: flat.len() });
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let nw = w[0] * w[1];
            weights.push(flat[offset..offset + nw].to_vec());
            offset += nw;
            biases.push(flat[offset..offset + w[1]].to_vec());
            offset += w[1];
        }
        Self::from_parts(layer_sizes.to_vec(), weights, biases)
    }

    /// Plain network evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::InputShape { expected: self.input_dim(), got: x.len() });
        }
        let last = self.num_layers() - 1;
        let mut act = x.to_vec();
        let mut next = Vec::new();
        for l in 0..=last {
            let n_in = self.layer_sizes[l];
            let w = &self.weights[l];
            next.clear();
            for (j, &b) in self.biases[l].iter().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut z = b;
                for (wk, ak) in row.iter().zip(&act) {
                    z += wk * ak;
                }
                next.push(if l == last { z } else { tanh(z) });
            }
            std::mem::swap(&mut act, &mut next);
        }
        Ok(act[0])
    }

    /// Serialises to the line-oriented checkpoint text format. Every value is
    /// written with 17 significant digits, so reading it back is lossless.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::from("# papinn checkpoint v1\n");
        let sizes: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "layer_sizes = {}", sizes.join(" "));
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(out, "[layer {}]", l + 1);
            let _ = writeln!(out, "weights = {}", join_exact(w));
            let _ = writeln!(out, "biases = {}", join_exact(b));
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut layer_sizes: Option<Vec<usize>> = None;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let parse_err = |e: &dyn std::fmt::Display| Error::Parse(format!("line {}: {e}", lineno + 1));
            match key.trim() {
                "layer_sizes" => {
                    let sizes = value
                        .split_whitespace()
                        .map(|s| s.parse::<usize>().map_err(|e| parse_err(&e)))
                        .collect::<Result<Vec<_>>>()?;
                    layer_sizes = Some(sizes);
                }
                "weights" | "biases" => {
                    let vals = value
                        .split_whitespace()
                        .map(|s| s.parse::<f64>().map_err(|e| parse_err(&e)))
                        .collect::<Result<Vec<_>>>()?;
                    if key.trim() == "weights" {
                        weights.push(vals);
                    } else {
                        biases.push(vals);
                    }
                }
                other => return Err(Error::Parse(format!("line {}: unknown key {other}", lineno + 1))),
            }
        }
        let layer_sizes = layer_sizes.ok_or_else(|| Error::Parse("missing layer_sizes".into()))?;
        Self::from_parts(layer_sizes, weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn join_exact(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

/// Hyperbolic tangent within a few ulp of the correctly rounded value.
///
/// Written without branches or libm calls so that batched loops vectorise,
/// and so that results do not depend on the platform math library.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    // tanh saturates to 1 in double precision well before |x| = 20.
    let a = x.abs().min(20.0);
    let y = 2.0 * a;
    let k = (y * std::f64::consts::LOG2_E).round();
    // Cody-Waite split of ln 2 keeps the reduced argument exact.
    let r = (y - k * 6.931_471_803_691_238e-1) - k * 1.908_214_929_270_587_7e-10;
    // expm1(r) by its Taylor series, |r| <= ln(2)/2.
    let mut q = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
    ] {
        q = q * r + c;
    }
    q *= r;
    let scale = f64::from_bits(((k as i64 + 1023) as u64) << 52);
    let em1 = scale * q + (scale - 1.0);
    (em1 / (em1 + 2.0)).copysign(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_tanh() -> MlpParams {
        MlpParams::from_parts(vec![1, 1, 1], vec![vec![1.0], vec![1.0]], vec![vec![0.0], vec![0.0]])
            .unwrap()
    }

    #[test]
    fn init_biases_are_zero() {
        let shape = NetworkShape::new(1, 1, 1).unwrap();
        let p = MlpParams::init(shape, 99);
        assert_eq!(p.biases(0), &[0.0]);
        assert_eq!(p.biases(1), &[0.0]);
    }

    #[test]
    fn init_is_deterministic() {
        let shape = NetworkShape::new(1, 1, 1).unwrap();
        assert_eq!(MlpParams::init(shape, 3), MlpParams::init(shape, 3));
        let shape = NetworkShape::new(2, 8, 20).unwrap();
        assert_eq!(MlpParams::init(shape, 3).to_flat(), MlpParams::init(shape, 3).to_flat());
        assert_ne!(MlpParams::init(shape, 3).to_flat(), MlpParams::init(shape, 4).to_flat());
    }

    #[test]
    fn init_respects_glorot_bound() {
        let shape = NetworkShape::new(2, 8, 20).unwrap();
        let p = MlpParams::init(shape, 7);
        for l in 0..p.num_layers() {
            let (fan_in, fan_out) = (p.layer_sizes()[l] as f64, p.layer_sizes()[l + 1] as f64);
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            assert!(p.weights(l).iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(NetworkShape::new(3, 2, 5).unwrap());
        assert_eq!(p.forward(&[0.3, -2.0, 7.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_affine_layer() {
        let p = MlpParams::from_parts(vec![1, 1], vec![vec![2.0]], vec![vec![3.0]]).unwrap();
        assert_eq!(p.forward(&[1.0]).unwrap(), 5.0);
    }

    #[test]
    fn tanh_matches_libm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..200_000 {
            let scale = [40.0, 2.0, 1e-3, 1e-9][i % 4];
            let x: f64 = rng.gen_range(-0.5..0.5) * scale;
            let (a, b) = (tanh(x), x.tanh());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs(), "{x}: {a} vs {b}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert!(tanh(-0.0).is_sign_negative());
        assert_eq!(tanh(1e3), 1.0);
        assert_eq!(tanh(-1e300), -1.0);
        assert_eq!(tanh(f64::INFINITY), 1.0);
    }

    #[test]
    fn unit_network_is_tanh() {
        let p = unit_tanh();
        assert_eq!(p.forward(&[0.0]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-5.0..5.0);
            assert!((p.forward(&[x]).unwrap() - x.tanh()).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_weights_return_output_bias() {
        let shape = NetworkShape::new(2, 3, 4).unwrap();
        let mut flat = vec![0.0; MlpParams::zeros(shape).num_params()];
        let last = flat.len() - 1;
        flat[last] = -1.25;
        let p = MlpParams::from_flat(&shape.layer_sizes(), &flat).unwrap();
        assert_eq!(p.forward(&[0.1, 0.9]).unwrap(), -1.25);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = unit_tanh();
        assert!(matches!(p.forward(&[1.0, 2.0]), Err(Error::InputShape { expected: 1, got: 2 })));
    }

    #[test]
    fn rejects_bad_parts() {
        assert!(MlpParams::from_parts(vec![1, 1], vec![vec![1.0, 2.0]], vec![vec![0.0]]).is_err());
        assert!(MlpParams::from_parts(vec![1, 1], vec![vec![f64::NAN]], vec![vec![0.0]]).is_err());
        assert!(NetworkShape::new(4, 1, 1).is_err());
        assert!(NetworkShape::new(1, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_lossless(seed in any::<u64>(), dim in 1usize..=3, depth in 1usize..4) {
            let p = MlpParams::init(NetworkShape::new(dim, depth, 6).unwrap(), seed);
            let back = MlpParams::from_checkpoint_str(&p.to_checkpoint_string()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn flat_round_trip(seed in any::<u64>()) {
            let p = MlpParams::init(NetworkShape::new(2, 2, 5).unwrap(), seed);
            let back = MlpParams::from_flat(p.layer_sizes(), &p.to_flat()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
