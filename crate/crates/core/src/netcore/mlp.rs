use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{consts, Real, Tape, Var};
use crate::error::{check_dim, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.relu(),
            Activation::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Fully connected network. Hidden layers apply the activation, the output layer is
/// affine and multiplied by `output_scale`. No hidden layers means a single affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub output_scale: f64,
    /// Subtract the output at the origin, so that `net(0) = 0`.
    #[serde(default)]
    pub anchored: bool,
    /// Per layer: weights (row-major, `fan_out × fan_in`) followed by biases.
    pub params: Vec<f64>,
}

impl Mlp {
    /// Uniform ±√(6/(fan_in + fan_out)) weights, zero biases.
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        hidden_dims: &[usize],
        activation: Activation,
        output_scale: f64,
        seed: u64,
    ) -> Self {
        let mut net = Self::zeros(in_dim, out_dim, hidden_dims, activation, output_scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for (fan_in, fan_out) in net.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            offset += (fan_in + 1) * fan_out;
        }
        net
    }

    pub fn zeros(
        in_dim: usize,
        out_dim: usize,
        hidden_dims: &[usize],
        activation: Activation,
        output_scale: f64,
    ) -> Self {
        let mut net = Self {
            in_dim,
            out_dim,
            hidden_dims: hidden_dims.to_vec(),
            activation,
            output_scale,
            anchored: false,
            params: Vec::new(),
        };
        net.params = vec![0.0; net.expected_param_count()];
        net
    }

    /// Affine map `y = W x + b` with no hidden layers.
    pub fn affine(weights: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let out_dim = weights.len();
        let in_dim = weights.first().map_or(0, Vec::len);
        check_dim("Mlp::affine bias", out_dim, bias.len())?;
        let mut params = Vec::with_capacity((in_dim + 1) * out_dim);
        for row in weights {
            check_dim("Mlp::affine row", in_dim, row.len())?;
            params.extend_from_slice(row);
        }
        params.extend_from_slice(bias);
        Ok(Self {
            in_dim,
            out_dim,
            hidden_dims: Vec::new(),
            activation: Activation::Relu,
            output_scale: 1.0,
            anchored: false,
            params,
        })
    }

    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.in_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.out_dim));
        dims
    }

    pub fn expected_param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("Mlp params", self.expected_param_count(), self.params.len())?;
        if !(self.output_scale > 0.0) {
            return Err(Error::Config(format!(
                "output_scale must be positive, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("Mlp::forward input", self.in_dim, x.len())?;
        Ok(self.eval(&self.params, x))
    }

    /// Evaluates with an externally supplied parameter vector (same layout as `params`).
    pub fn eval<T: Real>(&self, params: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(params.len(), self.params.len());
        let y = self.eval_plain(params, x);
        if !self.anchored {
            return y;
        }
        let y0 = self.eval_plain(params, &vec![T::zero(); x.len()]);
        y.into_iter().zip(y0).map(|(a, b)| a - b).collect()
    }

    fn eval_plain<T: Real>(&self, params: &[T], x: &[T]) -> Vec<T> {
        let layers = self.layer_dims();
        let last = layers.len() - 1;
        let mut act: Vec<T> = x.to_vec();
        let mut offset = 0;
        for (li, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            act = (0..fan_out)
                .map(|o| {
                    let z = T::affine(&w[o * fan_in..(o + 1) * fan_in], &act, b[o]);
                    if li == last {
                        if self.output_scale == 1.0 {
                            z
                        } else {
                            z.scale(self.output_scale)
                        }
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
        }
        act
    }

    /// Forward pass recorded on `tape`, with fresh tape variables for every parameter.
    pub fn record<'t>(&self, tape: &'t Tape, x: &[f64]) -> Result<Recorded<'t>> {
        check_dim("Mlp::record input", self.in_dim, x.len())?;
        let params = tape.vars(&self.params);
        let output = self.eval(&params, &consts(x));
        Ok(Recorded { params, output })
    }
}

/// Parameters and outputs of one recorded forward pass.
#[derive(Debug)]
pub struct Recorded<'t> {
    pub params: Vec<Var<'t>>,
    pub output: Vec<Var<'t>>,
}

/// `∂⟨cotangent, output⟩/∂params` by one reverse sweep.
pub fn grad_params(tape: &Tape, rec: &Recorded<'_>, cotangent: &[f64]) -> Result<Vec<f64>> {
    if cotangent.len() != rec.output.len() {
        return Err(Error::TapeMismatch(format!(
            "cotangent has {} entries, recorded output has {}",
            cotangent.len(),
            rec.output.len()
        )));
    }
    if rec.params.first().is_some_and(|p| !p.is_tracked()) {
        return Err(Error::TapeMismatch("parameters were not recorded".into()));
    }
    if tape.len() < rec.params.len() {
        return Err(Error::TapeMismatch(
            "tape is shorter than the recording".into(),
        ));
    }
    let seeds: Vec<_> = rec
        .output
        .iter()
        .copied()
        .zip(cotangent.iter().copied())
        .collect();
    Ok(tape.backward(&seeds).wrt_all(&rec.params))
}

/// Max over parameters of `|analytic − numeric| / max(1, |numeric|)` for the scalar
/// `Σ outputs`, with central differences of step `eps`.
pub fn finite_diff_check(net: &Mlp, x: &[f64], eps: f64) -> f64 {
    let tape = Tape::new();
    let rec = match net.record(&tape, x) {
        Ok(r) => r,
        Err(_) => return f64::INFINITY,
    };
    let ones = vec![1.0; net.out_dim];
    let analytic = grad_params(&tape, &rec, &ones).expect("cotangent matches");
    let total = |p: &[f64]| -> f64 { net.eval(p, x).iter().sum() };
    let mut params = net.params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + eps;
        let plus = total(&params);
        params[i] = orig - eps;
        let minus = total(&params);
        params[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    worst
}
