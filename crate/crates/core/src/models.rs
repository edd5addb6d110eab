//! Dense generator and discriminator networks, marginal or conditioned on the
//! measurement vector by input concatenation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{matvec_t_raw, Gradients, RngStream, Tape, Tensor, Var};
use crate::transforms::{top_support, UnitaryTransform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

/// Layer widths `[input, hidden..., output]` and one activation per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the `fan_in × fan_out` row-major weight block.
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activations,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Hidden layers share `hidden_act`; the output layer uses `out_act`.
    pub fn uniform(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(out_act);
        Self::new(widths, acts, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::param("an MLP needs at least one layer"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::param(format!("layer widths must be positive: {:?}", self.layer_widths)));
        }
        if self.activations.len() != self.layer_widths.len() - 1 {
            return Err(Error::param(format!(
                "{} layers but {} activations",
                self.layer_widths.len() - 1,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    pub fn output_activation(&self) -> Activation {
        *self.activations.last().expect("validated")
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVec {
    pub values: Vec<f64>,
    pub layout: Vec<LayerLayout>,
}

/// Tape handles for every layer's `(weight, bias)`.
#[derive(Clone, Debug)]
pub struct ParamVars {
    layers: Vec<(Var, Var)>,
}

impl ParamVec {
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            values: vec![0.0; spec.param_count()],
            layout: spec.layout(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_matches(&self, spec: &MlpSpec) -> Result<()> {
        if self.layout != spec.layout() || self.values.len() != spec.param_count() {
            return Err(Error::contract(format!(
                "parameter vector of length {} does not match spec {:?}",
                self.values.len(),
                spec.layer_widths
            )));
        }
        Ok(())
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.values[l.weight_offset..l.bias_offset]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.values[l.weight_offset..l.bias_offset]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.values[l.bias_offset..l.bias_offset + l.fan_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.values[l.bias_offset..l.bias_offset + l.fan_out]
    }

    /// Places every layer on `tape`, as leaves when `trainable`, else as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Result<ParamVars> {
        let mut layers = Vec::with_capacity(self.layout.len());
        for (i, l) in self.layout.iter().enumerate() {
            let w = Tensor::matrix(l.fan_in, l.fan_out, self.weights(i).to_vec())?;
            let b = Tensor::vector(self.bias(i).to_vec());
            let pair = if trainable {
                (tape.leaf(w), tape.leaf(b))
            } else {
                (tape.constant(w), tape.constant(b))
            };
            layers.push(pair);
        }
        Ok(ParamVars { layers })
    }

    /// Flattens per-layer gradients back into this vector's layout.
    pub fn flatten_grad(&self, vars: &ParamVars, grads: &Gradients) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.values.len()];
        for (l, &(w, b)) in self.layout.iter().zip(&vars.layers) {
            let gw = grads.get(w).ok_or(Error::UnknownLeaf(w.id()))?;
            let gb = grads.get(b).ok_or(Error::UnknownLeaf(b.id()))?;
            out[l.weight_offset..l.bias_offset].copy_from_slice(gw.data());
            out[l.bias_offset..l.bias_offset + l.fan_out].copy_from_slice(gb.data());
        }
        Ok(out)
    }
}

impl ParamVars {
    pub fn leaves(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// He-normal weights for ReLU layers, `N(0, 1/fan_in)` otherwise; zero biases.
pub fn init_params(spec: &MlpSpec, rng: &mut RngStream) -> Result<ParamVec> {
    let mut p = ParamVec::zeros(spec)?;
    for (i, act) in spec.activations.iter().enumerate() {
        let fan_in = p.layout[i].fan_in as f64;
        let var = match act {
            Activation::Relu => 2.0 / fan_in,
            _ => 1.0 / fan_in,
        };
        let std = var.sqrt();
        for w in p.weights_mut(i) {
            *w = std * rng.normal();
        }
    }
    Ok(p)
}

/// Records `act(x·W + b)` for every layer.
pub fn mlp_forward(tape: &mut Tape, spec: &MlpSpec, vars: &ParamVars, input: Var) -> Result<Var> {
    let mut h = input;
    for (&(w, b), act) in vars.layers.iter().zip(&spec.activations) {
        let lin = tape.matmul(h, w)?;
        let pre = tape.add_bias(lin, b)?;
        h = match act {
            Activation::Relu => tape.relu(pre)?,
            Activation::Tanh => tape.tanh(pre)?,
            Activation::Sigmoid => tape.sigmoid(pre)?,
            Activation::Linear => pre,
        };
    }
    Ok(h)
}

fn check_conditioning(cond_dim: usize, y: Option<usize>) -> Result<()> {
    match (cond_dim, y) {
        (0, None) => Ok(()),
        (c, Some(n)) if c == n && c > 0 => Ok(()),
        (c, n) => Err(Error::CondDimMismatch {
            expected: c,
            found: n.unwrap_or(0),
        }),
    }
}

fn join_input(tape: &mut Tape, x: Var, y: Option<Var>) -> Result<Var> {
    match y {
        Some(y) => tape.concat(&[x, y]),
        None => Ok(x),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub spec: MlpSpec,
    pub params: ParamVec,
    pub latent_dim: usize,
    /// 0 for a marginal generator, `m` when conditioned on measurements.
    pub cond_dim: usize,
}

impl GeneratorNet {
    pub fn new(spec: MlpSpec, params: ParamVec, latent_dim: usize, cond_dim: usize) -> Result<Self> {
        spec.validate()?;
        params.check_matches(&spec)?;
        if latent_dim == 0 {
            return Err(Error::param("latent dimension must be positive"));
        }
        if spec.input_width() != latent_dim + cond_dim {
            return Err(Error::param(format!(
                "generator input width {} != latent {} + conditioning {}",
                spec.input_width(),
                latent_dim,
                cond_dim
            )));
        }
        Ok(Self {
            spec,
            params,
            latent_dim,
            cond_dim,
        })
    }

    pub fn initialized(spec: MlpSpec, latent_dim: usize, cond_dim: usize, rng: &mut RngStream) -> Result<Self> {
        let params = init_params(&spec, rng)?;
        Self::new(spec, params, latent_dim, cond_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_width()
    }

    pub fn is_conditional(&self) -> bool {
        self.cond_dim > 0
    }

    /// Records `G(z[, y])` using parameter handles from [`ParamVec::register`].
    pub fn record_with(&self, tape: &mut Tape, vars: &ParamVars, z: Var, y: Option<Var>) -> Result<Var> {
        check_conditioning(self.cond_dim, y.map(|v| tape.value(v).cols()))?;
        let zw = tape.value(z).cols();
        if zw != self.latent_dim {
            return Err(Error::dim("generator latent", &[self.latent_dim], &[zw]));
        }
        let input = join_input(tape, z, y)?;
        mlp_forward(tape, &self.spec, vars, input)
    }

    /// `G(z[, y])` for one latent vector.
    pub fn gen_forward(&self, z: &[f64], y: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false)?;
        let zv = tape.constant(Tensor::vector(z.to_vec()));
        let yv = y.map(|y| tape.constant(Tensor::vector(y.to_vec())));
        let out = self.record_with(&mut tape, &vars, zv, yv)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Row-wise `G(Z[, Y])` for a batch.
    pub fn forward_batch(&self, z: &Tensor, y: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false)?;
        let zv = tape.constant(z.clone());
        let yv = y.map(|y| tape.constant(y.clone()));
        let out = self.record_with(&mut tape, &vars, zv, yv)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorShape {
    /// Sigmoid head: probability that the input is real.
    Scalar,
    /// Autoencoder: reconstructs its input.
    Autoencoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorNet {
    pub spec: MlpSpec,
    pub params: ParamVec,
    pub shape: DiscriminatorShape,
    pub signal_dim: usize,
    pub cond_dim: usize,
}

impl DiscriminatorNet {
    pub fn new(
        spec: MlpSpec,
        params: ParamVec,
        shape: DiscriminatorShape,
        signal_dim: usize,
        cond_dim: usize,
    ) -> Result<Self> {
        spec.validate()?;
        params.check_matches(&spec)?;
        if spec.input_width() != signal_dim + cond_dim {
            return Err(Error::param(format!(
                "discriminator input width {} != signal {} + conditioning {}",
                spec.input_width(),
                signal_dim,
                cond_dim
            )));
        }
        match shape {
            DiscriminatorShape::Scalar => {
                if spec.output_width() != 1 || spec.output_activation() != Activation::Sigmoid {
                    return Err(Error::param("scalar discriminator needs a single sigmoid output"));
                }
            }
            DiscriminatorShape::Autoencoder => {
                if spec.output_width() != signal_dim {
                    return Err(Error::param("autoencoder discriminator must output the signal width"));
                }
            }
        }
        Ok(Self {
            spec,
            params,
            shape,
            signal_dim,
            cond_dim,
        })
    }

    pub fn initialized(
        spec: MlpSpec,
        shape: DiscriminatorShape,
        signal_dim: usize,
        cond_dim: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let params = init_params(&spec, rng)?;
        Self::new(spec, params, shape, signal_dim, cond_dim)
    }

    pub fn record_with(&self, tape: &mut Tape, vars: &ParamVars, x: Var, y: Option<Var>) -> Result<Var> {
        check_conditioning(self.cond_dim, y.map(|v| tape.value(v).cols()))?;
        let xw = tape.value(x).cols();
        if xw != self.signal_dim {
            return Err(Error::dim("discriminator input", &[self.signal_dim], &[xw]));
        }
        let input = join_input(tape, x, y)?;
        mlp_forward(tape, &self.spec, vars, input)
    }

    /// Scalar shape: a one-element vector in (0, 1). Autoencoder: the reconstruction.
    pub fn disc_forward(&self, x: &[f64], y: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false)?;
        let xv = tape.constant(Tensor::vector(x.to_vec()));
        let yv = y.map(|y| tape.constant(Tensor::vector(y.to_vec())));
        let out = self.record_with(&mut tape, &vars, xv, yv)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// `R(x[, y]) = ‖x − D(x[, y])‖_p` for `p ∈ {1, 2}`.
    pub fn reconstruction_loss(&self, x: &[f64], y: Option<&[f64]>, p: NormOrder) -> Result<f64> {
        if self.shape != DiscriminatorShape::Autoencoder {
            return Err(Error::contract("reconstruction loss needs an autoencoder discriminator"));
        }
        let rec = self.disc_forward(x, y)?;
        let diff = x.iter().zip(&rec).map(|(a, b)| a - b);
        Ok(match p {
            NormOrder::L1 => diff.map(f64::abs).sum(),
            NormOrder::L2 => diff.map(|v| v * v).sum::<f64>().sqrt(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    #[default]
    L1,
    L2,
}

/// A generator viewed as a prior over signals: `z[, y] ↦ x`.
pub trait GenerativePrior: Send + Sync {
    fn latent_dim(&self) -> usize;
    /// 0 for marginal priors.
    fn cond_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Records `G(z[, y])` on `tape` with parameters held constant.
    fn record(&self, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var>;

    /// Closed-form `argmin_z ‖w − G(z[, y])‖²`, when one exists.
    fn project_exact(&self, _w: &[f64], _y: Option<&[f64]>) -> Option<Vec<f64>> {
        None
    }

    fn generate(&self, z: &[f64], y: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::vector(z.to_vec()));
        let yv = y.map(|y| tape.constant(Tensor::vector(y.to_vec())));
        let out = self.record(&mut tape, zv, yv)?;
        Ok(tape.value(out).data().to_vec())
    }
}

impl GenerativePrior for GeneratorNet {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn output_dim(&self) -> usize {
        self.spec.output_width()
    }

    fn record(&self, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var> {
        let vars = self.params.register(tape, false)?;
        self.record_with(tape, &vars, z, y)
    }

    fn generate(&self, z: &[f64], y: Option<&[f64]>) -> Result<Vec<f64>> {
        self.gen_forward(z, y)
    }
}

fn check_prior_input(tape: &Tape, latent: usize, cond: usize, z: Var, y: Option<Var>) -> Result<()> {
    check_conditioning(cond, y.map(|v| tape.value(v).cols()))?;
    let zw = tape.value(z).cols();
    if zw != latent {
        return Err(Error::dim("prior latent", &[latent], &[zw]));
    }
    Ok(())
}

/// `G(z[, y]) = z` with `v = d`; the conditioning input is accepted and ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentityPrior {
    pub d: usize,
    pub cond_dim: usize,
}

impl IdentityPrior {
    pub fn new(d: usize) -> Self {
        Self { d, cond_dim: 0 }
    }
}

impl GenerativePrior for IdentityPrior {
    fn latent_dim(&self) -> usize {
        self.d
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn output_dim(&self) -> usize {
        self.d
    }

    fn record(&self, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var> {
        check_prior_input(tape, self.d, self.cond_dim, z, y)?;
        Ok(z)
    }

    fn project_exact(&self, w: &[f64], _y: Option<&[f64]>) -> Option<Vec<f64>> {
        Some(w.to_vec())
    }

    fn generate(&self, z: &[f64], y: Option<&[f64]>) -> Result<Vec<f64>> {
        check_conditioning(self.cond_dim, y.map(<[f64]>::len))?;
        if z.len() != self.d {
            return Err(Error::dim("prior latent", &[self.d], &[z.len()]));
        }
        Ok(z.to_vec())
    }
}

/// `G(z) = B z` for a `d×v` basis `B` with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspacePrior {
    basis: Tensor,
    columns: Vec<usize>,
}

impl SubspacePrior {
    /// Spans the atoms of `u` listed in `columns`.
    pub fn from_atoms(u: &UnitaryTransform, columns: &[usize]) -> Result<Self> {
        let mut columns = columns.to_vec();
        columns.sort_unstable();
        columns.dedup();
        let basis = u.matrix().select_columns(&columns)?;
        Ok(Self { basis, columns })
    }

    /// Span of the `s` dominant atoms of `x` plus random further atoms, `v`
    /// atoms in total. `x` lies in the range whenever it is `s`-sparse in `u`.
    pub fn oracle(u: &UnitaryTransform, x: &[f64], s: usize, v: usize, rng: &mut RngStream) -> Result<Self> {
        let d = u.dim();
        if v < s || v > d {
            return Err(Error::param(format!("oracle latent width {v} must lie in [{s}, {d}]")));
        }
        let mut cols = top_support(&u.forward(x)?, s)?;
        let rest: Vec<usize> = (0..d).filter(|i| !cols.contains(i)).collect();
        for k in rng.subset(rest.len(), v - s) {
            cols.push(rest[k]);
        }
        Self::from_atoms(u, &cols)
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }
}

impl GenerativePrior for SubspacePrior {
    fn latent_dim(&self) -> usize {
        self.basis.shape()[1]
    }

    fn cond_dim(&self) -> usize {
        0
    }

    fn output_dim(&self) -> usize {
        self.basis.shape()[0]
    }

    fn record(&self, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var> {
        check_prior_input(tape, self.latent_dim(), 0, z, y)?;
        let b = tape.constant(self.basis.clone());
        tape.matmul(b, z)
    }

    fn project_exact(&self, w: &[f64], _y: Option<&[f64]>) -> Option<Vec<f64>> {
        let (d, v) = (self.output_dim(), self.latent_dim());
        Some(matvec_t_raw(self.basis.data(), d, v, w))
    }
}

/// `z ↦ G(z, y)` for a conditional generator and a fixed `y`.
#[derive(Clone, Debug)]
pub struct FixedConditioning<'a, G: GenerativePrior> {
    pub inner: &'a G,
    pub y: Vec<f64>,
}

impl<G: GenerativePrior> GenerativePrior for FixedConditioning<'_, G> {
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn cond_dim(&self) -> usize {
        0
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn record(&self, tape: &mut Tape, z: Var, y: Option<Var>) -> Result<Var> {
        check_conditioning(0, y.map(|v| tape.value(v).cols()))?;
        let yv = tape.constant(Tensor::vector(self.y.clone()));
        self.inner.record(tape, z, Some(yv))
    }

    fn project_exact(&self, w: &[f64], _y: Option<&[f64]>) -> Option<Vec<f64>> {
        self.inner.project_exact(w, Some(&self.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_gen(cond: usize, seed: u64) -> GeneratorNet {
        let spec = MlpSpec::uniform(3 + cond, &[5], 4, Activation::Tanh, Activation::Linear, seed).unwrap();
        GeneratorNet::initialized(spec, 3, cond, &mut RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn zero_width_rejected() {
        assert!(MlpSpec::new(vec![3, 0, 2], vec![Activation::Relu, Activation::Linear], 0).is_err());
        assert!(MlpSpec::new(vec![3], vec![], 0).is_err());
        assert!(MlpSpec::new(vec![3, 2], vec![], 0).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let spec = MlpSpec::uniform(4, &[8], 2, Activation::Relu, Activation::Tanh, 1).unwrap();
        let a = init_params(&spec, &mut RngStream::new(3, 3)).unwrap();
        let b = init_params(&spec, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.bias(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_variance_matches_fan_in() {
        for (act, target) in [(Activation::Relu, 2.0 / 100.0), (Activation::Tanh, 1.0 / 100.0)] {
            let spec = MlpSpec::new(vec![100, 100], vec![act], 0).unwrap();
            let p = init_params(&spec, &mut RngStream::new(21, 0)).unwrap();
            let w = p.weights(0);
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - target).abs() < 0.15 * target, "{act:?}: {var} vs {target}");
        }
    }

    #[test]
    fn zero_params_emit_activation_of_zero() {
        let spec = MlpSpec::uniform(3, &[4], 2, Activation::Relu, Activation::Sigmoid, 0).unwrap();
        let g = GeneratorNet::new(spec.clone(), ParamVec::zeros(&spec).unwrap(), 3, 0).unwrap();
        assert_eq!(g.gen_forward(&[1.0, 2.0, 3.0], None).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identity_slice_layer() {
        // d = 3 output reads z (width 3) and ignores y (width 2)
        let spec = MlpSpec::new(vec![5, 3], vec![Activation::Linear], 0).unwrap();
        let mut p = ParamVec::zeros(&spec).unwrap();
        for i in 0..3 {
            p.weights_mut(0)[i * 3 + i] = 1.0;
        }
        let g = GeneratorNet::new(spec, p, 3, 2).unwrap();
        let out = g.gen_forward(&[0.1, -0.2, 0.3], Some(&[7.0, 8.0])).unwrap();
        assert_eq!(out, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn conditioning_must_match() {
        let g = small_gen(2, 1);
        assert!(matches!(
            g.gen_forward(&[0.0; 3], None),
            Err(Error::CondDimMismatch { expected: 2, found: 0 })
        ));
        assert!(matches!(
            g.gen_forward(&[0.0; 3], Some(&[1.0; 3])),
            Err(Error::CondDimMismatch { expected: 2, found: 3 })
        ));
        let m = small_gen(0, 1);
        assert!(matches!(
            m.gen_forward(&[0.0; 3], Some(&[1.0])),
            Err(Error::CondDimMismatch { expected: 0, found: 1 })
        ));
    }

    #[test]
    fn replay_against_hand_arithmetic() {
        let g = small_gen(2, 9);
        let z = [0.3, -0.7, 1.1];
        let y = [0.05, -0.4];
        let input: Vec<f64> = z.iter().chain(&y).copied().collect();
        let mut h = input;
        for (layer, act) in g.spec.activations.iter().enumerate() {
            let l = g.params.layout[layer];
            let w = g.params.weights(layer);
            let b = g.params.bias(layer);
            let mut next = vec![0.0; l.fan_out];
            for j in 0..l.fan_out {
                let mut acc = b[j];
                for i in 0..l.fan_in {
                    acc += h[i] * w[i * l.fan_out + j];
                }
                next[j] = match act {
                    Activation::Tanh => acc.tanh(),
                    Activation::Linear => acc,
                    _ => unreachable!(),
                };
            }
            h = next;
        }
        let out = g.gen_forward(&z, Some(&y)).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_rows_match_single_forward() {
        let g = small_gen(0, 4);
        let z = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 0.0]).unwrap();
        let out = g.forward_batch(&z, None).unwrap();
        for r in 0..2 {
            let single = g.gen_forward(z.row(r), None).unwrap();
            for (a, b) in single.iter().zip(out.row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_discriminator_zero_params_is_half() {
        let spec = MlpSpec::uniform(4, &[3], 1, Activation::Relu, Activation::Sigmoid, 0).unwrap();
        let d = DiscriminatorNet::new(spec.clone(), ParamVec::zeros(&spec).unwrap(), DiscriminatorShape::Scalar, 4, 0)
            .unwrap();
        assert_eq!(d.disc_forward(&[1.0, -1.0, 0.5, 2.0], None).unwrap(), vec![0.5]);
    }

    #[test]
    fn identity_autoencoder_has_zero_reconstruction_loss() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Linear], 0).unwrap();
        let mut p = ParamVec::zeros(&spec).unwrap();
        for i in 0..3 {
            p.weights_mut(0)[i * 3 + i] = 1.0;
        }
        let d = DiscriminatorNet::new(spec, p, DiscriminatorShape::Autoencoder, 3, 0).unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_eq!(d.reconstruction_loss(&x, None, NormOrder::L1).unwrap(), 0.0);
        assert_eq!(d.reconstruction_loss(&x, None, NormOrder::L2).unwrap(), 0.0);
    }

    #[test]
    fn discriminator_shape_validation() {
        let spec = MlpSpec::uniform(4, &[3], 2, Activation::Relu, Activation::Sigmoid, 0).unwrap();
        let p = ParamVec::zeros(&spec).unwrap();
        assert!(DiscriminatorNet::new(spec, p, DiscriminatorShape::Scalar, 4, 0).is_err());
    }
}
