#![allow(dead_code)]

use gencs::models::{
    init_params, Activation, ParamVec, DiscriminatorNet, DiscriminatorShape, GeneratorNet, MlpSpec,
};
use gencs::numcore::{RngStream, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` at `x`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + FD_STEP;
            let hi = f(&p);
            p[i] = x0 - FD_STEP;
            let lo = f(&p);
            p[i] = x0;
            (hi - lo) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖ / max(1, ‖a‖, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&diff) / n(a).max(n(b)).max(1.0)
}

pub fn random_activation(rng: &mut RngStream) -> Activation {
    [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Linear][rng.below(4)]
}

/// A random dense net with 1–3 layers of width 1–6.
pub fn random_spec(rng: &mut RngStream, input: usize, output: usize, out_act: Activation) -> MlpSpec {
    let layers = 1 + rng.below(3);
    let mut widths = vec![input];
    let mut acts = Vec::new();
    for _ in 1..layers {
        widths.push(1 + rng.below(6));
        acts.push(random_activation(rng));
    }
    widths.push(output);
    acts.push(out_act);
    MlpSpec::new(widths, acts, 0).expect("valid spec")
}

/// Zero biases put ReLU pre-activations exactly on the kink; noise moves them off it.
fn jittered(mut params: ParamVec, rng: &mut RngStream) -> ParamVec {
    for v in params.values.iter_mut() {
        *v += 0.1 * rng.normal();
    }
    params
}

pub fn random_generator(rng: &mut RngStream, latent: usize, cond: usize, d: usize) -> GeneratorNet {
    let out = random_activation(rng);
    let spec = random_spec(rng, latent + cond, d, out);
    let params = jittered(init_params(&spec, rng).unwrap(), rng);
    GeneratorNet::new(spec, params, latent, cond).unwrap()
}

pub fn random_discriminator(
    rng: &mut RngStream,
    shape: DiscriminatorShape,
    d: usize,
    cond: usize,
) -> DiscriminatorNet {
    let spec = match shape {
        DiscriminatorShape::Scalar => random_spec(rng, d + cond, 1, Activation::Sigmoid),
        DiscriminatorShape::Autoencoder => {
            let act = random_activation(rng);
            random_spec(rng, d + cond, d, act)
        }
    };
    let params = jittered(init_params(&spec, rng).unwrap(), rng);
    DiscriminatorNet::new(spec, params, shape, d, cond).unwrap()
}

pub fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, rng.normal_vec(rows * cols)).unwrap()
}

/// Iterative hard thresholding written from its definition:
/// `x ← H_s(x − α Aᵀ(A x − y))` from `x = 0`, keeping the `s` largest
/// magnitudes with ties to the lower index.
pub fn iht_reference(a: &Tensor, y: &[f64], s: usize, alpha: f64, iterations: usize) -> Vec<f64> {
    let (m, d) = (a.rows(), a.cols());
    let mut x = vec![0.0; d];
    for _ in 0..iterations {
        let mut r = vec![0.0; m];
        for i in 0..m {
            let mut ax = 0.0;
            for j in 0..d {
                ax += a.at(i, j) * x[j];
            }
            r[i] = ax - y[i];
        }
        let mut g = vec![0.0; d];
        for i in 0..m {
            for j in 0..d {
                g[j] += a.at(i, j) * r[i];
            }
        }
        let w: Vec<f64> = (0..d).map(|j| x[j] - alpha * g[j]).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&p, &q| w[q].abs().partial_cmp(&w[p].abs()).unwrap().then(p.cmp(&q)));
        x = vec![0.0; d];
        for &j in order.iter().take(s) {
            x[j] = w[j];
        }
    }
    x
}
