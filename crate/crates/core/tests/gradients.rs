//! Reverse-mode gradients against central finite differences.

mod common;

use common::{fd_grad, random_discriminator, random_generator, random_matrix, rel_err};
use gencs::models::{mlp_forward, DiscriminatorShape, NormOrder};
use gencs::numcore::{RngStream, Tape, Tensor, Var};
use gencs::recovery::{deviation_loss, measurement_loss, projection_loss};
use gencs::sensing::SensingMatrix;
use gencs::training::{
    began_discriminator_loss, began_generator_loss, dcgan_discriminator_loss, dcgan_generator_loss, dcs_loss,
    GeneratorLoss, LOG_EPS,
};
use gencs::transforms::UnitaryTransform;
use proptest::prelude::*;

const TOL: f64 = 1e-5;

/// Gradient of `op` composed with a random linear read-out, analytic and numeric.
fn check_unary(seed: u64, shape: &[usize], shift: f64, op: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let mut rng = RngStream::new(seed, 1);
    let n: usize = shape.iter().product();
    let x0: Vec<f64> = rng.normal_vec(n).into_iter().map(|v| v + shift).collect();
    let eval = |x: &[f64], want_grad: bool| {
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(shape.to_vec(), x.to_vec()).unwrap());
        let out = op(&mut tape, xv);
        let len = tape.value(out).len();
        let mut r = RngStream::new(seed, 2);
        let w = tape.constant(Tensor::new(tape.value(out).shape().to_vec(), r.normal_vec(len)).unwrap());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let g = want_grad.then(|| tape.grad(loss, &[xv]).unwrap().get(xv).unwrap().data().to_vec());
        (tape.value(loss).item().unwrap(), g)
    };
    let analytic = eval(&x0, true).1.unwrap();
    let numeric = fd_grad(|x| eval(x, false).0, &x0);
    rel_err(&analytic, &numeric)
}

fn check_binary(
    seed: u64,
    sa: &[usize],
    sb: &[usize],
    op: impl Fn(&mut Tape, Var, Var) -> Var,
) -> f64 {
    let mut rng = RngStream::new(seed, 3);
    let (na, nb) = (sa.iter().product::<usize>(), sb.iter().product::<usize>());
    let ab0 = rng.normal_vec(na + nb);
    let eval = |ab: &[f64], want_grad: bool| {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(sa.to_vec(), ab[..na].to_vec()).unwrap());
        let b = tape.leaf(Tensor::new(sb.to_vec(), ab[na..].to_vec()).unwrap());
        let out = op(&mut tape, a, b);
        let len = tape.value(out).len();
        let mut r = RngStream::new(seed, 4);
        let w = tape.constant(Tensor::new(tape.value(out).shape().to_vec(), r.normal_vec(len)).unwrap());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let g = want_grad.then(|| {
            let grads = tape.grad(loss, &[a, b]).unwrap();
            let mut g = grads.get(a).unwrap().data().to_vec();
            g.extend_from_slice(grads.get(b).unwrap().data());
            g
        });
        (tape.value(loss).item().unwrap(), g)
    };
    let analytic = eval(&ab0, true).1.unwrap();
    let numeric = fd_grad(|ab| eval(ab, false).0, &ab0);
    rel_err(&analytic, &numeric)
}

fn dims(seed: u64) -> (usize, usize, usize) {
    let mut r = RngStream::new(seed, 9);
    (1 + r.below(4), 1 + r.below(4), 1 + r.below(4))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn elementwise_primitives(seed in any::<u64>()) {
        let (n, p, _) = dims(seed);
        let sh = [n, p];
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.tanh(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.sigmoid(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.relu(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.affine(x, -1.7, 0.3).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 6.0, |t, x| t.ln_clamped(x, LOG_EPS).unwrap()) < TOL);
    }

    #[test]
    fn reductions(seed in any::<u64>()) {
        let (n, p, _) = dims(seed);
        let sh = [n, p];
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.sum(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.mean(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.sum_sq(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.l2_norm(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.l1_norm(x).unwrap()) < TOL);
        prop_assert!(check_unary(seed, &sh, 0.0, |t, x| t.row_l2_norms(x).unwrap()) < TOL);
    }

    #[test]
    fn structural_primitives(seed in any::<u64>()) {
        let (n, k, p) = dims(seed);
        prop_assert!(check_binary(seed, &[n, k], &[k, p], |t, a, b| t.matmul(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[k], |t, a, b| t.matmul(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[k], &[k, p], |t, a, b| t.matmul(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[n, k], |t, a, b| t.add(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[n, k], |t, a, b| t.sub(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[n, k], |t, a, b| t.mul(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[k], |t, a, b| t.add_bias(a, b).unwrap()) < TOL);
        prop_assert!(check_binary(seed, &[n, k], &[n, p], |t, a, b| t.concat(&[a, b]).unwrap()) < TOL);
        let sliced = check_binary(seed, &[k], &[p], |t, a, b| {
            let c = t.concat(&[a, b]).unwrap();
            t.slice(c, k / 2, (k + p) / 2 + 1).unwrap()
        });
        prop_assert!(sliced < TOL);
    }

    #[test]
    fn random_mlp_params_and_input(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 10);
        let (v, c, d) = (1 + rng.below(4), rng.below(3), 1 + rng.below(5));
        let g = random_generator(&mut rng, v, c, d);
        let rows = 1 + rng.below(3);
        let zin = rng.normal_vec(rows * (v + c));
        let w = rng.normal_vec(rows * d);
        let eval = |params: &[f64], input: &[f64], want: bool| {
            let mut tape = Tape::new();
            let mut pv = g.params.clone();
            pv.values.copy_from_slice(params);
            let vars = pv.register(&mut tape, true).unwrap();
            let x = tape.leaf(Tensor::matrix(rows, v + c, input.to_vec()).unwrap());
            let out = mlp_forward(&mut tape, &g.spec, &vars, x).unwrap();
            let wv = tape.constant(Tensor::matrix(rows, d, w.clone()).unwrap());
            let prod = tape.mul(out, wv).unwrap();
            let loss = tape.sum(prod).unwrap();
            let grads = want.then(|| {
                let mut leaves = vars.leaves();
                leaves.push(x);
                let gr = tape.grad(loss, &leaves).unwrap();
                (pv.flatten_grad(&vars, &gr).unwrap(), gr.get(x).unwrap().data().to_vec())
            });
            (tape.value(loss).item().unwrap(), grads)
        };
        let p0 = g.params.values.clone();
        let (gp, gx) = eval(&p0, &zin, true).1.unwrap();
        let np = fd_grad(|p| eval(p, &zin, false).0, &p0);
        let nx = fd_grad(|x| eval(&p0, x, false).0, &zin);
        prop_assert!(rel_err(&gp, &np) < TOL, "params {}", rel_err(&gp, &np));
        prop_assert!(rel_err(&gx, &nx) < TOL, "input {}", rel_err(&gx, &nx));
    }

    #[test]
    fn recovery_objectives(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 11);
        let (v, d, m) = (1 + rng.below(4), 4, 1 + rng.below(4));
        let cond = if rng.below(2) == 0 { 0 } else { m };
        let g = random_generator(&mut rng, v, cond, d);
        let a = SensingMatrix::from_tensor(random_matrix(&mut rng, m, d)).unwrap();
        let y = rng.normal_vec(m);
        let c = (cond > 0).then(|| rng.normal_vec(m));
        let c = c.as_deref();
        let z0 = rng.normal_vec(v);

        let (_, gz, _) = measurement_loss(&g, &a, &y, &z0, c).unwrap();
        let nz = fd_grad(|z| measurement_loss(&g, &a, &y, z, c).unwrap().0, &z0);
        prop_assert!(rel_err(&gz, &nz) < TOL);

        let w = rng.normal_vec(d);
        let (_, gz) = projection_loss(&g, &w, &z0, c).unwrap();
        let nz = fd_grad(|z| projection_loss(&g, &w, z, c).unwrap().0, &z0);
        prop_assert!(rel_err(&gz, &nz) < TOL);

        let b = UnitaryTransform::haar(d).unwrap().matrix().transpose().unwrap();
        let nu0 = rng.normal_vec(d);
        let lambda = 0.5;
        let dl = deviation_loss(&g, &a, &y, &b, lambda, &z0, &nu0, true, c).unwrap();
        let nz = fd_grad(|z| deviation_loss(&g, &a, &y, &b, lambda, z, &nu0, true, c).unwrap().value, &z0);
        let nn = fd_grad(|nu| deviation_loss(&g, &a, &y, &b, lambda, &z0, nu, true, c).unwrap().value, &nu0);
        prop_assert!(rel_err(&dl.grad_z, &nz) < TOL);
        prop_assert!(rel_err(dl.grad_nu.as_ref().unwrap(), &nn) < TOL);
    }

    #[test]
    fn training_objectives(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 12);
        let (v, d, m, rows) = (1 + rng.below(3), 3, 2, 1 + rng.below(3));
        let cond = if rng.below(2) == 0 { 0 } else { m };
        let g = random_generator(&mut rng, v, cond, d);
        let ds = random_discriminator(&mut rng, DiscriminatorShape::Scalar, d, cond);
        let da = random_discriminator(&mut rng, DiscriminatorShape::Autoencoder, d, cond);
        let x = random_matrix(&mut rng, rows, d);
        let z = random_matrix(&mut rng, rows, v);
        let y = (cond > 0).then(|| random_matrix(&mut rng, rows, m));
        let y = y.as_ref();

        let with_d = |d: &gencs::models::DiscriminatorNet, p: &[f64]| {
            let mut d = d.clone();
            d.params.values.copy_from_slice(p);
            d
        };
        let with_g = |p: &[f64]| {
            let mut g = g.clone();
            g.params.values.copy_from_slice(p);
            g
        };

        let (_, gd) = dcgan_discriminator_loss(&g, &ds, &x, &z, y).unwrap();
        let nd = fd_grad(|p| dcgan_discriminator_loss(&g, &with_d(&ds, p), &x, &z, y).unwrap().0, &ds.params.values);
        prop_assert!(rel_err(&gd, &nd) < TOL);

        for kind in [GeneratorLoss::Minimax, GeneratorLoss::NonSaturating] {
            let (_, gg) = dcgan_generator_loss(&g, &ds, &z, y, kind).unwrap();
            let ng = fd_grad(|p| dcgan_generator_loss(&with_g(p), &ds, &z, y, kind).unwrap().0, &g.params.values);
            prop_assert!(rel_err(&gg, &ng) < TOL);
        }

        for p in [NormOrder::L1, NormOrder::L2] {
            let (_, gd, _) = began_discriminator_loss(&g, &da, &x, &z, y, 0.3, p).unwrap();
            let nd = fd_grad(
                |q| began_discriminator_loss(&g, &with_d(&da, q), &x, &z, y, 0.3, p).unwrap().0,
                &da.params.values,
            );
            prop_assert!(rel_err(&gd, &nd) < TOL);
            let (_, gg) = began_generator_loss(&g, &da, &z, y, p).unwrap();
            let ng = fd_grad(|q| began_generator_loss(&with_g(q), &da, &z, y, p).unwrap().0, &g.params.values);
            prop_assert!(rel_err(&gg, &ng) < TOL);
        }

        let a = SensingMatrix::from_tensor(random_matrix(&mut rng, m, d)).unwrap();
        let ym: Vec<Vec<f64>> = x.to_rows().iter().map(|r| a.apply(r).unwrap()).collect();
        let ym = Tensor::from_rows(&ym).unwrap();
        let zt = random_matrix(&mut rng, rows, v);
        let conditional = cond > 0;
        let (_, gg) = dcs_loss(&g, &a, &x, &ym, &z, &zt, 0.7, conditional).unwrap();
        let ng = fd_grad(|p| dcs_loss(&with_g(p), &a, &x, &ym, &z, &zt, 0.7, conditional).unwrap().0, &g.params.values);
        prop_assert!(rel_err(&gg, &ng) < TOL);
    }
}
