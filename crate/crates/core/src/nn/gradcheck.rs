//! Central finite-difference oracles for the layer gradients.
//!
//! Each check draws a random input and a random linear read-out `G`, defines
//! `L = Σ G ∘ output`, and compares the analytic backward pass against
//! `(L(θ + ε) − L(θ − ε)) / 2ε` for every parameter and input entry. Only the
//! forward passes are used to build the numeric side.

use rand::Rng;

use super::dense::DenseLayer;
use super::gru::GruLayer;
use super::tensor::Tensor2;
use super::Parameterized;

const EPS: f64 = 1e-6;

pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), falling back to the absolute error when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn random_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor2::from_vec(rows, cols, data).expect("shape")
}

fn readout(outputs: &[Tensor2], weights: &[Tensor2]) -> f64 {
    outputs
        .iter()
        .zip(weights)
        .map(|(o, w)| o.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Worst relative error over (weight, bias, input) for a random batch.
pub fn dense_gradient_error<R: Rng + ?Sized>(rng: &mut R, layer: &DenseLayer, batch: usize) -> f64 {
    let x = random_tensor(rng, batch, layer.input_size());
    let g = random_tensor(rng, batch, layer.output_size());
    let (_, cache) = layer.forward(&x).expect("forward");
    let (gx, grads) = layer.backward(&cache, &g).expect("backward");
    let analytic = grads.into_vec();

    let loss = |l: &DenseLayer, x: &Tensor2| readout(&[l.infer(x).expect("infer")], std::slice::from_ref(&g));
    let mut worst: f64 = 0.0;
    for (block, an) in analytic.iter().enumerate() {
        let base = layer.params()[block].as_slice().to_vec();
        let numeric = numeric_gradient(
            |theta| {
                let mut l = layer.clone();
                l.params_mut()[block].as_mut_slice().copy_from_slice(theta);
                loss(&l, &x)
            },
            &base,
            EPS,
        );
        worst = worst.max(relative_error(an.as_slice(), &numeric));
    }
    let numeric_x = numeric_gradient(
        |xv| loss(layer, &Tensor2::from_vec(x.rows(), x.cols(), xv.to_vec()).unwrap()),
        x.as_slice(),
        EPS,
    );
    worst.max(relative_error(gx.as_slice(), &numeric_x))
}

/// Worst relative error over all GRU parameter blocks, every input timestep
/// and the initial hidden state.
pub fn gru_gradient_error<R: Rng + ?Sized>(rng: &mut R, layer: &GruLayer, steps: usize, batch: usize) -> f64 {
    let hidden = layer.hidden_size();
    let xs: Vec<Tensor2> = (0..steps)
        .map(|_| random_tensor(rng, batch, layer.input_size()))
        .collect();
    let h0 = random_tensor(rng, batch, hidden);
    let gs: Vec<Tensor2> = (0..steps).map(|_| random_tensor(rng, batch, hidden)).collect();

    let (_, cache) = layer.forward(&xs, &h0).expect("forward");
    let (gxs, gh0, grads) = layer.backward(&cache, &gs).expect("backward");
    let analytic = grads.into_vec();

    let loss = |l: &GruLayer, xs: &[Tensor2], h0: &Tensor2| readout(&l.infer(xs, h0).expect("infer"), &gs);
    let mut worst: f64 = 0.0;
    for (block, an) in analytic.iter().enumerate() {
        let base = layer.params()[block].as_slice().to_vec();
        let numeric = numeric_gradient(
            |theta| {
                let mut l = layer.clone();
                l.params_mut()[block].as_mut_slice().copy_from_slice(theta);
                loss(&l, &xs, &h0)
            },
            &base,
            EPS,
        );
        worst = worst.max(relative_error(an.as_slice(), &numeric));
    }
    for t in 0..steps {
        let numeric = numeric_gradient(
            |xv| {
                let mut probe = xs.clone();
                probe[t] = Tensor2::from_vec(batch, layer.input_size(), xv.to_vec()).unwrap();
                loss(layer, &probe, &h0)
            },
            xs[t].as_slice(),
            EPS,
        );
        worst = worst.max(relative_error(gxs[t].as_slice(), &numeric));
    }
    let numeric_h0 = numeric_gradient(
        |hv| loss(layer, &xs, &Tensor2::from_vec(batch, hidden, hv.to_vec()).unwrap()),
        h0.as_slice(),
        EPS,
    );
    worst.max(relative_error(gh0.as_slice(), &numeric_h0))
}
