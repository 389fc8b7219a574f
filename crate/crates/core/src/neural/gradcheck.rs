use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Network;
use crate::scalar::Scalar;

/// Largest relative disagreement between the analytic gradient and the
/// central difference `(f(θ+ε) - f(θ-ε)) / 2ε`, over `samples` trainable
/// coordinates drawn with `seed` (all of them when there are fewer).
///
/// Relative error per coordinate is `|g_a - g_n| / max(1e-8, |g_a| + |g_n|)`.
/// Returns 0 for a model without trainable parameters.
pub fn grad_check<T: Scalar, N: Network<T>>(
    model: &N,
    example: &N::Example,
    eps: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut grad = model.zeroed();
    model.loss(example, Some(&mut grad)).expect("loss at sample");
    let analytic: Vec<Vec<f64>> =
        grad.params().iter().map(|(_, t)| t.values().iter().map(|v| v.to_f64_lossless()).collect()).collect();

    let mut coords = Vec::new();
    for (k, (name, t)) in model.params().iter().enumerate() {
        if model.is_trainable(name) {
            coords.extend((0..t.len()).map(|i| (k, i)));
        }
    }
    if coords.is_empty() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(usize, usize)> = if coords.len() <= samples {
        coords
    } else {
        sample(&mut rng, coords.len(), samples).into_iter().map(|j| coords[j]).collect()
    };

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, i) in picked {
        let orig = probe.params()[k].1.values()[i];
        let h = T::lit(eps);
        set(&mut probe, k, i, orig + h);
        let up = probe.loss(example, None).expect("loss").to_f64_lossless();
        set(&mut probe, k, i, orig - h);
        let down = probe.loss(example, None).expect("loss").to_f64_lossless();
        set(&mut probe, k, i, orig);
        let numeric = (up - down) / (2.0 * eps);
        let ga = analytic[k][i];
        let rel = (ga - numeric).abs() / (ga.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

fn set<T: Scalar, N: Network<T>>(model: &mut N, k: usize, i: usize, v: T) {
    let mut ps = model.params_mut();
    ps[k].1.values_mut()[i] = v;
}
