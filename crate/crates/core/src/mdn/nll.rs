use std::f64::consts::PI;

use ndarray::Array2;

use super::mixture::{log_sum_exp, Normalizer, SIGMA_LOG_CLAMP};
use crate::neuralcore::{CustomOp, Graph, NnError, NodeId, Tensor};

/// Mean mixture negative log-likelihood over a batch of raw head outputs.
struct MixtureNll {
    components: usize,
    dims: f64,
    /// Per row: softmax weights and posterior responsibilities.
    alphas: Array2<f64>,
    resp: Array2<f64>,
}

impl CustomOp for MixtureNll {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (raw, target) = (inputs[0], inputs[1]);
        let m = self.components;
        let scale = grad[[0, 0]] / raw.nrows() as f64;
        let mut d = Array2::zeros(raw.raw_dim());
        for b in 0..raw.nrows() {
            for i in 0..m {
                let g = self.resp[[b, i]];
                d[[b, i]] = scale * (self.alphas[[b, i]] - g);
                let s_raw = raw[[b, 7 * m + i]];
                let sigma = s_raw.clamp(-SIGMA_LOG_CLAMP, SIGMA_LOG_CLAMP).exp();
                let var = sigma * sigma;
                let mut dist2 = 0.0;
                for k in 0..6 {
                    let diff = target[[b, k]] - raw[[b, m + 6 * i + k]];
                    dist2 += diff * diff;
                    d[[b, m + 6 * i + k]] = -scale * g * diff / var;
                }
                if s_raw.abs() < SIGMA_LOG_CLAMP {
                    d[[b, 7 * m + i]] = -scale * g * (dist2 / var - self.dims);
                }
            }
        }
        vec![d, Array2::zeros(target.raw_dim())]
    }
}

/// Mean over rows of `-log p(target | activate_head(raw))`.
///
/// `raw` is B × 8M, `targets` is a B × 6 constant.
pub fn nll_loss(g: &mut Graph, raw: NodeId, targets: NodeId, norm: Normalizer) -> Result<NodeId, NnError> {
    let r = g.value(raw);
    let y = g.value(targets);
    if r.ncols() == 0 || r.ncols() % 8 != 0 {
        return Err(NnError::Shape(format!("head width {} is not 8M", r.ncols())));
    }
    if y.ncols() != 6 || y.nrows() != r.nrows() || r.nrows() == 0 {
        return Err(NnError::Shape(format!(
            "targets {:?} do not match head output {:?}",
            y.dim(),
            r.dim()
        )));
    }
    let m = r.ncols() / 8;
    let dims = norm.dims();
    let batch = r.nrows();
    let mut alphas = Array2::zeros((batch, m));
    let mut resp = Array2::zeros((batch, m));
    let mut total = 0.0;
    let mut logp = vec![0.0; m];
    for b in 0..batch {
        let logits = r.slice(ndarray::s![b, ..m]);
        let lmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = lmax + logits.iter().map(|l| (l - lmax).exp()).sum::<f64>().ln();
        for i in 0..m {
            let log_alpha = r[[b, i]] - lse;
            alphas[[b, i]] = log_alpha.exp();
            let log_sigma = r[[b, 7 * m + i]].clamp(-SIGMA_LOG_CLAMP, SIGMA_LOG_CLAMP);
            let var = (2.0 * log_sigma).exp();
            let dist2: f64 = (0..6)
                .map(|k| (y[[b, k]] - r[[b, m + 6 * i + k]]).powi(2))
                .sum();
            logp[i] = log_alpha - dims * log_sigma - 0.5 * dims * (2.0 * PI).ln() - dist2 / (2.0 * var);
        }
        let l = log_sum_exp(&logp);
        for i in 0..m {
            resp[[b, i]] = (logp[i] - l).exp();
        }
        total -= l;
    }
    let loss = total / batch as f64;
    if !loss.is_finite() {
        return Err(NnError::Diverged(format!("mixture NLL is {loss}")));
    }
    let op = MixtureNll {
        components: m,
        dims,
        alphas,
        resp,
    };
    Ok(g.custom(Box::new(op), &[raw, targets], Array2::from_elem((1, 1), loss)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::mixture::{activate_head, mixture_logdensity_with};
    use crate::neuralcore::{gradient_check, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_mode_gives_reference_loss() {
        let mut g = Graph::new();
        let mut raw = Array2::zeros((1, 8));
        raw[[0, 0]] = 0.0;
        for k in 0..6 {
            raw[[0, 1 + k]] = 0.1 * k as f64;
        }
        let target = Array2::from_shape_fn((1, 6), |(_, k)| 0.1 * k as f64);
        let r = g.constant(raw);
        let t = g.constant(target);
        let l = nll_loss(&mut g, r, t, Normalizer::SixDim).unwrap();
        assert!((g.scalar(l) - 3.0 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!((g.scalar(l) - 5.5134).abs() < 1e-3);
    }

    #[test]
    fn matches_mixture_logdensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for norm in [Normalizer::SixDim, Normalizer::OneDim] {
            let raw = Array2::from_shape_fn((4, 40), |_| rng.random_range(-2.0..2.0));
            let y = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
            let want: f64 = (0..4)
                .map(|b| {
                    let p = activate_head(&raw.row(b).to_vec()).unwrap();
                    let yb: [f64; 6] = std::array::from_fn(|k| y[[b, k]]);
                    -mixture_logdensity_with(&yb, &p, norm)
                })
                .sum::<f64>()
                / 4.0;
            let mut g = Graph::new();
            let r = g.constant(raw);
            let t = g.constant(y);
            let l = nll_loss(&mut g, r, t, norm).unwrap();
            assert!((g.scalar(l) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let m = rng.random_range(1..4);
            let batch = rng.random_range(1..4);
            let mut store = ParamStore::new();
            store
                .add(
                    "raw",
                    Array2::from_shape_fn((batch, 8 * m), |(_, j)| {
                        if j >= 7 * m {
                            rng.random_range(-0.5..0.5)
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    }),
                )
                .unwrap();
            let y = Array2::from_shape_fn((batch, 6), |_| rng.random_range(-1.0..1.0));
            let norm = if trial % 2 == 0 { Normalizer::SixDim } else { Normalizer::OneDim };
            let err = gradient_check(&store, 1e-6, |g, s| {
                let r = g.param(s, "raw")?;
                let t = g.constant(y.clone());
                nll_loss(g, r, t, norm)
            })
            .unwrap();
            assert!(err < 1e-4, "trial {trial}: {err}");
        }
    }

    #[test]
    fn clamped_sigma_has_zero_gradient() {
        let mut raw = Array2::zeros((1, 8));
        raw[[0, 7]] = -40.0;
        let mut g = Graph::new();
        let mut store = ParamStore::new();
        store.add("raw", raw).unwrap();
        let r = g.param(&store, "raw").unwrap();
        let t = g.constant(Array2::from_elem((1, 6), 1e-6));
        let l = nll_loss(&mut g, r, t, Normalizer::SixDim).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(&store, "raw").unwrap()[[0, 7]], 0.0);
    }

    #[test]
    fn rejects_bad_shapes_and_divergence() {
        let mut g = Graph::new();
        let r = g.constant(Array2::zeros((2, 8)));
        let t = g.constant(Array2::zeros((3, 6)));
        assert!(matches!(nll_loss(&mut g, r, t, Normalizer::SixDim), Err(NnError::Shape(_))));
        let r = g.constant(Array2::from_elem((1, 8), f64::NAN));
        let t = g.constant(Array2::zeros((1, 6)));
        assert!(matches!(nll_loss(&mut g, r, t, Normalizer::SixDim), Err(NnError::Diverged(_))));
    }
}
