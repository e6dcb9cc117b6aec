use super::{Graph, NnError, NodeId, ParamStore};

/// Compares backpropagated gradients of a scalar graph with central differences.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<F>(store: &ParamStore, epsilon: f64, build: F) -> Result<f64, NnError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId, NnError>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(NnError::Config(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |s: &ParamStore| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let root = build(&mut g, s)?;
        if g.value(root).dim() != (1, 1) {
            return Err(NnError::Shape("gradient_check needs a scalar output".into()));
        }
        let v = g.scalar(root);
        if !v.is_finite() {
            return Err(NnError::CheckFailed(format!("non-finite output {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let root = build(&mut g, store)?;
    let grads = g.backward(root)?.for_store(store);

    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    for (idx, grad) in grads.iter().enumerate() {
        let n = work.value_at(idx).len();
        for k in 0..n {
            let original = work.value_at(idx).as_slice().expect("contiguous")[k];
            set(&mut work, idx, k, original + epsilon);
            let plus = eval(&work)?;
            set(&mut work, idx, k, original - epsilon);
            let minus = eval(&work)?;
            set(&mut work, idx, k, original);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = grad
                .as_ref()
                .map(|g| g.as_slice().expect("contiguous")[k])
                .unwrap_or(0.0);
            if !analytic.is_finite() {
                return Err(NnError::CheckFailed(format!(
                    "non-finite analytic gradient at parameter {idx} entry {k}"
                )));
            }
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn set(store: &mut ParamStore, idx: usize, k: usize, v: f64) {
    store.value_at_mut(idx).as_slice_mut().expect("contiguous")[k] = v;
}
