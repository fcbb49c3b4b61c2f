use super::{DenseMatrix, DiffError, Graph, NodeId, Reduction};

/// Compares the analytic gradient of a scalar graph against central
/// differences.
///
/// `build` receives a fresh graph and one variable node per entry of
/// `inputs`, and must return the scalar root. The gradient is taken with
/// respect to `inputs[wrt]`. Returns the largest entrywise relative error
/// `|analytic - numeric| / max(|analytic|, 1e-12)`.
pub fn finite_difference_check<F>(build: F, inputs: &[DenseMatrix], wrt: usize, epsilon: f64) -> Result<f64, DiffError>
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(DiffError::InvalidEpsilon(epsilon));
    }
    if wrt >= inputs.len() {
        return Err(DiffError::InvalidInput {
            index: wrt,
            count: inputs.len(),
        });
    }

    let eval = |inputs: &[DenseMatrix]| -> Result<(Graph, NodeId, Vec<NodeId>), DiffError> {
        let mut g = Graph::with_reduction(Reduction::Deterministic);
        let ids: Vec<NodeId> = inputs.iter().map(|m| g.variable(m.clone())).collect();
        let root = build(&mut g, &ids);
        g.forward(root)?;
        Ok((g, root, ids))
    };

    let (mut g, root, ids) = eval(inputs)?;
    let grads = g.backward(root)?;
    let analytic = grads.get(ids[wrt]).cloned().expect("variable gradient");

    let mut work = inputs.to_vec();
    let (rows, cols) = inputs[wrt].shape();
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in 0..cols {
            let orig = work[wrt][(i, j)];
            let mut probe = |delta: f64| -> Result<f64, DiffError> {
                work[wrt][(i, j)] = orig + delta;
                let res = eval(&work).map(|(g, root, _)| g.value(root).expect("evaluated")[(0, 0)]);
                work[wrt][(i, j)] = orig;
                match res {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(DiffError::NonFiniteLoss { row: i, col: j }),
                }
            };
            let plus = probe(epsilon)?;
            let minus = probe(-epsilon)?;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[(i, j)];
            let rel = (a - numeric).abs() / a.abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
