use rayon::prelude::*;

use super::{scalar_of, Bindings, Expr, Graph, ParamGrads, Result};

/// Value, `1×1` extras and parameter gradient accumulated over chunks.
#[derive(Debug, Clone)]
pub struct ChunkedResult {
    pub value: f64,
    pub extras: Vec<f64>,
    pub grads: ParamGrads,
}

impl ChunkedResult {
    fn weighted(mut self, w: f64) -> Self {
        self.value *= w;
        self.extras.iter_mut().for_each(|x| *x *= w);
        self.grads.scale(w);
        self
    }

    fn merge(mut self, other: ChunkedResult) -> Self {
        self.value += other.value;
        for (a, b) in self.extras.iter_mut().zip(&other.extras) {
            *a += b;
        }
        self.grads.add_scaled(1.0, &other.grads);
        self
    }
}

/// Evaluates `scalar` and `extras` over the bound batch in row chunks of at
/// most `chunk` rows, combining chunk results with weights `n_c / n`.
///
/// Exact when every output is a mean over rows (or a linear combination of
/// such means), which is how all losses in this crate are built. Chunks are
/// combined by a fixed pairwise tree in chunk order, so the result is
/// independent of the number of worker threads.
pub fn value_and_grad_chunked(
    graph: &Graph,
    scalar: Expr,
    extras: &[Expr],
    bindings: &Bindings,
    chunk: usize,
) -> Result<ChunkedResult> {
    let n = bindings.batch_len().unwrap_or(0);
    let chunk = chunk.max(1);
    if n <= chunk {
        let r = graph.value_and_grad(scalar, extras, bindings)?;
        let extras = r.extras.iter().map(scalar_of).collect::<Result<Vec<_>>>()?;
        return Ok(ChunkedResult { value: r.value, extras, grads: r.grads });
    }
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let run = |&s: &usize| -> Result<ChunkedResult> {
        let e = (s + chunk).min(n);
        let b = bindings.slice_rows(s, e);
        let r = graph.value_and_grad(scalar, extras, &b)?;
        let ex = r.extras.iter().map(scalar_of).collect::<Result<Vec<_>>>()?;
        Ok(ChunkedResult { value: r.value, extras: ex, grads: r.grads }.weighted((e - s) as f64 / n as f64))
    };
    let parts: Vec<ChunkedResult> = if rayon::current_num_threads() > 1 {
        starts.par_iter().map(run).collect::<Result<_>>()?
    } else {
        starts.iter().map(run).collect::<Result<_>>()?
    };
    Ok(tree_reduce(parts))
}

fn tree_reduce(mut parts: Vec<ChunkedResult>) -> ChunkedResult {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}
