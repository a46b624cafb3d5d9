//! Finite-difference verification of analytic gradients.
//!
//! The checker runs the supplied computation once through a tape to get
//! analytic gradients, then re-evaluates the loss at `value ± epsilon` for a
//! random sample of coordinates and compares the central-difference estimate
//! against the tape's answer. The computation must be a deterministic
//! function of the store's values — no live dropout.

use super::adam::ParamStore;
use super::graph::{Graph, NodeId};
use super::rng::Rng;

/// One coordinate whose analytic and numeric gradients disagree beyond
/// tolerance.
#[derive(Debug, Clone)]
pub struct CoordMismatch {
    pub param: String,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Distinct coordinates compared.
    pub sampled: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub tolerance: f64,
    /// Coordinates exceeding the tolerance.
    pub failures: Vec<CoordMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Relative error with an absolute floor so near-zero gradients do not
/// explode the ratio.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compare analytic gradients of `build`'s scalar output against central
/// finite differences on `sample_coords` randomly chosen distinct parameter
/// coordinates.
///
/// `build` receives a graph and the store and must return a 1x1 loss node;
/// it is invoked once per function evaluation, so it must be deterministic.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut build: F,
    sample_coords: usize,
    epsilon: f64,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&mut Graph, &ParamStore) -> NodeId,
{
    // Analytic pass.
    store.zero_grads();
    let mut g = Graph::new(true);
    let loss = build(&mut g, store);
    g.backward(loss, store);
    let analytic: Vec<Vec<f64>> = store.iter().map(|e| e.grad.data().to_vec()).collect();
    store.zero_grads();

    // Sample distinct (param, coord) pairs.
    let mut rng = Rng::new(seed);
    let total: usize = store.scalar_count();
    let budget = sample_coords.min(total);
    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(budget);
    while picked.len() < budget {
        let p = rng.below(store.len());
        let c = rng.below(store.entry(p).value.len());
        if !picked.contains(&(p, c)) {
            picked.push((p, c));
        }
    }

    let mut eval = |store: &mut ParamStore| -> f64 {
        let mut g = Graph::new(true);
        let loss = build(&mut g, store);
        g.value(loss).item()
    };

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut failures = Vec::new();
    for &(p, c) in &picked {
        let orig = store.entry(p).value.data()[c];
        store.entry_mut(p).value.data_mut()[c] = orig + epsilon;
        let up = eval(store);
        store.entry_mut(p).value.data_mut()[c] = orig - epsilon;
        let down = eval(store);
        store.entry_mut(p).value.data_mut()[c] = orig;

        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[p][c];
        let e = rel_err(a, numeric);
        max_rel = max_rel.max(e);
        sum_rel += e;
        if e >= tolerance {
            failures.push(CoordMismatch {
                param: store.entry(p).name.clone(),
                coord: c,
                analytic: a,
                numeric,
                rel_err: e,
            });
        }
    }

    GradCheckReport {
        sampled: picked.len(),
        max_rel_err: max_rel,
        mean_rel_err: if picked.is_empty() { 0.0 } else { sum_rel / picked.len() as f64 },
        tolerance,
        failures,
    }
}
