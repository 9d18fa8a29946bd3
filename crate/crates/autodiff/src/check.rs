//! Finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;

use crate::{AutodiffError, Gradients, Graph, NodeId, ParamId, ParamStore};

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst entry found by a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub max_relative_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// Compares the analytic gradient of `build`'s scalar output against
/// central differences for every parameter entry.
pub fn gradient_check<F>(store: &ParamStore, build: F) -> Result<CheckReport, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let entries = store.iter().flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id, i))).collect();
    check_entries(store, &build, entries)
}

/// Like [`gradient_check`] but only looks at `max_entries` entries drawn
/// uniformly without replacement (seeded), for models too big to sweep.
pub fn gradient_check_sampled<F>(
    store: &ParamStore,
    build: F,
    max_entries: usize,
    seed: u64,
) -> Result<CheckReport, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let all: Vec<(ParamId, usize)> =
        store.iter().flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id, i))).collect();
    if all.len() <= max_entries {
        return check_entries(store, &build, all);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, all.len(), max_entries).into_vec();
    picked.sort_unstable();
    check_entries(store, &build, picked.into_iter().map(|i| all[i]).collect())
}

fn loss_at<F>(store: &ParamStore, build: &F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let mut g = Graph::new(store);
    let out = build(&mut g)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(AutodiffError::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.data()[0])
}

fn check_entries<F>(store: &ParamStore, build: &F, entries: Vec<(ParamId, usize)>) -> Result<CheckReport, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>,
{
    let mut grads = Gradients::zeros_like(store);
    {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        g.backward(out, 1.0, &mut grads)?;
    }

    let mut probe = store.clone();
    let mut report = CheckReport {
        max_relative_error: 0.0,
        worst_param: None,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: entries.len(),
    };
    for (id, i) in entries {
        let orig = probe.value(id).data()[i];
        probe.value_mut(id).data_mut()[i] = orig + FD_STEP;
        let up = loss_at(&probe, build)?;
        probe.value_mut(id).data_mut()[i] = orig - FD_STEP;
        let down = loss_at(&probe, build)?;
        probe.value_mut(id).data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads.get(id)[i];
        let err = relative_error(analytic, numeric);
        if report.worst_param.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_param = Some(store.param(id).name.clone());
            report.worst_index = i;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
