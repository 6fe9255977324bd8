//! Central finite-difference gradient checking (64-bit).
//!
//! These helpers only run forward passes to build the numerical estimate, so
//! they stay independent of the backward code they are used to verify.
//!
//! A coordinate whose perturbation moves any relu / leaky-relu input across
//! zero is skipped: the difference quotient there mixes two slopes and says
//! nothing about the backward code. Skips are counted in the report.

use rand::seq::index::sample;
use rand::Rng;

use super::{Graph, Var};
use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub label: String,
    pub checked: usize,
    pub skipped: usize,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over the checked coordinates.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error < tol
    }
}

fn rel_error(a: &[f64], n: &[f64]) -> (f64, f64) {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nn);
    let rel = if denom < 1e-300 { 0.0 } else { diff / denom };
    (rel, na)
}

fn coords(len: usize, max: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Checks d(loss)/d(input) for every tensor in `inputs`. `build` receives the
/// inputs as graph leaves and must return a scalar.
pub fn check_inputs<F>(
    inputs: &[Tensor<f64>],
    build: F,
    step: f64,
    max_coords: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut g = Graph::no_grad();
        let vars: Vec<Var> = vals.iter().map(|t| g.input(t.clone(), false)).collect();
        let out = build(&mut g, &vars)?;
        Ok((g.value(out).data()[0], g.kink_pattern()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let pattern = g.kink_pattern();

    let mut reports = Vec::new();
    let mut work = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic_full = g
            .grad(v)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        let idx = coords(inputs[k].numel(), max_coords, rng);
        let mut analytic = Vec::with_capacity(idx.len());
        let mut numeric = Vec::with_capacity(idx.len());
        let mut skipped = 0;
        for &j in &idx {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + step;
            let (fp, pp) = eval(&work)?;
            work[k].data_mut()[j] = orig - step;
            let (fm, pm) = eval(&work)?;
            work[k].data_mut()[j] = orig;
            if pp != pattern || pm != pattern {
                skipped += 1;
                continue;
            }
            numeric.push((fp - fm) / (2.0 * step));
            analytic.push(analytic_full[j]);
        }
        let (rel, na) = rel_error(&analytic, &numeric);
        reports.push(GradCheck {
            label: format!("input{k}"),
            checked: analytic.len(),
            skipped,
            rel_error: rel,
            analytic_norm: na,
        });
    }
    Ok(reports)
}

/// Checks the gradient of `loss` w.r.t. every parameter of `store`, sampling
/// at most `max_coords` coordinates per tensor.
pub fn check_params<F>(
    store: &mut ParamStore<f64>,
    loss: F,
    step: f64,
    max_coords: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = loss(&mut g, store)?;
    g.backward(out)?;
    let grads = g.param_grads(store);
    let pattern = g.kink_pattern();

    let eval = |s: &ParamStore<f64>| -> Result<(f64, u64)> {
        let mut g = Graph::no_grad();
        let out = loss(&mut g, s)?;
        Ok((g.value(out).data()[0], g.kink_pattern()))
    };

    let mut reports = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).numel();
        let analytic_full = grads[id.index()].clone().unwrap_or_else(|| vec![0.0; n]);
        let idx = coords(n, max_coords, rng);
        let mut analytic = Vec::with_capacity(idx.len());
        let mut numeric = Vec::with_capacity(idx.len());
        let mut skipped = 0;
        for &j in &idx {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + step;
            let (fp, pp) = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig - step;
            let (fm, pm) = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig;
            if pp != pattern || pm != pattern {
                skipped += 1;
                continue;
            }
            numeric.push((fp - fm) / (2.0 * step));
            analytic.push(analytic_full[j]);
        }
        let (rel, na) = rel_error(&analytic, &numeric);
        reports.push(GradCheck {
            label: store.name(id).to_string(),
            checked: analytic.len(),
            skipped,
            rel_error: rel,
            analytic_norm: na,
        });
    }
    Ok(reports)
}
