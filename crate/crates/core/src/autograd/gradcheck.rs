//! Central finite-difference gradient oracle.

use serde::Serialize;

use super::graph::{Gradients, Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale, since
/// central differences carry roughly `1e-16 / eps` of rounding noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub values: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

fn eval_loss<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = build(&mut g)?;
    let t = g.value(loss);
    if t.len() != 1 {
        return Err(Error::NonScalarLoss {
            shape: t.shape().to_vec(),
        });
    }
    Ok(t.item())
}

/// Analytic gradients of the scalar built by `build`.
pub fn analytic_gradients<F>(store: &ParamStore, build: &F) -> Result<Gradients>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = build(&mut g)?;
    g.backward(loss)
}

/// Central differences `(f(p + eps) - f(p - eps)) / 2 eps` for every value
/// of the trainable parameters in `params`.
pub fn numeric_gradients<F>(store: &mut ParamStore, params: &[ParamId], build: &F, eps: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let mut out = Vec::with_capacity(params.len());
    for &id in params {
        let n = store.value(id).len();
        let mut grad = vec![0.0; n];
        for (j, slot) in grad.iter_mut().enumerate() {
            let orig = store.value(id).data()[j];
            store.get_mut(id).tensor.data_mut()[j] = orig + eps;
            let up = eval_loss(store, build)?;
            store.get_mut(id).tensor.data_mut()[j] = orig - eps;
            let down = eval_loss(store, build)?;
            store.get_mut(id).tensor.data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * eps);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Compares `analytic` against central differences for each trainable
/// parameter of `store`. Parameters absent from `analytic` count as zero
/// gradient.
pub fn compare_gradients<F>(
    store: &mut ParamStore,
    analytic: &Gradients,
    build: &F,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
    let numeric = numeric_gradients(store, &ids, build, eps)?;
    let params = ids
        .iter()
        .zip(&numeric)
        .map(|(&id, num)| {
            let zeros;
            let ana = match analytic.get(id) {
                Some(a) => a,
                None => {
                    zeros = vec![0.0; num.len()];
                    &zeros[..]
                }
            };
            let (mut rel, mut abs) = (0.0f64, 0.0f64);
            for (&a, &n) in ana.iter().zip(num) {
                rel = rel.max(relative_error(a, n));
                abs = abs.max((a - n).abs());
            }
            ParamCheck {
                name: store.get(id).name.clone(),
                values: num.len(),
                max_rel_error: rel,
                max_abs_error: abs,
            }
        })
        .collect();
    Ok(GradCheckReport { eps, params })
}

/// Backward pass plus finite-difference comparison in one call.
pub fn finite_difference_check<F>(store: &mut ParamStore, build: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let analytic = analytic_gradients(store, &build)?;
    compare_gradients(store, &analytic, &build, eps)
}
