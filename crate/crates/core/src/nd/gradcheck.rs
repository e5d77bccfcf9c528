//! Central-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many randomly chosen elements per parameter.
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl GradCheckOptions {
    pub fn new(h: f64, tol: f64) -> Self {
        Self {
            h,
            tol,
            max_per_param: None,
            seed: 0,
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e-6)`. The floor keeps round-off in the
/// difference quotient from dominating near-zero gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn eval<F>(f: &F, params: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = f(&mut tape)?;
    let v = tape.value(out);
    if v.shape() != [1, 1] {
        return Err(Error::shape("grad_check", "function must return a scalar"));
    }
    Ok(v.item())
}

/// Compares tape gradients of the scalar `f` against central differences
/// `(f(θ + h) − f(θ − h)) / 2h` for every parameter element.
pub fn grad_check<F>(f: F, params: &ParamStore, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    grad_check_with(f, params, GradCheckOptions::new(h, tol))
}

pub fn grad_check_with<F>(f: F, params: &ParamStore, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        if !tape.value(out).all_finite() {
            return Err(Error::NonFinite("function value at the base point".into()));
        }
        tape.backward(out)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        pass: true,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let n = params.get(id).len();
        let grad = analytic.dense(id);
        let elems: Vec<usize> = match opts.max_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in elems {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + opts.h;
            let plus = eval(&f, &work)?;
            work.get_mut(id).data_mut()[i] = orig - opts.h;
            let minus = eval(&f, &work)?;
            work.get_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "perturbing {name}[{i}] gives a non-finite value"
                )));
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let err = rel_err(grad.data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    report.pass = report.max_rel_err <= opts.tol;
    Ok(report)
}
