//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamGroup, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates sampled per parameter tensor; `None` checks every coordinate.
    pub coords_per_param: Option<usize>,
    /// Restrict the check to these groups; empty means all.
    pub groups: Vec<ParamGroup>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            coords_per_param: Some(8),
            groups: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Relative error used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// [`relative_error`] after forgiving `noise` of absolute disagreement.
pub fn relative_error_beyond(analytic: f64, numeric: f64, noise: f64) -> f64 {
    ((analytic - numeric).abs() - noise).max(0.0) / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` with central differences.
///
/// `f` evaluates the scalar objective at the given parameters and returns it
/// together with its gradients.
pub fn grad_check<F>(params: &ParameterSet, mut f: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet) -> Result<(f64, Gradients)>,
{
    let (f0, grads) = f(params)?;
    if !f0.is_finite() {
        return Err(Error::GradCheck {
            param: "<objective>".into(),
            index: 0,
            msg: format!("objective is {f0}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords_checked: 0,
    };
    let eps = config.epsilon;
    for (id, p) in params.iter() {
        if !config.groups.is_empty() && !config.groups.contains(&p.group) {
            continue;
        }
        let n = p.value.len();
        let coords: Vec<usize> = match config.coords_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for idx in coords {
            let orig = p.value.data()[idx];
            work.value_mut(id).data_mut()[idx] = orig + eps;
            let (fp, _) = f(&work)?;
            work.value_mut(id).data_mut()[idx] = orig - eps;
            let (fm, _) = f(&work)?;
            work.value_mut(id).data_mut()[idx] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::GradCheck {
                    param: p.path.clone(),
                    index: idx,
                    msg: format!("objective became non-finite ({fp}, {fm})"),
                });
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[idx]);
            // Rounding in fp - fm alone can reach this much; discount it so exact zeros
            // next to a large objective don't read as errors.
            let noise = 8.0 * f64::EPSILON * (fp.abs() + fm.abs()) / (2.0 * eps);
            let err = relative_error_beyond(analytic, numeric, noise);
            report.coords_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = p.path.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use crate::nn::tensor::Tensor;

    #[test]
    fn square_at_three() {
        let mut ps = ParameterSet::new();
        let w = ps.insert("w", ParamGroup::Basic, Tensor::scalar(3.0)).unwrap();
        let f = |ps: &ParameterSet| {
            let mut t = Tape::new(ps);
            let x = t.param(w);
            let y = t.mul(x, x);
            Ok((t.scalar(y), t.backward(y)))
        };
        let (_, g) = f(&ps).unwrap();
        assert!((g.get(w).unwrap().item() - 6.0).abs() < 1e-12);
        let r = grad_check(&ps, f, &GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error < 1e-6);
        assert_eq!(r.coords_checked, 1);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut ps = ParameterSet::new();
        let w = ps.insert("w", ParamGroup::Basic, Tensor::scalar(3.0)).unwrap();
        let r = grad_check(
            &ps,
            |ps| {
                let v = ps.value(w).item();
                let mut g = Gradients::new();
                g.accumulate(w, &Tensor::scalar(2.0 * v + 1.0));
                Ok((v * v, g))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(r.max_rel_error > 1e-2);
        assert_eq!(r.worst_param, "w");
    }

    #[test]
    fn rounding_noise_is_forgiven_but_small_errors_are_not() {
        assert_eq!(relative_error_beyond(0.0, 4e-11, 1e-9), 0.0);
        assert!(relative_error_beyond(0.0, 4e-11, 0.0) > 1e-3);
        assert!(relative_error_beyond(1e-3, 1.1e-3, 1e-9) > 1e-2);
    }

    #[test]
    fn non_finite_objective_reports_coordinate() {
        let mut ps = ParameterSet::new();
        let w = ps.insert("w", ParamGroup::Basic, Tensor::scalar(0.0)).unwrap();
        let err = grad_check(
            &ps,
            |ps| {
                let v = ps.value(w).item();
                let f = if v > 0.0 { f64::NAN } else { v };
                Ok((f, Gradients::new()))
            },
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::GradCheck { index: 0, .. }));
    }
}
