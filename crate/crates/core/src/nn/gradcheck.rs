//! Central finite-difference oracle for checking analytic gradients.

use super::params::Parameterized;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with a small absolute floor so that two near-zero
/// gradients compare as equal.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Perturbs every parameter of `model` by ±`step` and compares
/// `(loss(θ+h) − loss(θ−h)) / 2h` against `analytic`.
pub fn check_gradient<P, F>(model: &P, analytic: &[f64], step: f64, floor: f64, mut loss: F) -> GradCheck
where
    P: Parameterized + Clone,
    F: FnMut(&P) -> f64,
{
    let base = model.to_flat();
    assert_eq!(base.len(), analytic.len(), "analytic gradient length");
    let mut probe = model.clone();
    let mut theta = base.clone();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..base.len() {
        theta[i] = base[i] + step;
        probe.read_params(&theta);
        let up = loss(&probe);
        theta[i] = base[i] - step;
        probe.read_params(&theta);
        let down = loss(&probe);
        theta[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric, floor);
        if err > worst.max_rel_error || i == 0 {
            worst = GradCheck {
                max_rel_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    worst
}
