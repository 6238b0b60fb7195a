use serde::{Deserialize, Serialize};

use super::params::ParamLayout;
use crate::error::{Error, Result};

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Bias-corrected Adam update of `params` in place. A non-finite gradient
    /// aborts before anything is modified; `layout` (when given) names the
    /// offending parameter.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        layout: Option<&ParamLayout>,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let path = layout.map_or_else(|| format!("param[{i}]"), |l| l.path_of(i));
            return Err(Error::NonFiniteGradient { path });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut w = [5.0];
        let mut st = AdamState::new(1, 0.1);
        for _ in 0..500 {
            let g = [2.0 * w[0]];
            st.step(&mut w, &g, None).unwrap();
        }
        assert!(w[0].abs() < 1e-3, "w = {}", w[0]);
        assert_eq!(st.t, 500);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = [1.5, -2.0];
        let mut st = AdamState::new(2, 0.01);
        for _ in 0..50 {
            st.step(&mut w, &[0.0, 0.0], None).unwrap();
        }
        assert_eq!(w, [1.5, -2.0]);
    }

    #[test]
    fn first_step_is_lr_regardless_of_scale() {
        for scale in [1e-6, 1.0, 1e6] {
            let mut w = [0.0];
            let mut st = AdamState::new(1, 0.001);
            st.step(&mut w, &[scale], None).unwrap();
            // m̂ = g, v̂ = g², so |Δ| = lr·|g|/(|g|+ε)
            let expected = 0.001 * scale / (scale + 1e-8);
            assert!((w[0].abs() - expected).abs() < 1e-15);
            assert!((w[0].abs() - 0.001).abs() < 0.001 * 1e-2);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut layout = ParamLayout::default();
        layout.push("enc.bias".into(), 2);
        let mut w = [0.0, 0.0];
        let mut st = AdamState::new(2, 0.1);
        let err = st.step(&mut w, &[0.0, f64::NAN], Some(&layout)).unwrap_err();
        match err {
            Error::NonFiniteGradient { path } => assert_eq!(path, "enc.bias[1]"),
            e => panic!("unexpected {e}"),
        }
        assert_eq!(st.t, 0);
    }
}
