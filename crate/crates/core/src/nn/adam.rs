use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adam with bias correction and decoupled weight decay (AdamW).
///
/// Parameters are handled as a list of flat blocks; the moment buffers
/// mirror that list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_blocks(config: AdamConfig, blocks: &[&[f64]]) -> Self {
        let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        self.step_impl(params, grads, None)
    }

    /// Step where weight decay only touches rows (of width `row_width`)
    /// flagged in `active`. Rows that never receive a gradient therefore
    /// stay bit-identical.
    pub fn step_rows(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        row_width: usize,
        active: &[&[bool]],
    ) -> Result<()> {
        self.step_impl(params, grads, Some((row_width, active)))
    }

    fn step_impl(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        rows: Option<(usize, &[&[bool]])>,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam_step blocks", self.m.len(), params.len()));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[b].len() || g.len() != p.len() {
                return Err(Error::shape("adam_step block", self.m[b].len(), g.len()));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("adam gradient block {b} (step {})", self.step + 1),
                    index: i,
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[b];
            let v = &mut self.v[b];
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let decays = match rows {
                    None => true,
                    Some((w, active)) => active[b][i / w],
                };
                if decays && c.weight_decay != 0.0 {
                    p[i] -= c.lr * c.weight_decay * p[i];
                }
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut st = AdamState::new(AdamConfig::new(0.1, 0.0), &[3]);
        for _ in 0..5 {
            st.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let g = [0.3, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        let cfg = AdamConfig::new(0.01, 0.0);
        let mut st = AdamState::new(cfg, &[3]);
        st.step(&mut [&mut p], &[&g]).unwrap();
        for i in 0..3 {
            // m_hat = g, v_hat = g^2 after one bias-corrected step.
            let m_hat = (1.0 - 0.9) * g[i] / (1.0 - 0.9);
            let v_hat = (1.0 - 0.999) * g[i] * g[i] / (1.0 - 0.999);
            let expect = -0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[i] - expect).abs() < 1e-15);
            assert_eq!(p[i].signum(), -g[i].signum());
        }
    }

    #[test]
    fn cloned_state_is_deterministic() {
        let mut st = AdamState::new(AdamConfig::new(0.05, 0.01), &[2]);
        let mut p = vec![0.5, 0.5];
        st.step(&mut [&mut p], &[&[0.1, -0.2]]).unwrap();
        let (mut a, mut b) = (st.clone(), st.clone());
        let (mut pa, mut pb) = (p.clone(), p.clone());
        a.step(&mut [&mut pa], &[&[0.7, 0.1]]).unwrap();
        b.step(&mut [&mut pb], &[&[0.7, 0.1]]).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut st = AdamState::new(AdamConfig::new(0.05, 0.0), &[2]);
        let mut p = vec![0.5, 0.5];
        let err = st.step(&mut [&mut p], &[&[0.1, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn row_masked_decay_skips_inactive_rows() {
        let mut st = AdamState::new(AdamConfig::new(0.1, 0.5), &[4]);
        let mut p = vec![1.0, 1.0, 2.0, 2.0];
        st.step_rows(&mut [&mut p], &[&[0.1, 0.1, 0.0, 0.0]], 2, &[&[true, false]])
            .unwrap();
        assert_eq!(&p[2..], &[2.0, 2.0]);
        assert!(p[0] < 1.0);
    }
}
