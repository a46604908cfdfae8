use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, DenseMatrix, MlpParams, Rng};
use crate::prior::View;

/// Sinusoidal embedding of the diffusion step, computed from `t / T`.
pub fn time_embedding(t: usize, steps: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let pos = 1000.0 * t as f64 / steps as f64;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

/// Clean-signal predictor `x0_hat = net(x_t, c, time(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub view: View,
    pub net: MlpParams,
    pub dim: usize,
    pub cond_dim: usize,
    pub time_dim: usize,
    pub steps: usize,
}

impl Denoiser {
    pub fn init(view: View, dim: usize, cond_dim: usize, time_dim: usize, hidden: usize, steps: usize, rng: &mut Rng) -> Self {
        let net = MlpParams::init(&[dim + cond_dim + time_dim, hidden, hidden, dim], Activation::SiLU, rng);
        Self {
            view,
            net,
            dim,
            cond_dim,
            time_dim,
            steps,
        }
    }

    pub fn from_net(view: View, net: MlpParams, cond_dim: usize, time_dim: usize, steps: usize) -> Result<Self> {
        let dim = net.out_dim();
        if net.in_dim() != dim + cond_dim + time_dim {
            return Err(Error::shape("denoiser input", dim + cond_dim + time_dim, net.in_dim()));
        }
        Ok(Self {
            view,
            net,
            dim,
            cond_dim,
            time_dim,
            steps,
        })
    }

    /// Network input rows `[x_t | c | time(t)]`.
    pub fn inputs(&self, x_t: &DenseMatrix, cond: &DenseMatrix, t: &[usize]) -> Result<DenseMatrix> {
        let n = x_t.rows();
        if x_t.cols() != self.dim || cond.cols() != self.cond_dim || cond.rows() != n || t.len() != n {
            return Err(Error::shape(
                "denoiser inputs",
                format!("({n}, {}) + ({n}, {}) + {n} steps", self.dim, self.cond_dim),
                format!("{:?} + {:?} + {}", x_t.shape(), cond.shape(), t.len()),
            ));
        }
        let width = self.dim + self.cond_dim + self.time_dim;
        let mut m = DenseMatrix::zeros(n, width);
        for r in 0..n {
            let row = m.row_mut(r);
            row[..self.dim].copy_from_slice(x_t.row(r));
            row[self.dim..self.dim + self.cond_dim].copy_from_slice(cond.row(r));
            row[self.dim + self.cond_dim..].copy_from_slice(&time_embedding(t[r], self.steps, self.time_dim));
        }
        Ok(m)
    }

    pub fn predict(&self, x_t: &DenseMatrix, cond: &DenseMatrix, t: &[usize]) -> Result<DenseMatrix> {
        self.net.predict_batch(&self.inputs(x_t, cond, t)?)
    }

    /// Mean over rows of `||x0 - x0_hat||^2` and its parameter gradients.
    pub fn loss_and_grad(
        &self,
        x0: &DenseMatrix,
        x_t: &DenseMatrix,
        cond: &DenseMatrix,
        t: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let input = self.inputs(x_t, cond, t)?;
        let (pred, tape) = self.net.forward_batch(&input)?;
        let n = x0.rows() as f64;
        let mut g = pred.clone();
        g.axpy(-1.0, x0)?;
        let loss = g.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
        g.scale(2.0 / n);
        let grads = self.net.backward(&tape, &g)?;
        Ok((loss, grads.blocks().into_iter().map(|b| b.to_vec()).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub time_dim: usize,
    /// Hidden width as a multiple of the representation dimension.
    pub hidden_mult: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 0.0,
            time_dim: 64,
            hidden_mult: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserFit {
    pub denoiser: Denoiser,
    pub epoch_loss: Vec<f64>,
}

/// Fits the denoiser on warm representations. Every epoch visits each
/// row once with a freshly drawn step and noise.
pub fn train_diffusion(
    view: View,
    warm_reps: &DenseMatrix,
    warm_cond: &DenseMatrix,
    s: &NoiseSchedule,
    cfg: &DenoiserConfig,
    rng: &mut Rng,
) -> Result<DenoiserFit> {
    if warm_reps.rows() == 0 {
        return Err(Error::Param(format!("no warm {} representations to learn from", view.as_str())));
    }
    if warm_cond.rows() != warm_reps.rows() {
        return Err(Error::shape("train_diffusion conditions", warm_reps.rows(), warm_cond.rows()));
    }
    if cfg.batch_size == 0 || cfg.hidden_mult == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Param("denoiser batch_size, hidden_mult and lr must be positive".into()));
    }
    let dim = warm_reps.cols();
    let mut den = Denoiser::init(
        view,
        dim,
        warm_cond.cols(),
        cfg.time_dim,
        cfg.hidden_mult * dim,
        s.steps(),
        &mut rng.fork(1),
    );
    let mut adam = AdamState::for_blocks(AdamConfig::new(cfg.lr, cfg.weight_decay), &den.net.blocks());
    let mut order: Vec<usize> = (0..warm_reps.rows()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let x0 = warm_reps.select_rows(batch);
            let cond = warm_cond.select_rows(batch);
            let t: Vec<usize> = batch.iter().map(|_| 1 + rng.below(s.steps())).collect();
            let mut x_t = DenseMatrix::zeros(batch.len(), dim);
            for r in 0..batch.len() {
                let (a, b) = (s.alpha_bar(t[r]).sqrt(), (1.0 - s.alpha_bar(t[r])).sqrt());
                for (o, x) in x_t.row_mut(r).iter_mut().zip(x0.row(r)) {
                    *o = a * x + b * rng.normal();
                }
            }
            let (loss, grads) = den.loss_and_grad(&x0, &x_t, &cond, &t)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: "stage2",
                    step,
                    detail: format!("{} denoiser loss is {loss}", view.as_str()),
                });
            }
            total += loss * batch.len() as f64;
            let g: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
            adam.step(&mut den.net.blocks_mut(), &g)?;
        }
        epoch_loss.push(total / order.len() as f64);
    }
    Ok(DenoiserFit {
        denoiser: den,
        epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{make_schedule, ScheduleKind};
    use crate::nn::finite_diff_check;

    #[test]
    fn time_embedding_shape() {
        let e = time_embedding(250, 500, 64);
        assert_eq!(e.len(), 64);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        // Lowest frequency: sin(500), cos(500).
        assert!((e[0] - 500f64.sin()).abs() < 1e-12);
        assert!((e[32] - 500f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = Rng::new(3);
        let den = Denoiser::init(View::Bint, 4, 2, 4, 5, 50, &mut rng);
        let x0 = DenseMatrix::from_fn(3, 4, |_, _| rng.normal());
        let xt = DenseMatrix::from_fn(3, 4, |_, _| rng.normal());
        let c = DenseMatrix::from_fn(3, 2, |_, _| rng.normal());
        let t = [1, 17, 50];
        let params: Vec<Vec<f64>> = den.net.blocks().iter().map(|b| b.to_vec()).collect();
        assert!(params.iter().map(|p| p.len()).sum::<usize>() <= 200);
        let f = |blocks: &[Vec<f64>]| {
            let mut d = den.clone();
            for (dst, src) in d.net.blocks_mut().into_iter().zip(blocks) {
                dst.copy_from_slice(src);
            }
            d.loss_and_grad(&x0, &xt, &c, &t).unwrap()
        };
        let r = finite_diff_check(f, &params, 1e-5, 1e-4);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn zero_epochs_keeps_initialisation() {
        let s = make_schedule(ScheduleKind::Linear, 20).unwrap();
        let reps = DenseMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let cond = DenseMatrix::zeros(4, 2);
        let cfg = DenoiserConfig {
            epochs: 0,
            time_dim: 4,
            ..DenoiserConfig::default()
        };
        let fit = train_diffusion(View::Bint, &reps, &cond, &s, &cfg, &mut Rng::new(1)).unwrap();
        let init = Denoiser::init(View::Bint, 3, 2, 4, 12, 20, &mut Rng::new(1).fork(1));
        assert_eq!(fit.denoiser, init);
    }

    #[test]
    fn one_point_distribution_is_learned() {
        let s = make_schedule(ScheduleKind::Linear, 100).unwrap();
        let v = [0.8, -0.4, 0.3, 1.2];
        let reps = DenseMatrix::from_fn(16, 4, |_, j| v[j]);
        let cond = DenseMatrix::zeros(16, 2);
        let cfg = DenoiserConfig {
            epochs: 1500,
            batch_size: 16,
            time_dim: 8,
            ..DenoiserConfig::default()
        };
        let fit = train_diffusion(View::Bint, &reps, &cond, &s, &cfg, &mut Rng::new(2)).unwrap();
        let last = *fit.epoch_loss.last().unwrap();
        assert!(last < 1e-3, "final loss {last}");
    }
}
