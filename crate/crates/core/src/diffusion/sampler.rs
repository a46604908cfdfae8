use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// `t_prime` steps spread evenly over `[1, T]`, descending from `T` to `1`.
pub fn strided_steps(steps: usize, t_prime: usize) -> Result<Vec<usize>> {
    if t_prime == 0 || t_prime > steps {
        return Err(Error::Param(format!("sampling steps {t_prime} outside [1, {steps}]")));
    }
    if t_prime == 1 {
        return Ok(vec![steps]);
    }
    let span = (steps - 1) as f64;
    Ok((0..t_prime)
        .map(|j| steps - (j as f64 * span / (t_prime - 1) as f64).round() as usize)
        .collect())
}

/// Deterministic reverse process over a batch of start points (one per
/// row). At each visited step the clean estimate is re-noised to the next
/// step with its own implied noise; the last clean estimate is returned.
pub fn reverse_denoise_batch(
    start: &DenseMatrix,
    cond: &DenseMatrix,
    den: &Denoiser,
    s: &NoiseSchedule,
    t_prime: usize,
) -> Result<DenseMatrix> {
    let ts = strided_steps(s.steps(), t_prime)?;
    run_steps(start, cond, den, s, &ts)
}

pub(crate) fn run_steps(
    start: &DenseMatrix,
    cond: &DenseMatrix,
    den: &Denoiser,
    s: &NoiseSchedule,
    ts: &[usize],
) -> Result<DenseMatrix> {
    let n = start.rows();
    let mut x = start.clone();
    let mut x0_hat = start.clone();
    for (j, &t) in ts.iter().enumerate() {
        x0_hat = den.predict(&x, cond, &vec![t; n])?;
        if let Some(i) = x0_hat.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("reverse denoising at step {t} (iteration {j})"),
                index: i,
            });
        }
        if let Some(&next) = ts.get(j + 1) {
            let (a, b) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
            let (an, bn) = (s.alpha_bar(next).sqrt(), (1.0 - s.alpha_bar(next)).sqrt());
            for (xv, x0) in x.as_mut_slice().iter_mut().zip(x0_hat.as_slice()) {
                let eps = (*xv - a * x0) / b;
                *xv = an * x0 + bn * eps;
            }
        }
    }
    Ok(x0_hat)
}

pub fn reverse_denoise(start: &[f64], cond: &[f64], den: &Denoiser, s: &NoiseSchedule, t_prime: usize) -> Result<Vec<f64>> {
    let x = DenseMatrix::from_vec(1, start.len(), start.to_vec())?;
    let c = DenseMatrix::from_vec(1, cond.len(), cond.to_vec())?;
    Ok(reverse_denoise_batch(&x, &c, den, s, t_prime)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::{train_diffusion, DenoiserConfig};
    use crate::diffusion::schedule::{forward_noise, implied_noise, make_schedule, ScheduleKind};
    use crate::nn::{Activation, Layer, MlpParams, Rng};
    use crate::prior::View;

    fn constant_net(v: &[f64], cond_dim: usize, time_dim: usize) -> Denoiser {
        let d = v.len();
        let layer = Layer {
            weight: DenseMatrix::zeros(d, d + cond_dim + time_dim),
            bias: v.to_vec(),
            activation: Activation::Identity,
        };
        Denoiser::from_net(View::Bint, MlpParams::new(vec![layer]).unwrap(), cond_dim, time_dim, 50).unwrap()
    }

    #[test]
    fn stride_endpoints() {
        assert_eq!(strided_steps(500, 1).unwrap(), vec![500]);
        let ts = strided_steps(500, 20).unwrap();
        assert_eq!(ts.len(), 20);
        assert_eq!((ts[0], ts[19]), (500, 1));
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(strided_steps(10, 10).unwrap(), (1..=10).rev().collect::<Vec<_>>());
        assert!(strided_steps(10, 11).is_err());
        assert!(strided_steps(10, 0).is_err());
    }

    #[test]
    fn single_step_is_one_evaluation() {
        let s = make_schedule(ScheduleKind::Linear, 50).unwrap();
        let mut rng = Rng::new(1);
        let den = Denoiser::init(View::Bint, 3, 2, 4, 8, 50, &mut rng);
        let start = [0.3, -0.2, 1.0];
        let c = [0.5, 0.5];
        let out = reverse_denoise(&start, &c, &den, &s, 1).unwrap();
        let direct = den
            .predict(&DenseMatrix::from_vec(1, 3, start.to_vec()).unwrap(), &DenseMatrix::from_vec(1, 2, c.to_vec()).unwrap(), &[50])
            .unwrap();
        assert_eq!(out, direct.into_vec());
    }

    #[test]
    fn constant_net_is_a_fixed_point() {
        let s = make_schedule(ScheduleKind::Cosine, 50).unwrap();
        let v = [1.5, -0.5, 2.0];
        let den = constant_net(&v, 2, 4);
        for start in [[0.0, 0.0, 0.0], [9.0, -3.0, 1.0]] {
            let out = reverse_denoise(&start, &[0.1, 0.2], &den, &s, 7).unwrap();
            assert_eq!(out, v.to_vec());
        }
    }

    #[test]
    fn full_stride_matches_unstrided_loop() {
        let s = make_schedule(ScheduleKind::Linear, 30).unwrap();
        let mut rng = Rng::new(5);
        let den = Denoiser::init(View::Iint, 3, 2, 4, 8, 30, &mut rng);
        let start = vec![0.4, 0.1, -0.6];
        let c = vec![1.0, -1.0];
        let strided = reverse_denoise(&start, &c, &den, &s, 30).unwrap();
        // Plain loop t = T..1 written with the scalar helpers.
        let mut x = start.clone();
        let mut x0 = vec![];
        for t in (1..=30).rev() {
            let inp = DenseMatrix::from_vec(1, 3, x.clone()).unwrap();
            x0 = den.predict(&inp, &DenseMatrix::from_vec(1, 2, c.clone()).unwrap(), &[t]).unwrap().into_vec();
            if t > 1 {
                let eps = implied_noise(&x, &x0, t, &s).unwrap();
                x = forward_noise(&x0, t - 1, &eps, &s).unwrap();
            }
        }
        let err = strided.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn one_point_reverse_process_lands_on_target() {
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
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for start in [[0.0; 4], [2.0, 2.0, -2.0, 0.5]] {
            let w = reverse_denoise(&start, &[0.0, 0.0], &fit.denoiser, &s, 20).unwrap();
            let err = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err < 0.05 * vn, "err {err}");
        }
    }
}
