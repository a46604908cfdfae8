use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{dot, norm, DenseMatrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<String>,
    /// Variance captured by each component over the total variance.
    pub explained: [f64; 2],
}

impl Projection {
    /// `id,x,y,label` with one row per input row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,x,y,label\n");
        for (i, (c, l)) in self.coords.iter().zip(&self.labels).enumerate() {
            writeln!(s, "{i},{:.10e},{:.10e},{l}", c[0], c[1]).unwrap();
        }
        s
    }
}

fn top_eigenvector(cov: &DenseMatrix, rng: &mut Rng) -> (Vec<f64>, f64) {
    let d = cov.rows();
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let mut w: Vec<f64> = (0..d).map(|i| dot(cov.row(i), &v)).collect();
        let wn = norm(&w);
        if wn == 0.0 {
            return (v, 0.0);
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        lambda = wn;
        if delta < 1e-13 {
            break;
        }
    }
    // Rayleigh quotient is a better eigenvalue estimate than the last norm.
    let cv: Vec<f64> = (0..d).map(|i| dot(cov.row(i), &v)).collect();
    let rq = dot(&v, &cv);
    (v, if rq.is_finite() { rq } else { lambda })
}

/// Projects rows onto the top two principal components of the centred
/// data, found by power iteration with deflation.
pub fn project_2d(reps: &DenseMatrix, labels: &[String], seed: u64) -> Result<Projection> {
    let (n, d) = reps.shape();
    if n < 3 {
        return Err(Error::Param(format!("projection needs at least 3 rows, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::shape("project_2d labels", n, labels.len()));
    }
    reps.check_finite("project_2d")?;
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(reps.row(r)).for_each(|(m, x)| *m += x / n as f64);
    }
    let centred = DenseMatrix::from_fn(n, d, |i, j| reps.get(i, j) - mean[j]);
    let mut cov = centred.t_matmul(&centred)?;
    cov.scale(1.0 / n as f64);
    let total: f64 = (0..d).map(|i| cov.get(i, i)).sum();

    let mut rng = Rng::new(seed);
    let (v1, l1) = top_eigenvector(&cov, &mut rng);
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated.set(i, j, cov.get(i, j) - l1 * v1[i] * v1[j]);
        }
    }
    let (mut v2, mut l2) = top_eigenvector(&deflated, &mut rng);
    if l2 <= 1e-12 * l1.max(f64::MIN_POSITIVE) {
        log::warn!("input has rank < 2; second component set to zero");
        v2 = vec![0.0; d];
        l2 = 0.0;
    }
    let coords = (0..n)
        .map(|i| [dot(centred.row(i), &v1), dot(centred.row(i), &v2)])
        .collect();
    let frac = |l: f64| if total > 0.0 { (l / total).max(0.0) } else { 0.0 };
    Ok(Projection {
        coords,
        labels: labels.to_vec(),
        explained: [frac(l1), frac(l2)],
    })
}
