use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// Warm entities with their composition sets and embedded representations.
/// Compositions are sorted id lists standing for binary indicator vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorIndex {
    ids: Vec<usize>,
    comps: Vec<Vec<usize>>,
    reps: DenseMatrix,
    warm_mean: Vec<f64>,
}

fn binary_cosine(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / ((a.len() * b.len()) as f64).sqrt()
}

impl AnchorIndex {
    /// `warm` lists entity ids; `compositions[id]` is that entity's sorted
    /// composition and `reps` row `id` its embedded representation.
    pub fn new(warm: &[usize], compositions: &[Vec<usize>], reps: &DenseMatrix) -> Result<Self> {
        if warm.is_empty() {
            return Err(Error::Param("anchor index needs at least one warm entity".into()));
        }
        let sel = reps.select_rows(warm);
        let mut warm_mean = vec![0.0; reps.cols()];
        for r in 0..sel.rows() {
            warm_mean.iter_mut().zip(sel.row(r)).for_each(|(m, x)| *m += x);
        }
        warm_mean.iter_mut().for_each(|m| *m /= warm.len() as f64);
        Ok(Self {
            ids: warm.to_vec(),
            comps: warm.iter().map(|&e| compositions[e].clone()).collect(),
            reps: sel,
            warm_mean,
        })
    }

    /// Bundles described by their member items.
    pub fn for_bundles(z: &InteractionSet, warm: &[usize], reps: &DenseMatrix) -> Result<Self> {
        Self::new(warm, z.row_adjacency(), reps)
    }

    /// Items described by the bundles containing them.
    pub fn for_items(z: &InteractionSet, warm: &[usize], reps: &DenseMatrix) -> Result<Self> {
        Self::new(warm, z.col_adjacency(), reps)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn top(&self, entity: usize, composition: &[usize], n: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f64)> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id != entity)
            .map(|(k, _)| (k, binary_cosine(composition, &self.comps[k])))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(self.ids[a.0].cmp(&self.ids[b.0])));
        scored.into_iter().take(n).map(|(k, _)| k).collect()
    }

    /// Warm ids of the `n` most composition-similar candidates, excluding
    /// `entity` itself. Ties go to the lower id.
    pub fn neighbours(&self, entity: usize, composition: &[usize], n: usize) -> Vec<usize> {
        self.top(entity, composition, n).into_iter().map(|k| self.ids[k]).collect()
    }

    /// Mean embedded representation of the top-`n` neighbours. An empty
    /// composition (or no other candidate) falls back to the mean of all
    /// warm representations.
    pub fn anchor(&self, entity: usize, composition: &[usize], n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Param("anchor needs n >= 1".into()));
        }
        let nb = if composition.is_empty() {
            Vec::new()
        } else {
            self.top(entity, composition, n)
        };
        if nb.is_empty() {
            log::debug!("entity {entity} has no usable composition; anchoring at the warm mean");
            return Ok(self.warm_mean.clone());
        }
        let mut out = vec![0.0; self.reps.cols()];
        for &k in &nb {
            out.iter_mut().zip(self.reps.row(k)).for_each(|(o, x)| *o += x);
        }
        out.iter_mut().for_each(|o| *o /= nb.len() as f64);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reps(n: usize) -> DenseMatrix {
        DenseMatrix::from_fn(n, 2, |i, j| (i * 10 + j) as f64)
    }

    #[test]
    fn identical_composition_wins() {
        let comps = vec![vec![0, 1], vec![2, 3], vec![4], vec![2, 3]];
        let idx = AnchorIndex::new(&[0, 1, 2], &comps, &reps(4)).unwrap();
        assert_eq!(idx.anchor(3, &comps[3], 1).unwrap(), reps(4).row(1).to_vec());
    }

    #[test]
    fn orthogonal_candidates_fall_back_to_lowest_ids() {
        let comps = vec![vec![0], vec![1], vec![2], vec![9]];
        let idx = AnchorIndex::new(&[0, 1, 2], &comps, &reps(4)).unwrap();
        assert_eq!(idx.anchor(3, &comps[3], 2).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn self_is_excluded() {
        let comps = vec![vec![0, 1], vec![0], vec![5]];
        let idx = AnchorIndex::new(&[0, 1, 2], &comps, &reps(3)).unwrap();
        assert_eq!(idx.neighbours(0, &comps[0], 1), vec![1]);
    }

    #[test]
    fn empty_composition_uses_warm_mean() {
        let comps = vec![vec![0], vec![1], vec![]];
        let idx = AnchorIndex::new(&[0, 1], &comps, &reps(3)).unwrap();
        assert_eq!(idx.anchor(2, &[], 3).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn top_three_matches_brute_force() {
        let comps = vec![
            vec![0, 1, 2],
            vec![1, 2, 3, 4],
            vec![5, 6],
            vec![0, 2, 6],
            vec![2],
            vec![0, 1, 2, 6],
        ];
        let r = DenseMatrix::from_fn(6, 3, |i, j| ((i + 1) * (j + 2)) as f64 * 0.1);
        let idx = AnchorIndex::new(&[0, 1, 2, 3, 4], &comps, &r).unwrap();
        let query = &comps[5];
        let dense = |c: &[usize]| (0..7).map(|k| c.contains(&k) as u8 as f64).collect::<Vec<f64>>();
        let q = dense(query);
        let mut sims: Vec<(usize, f64)> = (0..5)
            .map(|i| {
                let v = dense(&comps[i]);
                let dotp: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                (i, dotp / (q.iter().sum::<f64>().sqrt() * v.iter().sum::<f64>().sqrt()))
            })
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let top: Vec<usize> = sims.iter().take(3).map(|s| s.0).collect();
        assert_eq!(idx.neighbours(5, query, 3), top);
        let got = idx.anchor(5, query, 3).unwrap();
        for j in 0..3 {
            let m = top.iter().map(|&i| r.get(i, j)).sum::<f64>() / 3.0;
            assert!((got[j] - m).abs() < 1e-15);
        }
    }
}
