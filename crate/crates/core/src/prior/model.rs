use super::graph::{
    aggregate_items, aggregate_items_adjoint, normalize_adjacency, propagate, propagate_tables, BipartiteGraph,
    View, ViewEmbeddings,
};
use crate::dataset::{InteractionSet, ScenarioSplit};
use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, DenseMatrix, EmbeddingTable, Rng};

/// Initial (layer-0) embedding tables. The user table is shared by both views.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub users: EmbeddingTable,
    pub bundles: EmbeddingTable,
    pub items: EmbeddingTable,
}

impl PriorParams {
    pub fn init(n_users: usize, n_bundles: usize, n_items: usize, dim: usize, std: f64, rng: &mut Rng) -> Self {
        let mut table = |n: usize| DenseMatrix::from_fn(n, dim, |_, _| std * rng.normal());
        Self {
            users: table(n_users),
            bundles: table(n_bundles),
            items: table(n_items),
        }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }
}

/// Gradients with respect to [`PriorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrads {
    pub users: EmbeddingTable,
    pub bundles: EmbeddingTable,
    pub items: EmbeddingTable,
}

/// The two propagation graphs plus bundle composition.
#[derive(Debug, Clone)]
pub struct PriorModel {
    pub bint_graph: BipartiteGraph,
    pub iint_graph: BipartiteGraph,
    pub z: InteractionSet,
    pub layers: usize,
}

/// Embedded representations of both views after propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorReps {
    pub bint: ViewEmbeddings,
    pub iint: ViewEmbeddings,
    /// Item-level view bundle representations (mean of member items).
    pub iint_bundles: EmbeddingTable,
}

impl PriorReps {
    pub fn score(&self, u: usize, b: usize) -> f64 {
        dot(self.bint.user_rep.row(u), self.bint.entity_rep.row(b))
            + dot(self.iint.user_rep.row(u), self.iint_bundles.row(b))
    }

    pub fn score_user(&self, u: usize, out: &mut [f64]) {
        for (b, s) in out.iter_mut().enumerate() {
            *s = self.score(u, b);
        }
    }
}

impl PriorModel {
    pub fn new(train_x: &InteractionSet, train_y: &InteractionSet, z: &InteractionSet, layers: usize) -> Self {
        Self {
            bint_graph: normalize_adjacency(train_x),
            iint_graph: normalize_adjacency(train_y),
            z: z.clone(),
            layers,
        }
    }

    pub fn from_split(split: &ScenarioSplit, layers: usize) -> Self {
        Self::new(&split.train_x, &split.train_y, &split.z, layers)
    }

    pub fn forward(&self, p: &PriorParams) -> Result<PriorReps> {
        let bint = propagate(View::Bint, &self.bint_graph, &p.users, &p.bundles, self.layers)?;
        let iint = propagate(View::Iint, &self.iint_graph, &p.users, &p.items, self.layers)?;
        let iint_bundles = aggregate_items(&iint.entity_rep, &self.z)?;
        Ok(PriorReps {
            bint,
            iint,
            iint_bundles,
        })
    }

    /// Summed two-view BPR loss `sum -ln sigmoid(y_ub - y_ub')` over the
    /// triples, with gradients carried back through aggregation and both
    /// propagations to the initial tables.
    pub fn bpr_loss_and_grad(&self, p: &PriorParams, triples: &[(usize, usize, usize)]) -> Result<(f64, PriorGrads)> {
        let reps = self.forward(p)?;
        self.bpr_from_reps(p, &reps, triples)
    }

    pub(crate) fn bpr_from_reps(
        &self,
        p: &PriorParams,
        reps: &PriorReps,
        triples: &[(usize, usize, usize)],
    ) -> Result<(f64, PriorGrads)> {
        let d = p.dim();
        let mut g_ub = DenseMatrix::zeros(p.users.rows(), d);
        let mut g_b = DenseMatrix::zeros(p.bundles.rows(), d);
        let mut g_ui = DenseMatrix::zeros(p.users.rows(), d);
        let mut g_bi = DenseMatrix::zeros(p.bundles.rows(), d);
        let mut loss = 0.0;
        for &(u, b, n) in triples {
            let diff = reps.score(u, b) - reps.score(u, n);
            loss += softplus(-diff);
            // d/d(diff) of -ln sigmoid(diff)
            let c = -sigmoid(-diff);
            let (ru_b, ru_i) = (reps.bint.user_rep.row(u), reps.iint.user_rep.row(u));
            for k in 0..d {
                let db = reps.bint.entity_rep.get(b, k) - reps.bint.entity_rep.get(n, k);
                let di = reps.iint_bundles.get(b, k) - reps.iint_bundles.get(n, k);
                g_ub.row_mut(u)[k] += c * db;
                g_ui.row_mut(u)[k] += c * di;
                g_b.row_mut(b)[k] += c * ru_b[k];
                g_b.row_mut(n)[k] -= c * ru_b[k];
                g_bi.row_mut(b)[k] += c * ru_i[k];
                g_bi.row_mut(n)[k] -= c * ru_i[k];
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "stage-1 BPR loss".into(),
                index: 0,
            });
        }
        let g_items_rep = aggregate_items_adjoint(&g_bi, &self.z);
        let (mut gu, gb) = propagate_tables(&self.bint_graph, &g_ub, &g_b, self.layers)?;
        let (gu_i, gi) = propagate_tables(&self.iint_graph, &g_ui, &g_items_rep, self.layers)?;
        gu.axpy(1.0, &gu_i)?;
        Ok((
            loss,
            PriorGrads {
                users: gu,
                bundles: gb,
                items: gi,
            },
        ))
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
