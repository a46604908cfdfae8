use serde::{Deserialize, Serialize};

use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::nn::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    /// Bundle-level interaction view (user-bundle graph).
    Bint,
    /// Item-level interaction view (user-item graph, aggregated to bundles).
    Iint,
}

impl View {
    pub const ALL: [View; 2] = [View::Bint, View::Iint];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Bint => "bint",
            View::Iint => "iint",
        }
    }
}

/// Symmetrically normalised bipartite adjacency; edge `(l, r)` carries
/// `1 / sqrt(deg(l) * deg(r))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    left: Vec<Vec<(usize, f64)>>,
    right: Vec<Vec<(usize, f64)>>,
}

pub fn normalize_adjacency(edges: &InteractionSet) -> BipartiteGraph {
    let weight = |l: usize, r: usize| {
        1.0 / ((edges.row_degree(l) as f64) * (edges.col_degree(r) as f64)).sqrt()
    };
    let left = (0..edges.n_rows())
        .map(|l| edges.row(l).iter().map(|&r| (r, weight(l, r))).collect())
        .collect();
    let right = (0..edges.n_cols())
        .map(|r| edges.col(r).iter().map(|&l| (l, weight(l, r))).collect())
        .collect();
    BipartiteGraph { left, right }
}

impl BipartiteGraph {
    pub fn left_count(&self) -> usize {
        self.left.len()
    }

    pub fn right_count(&self) -> usize {
        self.right.len()
    }

    pub fn left_neighbors(&self, l: usize) -> &[(usize, f64)] {
        &self.left[l]
    }

    pub fn right_neighbors(&self, r: usize) -> &[(usize, f64)] {
        &self.right[r]
    }

    /// Dense `left_count x right_count` matrix of edge weights.
    pub fn to_dense(&self) -> EmbeddingTable {
        let mut m = EmbeddingTable::zeros(self.left_count(), self.right_count());
        for (l, nb) in self.left.iter().enumerate() {
            for &(r, w) in nb {
                m.set(l, r, w);
            }
        }
        m
    }
}

fn spread(adj: &[Vec<(usize, f64)>], src: &EmbeddingTable) -> EmbeddingTable {
    let mut out = EmbeddingTable::zeros(adj.len(), src.cols());
    for (i, nb) in adj.iter().enumerate() {
        let row = out.row_mut(i);
        for &(j, w) in nb {
            for (o, s) in row.iter_mut().zip(src.row(j)) {
                *o += w * s;
            }
        }
    }
    out
}

/// Layer-pooled propagation on both sides of the graph:
/// `e^(k)_left = A e^(k-1)_right`, `e^(k)_right = A^T e^(k-1)_left`, and
/// each side's representation is `(1/K) * sum_{k=0..K} e^(k)`.
///
/// The operator is self-adjoint, so the same call maps gradients on the
/// pooled representations back to gradients on the layer-0 tables.
pub fn propagate_tables(
    g: &BipartiteGraph,
    e_left: &EmbeddingTable,
    e_right: &EmbeddingTable,
    layers: usize,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    if layers == 0 {
        return Err(Error::Param("propagation needs at least one layer".into()));
    }
    if e_left.cols() != e_right.cols() {
        return Err(Error::shape("propagate dims", e_left.cols(), e_right.cols()));
    }
    if e_left.rows() != g.left_count() || e_right.rows() != g.right_count() {
        return Err(Error::shape(
            "propagate rows",
            format!("({}, {})", g.left_count(), g.right_count()),
            format!("({}, {})", e_left.rows(), e_right.rows()),
        ));
    }
    let mut sum_l = e_left.clone();
    let mut sum_r = e_right.clone();
    let mut cur_l = e_left.clone();
    let mut cur_r = e_right.clone();
    for _ in 0..layers {
        let next_l = spread(&g.left, &cur_r);
        let next_r = spread(&g.right, &cur_l);
        sum_l.axpy(1.0, &next_l)?;
        sum_r.axpy(1.0, &next_r)?;
        cur_l = next_l;
        cur_r = next_r;
    }
    let scale = 1.0 / layers as f64;
    sum_l.scale(scale);
    sum_r.scale(scale);
    Ok((sum_l, sum_r))
}

/// Pooled representations of one interaction view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddings {
    pub view: View,
    pub user_rep: EmbeddingTable,
    /// Bundles for [`View::Bint`], items for [`View::Iint`].
    pub entity_rep: EmbeddingTable,
    pub layers: usize,
}

pub fn propagate(
    view: View,
    g: &BipartiteGraph,
    e_users: &EmbeddingTable,
    e_entities: &EmbeddingTable,
    layers: usize,
) -> Result<ViewEmbeddings> {
    let (user_rep, entity_rep) = propagate_tables(g, e_users, e_entities, layers)?;
    Ok(ViewEmbeddings {
        view,
        user_rep,
        entity_rep,
        layers,
    })
}

/// Mean of member-item representations per bundle.
pub fn aggregate_items(item_rep: &EmbeddingTable, z: &InteractionSet) -> Result<EmbeddingTable> {
    if item_rep.rows() != z.n_cols() {
        return Err(Error::shape("aggregate_items", z.n_cols(), item_rep.rows()));
    }
    let mut out = EmbeddingTable::zeros(z.n_rows(), item_rep.cols());
    for b in 0..z.n_rows() {
        let items = z.row(b);
        if items.is_empty() {
            return Err(Error::EmptyBundle(b));
        }
        let inv = 1.0 / items.len() as f64;
        let row = out.row_mut(b);
        for &i in items {
            for (o, x) in row.iter_mut().zip(item_rep.row(i)) {
                *o += x;
            }
        }
        row.iter_mut().for_each(|o| *o *= inv);
    }
    Ok(out)
}

/// Adjoint of [`aggregate_items`]: scatters bundle gradients to items.
pub fn aggregate_items_adjoint(grad_bundle: &EmbeddingTable, z: &InteractionSet) -> EmbeddingTable {
    let mut out = EmbeddingTable::zeros(z.n_cols(), grad_bundle.cols());
    for b in 0..z.n_rows() {
        let items = z.row(b);
        if items.is_empty() {
            continue;
        }
        let inv = 1.0 / items.len() as f64;
        for &i in items {
            for (o, g) in out.row_mut(i).iter_mut().zip(grad_bundle.row(b)) {
                *o += inv * g;
            }
        }
    }
    out
}
