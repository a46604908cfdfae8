//! Interaction data, scenario splits and cold-start bookkeeping.

mod io;
mod split;
mod stats;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{ingest_raw, load_catalog, load_dataset, load_interactions, save_catalog, save_dataset, save_interactions, Dataset, IdMap};
pub use split::{load_split, make_split, save_split, LabelFile, Scenario, ScenarioSplit, SplitRatios, Warmth};
pub use stats::{cold_stats, ColdStats, Situation, SituationStats};
pub use synth::{synth_blockmodel, SynthData, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub n_users: usize,
    pub n_bundles: usize,
    pub n_items: usize,
}

impl Catalog {
    pub fn new(n_users: usize, n_bundles: usize, n_items: usize) -> Result<Self> {
        if n_users == 0 || n_bundles == 0 || n_items == 0 {
            return Err(Error::Param(format!(
                "catalog counts must be positive, got {n_users}/{n_bundles}/{n_items}"
            )));
        }
        Ok(Self {
            n_users,
            n_bundles,
            n_items,
        })
    }

    pub fn dims(&self, kind: InteractionKind) -> (usize, usize) {
        match kind {
            InteractionKind::UserBundle => (self.n_users, self.n_bundles),
            InteractionKind::UserItem => (self.n_users, self.n_items),
            InteractionKind::BundleItem => (self.n_bundles, self.n_items),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    UserBundle,
    UserItem,
    BundleItem,
}

impl InteractionKind {
    pub fn row_name(self) -> &'static str {
        match self {
            InteractionKind::UserBundle | InteractionKind::UserItem => "user",
            InteractionKind::BundleItem => "bundle",
        }
    }

    pub fn col_name(self) -> &'static str {
        match self {
            InteractionKind::UserBundle => "bundle",
            InteractionKind::UserItem | InteractionKind::BundleItem => "item",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            InteractionKind::UserBundle => "user_bundle.tsv",
            InteractionKind::UserItem => "user_item.tsv",
            InteractionKind::BundleItem => "bundle_item.tsv",
        }
    }
}

/// Binary relation between two entity classes with both adjacency views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    kind: InteractionKind,
    n_rows: usize,
    n_cols: usize,
    pairs: Vec<(usize, usize)>,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
}

impl InteractionSet {
    pub fn empty(kind: InteractionKind, catalog: &Catalog) -> Self {
        let (n_rows, n_cols) = catalog.dims(kind);
        Self {
            kind,
            n_rows,
            n_cols,
            pairs: Vec::new(),
            row_adj: vec![Vec::new(); n_rows],
            col_adj: vec![Vec::new(); n_cols],
        }
    }

    /// Builds a deduplicated set; order of `pairs` is irrelevant.
    pub fn from_pairs(
        kind: InteractionKind,
        catalog: &Catalog,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let (n_rows, n_cols) = catalog.dims(kind);
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        for &(r, c) in &pairs {
            if r >= n_rows {
                return Err(Error::Bounds {
                    what: kind.row_name(),
                    id: r as u64,
                    count: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::Bounds {
                    what: kind.col_name(),
                    id: c as u64,
                    count: n_cols,
                });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_adj = vec![Vec::new(); n_rows];
        let mut col_adj = vec![Vec::new(); n_cols];
        for &(r, c) in &pairs {
            row_adj[r].push(c);
            col_adj[c].push(r);
        }
        // Pairs are sorted by (row, col), so rows are sorted already;
        // columns receive rows in ascending order as well.
        Ok(Self {
            kind,
            n_rows,
            n_cols,
            pairs,
            row_adj,
            col_adj,
        })
    }

    pub fn kind(&self) -> InteractionKind {
        self.kind
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_adj[r]
    }

    pub fn col(&self, c: usize) -> &[usize] {
        &self.col_adj[c]
    }

    pub fn row_degree(&self, r: usize) -> usize {
        self.row_adj[r].len()
    }

    pub fn col_degree(&self, c: usize) -> usize {
        self.col_adj[c].len()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_adj[r].binary_search(&c).is_ok()
    }

    pub fn row_adjacency(&self) -> &[Vec<usize>] {
        &self.row_adj
    }

    pub fn col_adjacency(&self) -> &[Vec<usize>] {
        &self.col_adj
    }
}
