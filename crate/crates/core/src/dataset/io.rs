use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Catalog, InteractionKind, InteractionSet};
use crate::error::{Error, Result};

const CATALOG_FILE: &str = "catalog.json";
const IDMAP_FILE: &str = "idmap.tsv";

/// The three relations of a bundle dataset over one catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub catalog: Catalog,
    /// User-bundle interactions.
    pub x: InteractionSet,
    /// User-item interactions.
    pub y: InteractionSet,
    /// Bundle-item affiliations.
    pub z: InteractionSet,
}

fn parse_pairs(path: &Path) -> Result<Vec<(u64, u64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(err(format!("expected two tab-separated integers, got {line:?}"))),
        };
        let parse = |s: &str| {
            if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
                Err(err(format!("{s:?} is not a base-10 integer")))
            } else {
                s.parse::<u64>().map_err(|e| err(e.to_string()))
            }
        };
        out.push((parse(a)?, parse(b)?));
    }
    Ok(out)
}

/// Reads a headerless two-column TSV of dense ids.
pub fn load_interactions(
    path: impl AsRef<Path>,
    kind: InteractionKind,
    catalog: &Catalog,
) -> Result<InteractionSet> {
    let path = path.as_ref();
    let (n_rows, n_cols) = catalog.dims(kind);
    let mut pairs = Vec::new();
    for (r, c) in parse_pairs(path)? {
        if r >= n_rows as u64 {
            return Err(Error::Bounds {
                what: kind.row_name(),
                id: r,
                count: n_rows,
            });
        }
        if c >= n_cols as u64 {
            return Err(Error::Bounds {
                what: kind.col_name(),
                id: c,
                count: n_cols,
            });
        }
        pairs.push((r as usize, c as usize));
    }
    InteractionSet::from_pairs(kind, catalog, pairs)
}

pub fn save_interactions(set: &InteractionSet, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::with_capacity(set.len() * 10);
    for &(r, c) in set.pairs() {
        writeln!(s, "{r}\t{c}").unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn save_catalog(catalog: &Catalog, dir: impl AsRef<Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(catalog)?;
    s.push('\n');
    fs::write(dir.as_ref().join(CATALOG_FILE), s)?;
    Ok(())
}

/// Reads `catalog.json`, or infers counts as `max id + 1` when it is absent.
pub fn load_catalog(dir: impl AsRef<Path>) -> Result<Catalog> {
    let dir = dir.as_ref();
    let path = dir.join(CATALOG_FILE);
    if path.exists() {
        let c: Catalog = serde_json::from_str(&fs::read_to_string(path)?)?;
        return Catalog::new(c.n_users, c.n_bundles, c.n_items);
    }
    let mut max = [0u64; 3]; // users, bundles, items
    let slots = [
        (InteractionKind::UserBundle, 0, 1),
        (InteractionKind::UserItem, 0, 2),
        (InteractionKind::BundleItem, 1, 2),
    ];
    for (kind, a, b) in slots {
        for (r, c) in parse_pairs(&dir.join(kind.file_name()))? {
            max[a] = max[a].max(r + 1);
            max[b] = max[b].max(c + 1);
        }
    }
    Catalog::new(max[0] as usize, max[1] as usize, max[2] as usize)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let catalog = load_catalog(dir)?;
    let load = |k: InteractionKind| load_interactions(dir.join(k.file_name()), k, &catalog);
    Ok(Dataset {
        x: load(InteractionKind::UserBundle)?,
        y: load(InteractionKind::UserItem)?,
        z: load(InteractionKind::BundleItem)?,
        catalog,
    })
}

pub fn save_dataset(data: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_catalog(&data.catalog, dir)?;
    save_interactions(&data.x, dir.join(InteractionKind::UserBundle.file_name()))?;
    save_interactions(&data.y, dir.join(InteractionKind::UserItem.file_name()))?;
    save_interactions(&data.z, dir.join(InteractionKind::BundleItem.file_name()))?;
    Ok(())
}

/// Raw-to-dense id assignment per entity class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<String>,
    pub bundles: Vec<String>,
    pub items: Vec<String>,
}

impl IdMap {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (class, ids) in [("user", &self.users), ("bundle", &self.bundles), ("item", &self.items)] {
            for (dense, raw) in ids.iter().enumerate() {
                writeln!(s, "{class}\t{raw}\t{dense}").unwrap();
            }
        }
        s
    }
}

fn raw_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected two tab-separated ids, got {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Orders raw ids numerically when they all parse as integers, lexically
/// otherwise, and assigns dense ids in that order.
fn densify(raw: impl IntoIterator<Item = String>) -> (Vec<String>, BTreeMap<String, usize>) {
    let mut ids: Vec<String> = raw.into_iter().collect();
    ids.sort();
    ids.dedup();
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    }
    let map = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (ids, map)
}

/// Densifies raw TSVs (arbitrary string ids) from `raw_dir` into a dataset
/// directory at `out_dir`, writing the `idmap.tsv` sidecar.
pub fn ingest_raw(raw_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<(Dataset, IdMap)> {
    let raw_dir = raw_dir.as_ref();
    let ub = raw_pairs(&raw_dir.join(InteractionKind::UserBundle.file_name()))?;
    let ui = raw_pairs(&raw_dir.join(InteractionKind::UserItem.file_name()))?;
    let bi = raw_pairs(&raw_dir.join(InteractionKind::BundleItem.file_name()))?;

    let (users, umap) = densify(ub.iter().chain(&ui).map(|p| p.0.clone()));
    let (bundles, bmap) = densify(ub.iter().map(|p| p.1.clone()).chain(bi.iter().map(|p| p.0.clone())));
    let (items, imap) = densify(ui.iter().chain(&bi).map(|p| p.1.clone()));
    let catalog = Catalog::new(users.len(), bundles.len(), items.len())?;

    let x = InteractionSet::from_pairs(
        InteractionKind::UserBundle,
        &catalog,
        ub.iter().map(|(u, b)| (umap[u], bmap[b])),
    )?;
    let y = InteractionSet::from_pairs(
        InteractionKind::UserItem,
        &catalog,
        ui.iter().map(|(u, i)| (umap[u], imap[i])),
    )?;
    let z = InteractionSet::from_pairs(
        InteractionKind::BundleItem,
        &catalog,
        bi.iter().map(|(b, i)| (bmap[b], imap[i])),
    )?;
    let data = Dataset { catalog, x, y, z };
    let idmap = IdMap { users, bundles, items };
    let out_dir = out_dir.as_ref();
    save_dataset(&data, out_dir)?;
    fs::write(out_dir.join(IDMAP_FILE), idmap.to_tsv())?;
    Ok((data, idmap))
}
