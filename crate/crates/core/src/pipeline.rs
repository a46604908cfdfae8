//! Run directories. A run owns one effective config, its dataset and split,
//! the stage checkpoints in pipeline order, and every report derived from
//! them, all listed in `manifest.json`.
//!
//! Layout under the run directory:
//!
//! ```text
//! config.json              effective config (echoed into every artifact)
//! data/                    catalog.json + three interaction TSVs
//! split/                   train/val/test TSVs, labels.json, scenario.txt
//! stage1.ckpt              graph experts
//! stage2_bint.ckpt         diffusion expert, bundle-level view
//! stage2_iint.ckpt         diffusion expert, item-level view
//! stage3.ckpt              gates trained with augmentation
//! stage3_noaug.ckpt        gates trained on real triples only
//! metrics*.json, hits*.csv, gates.csv, output_gates.csv, projection_*.csv
//! manifest.json
//! ```
//!
//! Each checkpoint records the content hash of what it was built from
//! under `meta.parents`; loading a stage whose parents changed is an
//! ordering error.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::dataset::{
    cold_stats, ingest_raw, load_dataset, load_split, make_split, save_dataset, save_split, ColdStats, Dataset,
    Scenario, ScenarioSplit, SplitRatios, Situation, SynthData, SynthParams,
};
use crate::diffusion::{train_stage2, Stage2Config, ViewDiffusion, STAGE2_TAG};
use crate::error::{Error, Result};
use crate::eval::{evaluate, project_2d, MetricReport, Projection};
use crate::moe::{
    gates_csv, gates_from_checkpoint, output_gates_csv, train_stage3, FrozenExperts, FusedBundles, FusionMode,
    GateParams, Stage3Config, Stage3Output, STAGE3_TAG,
};
use crate::nn::DenseMatrix;
use crate::prior::{params_from_checkpoint, train_stage1, PriorModel, PriorReps, Stage1Config, Stage1Output, View, STAGE1_TAG};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_DIR: &str = "data";
pub const SPLIT_DIR: &str = "split";
pub const STAGE1_FILE: &str = "stage1.ckpt";
pub const STAGE2_BINT_FILE: &str = "stage2_bint.ckpt";
pub const STAGE2_IINT_FILE: &str = "stage2_iint.ckpt";
pub const STAGE3_FILE: &str = "stage3.ckpt";
pub const STAGE3_NOAUG_FILE: &str = "stage3_noaug.ckpt";

/// Learning-rate and L2 grids. Recorded for provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchGrid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            lr: vec![0.01, 0.003, 0.001, 0.0003, 0.0001],
            weight_decay: vec![1e-4, 1e-5, 1e-6, 1e-7, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Pre-densified dataset used when the run directory has no `data/`.
    pub data_dir: Option<PathBuf>,
    pub synth: SynthParams,
    pub scenario: Scenario,
    pub ratios: SplitRatios,
    /// Seeds the split and all three training stages (stage seeds are
    /// overwritten with it).
    pub seed: u64,
    /// Cut-off for Recall@k and NDCG@k.
    pub k: usize,
    /// Pseudo-to-real triple ratio for the gates; `null` takes the
    /// scenario default (0.5 cold start, 0.3 all bundle, 0 warm start).
    /// Copied into `stage3.eta`.
    pub eta: Option<f64>,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub stage3: Stage3Config,
    pub search_grid: SearchGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            synth: SynthParams::default(),
            scenario: Scenario::ColdStart,
            ratios: SplitRatios::default(),
            seed: 7,
            k: 20,
            eta: None,
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            stage3: Stage3Config::default(),
            search_grid: SearchGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fills derived fields (seeds, eta) and validates everything.
    pub fn resolved(mut self) -> Result<Self> {
        let eta = self.eta.unwrap_or(self.scenario.default_eta());
        self.eta = Some(eta);
        self.stage3.eta = eta;
        self.stage1.seed = self.seed;
        self.stage2.seed = self.seed;
        self.stage3.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.ratios.validate()?;
        if self.k == 0 {
            return Err(Error::Param("k must be positive".into()));
        }
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.stage3.validate()
    }

    /// Sets one dotted key (`stage1.lr`, `synth.n_users`, `scenario`)
    /// from text. The text is read as JSON when it parses, as a string
    /// otherwise.
    pub fn set(&mut self, key: &str, text: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::Param(format!("unknown config key `{key}`")))?;
        }
        *slot = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
        *self = serde_json::from_value(root).map_err(|e| Error::Param(format!("bad value for `{key}`: {e}")))?;
        Ok(())
    }

    /// Every leaf key with its default, sorted by key.
    pub fn keys_with_defaults() -> Vec<(String, String)> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
            match v {
                Value::Object(m) => {
                    for (k, child) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, child, out);
                    }
                }
                leaf => out.push((prefix.to_string(), leaf.to_string())),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(RunConfig::default()).expect("config serializes"), &mut out);
        out
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Which training stage(s) to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSel {
    One,
    Two,
    Three,
    All,
}

impl FromStr for StageSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(StageSel::One),
            "2" => Ok(StageSel::Two),
            "3" => Ok(StageSel::Three),
            "all" => Ok(StageSel::All),
            _ => Err(Error::Param(format!("stage must be 1, 2, 3 or all, got `{s}`"))),
        }
    }
}

/// Model variant for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Gates trained without pseudo cold bundles.
    NoAug,
    /// Experts added with equal weight, views added.
    NoMoe,
    /// Graph experts only.
    NoDiff,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoAug, Variant::NoMoe, Variant::NoDiff];

    /// At most one ablation flag may be set.
    pub fn from_flags(no_aug: bool, no_moe: bool, no_diff: bool) -> Result<Self> {
        match (no_aug, no_moe, no_diff) {
            (false, false, false) => Ok(Variant::Full),
            (true, false, false) => Ok(Variant::NoAug),
            (false, true, false) => Ok(Variant::NoMoe),
            (false, false, true) => Ok(Variant::NoDiff),
            _ => Err(Error::Param("--no-aug, --no-moe and --no-diff are mutually exclusive".into())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAug => "no_aug",
            Variant::NoMoe => "no_moe",
            Variant::NoDiff => "no_diff",
        }
    }

    fn suffix(self) -> String {
        match self {
            Variant::Full => String::new(),
            v => format!("_{}", v.as_str()),
        }
    }
}

/// Which interactions to rank against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holdout {
    Test,
    Val,
}

impl FromStr for Holdout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Holdout::Test),
            "val" => Ok(Holdout::Val),
            _ => Err(Error::Param(format!("holdout must be test or val, got `{s}`"))),
        }
    }
}

/// Representation table to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    Embed,
    Diff,
    Fused,
}

impl FromStr for ExpertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embed" => Ok(ExpertKind::Embed),
            "diff" => Ok(ExpertKind::Diff),
            "fused" => Ok(ExpertKind::Fused),
            _ => Err(Error::Param(format!("expert must be embed, diff or fused, got `{s}`"))),
        }
    }
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpertKind::Embed => "embed",
            ExpertKind::Diff => "diff",
            ExpertKind::Fused => "fused",
        })
    }
}

/// `metrics*.json`: the metric report plus what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub holdout: Holdout,
    /// Content hash of every checkpoint that was read.
    pub checkpoints: BTreeMap<String, String>,
    pub config: Value,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: Value,
    /// Paths relative to the run directory.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Scoring state for one variant.
pub struct Scorer {
    pub split: ScenarioSplit,
    pub experts: FrozenExperts,
    pub fused: FusedBundles,
    pub checkpoints: BTreeMap<String, String>,
}

impl Scorer {
    pub fn score_user(&self, u: usize, out: &mut [f64]) {
        self.fused.score_user(&self.experts, u, out)
    }
}

fn split_digest(split: &ScenarioSplit) -> String {
    let mut h = Sha256::new();
    h.update(split.scenario.as_str());
    for set in [&split.train_x, &split.val_x, &split.test_x] {
        h.update((set.len() as u64).to_le_bytes());
        for &(a, b) in set.pairs() {
            h.update((a as u64).to_le_bytes());
            h.update((b as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn set_parents(ck: &mut Checkpoint, parents: Value) {
    if let Value::Object(m) = &mut ck.meta {
        m.insert("parents".into(), parents);
    }
}

fn check_parent(ck: &Checkpoint, name: &str, expected: &str) -> Result<()> {
    match ck.meta["parents"][name].as_str() {
        Some(h) if h == expected => Ok(()),
        _ => Err(Error::Checkpoint(format!(
            "{} checkpoint is stale: it was not built from the current {name}; retrain it",
            ck.stage
        ))),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn pretty(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn warmth_label(cold: bool) -> String {
    if cold { "cold" } else { "warm" }.to_string()
}

pub struct Run {
    dir: PathBuf,
    pub config: RunConfig,
}

impl Run {
    /// Opens a run directory (created if missing) and records `config`,
    /// which is resolved first.
    pub fn create(dir: impl Into<PathBuf>, config: RunConfig) -> Result<Self> {
        let dir = dir.into();
        let config = config.resolved()?;
        fs::create_dir_all(&dir)?;
        write_text(&dir.join(CONFIG_FILE), &pretty(&config)?)?;
        Ok(Self { dir, config })
    }

    /// Config stored in an existing run directory, if any.
    pub fn stored_config(dir: impl AsRef<Path>) -> Result<Option<RunConfig>> {
        let path = dir.as_ref().join(CONFIG_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(RunConfig::from_json(&fs::read_to_string(path)?)?))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn config_with_eta(&self, eta: f64) -> Value {
        let mut c = self.config.clone();
        c.eta = Some(eta);
        c.stage3.eta = eta;
        c.to_value()
    }

    // ---- data -------------------------------------------------------------

    pub fn synth(&self) -> Result<SynthData> {
        let s = crate::dataset::synth_blockmodel(&self.config.synth)?;
        save_dataset(&s.data, self.path(DATA_DIR))?;
        let mut groups = String::new();
        for (class, g) in [("user", &s.user_group), ("bundle", &s.bundle_group), ("item", &s.item_group)] {
            for (id, grp) in g.iter().enumerate() {
                groups.push_str(&format!("{class}\t{id}\t{grp}\n"));
            }
        }
        write_text(&self.path(DATA_DIR).join("groups.tsv"), &groups)?;
        Ok(s)
    }

    pub fn ingest(&self, raw_dir: impl AsRef<Path>) -> Result<Dataset> {
        Ok(ingest_raw(raw_dir, self.path(DATA_DIR))?.0)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let local = self.path(DATA_DIR);
        if local.join("catalog.json").exists() {
            return load_dataset(local);
        }
        if let Some(d) = &self.config.data_dir {
            return load_dataset(d);
        }
        Err(Error::MissingStage {
            required: "data (run `synth` or `ingest`)".into(),
            path: local,
        })
    }

    /// Builds the configured split and writes it, replacing any previous one.
    pub fn make_split(&self) -> Result<ScenarioSplit> {
        let data = self.dataset()?;
        let split = make_split(&data, self.config.scenario, self.config.ratios, self.config.seed)?;
        save_split(&split, self.path(SPLIT_DIR))?;
        Ok(split)
    }

    /// The run's split, created on first use.
    pub fn split(&self) -> Result<ScenarioSplit> {
        let dir = self.path(SPLIT_DIR);
        if !dir.join("scenario.txt").exists() {
            log::info!("no split in {}; creating one", self.dir.display());
            return self.make_split();
        }
        let split = load_split(&self.dataset()?, &dir)?;
        if split.scenario != self.config.scenario {
            return Err(Error::Param(format!(
                "the run's split is {} but the config asks for {}; rerun `split`",
                split.scenario.as_str(),
                self.config.scenario.as_str()
            )));
        }
        Ok(split)
    }

    pub fn stats(&self) -> Result<ColdStats> {
        let stats = cold_stats(&self.split()?);
        write_text(&self.path("stats.json"), &pretty(&stats)?)?;
        Ok(stats)
    }

    // ---- training ---------------------------------------------------------

    pub fn train(&self, stage: StageSel) -> Result<()> {
        match stage {
            StageSel::One => self.train_stage1().map(|_| ()),
            StageSel::Two => self.train_stage2().map(|_| ()),
            StageSel::Three => self.train_stage3().map(|_| ()),
            StageSel::All => {
                self.train_stage1()?;
                self.train_stage2()?;
                self.train_stage3().map(|_| ())
            }
        }
    }

    pub fn train_stage1(&self) -> Result<Stage1Output> {
        let split = self.split()?;
        let out = train_stage1(&split, &self.config.stage1)?;
        log::info!(
            "stage 1: {} epochs, best {} (val recall {:.4})",
            out.epochs_run,
            out.best_epoch,
            out.val_recall.get(out.best_epoch.saturating_sub(1)).copied().unwrap_or(0.0)
        );
        let mut ck = out.to_checkpoint(self.config.to_value());
        set_parents(&mut ck, json!({ "split": split_digest(&split) }));
        ck.save(self.path(STAGE1_FILE))?;
        Ok(out)
    }

    fn load_stage1(&self, split: &ScenarioSplit) -> Result<(Checkpoint, PriorReps)> {
        let ck = Checkpoint::load_stage(self.path(STAGE1_FILE), STAGE1_TAG)?;
        check_parent(&ck, "split", &split_digest(split))?;
        let params = params_from_checkpoint(&ck)?;
        let layers = ck.config["stage1"]["layers"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("stage-1 config echo lacks stage1.layers".into()))? as usize;
        let reps = PriorModel::from_split(split, layers).forward(&params)?;
        Ok((ck, reps))
    }

    pub fn train_stage2(&self) -> Result<(ViewDiffusion, ViewDiffusion)> {
        let split = self.split()?;
        let (ck1, reps) = self.load_stage1(&split)?;
        let out = train_stage2(&split, &reps, &self.config.stage2)?;
        for (v, file) in [(&out.bint, STAGE2_BINT_FILE), (&out.iint, STAGE2_IINT_FILE)] {
            log::info!("stage 2 {}: final loss {:.5}", v.view.as_str(), v.epoch_loss.last().copied().unwrap_or(f64::NAN));
            let mut ck = v.to_checkpoint(self.config.to_value());
            set_parents(&mut ck, json!({ "stage1": ck1.content_hash() }));
            ck.save(self.path(file))?;
        }
        Ok((out.bint, out.iint))
    }

    fn load_stage2(&self, ck1: &Checkpoint) -> Result<(Checkpoint, Checkpoint)> {
        let load = |file: &str, view: View| -> Result<Checkpoint> {
            let ck = Checkpoint::load_stage(self.path(file), STAGE2_TAG)?;
            check_parent(&ck, "stage1", &ck1.content_hash())?;
            if ck.meta["view"] != json!(view) {
                return Err(Error::Checkpoint(format!("{file} does not hold the {} view", view.as_str())));
            }
            Ok(ck)
        };
        Ok((load(STAGE2_BINT_FILE, View::Bint)?, load(STAGE2_IINT_FILE, View::Iint)?))
    }

    /// Split, frozen expert outputs and the hashes they came from.
    pub fn experts(&self) -> Result<(ScenarioSplit, FrozenExperts, BTreeMap<String, String>)> {
        let split = self.split()?;
        let (ck1, reps) = self.load_stage1(&split)?;
        let (cb, ci) = self.load_stage2(&ck1)?;
        let (bint, iint) = (ViewDiffusion::from_checkpoint(&cb)?, ViewDiffusion::from_checkpoint(&ci)?);
        let ex = FrozenExperts::from_tables(&split, &reps, &bint.generated, &iint.generated)?;
        let hashes = BTreeMap::from([
            ("stage1".to_string(), ck1.content_hash()),
            ("stage2_bint".to_string(), cb.content_hash()),
            ("stage2_iint".to_string(), ci.content_hash()),
        ]);
        Ok((split, ex, hashes))
    }

    /// Trains the gates twice: with the configured `eta` and with `eta = 0`.
    pub fn train_stage3(&self) -> Result<(Stage3Output, Stage3Output)> {
        let (split, ex, parents) = self.experts()?;
        let checksum = ex.checksum();
        let full = train_stage3(&split, &ex, &self.config.stage3)?;
        let noaug = train_stage3(&split, &ex, &Stage3Config { eta: 0.0, ..self.config.stage3 })?;
        if ex.checksum() != checksum {
            return Err(Error::Checkpoint("expert outputs changed during gate training".into()));
        }
        for (out, file) in [(&full, STAGE3_FILE), (&noaug, STAGE3_NOAUG_FILE)] {
            log::info!(
                "stage 3 (eta {}): {} real + {} pseudo triples per epoch, final loss {:.5}",
                out.eta,
                out.real_per_epoch,
                out.pseudo_per_epoch,
                out.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
            let mut ck = out.to_checkpoint(self.config_with_eta(out.eta));
            set_parents(&mut ck, json!(parents));
            ck.save(self.path(file))?;
        }
        Ok((full, noaug))
    }

    fn load_gates(&self, file: &str, parents: &BTreeMap<String, String>) -> Result<(Checkpoint, GateParams)> {
        let ck = Checkpoint::load_stage(self.path(file), STAGE3_TAG)?;
        for (name, hash) in parents {
            check_parent(&ck, name, hash)?;
        }
        let gates = gates_from_checkpoint(&ck)?;
        Ok((ck, gates))
    }

    // ---- evaluation -------------------------------------------------------

    /// Loads exactly the checkpoints `variant` needs.
    pub fn scorer(&self, variant: Variant) -> Result<Scorer> {
        if variant == Variant::NoDiff {
            let split = self.split()?;
            let (ck1, reps) = self.load_stage1(&split)?;
            let ex = FrozenExperts::from_tables(&split, &reps, &reps.bint.entity_rep, &reps.iint.entity_rep)?;
            let fused = FusedBundles::build(&ex, &GateParams::zeros(ex.dim()), FusionMode::PriorOnly);
            return Ok(Scorer {
                split,
                experts: ex,
                fused,
                checkpoints: BTreeMap::from([("stage1".to_string(), ck1.content_hash())]),
            });
        }
        let (split, ex, mut hashes) = self.experts()?;
        let (gates, mode) = match variant {
            Variant::NoMoe => (GateParams::zeros(ex.dim()), FusionMode::Summed),
            v => {
                let file = if v == Variant::Full { STAGE3_FILE } else { STAGE3_NOAUG_FILE };
                let (ck, g) = self.load_gates(file, &hashes)?;
                hashes.insert(file.trim_end_matches(".ckpt").to_string(), ck.content_hash());
                (g, FusionMode::Gated)
            }
        };
        let fused = FusedBundles::build(&ex, &gates, mode);
        Ok(Scorer {
            split,
            experts: ex,
            fused,
            checkpoints: hashes,
        })
    }

    fn eval_with(&self, scorer: &Scorer, variant: Variant, holdout: Holdout) -> Result<EvalReport> {
        let target = match holdout {
            Holdout::Test => &scorer.split.test_x,
            Holdout::Val => &scorer.split.val_x,
        };
        let report = evaluate(&scorer.split, target, self.config.k, |u, out| scorer.score_user(u, out))?;
        Ok(EvalReport {
            variant,
            holdout,
            checkpoints: scorer.checkpoints.clone(),
            config: self.config.to_value(),
            report,
        })
    }

    /// Evaluates and writes `metrics{_variant}.json` (`metrics_val...` for
    /// the validation holdout).
    pub fn evaluate(&self, variant: Variant, holdout: Holdout) -> Result<EvalReport> {
        let scorer = self.scorer(variant)?;
        let rep = self.eval_with(&scorer, variant, holdout)?;
        let name = match holdout {
            Holdout::Test => format!("metrics{}.json", variant.suffix()),
            Holdout::Val => format!("metrics_val{}.json", variant.suffix()),
        };
        write_text(&self.path(&name), &pretty(&rep)?)?;
        Ok(rep)
    }

    /// Hit counts per cold-start situation, written as `hits{_variant}.csv`.
    pub fn hits(&self, variant: Variant) -> Result<(EvalReport, String)> {
        let scorer = self.scorer(variant)?;
        let rep = self.eval_with(&scorer, variant, Holdout::Test)?;
        let csv = hits_csv(&rep.report);
        write_text(&self.path(&format!("hits{}.csv", variant.suffix())), &csv)?;
        Ok((rep, csv))
    }

    /// View-gate weights per entity and output-gate weights per bundle of
    /// the full model, as `gates.csv` and `output_gates.csv`.
    pub fn gates(&self) -> Result<(String, String)> {
        let scorer = self.scorer(Variant::Full)?;
        let (g, o) = (gates_csv(&scorer.fused), output_gates_csv(&scorer.fused));
        write_text(&self.path("gates.csv"), &g)?;
        write_text(&self.path("output_gates.csv"), &o)?;
        Ok((g, o))
    }

    /// 2-D projection of one representation table. Item tables are used
    /// for the item-level view's embed and diff experts; fused tables are
    /// per bundle in both views.
    pub fn project(&self, view: View, expert: ExpertKind) -> Result<Projection> {
        let needs_gates = expert == ExpertKind::Fused;
        let scorer = if needs_gates { self.scorer(Variant::Full)? } else { self.scorer(Variant::NoMoe)? };
        let (split, ex) = (&scorer.split, &scorer.experts);
        let bundle_labels = || (0..split.catalog.n_bundles).map(|b| warmth_label(split.bundle_bint_label[b].is_cold()));
        let (table, labels): (&DenseMatrix, Vec<String>) = match (view, expert) {
            (View::Bint, ExpertKind::Embed) => (&ex.bundle_embed, bundle_labels().collect()),
            (View::Bint, ExpertKind::Diff) => (&ex.bundle_diff, bundle_labels().collect()),
            (View::Bint, ExpertKind::Fused) => (&scorer.fused.r_bint, bundle_labels().collect()),
            (View::Iint, ExpertKind::Fused) => (
                &scorer.fused.r_iint,
                (0..split.catalog.n_bundles).map(|b| warmth_label(split.bundle_iint_label[b].is_cold())).collect(),
            ),
            (View::Iint, e) => (
                if e == ExpertKind::Embed { &ex.item_embed } else { &ex.item_diff },
                split.item_label.iter().map(|w| warmth_label(w.is_cold())).collect(),
            ),
        };
        let proj = project_2d(table, &labels, self.config.seed)?;
        write_text(&self.path(&format!("projection_{}_{expert}.csv", view.as_str())), &proj.to_csv())?;
        Ok(proj)
    }

    // ---- manifest ---------------------------------------------------------

    /// Rewrites `manifest.json` from the current directory contents.
    pub fn write_manifest(&self) -> Result<Manifest> {
        fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, ArtifactEntry>) -> Result<()> {
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                if path.is_dir() {
                    walk(root, &path, out)?;
                    continue;
                }
                let rel = path.strip_prefix(root).expect("inside run dir").to_string_lossy().replace('\\', "/");
                if rel == MANIFEST_FILE {
                    continue;
                }
                let bytes = fs::read(&path)?;
                out.insert(
                    rel,
                    ArtifactEntry {
                        bytes: bytes.len() as u64,
                        sha256: hex::encode(Sha256::digest(&bytes)),
                    },
                );
            }
            Ok(())
        }
        let mut artifacts = BTreeMap::new();
        walk(&self.dir, &self.dir, &mut artifacts)?;
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.to_value(),
            artifacts,
        };
        write_text(&self.path(MANIFEST_FILE), &pretty(&m)?)?;
        Ok(m)
    }
}

/// `situation,bint,iint,hits,positives`, one row per situation.
pub fn hits_csv(report: &MetricReport) -> String {
    let mut s = String::from("situation,bint,iint,hits,positives\n");
    for h in &report.hits {
        let (b, i) = match h.situation {
            Situation::WarmWarm => ("warm", "warm"),
            Situation::WarmCold => ("warm", "cold"),
            Situation::ColdWarm => ("cold", "warm"),
            Situation::ColdCold => ("cold", "cold"),
        };
        s.push_str(&format!("{},{b},{i},{},{}\n", h.situation.label(), h.hits, h.positives));
    }
    s
}
