use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use coldbundle::pipeline::{ExpertKind, Holdout, Run, RunConfig, StageSel, Variant};
use coldbundle::prior::View;
use coldbundle::{Error, Result};

/// Cold-start bundle recommendation: graph experts, diffusion experts and
/// cold-aware gating, trained stage by stage inside a run directory.
#[derive(Parser)]
#[command(name = "coldbundle", version)]
struct Cli {
    /// Run directory; every artifact and manifest.json goes here.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// JSON config file (defaults to the run's config.json, then built-ins).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set stage1.lr=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for the split and all training stages [default: 7].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// cold_start, all_bundle or warm_start [default: cold_start].
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Pseudo-to-real triple ratio for gate training [default: 0.5 / 0.3 / 0 by scenario].
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Beta(a, a) parameter for interpolation ratios [default: 0.9].
    #[arg(long = "beta-alpha", global = true)]
    beta_alpha: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Ablation {
    /// Gates trained without pseudo cold bundles.
    #[arg(long = "no-aug")]
    no_aug: bool,
    /// Add expert outputs and view scores with equal weight.
    #[arg(long = "no-moe")]
    no_moe: bool,
    /// Graph experts only.
    #[arg(long = "no-diff")]
    no_diff: bool,
}

impl Ablation {
    fn variant(&self) -> Result<Variant> {
        Variant::from_flags(self.no_aug, self.no_moe, self.no_diff)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Densify raw TSVs with arbitrary ids into the run's data/ directory.
    Ingest {
        /// Directory with user_bundle.tsv, user_item.tsv, bundle_item.tsv.
        #[arg(long)]
        raw: PathBuf,
    },
    /// Cold-start situation table for the run's split.
    Stats {
        /// Print JSON instead of the aligned table.
        #[arg(long)]
        json: bool,
    },
    /// Build and write the configured scenario split.
    Split,
    /// Train stage 1, 2, 3 or all (each stage needs the previous one).
    Train {
        #[arg(value_name = "1|2|3|all")]
        stage: String,
    },
    /// Top-k evaluation; writes metrics*.json.
    Eval {
        #[command(flatten)]
        ablation: Ablation,
        /// test or val.
        #[arg(long, default_value = "test")]
        holdout: String,
    },
    /// Hits per cold-start situation; writes hits*.csv.
    Hits {
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Per-entity gate weights; writes gates.csv and output_gates.csv.
    Gates {
        /// Only `dump` is supported.
        #[arg(default_value = "dump")]
        action: String,
    },
    /// 2-D principal-component projection; writes projection_<view>_<expert>.csv.
    Project {
        /// bint or iint.
        #[arg(long, default_value = "bint")]
        view: String,
        /// embed, diff or fused.
        #[arg(long, default_value = "embed")]
        expert: String,
    },
    /// Generate a planted block-model dataset into the run's data/ directory.
    Synth,
}

fn config_help() -> String {
    let mut s = String::from("Config keys (set with --set KEY=VALUE or a JSON --config file) and defaults:\n");
    for (k, v) in RunConfig::keys_with_defaults() {
        s.push_str(&format!("  {k:<36} {v}\n"));
    }
    s
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => Run::stored_config(&cli.out)?.unwrap_or_default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Param(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = &cli.scenario {
        let scenario = s.parse()?;
        if scenario != cfg.scenario {
            // The stored eta was derived from the old scenario.
            cfg.eta = None;
        }
        cfg.scenario = scenario;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(eta) = cli.eta {
        cfg.eta = Some(eta);
    }
    if let Some(a) = cli.beta_alpha {
        cfg.stage3.beta_alpha = a;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let run = Run::create(&cli.out, effective_config(&cli)?)?;
    match cli.cmd {
        Cmd::Ingest { raw } => {
            let d = run.ingest(raw)?;
            println!(
                "{} users, {} bundles, {} items; {} user-bundle, {} user-item, {} bundle-item pairs",
                d.catalog.n_users,
                d.catalog.n_bundles,
                d.catalog.n_items,
                d.x.len(),
                d.y.len(),
                d.z.len()
            );
        }
        Cmd::Synth => {
            let s = run.synth()?;
            println!(
                "{} users, {} bundles, {} items; {} user-bundle, {} user-item pairs",
                s.data.catalog.n_users,
                s.data.catalog.n_bundles,
                s.data.catalog.n_items,
                s.data.x.len(),
                s.data.y.len()
            );
        }
        Cmd::Stats { json } => {
            let stats = run.stats()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{stats}");
            }
        }
        Cmd::Split => {
            let s = run.make_split()?;
            println!("{}: train {}, val {}, test {}", s.scenario.as_str(), s.train_x.len(), s.val_x.len(), s.test_x.len());
        }
        Cmd::Train { stage } => {
            let stage: StageSel = stage.parse()?;
            run.train(stage)?;
        }
        Cmd::Eval { ablation, holdout } => {
            let holdout: Holdout = holdout.parse()?;
            let rep = run.evaluate(ablation.variant()?, holdout)?;
            let r = &rep.report;
            println!("variant {}  scenario {}  k {}", rep.variant.as_str(), r.scenario.as_str(), r.k);
            println!("{:<6} {:>6} {:>9} {:>9} {:>9}", "subset", "users", "recall", "ndcg", "random");
            for (name, m) in [("all", &r.all), ("cold", &r.cold), ("warm", &r.warm)] {
                println!("{name:<6} {:>6} {:>9.4} {:>9.4} {:>9.4}", m.users, m.recall, m.ndcg, m.random_recall);
            }
        }
        Cmd::Hits { ablation } => {
            let (_, csv) = run.hits(ablation.variant()?)?;
            print!("{csv}");
        }
        Cmd::Gates { action } => {
            if action != "dump" {
                return Err(Error::Param(format!("unknown gates action `{action}`; expected dump")));
            }
            run.gates()?;
            println!("wrote gates.csv and output_gates.csv");
        }
        Cmd::Project { view, expert } => {
            let view = match view.as_str() {
                "bint" => View::Bint,
                "iint" => View::Iint,
                v => return Err(Error::Param(format!("view must be bint or iint, got `{v}`"))),
            };
            let expert: ExpertKind = expert.parse()?;
            let p = run.project(view, expert)?;
            println!(
                "{} rows; explained variance {:.3} / {:.3}",
                p.coords.len(),
                p.explained[0],
                p.explained[1]
            );
        }
    }
    run.write_manifest()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = Cli::command().after_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}
