//! End-to-end run through the run-directory pipeline: synthesize, train
//! all stages, then evaluate every variant. Pass a directory to keep the
//! artifacts; otherwise they go to a temporary one.

use coldbundle::pipeline::{Holdout, Run, RunConfig, StageSel, Variant};

fn main() -> coldbundle::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("coldbundle-example"));
    let run = Run::create(&dir, RunConfig::default())?;
    run.synth()?;
    println!("{}", run.stats()?);
    run.train(StageSel::All)?;
    println!("{:<8} {:>10} {:>10} {:>10}", "variant", "recall@20", "ndcg@20", "random");
    for v in Variant::ALL {
        let r = run.evaluate(v, Holdout::Test)?.report;
        println!("{:<8} {:>10.4} {:>10.4} {:>10.4}", v.as_str(), r.cold.recall, r.cold.ndcg, r.cold.random_recall);
    }
    run.gates()?;
    run.write_manifest()?;
    println!("artifacts in {}", dir.display());
    Ok(())
}
