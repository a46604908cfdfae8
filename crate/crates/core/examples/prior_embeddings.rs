//! Trains the graph experts alone and shows that bundles without training
//! interactions never move away from their initial embedding.

use coldbundle::dataset::{make_split, synth_blockmodel, Scenario, SplitRatios, SynthParams};
use coldbundle::nn::norm;
use coldbundle::prior::{train_stage1, Stage1Config};

fn main() -> coldbundle::Result<()> {
    let data = synth_blockmodel(&SynthParams::default())?.data;
    let split = make_split(&data, Scenario::ColdStart, SplitRatios::default(), 7)?;
    let cfg = Stage1Config {
        epochs: 60,
        ..Stage1Config::default()
    };
    let out = train_stage1(&split, &cfg)?;
    println!("ran {} epochs, best at {}", out.epochs_run, out.best_epoch);
    for (e, (loss, recall)) in out.train_loss.iter().zip(&out.val_recall).enumerate().step_by(10) {
        println!("epoch {e:>3}  loss {loss:.4}  val recall@20 {recall:.4}");
    }

    let k = cfg.layers as f64;
    let (mut cold_err, mut warm_norm, mut cold_norm) = (0.0_f64, 0.0, 0.0);
    let (cold, warm) = (split.bint_cold_bundles(), split.bint_warm_bundles());
    for &b in &cold {
        let rep = out.reps.bint.entity_rep.row(b);
        let e0 = out.params.bundles.row(b);
        cold_err = cold_err.max(rep.iter().zip(e0).map(|(r, e)| (r - e / k).abs()).fold(0.0, f64::max));
        cold_norm += norm(rep) / cold.len() as f64;
    }
    for &b in &warm {
        warm_norm += norm(out.reps.bint.entity_rep.row(b)) / warm.len() as f64;
    }
    println!("cold bundles: rep = e0 / K up to {cold_err:.1e}");
    println!("mean rep norm: warm {warm_norm:.3}, cold {cold_norm:.3}");
    Ok(())
}
