//! Trains all three stages in memory and prints how the view gates split
//! weight between the graph and diffusion experts, per cold-start situation.

use coldbundle::dataset::{make_split, synth_blockmodel, Scenario, Situation, SplitRatios, SynthParams};
use coldbundle::diffusion::{train_stage2, Stage2Config};
use coldbundle::moe::{interpolate_pseudo, train_stage3, view_gate, FrozenExperts, FusedBundles, FusionMode, Stage3Config};
use coldbundle::prior::{train_stage1, Stage1Config};

fn main() -> coldbundle::Result<()> {
    let scenario: Scenario = std::env::args().nth(1).as_deref().unwrap_or("cold_start").parse()?;
    let data = synth_blockmodel(&SynthParams::default())?.data;
    let split = make_split(&data, scenario, SplitRatios::default(), 7)?;
    let s1 = train_stage1(&split, &Stage1Config::default())?;
    let s2 = train_stage2(&split, &s1.reps, &Stage2Config::default())?;
    let experts = FrozenExperts::new(&split, &s1.reps, &s2)?;
    let s3 = train_stage3(
        &split,
        &experts,
        &Stage3Config {
            eta: scenario.default_eta(),
            ..Stage3Config::default()
        },
    )?;
    let fused = FusedBundles::build(&experts, &s3.gates, FusionMode::Gated);

    println!("{:<22} {:>7} {:>10} {:>12}", "situation", "bundles", "w_diff", "out_gate[0]");
    for s in Situation::ALL {
        let ids: Vec<usize> = (0..split.catalog.n_bundles).filter(|&b| split.situation(b) == s).collect();
        if ids.is_empty() {
            continue;
        }
        let n = ids.len() as f64;
        let w: f64 = ids.iter().map(|&b| fused.bundle_gate[b][1]).sum::<f64>() / n;
        let o: f64 = ids.iter().map(|&b| fused.out_gate[b][0]).sum::<f64>() / n;
        println!("{:<22} {:>7} {w:>10.3} {o:>12.3}", s.label(), ids.len());
    }
    let warm = split.bint_warm_bundles();
    let p = interpolate_pseudo(warm[0], warm[1], 0.5, &experts)?;
    println!("pseudo bundle gate {:?}", view_gate(&[p.feature], &s3.gates.w_bint));
    Ok(())
}
