//! Generates the planted block-model dataset and prints the cold-start
//! situation table for each scenario.

use coldbundle::dataset::{cold_stats, make_split, synth_blockmodel, Scenario, SplitRatios, SynthParams};

fn main() -> coldbundle::Result<()> {
    let synth = synth_blockmodel(&SynthParams::default())?;
    let d = &synth.data;
    println!(
        "{} users, {} bundles, {} items: {} user-bundle, {} user-item, {} bundle-item pairs\n",
        d.catalog.n_users,
        d.catalog.n_bundles,
        d.catalog.n_items,
        d.x.len(),
        d.y.len(),
        d.z.len()
    );
    for scenario in [Scenario::WarmStart, Scenario::AllBundle, Scenario::ColdStart] {
        let split = make_split(d, scenario, SplitRatios::default(), 7)?;
        println!("train {} / val {} / test {}", split.train_x.len(), split.val_x.len(), split.test_x.len());
        println!("{}", cold_stats(&split));
    }
    Ok(())
}
