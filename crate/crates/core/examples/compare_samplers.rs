//! Trains every sampler on one planted world and prints final recall/NDCG.
//!
//! cargo run --release --example compare_samplers -- [seed] [epochs]

use negrec::experiment::{epochs_to_reach, PlantedExperiment};
use negrec::sampling::SamplerKind;

fn main() -> negrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(80, |s| s.parse().expect("epochs"));
    let exp = PlantedExperiment {
        epochs,
        ..PlantedExperiment::default()
    };
    let setup = exp.setup(seed)?;
    println!(
        "{} users, {} items, {} train / {} test pairs",
        setup.split.num_users(),
        setup.split.num_items(),
        setup.split.train().len(),
        setup.split.test().len()
    );
    println!(
        "{:<10} {:>10} {:>10} {:>14}",
        "sampler", "recall@20", "ndcg@20", "epochs to 90%"
    );
    for kind in [
        SamplerKind::Rns,
        SamplerKind::Dns,
        SamplerKind::MixGcf,
        SamplerKind::Ahns,
        SamplerKind::Semantic,
    ] {
        let run = exp.run(&setup, kind, seed)?;
        let reach = epochs_to_reach(&run.recall_curve, 0.9).map_or("-".into(), |e| e.to_string());
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>14}",
            kind.as_str(),
            run.recall(20),
            run.metrics.ndcg_at(20),
            reach
        );
    }
    Ok(())
}
