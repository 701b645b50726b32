//! Recall of the semantic sampler across mixing weights.
//!
//! cargo run --release --example alpha_sensitivity -- [seed] [epochs]

use negrec::experiment::PlantedExperiment;
use negrec::objective::LossWeights;
use negrec::sampling::SamplerKind;

fn main() -> negrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(60, |s| s.parse().expect("epochs"));
    let exp = PlantedExperiment {
        epochs,
        ..PlantedExperiment::default()
    };
    let setup = exp.setup(seed)?;
    println!("alpha  recall@20  ndcg@20");
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let loss = LossWeights {
            alpha,
            ..exp.loss.clone()
        };
        let run = exp.run_with(&setup, SamplerKind::Semantic, &loss, seed)?;
        println!(
            "{alpha:<5}  {:.4}     {:.4}",
            run.recall(20),
            run.metrics.ndcg_at(20)
        );
    }
    Ok(())
}
