//! Splits items into popular / normal / unpopular by train count and
//! reports recall inside each stratum.

use negrec::dataset::{stratify_popularity, Stratum};
use negrec::eval::evaluate;
use negrec::experiment::PlantedExperiment;
use negrec::sampling::SamplerKind;

fn main() -> negrec::Result<()> {
    let exp = PlantedExperiment {
        epochs: 60,
        ..PlantedExperiment::default()
    };
    let setup = exp.setup(3)?;
    let strata = stratify_popularity(&setup.split);
    for s in Stratum::ALL {
        println!("{:<10} {} items", s.as_str(), strata.items(s).len());
    }
    for kind in [SamplerKind::Rns, SamplerKind::Dns] {
        let run = exp.run(&setup, kind, 3)?;
        let emb = negrec::backbone::propagate(
            &run.state.embeddings,
            &negrec::backbone::PropagationPlan::from_dataset(&setup.split, exp.train.layers)?,
        )?;
        let m = evaluate(&emb, &setup.split, &[20], Some(&strata))?;
        let mut line = format!("{:<4} all {:.4}", kind.as_str(), m.recall_at(20));
        for (s, sub) in m.per_stratum.iter().flatten() {
            line += &format!("  {} {:.4}", s.as_str(), sub.recall_at(20));
        }
        println!("{line}");
    }
    Ok(())
}
