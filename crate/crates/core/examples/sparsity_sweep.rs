//! Keeps a growing share of the training pairs and retrains each time.

use negrec::eval::{evaluate, sparsity_sweep};
use negrec::experiment::PlantedExperiment;
use negrec::objective::{TrainConfig, Trainer};
use negrec::sampling::{SamplerConfig, SamplerKind};

fn main() -> negrec::Result<()> {
    let exp = PlantedExperiment::default();
    let setup = exp.setup(5)?;
    let cfg = TrainConfig {
        seed: 5,
        ..exp.train.clone()
    };
    let table = sparsity_sweep(&setup.split, &[0.25, 0.5, 0.75, 1.0], 5, |sub| {
        let t = Trainer::new(
            sub,
            cfg.clone(),
            SamplerConfig::new(SamplerKind::Dns),
            exp.loss.clone(),
            None,
        )?;
        let mut s = t.init_state()?;
        t.fit(&mut s, 40, |_, _| Ok(()))?;
        evaluate(&t.snapshot(&s)?, sub, &[10, 20], None)
    })?;
    print!("{}", table.to_csv());
    Ok(())
}
