//! Measures how often drawn negatives are actually held-out positives.
//!
//! The planted oracle answers a known share of pairs with the exact vector
//! of one of the user's test items, so the probe should recover that share.

use negrec::eval::{fhns_panel, probe_panel, FhnsTrace};
use negrec::experiment::PlantedExperiment;
use negrec::objective::Trainer;
use negrec::sampling::SamplerKind;
use negrec::semantic::oracle::OracleConfig;

fn main() -> negrec::Result<()> {
    let rate = 0.1;
    let exp = PlantedExperiment {
        oracle: OracleConfig {
            exact_test_rate: rate,
            ..OracleConfig::default()
        },
        ..PlantedExperiment::default()
    };
    let setup = exp.setup(0)?;

    // provider-space: every record against the oracle's item vectors
    let mut drawn: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for r in &setup.records {
        let Some(v) = r.raw_vector.clone() else {
            continue;
        };
        match drawn.last_mut() {
            Some((u, list)) if *u == r.user => list.push(v),
            _ => drawn.push((r.user, vec![v])),
        }
    }
    let f = fhns_panel(&setup.split, &drawn, |v| Some(setup.oracle.anchor(v)))?;
    println!("planted {rate}, measured {f:.4}");

    // latent space: negatives a sampler feeds the loss, per epoch
    let trainer = Trainer::new(
        &setup.split,
        exp.train.clone(),
        exp.sampler(SamplerKind::Dns, 0),
        exp.loss.clone(),
        None,
    )?;
    let mut state = trainer.init_state()?;
    let panel = probe_panel(&setup.split, 50, 0);
    let mut trace = FhnsTrace::default();
    for epoch in 1..=5 {
        trainer.train_epoch(&mut state)?;
        let snap = trainer.snapshot(&state)?;
        let negs = trainer.probe_negatives(&state, &panel, epoch as u64)?;
        let drawn: Vec<_> = panel.iter().copied().zip(negs).collect();
        trace.push(
            epoch,
            fhns_panel(&setup.split, &drawn, |v| Some(snap.item(v).to_vec()))?,
        );
    }
    print!("{}", trace.to_csv());
    Ok(())
}
