//! Central differences against the analytic BPR, alignment and propagation
//! gradients.

use negrec::backbone::{backprop_propagation, propagate, EmbeddingTable, PropagationPlan};
use negrec::dataset::InteractionDataset;
use negrec::linalg::{dot, Matrix};
use negrec::objective::{bpr_gradients, bpr_loss, infonce_align, infonce_align_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / dot(a, a).sqrt().max(1e-12)
}

fn numeric(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += H;
            m[i] -= H;
            (f(&p) - f(&m)) / (2.0 * H)
        })
        .collect()
}

fn main() -> negrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (u, p, n) = (vec(8), vec(8), vec(8));
    let hard = vec![vec(8), vec(8)];

    let (gu, _, _) = bpr_gradients(&u, &p, &n)?;
    let fd = numeric(&u, |x| bpr_loss(dot(x, &p), dot(x, &n)));
    println!("bpr wrt user        {:.2e}", rel(&gu, &fd));

    let g = infonce_align_grad(&u, &p, &hard, 0.2)?;
    let fd = numeric(&u, |x| infonce_align(x, &p, &hard, 0.2).unwrap());
    println!("alignment wrt user  {:.2e}", rel(&g.g_u, &fd));

    // the propagation adjoint, through a random linear read-out
    let ds = InteractionDataset::from_pairs(
        4,
        5,
        vec![(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 4), (3, 0)],
    )?;
    let plan = PropagationPlan::from_dataset(&ds, 3)?;
    let base = vec(9 * 3);
    let w = vec(9 * 3);
    let out = |x: &[f64]| {
        let t = EmbeddingTable::from_nodes(4, Matrix::from_vec(9, 3, x.to_vec()).unwrap()).unwrap();
        dot(propagate(&t, &plan).unwrap().nodes().as_slice(), &w)
    };
    let g = backprop_propagation(&plan, &Matrix::from_vec(9, 3, w.clone())?)?;
    println!(
        "propagation         {:.2e}",
        rel(g.as_slice(), &numeric(&base, out))
    );
    Ok(())
}
