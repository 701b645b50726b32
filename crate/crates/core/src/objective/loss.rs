//! Scalar losses and their closed-form gradients.

use crate::error::{check_dims, Error, Result};
use crate::linalg::{axpy, dot, norm, sub};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function, stable in both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise ranking loss `-ln σ(s_pos - s_neg)`.
pub fn bpr_loss(s_pos: f64, s_neg: f64) -> f64 {
    softplus(s_neg - s_pos)
}

/// Gradients of `bpr_loss(e_u·e_pos, e_u·e_neg)` with respect to the user,
/// positive and negative vectors.
pub fn bpr_gradients(
    e_u: &[f64],
    e_pos: &[f64],
    e_neg: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_dims(e_u.len(), e_pos.len())?;
    check_dims(e_u.len(), e_neg.len())?;
    let diff = sub(e_pos, e_neg);
    let g = sigmoid(-dot(e_u, &diff));
    let g_u = diff.iter().map(|x| -g * x).collect();
    let g_pos = e_u.iter().map(|x| -g * x).collect();
    let g_neg = e_u.iter().map(|x| g * x).collect();
    Ok((g_u, g_pos, g_neg))
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy with the target at index 0, over `logits / tau`.
/// Returns the loss and `dL/dlogit_i`.
fn contrastive(logits: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let scaled: Vec<f64> = logits.iter().map(|s| s / tau).collect();
    let lse = logsumexp(&scaled);
    let loss = lse - scaled[0];
    let grads = scaled
        .iter()
        .enumerate()
        .map(|(i, s)| ((s - lse).exp() - if i == 0 { 1.0 } else { 0.0 }) / tau)
        .collect();
    (loss, grads)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "temperature must be > 0, got {tau}"
        )))
    }
}

fn nonzero_norm(v: &[f64], what: &str) -> Result<f64> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} has zero norm; cosine undefined"
        )))
    }
}

/// Cosine alignment loss of a user against its positive and hard negatives.
pub fn infonce_align(e_u: &[f64], e_pos: &[f64], hard_negs: &[Vec<f64>], tau: f64) -> Result<f64> {
    Ok(infonce_align_grad(e_u, e_pos, hard_negs, tau)?.loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignGrad {
    pub loss: f64,
    pub g_u: Vec<f64>,
    pub g_pos: Vec<f64>,
    pub g_negs: Vec<Vec<f64>>,
}

/// [`infonce_align`] together with its gradients.
pub fn infonce_align_grad(
    e_u: &[f64],
    e_pos: &[f64],
    hard_negs: &[Vec<f64>],
    tau: f64,
) -> Result<AlignGrad> {
    check_tau(tau)?;
    let d = e_u.len();
    let nu = nonzero_norm(e_u, "user vector")?;
    let mut others: Vec<&[f64]> = Vec::with_capacity(hard_negs.len() + 1);
    others.push(e_pos);
    others.extend(hard_negs.iter().map(Vec::as_slice));
    let mut norms = Vec::with_capacity(others.len());
    let mut cos = Vec::with_capacity(others.len());
    for x in &others {
        check_dims(d, x.len())?;
        let nx = nonzero_norm(x, "candidate vector")?;
        norms.push(nx);
        cos.push(dot(e_u, x) / (nu * nx));
    }
    let (loss, dc) = contrastive(&cos, tau);
    let mut g_u = vec![0.0; d];
    let mut g_x = Vec::with_capacity(others.len());
    for (i, x) in others.iter().enumerate() {
        // d cos / d u = x/(|u||x|) - cos u/|u|^2, symmetric for x.
        let a = dc[i] / (nu * norms[i]);
        axpy(a, x, &mut g_u);
        axpy(-dc[i] * cos[i] / (nu * nu), e_u, &mut g_u);
        let mut gx = vec![0.0; d];
        axpy(a, e_u, &mut gx);
        axpy(-dc[i] * cos[i] / (norms[i] * norms[i]), x, &mut gx);
        g_x.push(gx);
    }
    let g_pos = g_x.remove(0);
    Ok(AlignGrad {
        loss,
        g_u,
        g_pos,
        g_negs: g_x,
    })
}

/// Dot-product contrastive loss of a query against a target and negatives.
pub fn sft_infonce(q: &[f64], pos: &[f64], negs: &[Vec<f64>], tau: f64) -> Result<f64> {
    Ok(sft_infonce_grad(q, pos, negs, tau)?.loss)
}

/// [`sft_infonce`] with gradients; `g_u` holds the query gradient.
pub fn sft_infonce_grad(q: &[f64], pos: &[f64], negs: &[Vec<f64>], tau: f64) -> Result<AlignGrad> {
    check_tau(tau)?;
    let d = q.len();
    let mut others: Vec<&[f64]> = Vec::with_capacity(negs.len() + 1);
    others.push(pos);
    others.extend(negs.iter().map(Vec::as_slice));
    let mut logits = Vec::with_capacity(others.len());
    for x in &others {
        check_dims(d, x.len())?;
        logits.push(dot(q, x));
    }
    let (loss, dl) = contrastive(&logits, tau);
    let mut g_q = vec![0.0; d];
    let mut g_x = Vec::with_capacity(others.len());
    for (x, &g) in others.iter().zip(&dl) {
        axpy(g, x, &mut g_q);
        g_x.push(q.iter().map(|v| g * v).collect::<Vec<_>>());
    }
    let g_pos = g_x.remove(0);
    Ok(AlignGrad {
        loss,
        g_u: g_q,
        g_pos,
        g_negs: g_x,
    })
}

/// Per-batch loss components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchTerms {
    pub bpr: Vec<f64>,
    pub align: Vec<f64>,
    pub sft: Vec<f64>,
    /// Squared Frobenius norm of every trainable parameter.
    pub param_sq: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Weights of the combined objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    /// Share of the semantic negative in the mixed negative.
    pub alpha: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Weight of the projection-head anchoring term (0 disables it).
    pub lambda_sft: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau: 0.2,
            lambda1: 0.1,
            lambda2: 1e-4,
            lambda_sft: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("loss.alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("loss.tau must be > 0, got {}", self.tau));
        }
        for (name, v) in [
            ("loss.lambda1", self.lambda1),
            ("loss.lambda2", self.lambda2),
            ("loss.lambda_sft", self.lambda_sft),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// `mean(bpr) + λ1·mean(align) + λ2·‖Θ‖² + λ_sft·mean(sft)`.
pub fn total_loss(terms: &BatchTerms, w: &LossWeights) -> f64 {
    let mut total = mean(&terms.bpr) + w.lambda1 * mean(&terms.align) + w.lambda2 * terms.param_sq;
    if w.lambda_sft != 0.0 {
        total += w.lambda_sft * mean(&terms.sft);
    }
    total
}

pub(crate) fn batch_mean(xs: &[f64]) -> f64 {
    mean(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpr_anchors() {
        assert!((bpr_loss(0.3, 0.3) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bpr_loss(1.0, 0.0) - 0.313_261_687_518_222_8).abs() < 1e-12);
        let tiny = bpr_loss(50.0, 0.0);
        assert!(tiny > 0.0 && tiny < 1e-20);
        assert!(bpr_loss(0.0, 800.0).is_finite());
    }

    #[test]
    fn bpr_gradient_special_cases() {
        let eu = [0.5, -1.0, 2.0];
        let e = [0.1, 0.2, 0.3];
        let (_, gp, gn) = bpr_gradients(&eu, &e, &e).unwrap();
        for i in 0..3 {
            assert!((gp[i] + 0.5 * eu[i]).abs() < 1e-15);
            assert!((gn[i] - 0.5 * eu[i]).abs() < 1e-15);
        }
        let (_, gp, gn) = bpr_gradients(&[0.0; 3], &e, &[1.0, 1.0, 1.0]).unwrap();
        assert!(gp.iter().chain(&gn).all(|&x| x == 0.0));
    }

    #[test]
    fn align_anchor_and_degenerate_cases() {
        let u = vec![1.0, 0.0];
        let l = infonce_align(&u, &u, &[vec![0.0, 3.0]], 1.0).unwrap();
        assert!((l - 0.313_262).abs() < 1e-6);
        assert_eq!(infonce_align(&u, &[0.3, 0.7], &[], 0.2).unwrap(), 0.0);
        assert!(infonce_align(&[0.0, 0.0], &u, &[], 1.0).is_err());
        assert!(infonce_align(&u, &u, &[vec![0.0, 0.0]], 1.0).is_err());
        assert!(infonce_align(&u, &u, &[], 0.0).is_err());
    }

    #[test]
    fn sft_closed_forms() {
        let q = [1.0, 2.0];
        assert_eq!(sft_infonce(&q, &[0.5, 0.5], &[], 0.3).unwrap(), 0.0);
        let pos = [1.0, 0.0];
        let negs = vec![vec![0.0, 1.0], vec![3.0, -0.5]];
        // both negatives score 2, positive scores 1
        let tau = 0.5;
        let expect = (1.0 + 2.0 * ((2.0 - 1.0) / tau as f64).exp()).ln();
        assert!((sft_infonce(&q, &pos, &negs, tau).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn total_loss_degenerate_weights() {
        let terms = BatchTerms {
            bpr: vec![0.2, 0.4],
            align: vec![1.0],
            sft: vec![3.0],
            param_sq: 7.0,
        };
        let w = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        assert!((total_loss(&terms, &w) - 0.3).abs() < 1e-15);
        let zero = BatchTerms {
            param_sq: 7.0,
            ..Default::default()
        };
        let w = LossWeights {
            lambda2: 1.0,
            ..Default::default()
        };
        assert_eq!(total_loss(&zero, &w), 7.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        for w in [
            LossWeights {
                alpha: 1.5,
                ..Default::default()
            },
            LossWeights {
                tau: 0.0,
                ..Default::default()
            },
            LossWeights {
                lambda1: -1.0,
                ..Default::default()
            },
        ] {
            assert!(w.validate().is_err());
        }
    }
}
