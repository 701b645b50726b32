//! Mini-batch SGD over the combined objective.
//!
//! Each batch runs in two phases. The draw phase is sequential and consumes
//! the epoch's random stream (negatives, candidate pools, mixing weights).
//! The gradient phase is a pure function of the draws and the parameter
//! snapshot, so it can be sharded across workers and reduced in shard order.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{
    batch_mean, bpr_gradients, bpr_loss, infonce_align_grad, sft_infonce_grad, LossWeights,
};
use crate::backbone::{
    backprop_layers, init_embeddings, layer_mean, propagate_layers, BackboneKind, EmbeddingTable,
    PropagationPlan,
};
use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::sampling::{
    ahns_select, dns_select, draw_candidates, mixgcf_synthesize, rns_sample, MixgcfSample,
    SamplerConfig, SamplerKind,
};
use crate::semantic::{ProjectionGrad, ProjectionHead, SemanticStore};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub backbone: BackboneKind,
    pub dim: usize,
    /// Propagation depth (ignored for MF).
    pub layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Hidden width of the projection head.
    pub hidden: usize,
    /// Multiplier on the learning rate for projection-head parameters.
    pub head_lr_scale: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::LightGcn,
            dim: 64,
            layers: 2,
            learning_rate: 0.05,
            batch_size: 1024,
            epochs: 20,
            seed: 0,
            init_scale: 0.1,
            hidden: 256,
            head_lr_scale: 1.0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.dim == 0 {
            return bad("backbone.dim must be >= 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("trainer.lr must be a finite value >= 0");
        }
        if self.batch_size == 0 {
            return bad("trainer.batch must be >= 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("trainer.init_scale must be > 0");
        }
        if self.hidden == 0 {
            return bad("semantic.hidden must be >= 1");
        }
        if !(self.head_lr_scale >= 0.0 && self.head_lr_scale.is_finite()) {
            return bad("trainer.head_lr_scale must be a finite value >= 0");
        }
        if self.workers == 0 {
            return bad("trainer.workers must be >= 1");
        }
        Ok(())
    }

    fn num_layers(&self) -> usize {
        match self.backbone {
            BackboneKind::Mf => 0,
            BackboneKind::LightGcn => self.layers,
        }
    }
}

/// Everything that changes during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Base (layer-0) embeddings.
    pub embeddings: EmbeddingTable,
    pub projection: Option<ProjectionHead>,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl TrainState {
    /// Random stream for the given epoch; independent of how many epochs
    /// ran in this process.
    fn epoch_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch as u64 + 1);
        rng
    }

    pub fn param_sq(&self) -> f64 {
        self.embeddings.nodes().frobenius_sq()
            + self.projection.as_ref().map_or(0.0, |h| h.frobenius_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.is_finite() && self.projection.as_ref().is_none_or(|h| h.is_finite())
    }
}

/// Loss components and wall time of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss_bpr: f64,
    pub loss_align: f64,
    pub loss_reg: f64,
    pub loss_sft: f64,
    pub seconds: f64,
}

pub const RUN_LOG_HEADER: &str = "epoch,loss_bpr,loss_align,loss_reg,seconds";

impl EpochReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6}",
            self.epoch, self.loss_bpr, self.loss_align, self.loss_reg, self.seconds
        )
    }
}

/// Writes the header when the file is new, then appends one row.
pub fn append_run_log(path: &Path, report: &EpochReport) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{RUN_LOG_HEADER}")?;
    }
    writeln!(f, "{}", report.csv_row())?;
    Ok(())
}

enum Negative<'s> {
    Item(usize),
    Mixed(MixgcfSample),
    Semantic {
        random: usize,
        hard: Option<&'s [f64]>,
    },
}

struct Draw<'s> {
    user: usize,
    pos: usize,
    neg: Negative<'s>,
}

struct Grads {
    /// Gradient with respect to the propagated (final) node embeddings.
    nodes: Matrix,
    /// Extra gradient with respect to individual layer outputs.
    layers: Vec<Matrix>,
    head: Option<ProjectionGrad>,
    bpr: Vec<f64>,
    align: Vec<f64>,
}

impl Grads {
    fn new(n: usize, d: usize, layers: usize, head: Option<&ProjectionHead>) -> Self {
        Self {
            nodes: Matrix::zeros(n, d),
            layers: (0..layers).map(|_| Matrix::zeros(n, d)).collect(),
            head: head.map(|h| h.zero_grad()),
            bpr: Vec::new(),
            align: Vec::new(),
        }
    }

    fn merge(&mut self, other: Grads) -> Result<()> {
        self.nodes.add_scaled(1.0, &other.nodes)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(1.0, b)?;
        }
        if let (Some(a), Some(b)) = (self.head.as_mut(), other.head.as_ref()) {
            a.add(b);
        }
        self.bpr.extend(other.bpr);
        self.align.extend(other.align);
        Ok(())
    }
}

/// Binds a dataset to a backbone, sampler, objective and optional
/// semantic store.
pub struct Trainer<'a> {
    ds: &'a InteractionDataset,
    cfg: TrainConfig,
    sampler: SamplerConfig,
    weights: LossWeights,
    semantic: Option<&'a SemanticStore>,
    plan: PropagationPlan,
}

impl<'a> Trainer<'a> {
    pub fn new(
        ds: &'a InteractionDataset,
        cfg: TrainConfig,
        sampler: SamplerConfig,
        weights: LossWeights,
        semantic: Option<&'a SemanticStore>,
    ) -> Result<Self> {
        cfg.validate()?;
        sampler.validate()?;
        weights.validate()?;
        if ds.train().is_empty() {
            return Err(Error::Empty("no training pairs".into()));
        }
        if sampler.kind == SamplerKind::Semantic {
            let store = semantic.ok_or_else(|| {
                Error::Config("sampler.kind = semantic needs a semantic negative store".into())
            })?;
            if store.dim() == 0 {
                return Err(Error::Config("semantic negative store is empty".into()));
            }
        }
        let plan = PropagationPlan::from_dataset(ds, cfg.num_layers())?;
        Ok(Self {
            ds,
            cfg,
            sampler,
            weights,
            semantic,
            plan,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn sampler(&self) -> &SamplerConfig {
        &self.sampler
    }

    pub fn dataset(&self) -> &InteractionDataset {
        self.ds
    }

    fn uses_head(&self) -> bool {
        self.sampler.kind == SamplerKind::Semantic
    }

    pub fn init_state(&self) -> Result<TrainState> {
        let embeddings = init_embeddings(
            self.ds.num_users(),
            self.ds.num_items(),
            self.cfg.dim,
            self.cfg.seed,
            self.cfg.init_scale,
        )?;
        let projection = match (self.uses_head(), self.semantic) {
            (true, Some(store)) => Some(ProjectionHead::init(
                store.dim(),
                self.cfg.hidden,
                self.cfg.dim,
                self.cfg.seed ^ 0x7072_6f6a,
            )?),
            _ => None,
        };
        Ok(TrainState {
            embeddings,
            projection,
            epoch: 0,
            seed: self.cfg.seed,
            learning_rate: self.cfg.learning_rate,
        })
    }

    fn check_state(&self, state: &TrainState) -> Result<()> {
        let e = &state.embeddings;
        if e.num_users() != self.ds.num_users() || e.num_items() != self.ds.num_items() {
            return Err(Error::InvalidArgument(
                "embedding table does not match the dataset".into(),
            ));
        }
        crate::error::check_dims(self.cfg.dim, e.dim())?;
        if self.uses_head() && state.projection.is_none() {
            return Err(Error::InvalidArgument(
                "semantic sampler needs a projection head".into(),
            ));
        }
        Ok(())
    }

    /// Per-layer outputs and their layer mean for the current parameters.
    fn forward(&self, base: &EmbeddingTable) -> Result<(Vec<Matrix>, EmbeddingTable)> {
        let layers = propagate_layers(base, &self.plan)?;
        let fin = layer_mean(&layers, base.num_users())?;
        Ok((layers, fin))
    }

    /// Propagated embeddings used for scoring.
    pub fn snapshot(&self, state: &TrainState) -> Result<EmbeddingTable> {
        Ok(self.forward(&state.embeddings)?.1)
    }

    fn draw<'s>(
        &'s self,
        batch: &[(usize, usize)],
        layers: &[Matrix],
        fin: &EmbeddingTable,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Draw<'s>>> {
        let ds = self.ds;
        let k = self.sampler.pool;
        batch
            .iter()
            .map(|&(user, pos)| {
                let neg = match self.sampler.kind {
                    SamplerKind::Rns => Negative::Item(rns_sample(user, ds, rng)?),
                    SamplerKind::Dns => {
                        let c = draw_candidates(user, ds, k, rng)?;
                        Negative::Item(dns_select(user, &c, fin)?)
                    }
                    SamplerKind::Ahns => {
                        let c = draw_candidates(user, ds, k, rng)?;
                        Negative::Item(ahns_select(user, pos, &c, fin, self.sampler.ahns_beta)?)
                    }
                    SamplerKind::MixGcf => {
                        let c = draw_candidates(user, ds, k, rng)?;
                        let s = mixgcf_synthesize(user, pos, &c, layers, ds.num_users(), || {
                            rng.random::<f64>()
                        })?;
                        Negative::Mixed(s)
                    }
                    SamplerKind::Semantic => Negative::Semantic {
                        random: rns_sample(user, ds, rng)?,
                        hard: self.semantic.and_then(|s| s.get(user, pos)),
                    },
                };
                Ok(Draw { user, pos, neg })
            })
            .collect()
    }

    fn pair_grads(
        &self,
        draws: &[Draw<'_>],
        fin: &EmbeddingTable,
        head: Option<&ProjectionHead>,
        batch_len: usize,
        align_count: usize,
    ) -> Result<Grads> {
        let nu = self.ds.num_users();
        let d = self.cfg.dim;
        let num_layers = self.plan.num_layers() + 1;
        let mix_layers = if self.sampler.kind == SamplerKind::MixGcf {
            num_layers
        } else {
            0
        };
        let mut g = Grads::new(fin.nodes().rows(), d, mix_layers, head);
        let bpr_scale = 1.0 / batch_len as f64;
        let align_scale = if align_count > 0 {
            self.weights.lambda1 / align_count as f64
        } else {
            0.0
        };
        let alpha = self.weights.alpha;
        for draw in draws {
            let eu = fin.user(draw.user);
            let ep = fin.item(draw.pos);
            let pos_node = nu + draw.pos;
            match &draw.neg {
                Negative::Item(v) => {
                    let en = fin.item(*v);
                    g.bpr.push(bpr_loss(dot(eu, ep), dot(eu, en)));
                    let (gu, gp, gn) = bpr_gradients(eu, ep, en)?;
                    axpy(bpr_scale, &gu, g.nodes.row_mut(draw.user));
                    axpy(bpr_scale, &gp, g.nodes.row_mut(pos_node));
                    axpy(bpr_scale, &gn, g.nodes.row_mut(nu + v));
                }
                Negative::Mixed(s) => {
                    g.bpr.push(bpr_loss(dot(eu, ep), dot(eu, &s.vector)));
                    let (gu, gp, gn) = bpr_gradients(eu, ep, &s.vector)?;
                    axpy(bpr_scale, &gu, g.nodes.row_mut(draw.user));
                    axpy(bpr_scale, &gp, g.nodes.row_mut(pos_node));
                    let share = bpr_scale / num_layers as f64;
                    for (l, (&c, &b)) in s.selected.iter().zip(&s.betas).enumerate() {
                        axpy(share * b, &gn, g.layers[l].row_mut(pos_node));
                        axpy(share * (1.0 - b), &gn, g.layers[l].row_mut(nu + c));
                    }
                }
                Negative::Semantic { random, hard } => {
                    let er = fin.item(*random);
                    let projected = match (hard, head) {
                        (Some(raw), Some(h)) => Some((raw, h.forward_cached(raw)?)),
                        _ => None,
                    };
                    let Some((raw, (eh, pre))) = projected else {
                        // No usable semantic negative: plain random negative.
                        g.bpr.push(bpr_loss(dot(eu, ep), dot(eu, er)));
                        let (gu, gp, gn) = bpr_gradients(eu, ep, er)?;
                        axpy(bpr_scale, &gu, g.nodes.row_mut(draw.user));
                        axpy(bpr_scale, &gp, g.nodes.row_mut(pos_node));
                        axpy(bpr_scale, &gn, g.nodes.row_mut(nu + random));
                        continue;
                    };
                    let mixed: Vec<f64> = er
                        .iter()
                        .zip(&eh)
                        .map(|(r, h)| (1.0 - alpha) * r + alpha * h)
                        .collect();
                    g.bpr.push(bpr_loss(dot(eu, ep), dot(eu, &mixed)));
                    let (gu, gp, gn) = bpr_gradients(eu, ep, &mixed)?;
                    axpy(bpr_scale, &gu, g.nodes.row_mut(draw.user));
                    axpy(bpr_scale, &gp, g.nodes.row_mut(pos_node));
                    axpy(bpr_scale * (1.0 - alpha), &gn, g.nodes.row_mut(nu + random));
                    if !eh.iter().chain(eu).all(|x| x.is_finite()) {
                        return Err(Error::NonFinite(
                            "embeddings diverged; lower trainer.lr".into(),
                        ));
                    }
                    let mut g_hard: Vec<f64> = gn.iter().map(|x| bpr_scale * alpha * x).collect();
                    if self.weights.lambda1 > 0.0 && eh.iter().any(|&x| x != 0.0) {
                        let a = infonce_align_grad(
                            eu,
                            ep,
                            std::slice::from_ref(&eh),
                            self.weights.tau,
                        )?;
                        g.align.push(a.loss);
                        axpy(align_scale, &a.g_u, g.nodes.row_mut(draw.user));
                        axpy(align_scale, &a.g_pos, g.nodes.row_mut(pos_node));
                        axpy(align_scale, &a.g_negs[0], &mut g_hard);
                    }
                    let h = head.expect("head present when projected");
                    h.backward(raw, &pre, &g_hard, g.head.as_mut().expect("head grad"));
                }
            }
        }
        Ok(g)
    }

    /// Anchoring term: the projected profile vector of each distinct
    /// positive in the batch should score its own (frozen) CF embedding
    /// above those of the other positives.
    fn sft_grads(
        &self,
        batch: &[(usize, usize)],
        fin: &EmbeddingTable,
        head: &ProjectionHead,
        grad: &mut ProjectionGrad,
    ) -> Result<Vec<f64>> {
        let Some(store) = self.semantic.filter(|s| s.has_anchors()) else {
            return Ok(Vec::new());
        };
        let mut items: Vec<usize> = batch
            .iter()
            .map(|&(_, v)| v)
            .filter(|&v| store.anchor(v).is_some())
            .collect();
        items.sort_unstable();
        items.dedup();
        if items.len() < 2 {
            return Ok(Vec::new());
        }
        let scale = self.weights.lambda_sft / items.len() as f64;
        let mut losses = Vec::with_capacity(items.len());
        for &v in &items {
            let anchor = store.anchor(v).expect("filtered");
            let (q, pre) = head.forward_cached(anchor)?;
            let negs: Vec<Vec<f64>> = items
                .iter()
                .filter(|&&w| w != v)
                .map(|&w| fin.item(w).to_vec())
                .collect();
            let r = sft_infonce_grad(&q, fin.item(v), &negs, self.weights.tau)?;
            losses.push(r.loss);
            let g_q: Vec<f64> = r.g_u.iter().map(|x| x * scale).collect();
            head.backward(anchor, &pre, &g_q, grad);
        }
        Ok(losses)
    }

    fn batch_step(
        &self,
        state: &mut TrainState,
        batch: &[(usize, usize)],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64, f64, f64, usize, usize, usize)> {
        let (layers, fin) = self.forward(&state.embeddings)?;
        let draws = self.draw(batch, &layers, &fin, rng)?;
        let align_count = if self.weights.lambda1 > 0.0 {
            draws
                .iter()
                .filter(|d| matches!(d.neg, Negative::Semantic { hard: Some(_), .. }))
                .count()
        } else {
            0
        };
        let head = state.projection.as_ref();
        let workers = self.cfg.workers.min(draws.len()).max(1);
        let mut grads = if workers == 1 {
            self.pair_grads(&draws, &fin, head, batch.len(), align_count)?
        } else {
            let chunk = draws.len().div_ceil(workers);
            let parts: Vec<Result<Grads>> = std::thread::scope(|s| {
                let handles: Vec<_> = draws
                    .chunks(chunk)
                    .map(|c| {
                        let fin = &fin;
                        s.spawn(move || self.pair_grads(c, fin, head, batch.len(), align_count))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("gradient worker panicked"))
                    .collect()
            });
            let mut parts = parts.into_iter();
            let mut acc = parts.next().expect("at least one shard")?;
            for p in parts {
                acc.merge(p?)?;
            }
            acc
        };

        let mut sft = Vec::new();
        if self.weights.lambda_sft > 0.0 {
            if let (Some(h), Some(hg)) = (head, grads.head.as_mut()) {
                sft = self.sft_grads(batch, &fin, h, hg)?;
            }
        }

        let num_layers = self.plan.num_layers() + 1;
        let mut per_layer: Vec<Matrix> = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let mut m = grads.nodes.clone();
            m.scale(1.0 / num_layers as f64);
            if let Some(extra) = grads.layers.get(l) {
                m.add_scaled(1.0, extra)?;
            }
            per_layer.push(m);
        }
        let mut g_base = backprop_layers(&self.plan, &per_layer)?;

        let param_sq = state.param_sq();
        let lambda2 = self.weights.lambda2;
        if lambda2 > 0.0 {
            g_base.add_scaled(2.0 * lambda2, state.embeddings.nodes())?;
            if let (Some(h), Some(hg)) = (state.projection.as_ref(), grads.head.as_mut()) {
                hg.add_scaled_params(2.0 * lambda2, h);
            }
        }

        let lr = state.learning_rate;
        state.embeddings.nodes_mut().add_scaled(-lr, &g_base)?;
        if let (Some(h), Some(hg)) = (state.projection.as_mut(), grads.head.as_ref()) {
            h.apply(hg, lr * self.cfg.head_lr_scale);
        }
        if !state.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {} (lr {lr}): a parameter became NaN or infinite",
                state.epoch + 1
            )));
        }
        Ok((
            grads.bpr.iter().sum(),
            grads.align.iter().sum(),
            lambda2 * param_sq,
            sft.iter().sum(),
            grads.bpr.len(),
            grads.align.len(),
            sft.len(),
        ))
    }

    /// One shuffled pass over the training pairs.
    pub fn train_epoch(&self, state: &mut TrainState) -> Result<EpochReport> {
        self.check_state(state)?;
        let start = Instant::now();
        let mut rng = state.epoch_rng();
        let mut pairs = self.ds.train().to_vec();
        pairs.shuffle(&mut rng);
        let (mut bpr, mut align, mut sft) = (0.0, 0.0, 0.0);
        let (mut n_bpr, mut n_align, mut n_sft) = (0, 0, 0);
        let mut regs = Vec::new();
        for batch in pairs.chunks(self.cfg.batch_size) {
            let (b, a, r, s, nb, na, ns) = self.batch_step(state, batch, &mut rng)?;
            bpr += b;
            align += a;
            sft += s;
            n_bpr += nb;
            n_align += na;
            n_sft += ns;
            regs.push(r);
        }
        state.epoch += 1;
        let avg = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        Ok(EpochReport {
            epoch: state.epoch,
            loss_bpr: avg(bpr, n_bpr),
            loss_align: avg(align, n_align),
            loss_reg: batch_mean(&regs),
            loss_sft: avg(sft, n_sft),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs `epochs` epochs, calling `on_epoch` after each.
    pub fn fit(
        &self,
        state: &mut TrainState,
        epochs: usize,
        mut on_epoch: impl FnMut(&TrainState, &EpochReport) -> Result<()>,
    ) -> Result<Vec<EpochReport>> {
        let mut out = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let r = self.train_epoch(state)?;
            on_epoch(state, &r)?;
            out.push(r);
        }
        Ok(out)
    }

    /// Latent negatives the sampler would draw right now for every train
    /// pair of `users`, grouped per user. Draws come from a private stream
    /// seeded by `draw_seed`, so probing never disturbs training.
    pub fn probe_negatives(
        &self,
        state: &TrainState,
        users: &[usize],
        draw_seed: u64,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_state(state)?;
        let (layers, fin) = self.forward(&state.embeddings)?;
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let head = state.projection.as_ref();
        let alpha = self.weights.alpha;
        users
            .iter()
            .map(|&u| {
                let pairs: Vec<(usize, usize)> =
                    self.ds.train_items(u).iter().map(|&v| (u, v)).collect();
                let draws = self.draw(&pairs, &layers, &fin, &mut rng)?;
                draws
                    .iter()
                    .map(|d| match &d.neg {
                        Negative::Item(v) => Ok(fin.item(*v).to_vec()),
                        Negative::Mixed(s) => Ok(s.vector.clone()),
                        Negative::Semantic { random, hard } => {
                            let er = fin.item(*random);
                            match (hard, head) {
                                (Some(raw), Some(h)) => {
                                    let eh = h.forward(raw)?;
                                    Ok(er
                                        .iter()
                                        .zip(&eh)
                                        .map(|(r, h)| (1.0 - alpha) * r + alpha * h)
                                        .collect())
                                }
                                _ => Ok(er.to_vec()),
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Full-objective value at the current parameters for a fixed set of
    /// draws (used by gradient checks and descent tests).
    pub fn objective_value(
        &self,
        state: &TrainState,
        batch: &[(usize, usize)],
        draw_seed: u64,
    ) -> Result<f64> {
        let (layers, fin) = self.forward(&state.embeddings)?;
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let draws = self.draw(batch, &layers, &fin, &mut rng)?;
        let head = state.projection.as_ref();
        let align_count = draws
            .iter()
            .filter(|d| matches!(d.neg, Negative::Semantic { hard: Some(_), .. }))
            .count();
        let g = self.pair_grads(&draws, &fin, head, batch.len(), align_count)?;
        let mut sft = Vec::new();
        if let (Some(h), true) = (head, self.weights.lambda_sft > 0.0) {
            let mut scratch = h.zero_grad();
            sft = self.sft_grads(batch, &fin, h, &mut scratch)?;
        }
        Ok(super::loss::total_loss(
            &super::loss::BatchTerms {
                bpr: g.bpr,
                align: g.align,
                sft,
                param_sq: state.param_sq(),
            },
            &self.weights,
        ))
    }

    /// Gradient of [`Self::objective_value`] with respect to the base
    /// embeddings and the head, without applying it.
    pub fn objective_gradient(
        &self,
        state: &TrainState,
        batch: &[(usize, usize)],
        draw_seed: u64,
    ) -> Result<(Matrix, Option<ProjectionGrad>)> {
        let mut probe = state.clone();
        probe.learning_rate = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        self.batch_step(&mut probe, batch, &mut rng)?;
        let mut g = state.embeddings.nodes().clone();
        g.add_scaled(-1.0, probe.embeddings.nodes())?;
        let head = match (&state.projection, &probe.projection) {
            (Some(before), Some(after)) => {
                let mut hg = before.zero_grad();
                hg.add_scaled_params(1.0, before);
                hg.add_scaled_params(-1.0, after);
                Some(hg)
            }
            _ => None,
        };
        Ok((g, head))
    }
}
