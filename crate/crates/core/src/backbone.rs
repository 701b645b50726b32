//! Latent-factor backbones.
//!
//! Users and items share one node matrix (users first, then items) so that
//! matrix factorization and LightGCN-style propagation operate on the same
//! layout. MF is the `num_layers = 0` case of propagation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionDataset;
use crate::error::{check_dims, Error, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Which scoring model sits on top of the base embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    /// Plain matrix factorization.
    Mf,
    /// Layer-mean graph propagation.
    LightGcn,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Mf => "mf",
            BackboneKind::LightGcn => "lightgcn",
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mf" => Ok(BackboneKind::Mf),
            "lightgcn" => Ok(BackboneKind::LightGcn),
            other => Err(Error::Config(format!(
                "unknown backbone {other:?} (expected mf|lightgcn)"
            ))),
        }
    }
}

/// Dense user and item vectors.
///
/// Single-writer: only the trainer mutates a table; readers take a clone.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    num_users: usize,
    nodes: Matrix,
}

impl EmbeddingTable {
    pub fn from_nodes(num_users: usize, nodes: Matrix) -> Result<Self> {
        if num_users > nodes.rows() {
            return Err(Error::InvalidArgument(format!(
                "{num_users} users but only {} node rows",
                nodes.rows()
            )));
        }
        Ok(Self { num_users, nodes })
    }

    pub fn from_parts(users: &Matrix, items: &Matrix) -> Result<Self> {
        check_dims(users.cols(), items.cols())?;
        let d = users.cols();
        let mut data = Vec::with_capacity((users.rows() + items.rows()) * d);
        data.extend_from_slice(users.as_slice());
        data.extend_from_slice(items.as_slice());
        Self::from_nodes(
            users.rows(),
            Matrix::from_vec(users.rows() + items.rows(), d, data)?,
        )
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.nodes.rows() - self.num_users
    }

    pub fn dim(&self) -> usize {
        self.nodes.cols()
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        self.nodes.row(u)
    }

    #[inline]
    pub fn item(&self, v: usize) -> &[f64] {
        self.nodes.row(self.num_users + v)
    }

    #[inline]
    pub fn item_node(&self, v: usize) -> usize {
        self.num_users + v
    }

    pub fn nodes(&self) -> &Matrix {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut Matrix {
        &mut self.nodes
    }

    pub fn into_nodes(self) -> Matrix {
        self.nodes
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.is_finite()
    }

    /// Writes the checkpoint format: five little-endian u64 header words
    /// (magic, version, M, N, d) then row-major f32 users followed by items.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        for word in [
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            self.num_users() as u64,
            self.num_items() as u64,
            self.dim() as u64,
        ] {
            w.write_all(&word.to_le_bytes())?;
        }
        for &x in self.nodes.as_slice() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [magic, version, m, n, d] = header;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::InvalidArgument("not an embedding checkpoint".into()));
        }
        if version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let (m, n, d) = (m as usize, n as usize, d as usize);
        let mut data = Vec::with_capacity((m + n) * d);
        let mut buf = [0u8; 4];
        for _ in 0..(m + n) * d {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        Self::from_nodes(m, Matrix::from_vec(m + n, d, data)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
        Self::read_checkpoint(BufReader::new(f))
    }
}

pub const CHECKPOINT_MAGIC: u64 = u64::from_le_bytes(*b"NEGRECKP");
pub const CHECKPOINT_VERSION: u64 = 1;

/// Entries i.i.d. uniform in `[-scale, scale]`.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
    scale: f64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be >= 1".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init scale must be > 0, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = Matrix::from_fn(num_users + num_items, dim, |_, _| {
        rng.random_range(-scale..=scale)
    });
    EmbeddingTable::from_nodes(num_users, nodes)
}

/// Inner-product preference score.
pub fn score(user: &[f64], item: &[f64]) -> Result<f64> {
    check_dims(user.len(), item.len())?;
    Ok(dot(user, item))
}

/// Symmetrically normalized bipartite adjacency in CSR form, plus the
/// number of propagation layers.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationPlan {
    num_users: usize,
    num_items: usize,
    num_layers: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl PropagationPlan {
    /// Edge weights `1 / sqrt(deg_u * deg_v)` over the train pairs.
    pub fn from_edges(
        num_users: usize,
        num_items: usize,
        edges: &[(usize, usize)],
        num_layers: usize,
    ) -> Result<Self> {
        let n = num_users + num_items;
        let mut degree = vec![0usize; n];
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &(u, v) in &sorted {
            if u >= num_users || v >= num_items {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) out of range"
                )));
            }
            let item = num_users + v;
            adjacency[u].push(item);
            adjacency[item].push(u);
            degree[u] += 1;
            degree[item] += 1;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(2 * sorted.len());
        let mut values = Vec::with_capacity(2 * sorted.len());
        indptr.push(0);
        for (row, neighbours) in adjacency.iter_mut().enumerate() {
            neighbours.sort_unstable();
            for &col in neighbours.iter() {
                indices.push(col);
                values.push(1.0 / ((degree[row] * degree[col]) as f64).sqrt());
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            num_users,
            num_items,
            num_layers,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dataset(ds: &InteractionDataset, num_layers: usize) -> Result<Self> {
        Self::from_edges(ds.num_users(), ds.num_items(), ds.train(), num_layers)
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn with_layers(&self, num_layers: usize) -> Self {
        Self {
            num_layers,
            ..self.clone()
        }
    }

    /// Sparse `Â · x`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        check_dims(self.num_nodes(), x.rows())?;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for row in 0..self.num_nodes() {
            let out_row = out.row_mut(row);
            for k in self.indptr[row]..self.indptr[row + 1] {
                axpy(self.values[k], x.row(self.indices[k]), out_row);
            }
        }
        Ok(out)
    }

    /// Dense copy of `Â`, for oracles and debugging.
    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for row in 0..n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                m.set(row, self.indices[k], self.values[k]);
            }
        }
        m
    }

    fn check_shape(&self, x: &Matrix) -> Result<()> {
        check_dims(self.num_nodes(), x.rows())
    }
}

/// Per-layer node embeddings `Â^l E_0` for `l = 0..=L`.
pub fn propagate_layers(base: &EmbeddingTable, plan: &PropagationPlan) -> Result<Vec<Matrix>> {
    plan.check_shape(base.nodes())?;
    let mut layers = Vec::with_capacity(plan.num_layers() + 1);
    layers.push(base.nodes().clone());
    for l in 0..plan.num_layers() {
        let next = plan.apply(&layers[l])?;
        layers.push(next);
    }
    Ok(layers)
}

/// Layer-mean of the per-layer embeddings.
pub fn layer_mean(layers: &[Matrix], num_users: usize) -> Result<EmbeddingTable> {
    let first = layers
        .first()
        .ok_or_else(|| Error::Empty("no propagation layers".into()))?;
    if layers.len() == 1 {
        return EmbeddingTable::from_nodes(num_users, first.clone());
    }
    let mut out = first.clone();
    for layer in &layers[1..] {
        out.add_scaled(1.0, layer)?;
    }
    out.scale(1.0 / layers.len() as f64);
    EmbeddingTable::from_nodes(num_users, out)
}

/// `(1/(L+1)) Σ_l Â^l E_0`.
pub fn propagate(base: &EmbeddingTable, plan: &PropagationPlan) -> Result<EmbeddingTable> {
    if plan.num_layers() == 0 {
        plan.check_shape(base.nodes())?;
        return Ok(base.clone());
    }
    layer_mean(&propagate_layers(base, plan)?, base.num_users())
}

/// Adjoint of [`propagate`]. `Â` is symmetric, so this applies the same
/// layer-mean operator to the incoming gradient.
pub fn backprop_propagation(plan: &PropagationPlan, grad_out: &Matrix) -> Result<Matrix> {
    plan.check_shape(grad_out)?;
    if plan.num_layers() == 0 {
        return Ok(grad_out.clone());
    }
    let mut scaled = grad_out.clone();
    scaled.scale(1.0 / (plan.num_layers() + 1) as f64);
    let per_layer = vec![scaled; plan.num_layers() + 1];
    backprop_layers(plan, &per_layer)
}

/// Gradient with respect to the base embeddings given gradients with respect
/// to each layer output `Â^l E_0`: `Σ_l Â^l G_l`, evaluated by Horner's rule.
pub fn backprop_layers(plan: &PropagationPlan, per_layer: &[Matrix]) -> Result<Matrix> {
    check_dims(plan.num_layers() + 1, per_layer.len())?;
    let mut acc = per_layer[plan.num_layers()].clone();
    plan.check_shape(&acc)?;
    for l in (0..plan.num_layers()).rev() {
        let mut next = plan.apply(&acc)?;
        next.add_scaled(1.0, &per_layer[l])?;
        acc = next;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_and_determinism() {
        let a = init_embeddings(10, 20, 64, 3, 0.1).unwrap();
        assert_eq!((a.num_users(), a.num_items(), a.dim()), (10, 20, 64));
        assert_eq!(a, init_embeddings(10, 20, 64, 3, 0.1).unwrap());
        assert!(a.nodes().as_slice().iter().all(|x| x.abs() <= 0.1));
    }

    #[test]
    fn init_rejects_bad_scale() {
        assert!(init_embeddings(1, 1, 4, 0, 0.0).is_err());
        assert!(init_embeddings(1, 1, 0, 0, 1.0).is_err());
        let tiny = init_embeddings(2, 2, 4, 0, 1e-9).unwrap();
        assert!(tiny.nodes().as_slice().iter().all(|x| x.abs() <= 1e-9));
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(score(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let e = [0.6, 0.8];
        assert!((score(&e, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!(score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_layers_is_identity() {
        let base = init_embeddings(2, 3, 4, 1, 0.5).unwrap();
        let plan = PropagationPlan::from_edges(2, 3, &[(0, 0), (1, 2)], 0).unwrap();
        assert_eq!(propagate(&base, &plan).unwrap(), base);
        let g = Matrix::from_fn(5, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(backprop_propagation(&plan, &g).unwrap(), g);
    }

    #[test]
    fn single_edge_one_layer_averages_endpoints() {
        let users = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let items = Matrix::from_vec(1, 2, vec![3.0, -4.0]).unwrap();
        let base = EmbeddingTable::from_parts(&users, &items).unwrap();
        let plan = PropagationPlan::from_edges(1, 1, &[(0, 0)], 1).unwrap();
        let out = propagate(&base, &plan).unwrap();
        assert_eq!(out.user(0), &[2.0, -1.0]);
        assert_eq!(out.item(0), &[2.0, -1.0]);
    }

    #[test]
    fn isolated_nodes_keep_scaled_base() {
        let base = init_embeddings(2, 2, 3, 9, 1.0).unwrap();
        let plan = PropagationPlan::from_edges(2, 2, &[(0, 0)], 2).unwrap();
        let out = propagate(&base, &plan).unwrap();
        for (a, b) in out.user(1).iter().zip(base.user(1)) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn adjacency_is_symmetric() {
        let plan = PropagationPlan::from_edges(3, 3, &[(0, 0), (0, 1), (1, 1), (2, 2)], 1).unwrap();
        let a = plan.to_dense();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        assert!((a.get(0, 3) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_maps_to_zero() {
        let plan = PropagationPlan::from_edges(2, 2, &[(0, 0), (1, 1), (0, 1)], 3).unwrap();
        let g = backprop_propagation(&plan, &Matrix::zeros(4, 5)).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        assert!(backprop_propagation(&plan, &Matrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = init_embeddings(3, 4, 5, 2, 0.25).unwrap();
        let mut buf = Vec::new();
        t.write_checkpoint(&mut buf).unwrap();
        assert_eq!(buf.len(), 5 * 8 + 7 * 5 * 4);
        assert_eq!(&buf[..8], b"NEGRECKP");
        let back = EmbeddingTable::read_checkpoint(&buf[..]).unwrap();
        for (a, b) in back.nodes().as_slice().iter().zip(t.nodes().as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
