//! Persisted semantic negatives and item anchor vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

/// One generated negative for a (user, positive item) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticNegativeRecord {
    pub user: usize,
    pub item: usize,
    /// `None` when the provider declined to produce a negative.
    pub negative_text: Option<String>,
    pub reasoning: String,
    /// Provider-space embedding, pooled over the requested negatives.
    pub raw_vector: Option<Vec<f64>>,
    /// Latent-space image under the projection head, when computed.
    pub projected: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    user: String,
    item: String,
    negative_text: Option<String>,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    raw_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projected: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct AnchorLine {
    item: String,
    values: Vec<f64>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        source_name: path.display().to_string(),
        line: line as u64 + 1,
        msg: msg.into(),
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    Ok(BufReader::new(File::open(path)?).lines().enumerate())
}

fn check_finite(path: &Path, line: usize, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(parse_err(path, line, "non-finite vector entry"))
    }
}

pub fn write_records<'a>(
    path: &Path,
    ds: &InteractionDataset,
    records: impl IntoIterator<Item = &'a SemanticNegativeRecord>,
) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for r in records {
        let line = RecordLine {
            user: ds.users().raw(r.user).to_string(),
            item: ds.items().raw(r.item).to_string(),
            negative_text: r.negative_text.clone(),
            reasoning: r.reasoning.clone(),
            raw_vector: r.raw_vector.clone(),
            projected: r.projected.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn read_records(path: &Path, ds: &InteractionDataset) -> Result<Vec<SemanticNegativeRecord>> {
    let mut out = Vec::new();
    for (i, line) in open_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: RecordLine =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i, e.to_string()))?;
        let user = ds
            .users()
            .get(&l.user)
            .ok_or_else(|| parse_err(path, i, format!("unknown user {:?}", l.user)))?;
        let item = ds
            .items()
            .get(&l.item)
            .ok_or_else(|| parse_err(path, i, format!("unknown item {:?}", l.item)))?;
        if let Some(v) = &l.raw_vector {
            check_finite(path, i, v)?;
        }
        out.push(SemanticNegativeRecord {
            user,
            item,
            negative_text: l.negative_text,
            reasoning: l.reasoning,
            raw_vector: l.raw_vector,
            projected: l.projected,
        });
    }
    Ok(out)
}

pub fn write_anchors(
    path: &Path,
    ds: &InteractionDataset,
    anchors: &BTreeMap<usize, Vec<f64>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (&v, values) in anchors {
        serde_json::to_writer(
            &mut w,
            &AnchorLine {
                item: ds.items().raw(v).to_string(),
                values: values.clone(),
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_anchors(path: &Path, ds: &InteractionDataset) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (i, line) in open_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: AnchorLine =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i, e.to_string()))?;
        let v = ds
            .items()
            .get(&l.item)
            .ok_or_else(|| parse_err(path, i, format!("unknown item {:?}", l.item)))?;
        check_finite(path, i, &l.values)?;
        out.insert(v, l.values);
    }
    Ok(out)
}

/// In-memory lookup used by the trainer: provider-space negative vector per
/// training pair plus optional provider-space item anchors.
#[derive(Clone, Debug, Default)]
pub struct SemanticStore {
    dim: usize,
    vectors: HashMap<(usize, usize), Vec<f64>>,
    declined: usize,
    anchors: BTreeMap<usize, Vec<f64>>,
}

impl SemanticStore {
    pub fn from_records(records: &[SemanticNegativeRecord]) -> Result<Self> {
        let mut store = Self::default();
        for r in records {
            match &r.raw_vector {
                Some(v) => store.insert(r.user, r.item, v.clone())?,
                None => store.declined += 1,
            }
        }
        Ok(store)
    }

    pub fn insert(&mut self, user: usize, item: usize, vector: Vec<f64>) -> Result<()> {
        if vector.is_empty() {
            return Err(Error::InvalidArgument("empty semantic vector".into()));
        }
        if self.dim == 0 {
            self.dim = vector.len();
        }
        crate::error::check_dims(self.dim, vector.len())?;
        if !vector.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "semantic vector for ({user}, {item})"
            )));
        }
        self.vectors.insert((user, item), vector);
        Ok(())
    }

    pub fn with_anchors(mut self, anchors: BTreeMap<usize, Vec<f64>>) -> Result<Self> {
        for v in anchors.values() {
            if self.dim == 0 {
                self.dim = v.len();
            }
            crate::error::check_dims(self.dim, v.len())?;
        }
        self.anchors = anchors;
        Ok(self)
    }

    /// Provider-space dimension (0 when empty).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, user: usize, item: usize) -> Option<&[f64]> {
        self.vectors.get(&(user, item)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Number of records without a usable vector.
    pub fn declined(&self) -> usize {
        self.declined
    }

    pub fn anchor(&self, item: usize) -> Option<&[f64]> {
        self.anchors.get(&item).map(Vec::as_slice)
    }

    pub fn anchors(&self) -> &BTreeMap<usize, Vec<f64>> {
        &self.anchors
    }

    pub fn has_anchors(&self) -> bool {
        !self.anchors.is_empty()
    }

    /// Pairs with vectors, in ascending (user, item) order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = self.vectors.keys().copied().collect();
        p.sort_unstable();
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> InteractionDataset {
        InteractionDataset::from_pairs(2, 3, vec![(0, 0), (0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn records_round_trip_by_raw_id() {
        let ds = ds();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.jsonl");
        let recs = vec![
            SemanticNegativeRecord {
                user: 0,
                item: 1,
                negative_text: Some("thing".into()),
                reasoning: "r".into(),
                raw_vector: Some(vec![0.1, -0.25]),
                projected: None,
            },
            SemanticNegativeRecord {
                user: 1,
                item: 2,
                negative_text: None,
                reasoning: String::new(),
                raw_vector: None,
                projected: None,
            },
        ];
        assert_eq!(write_records(&path, &ds, &recs).unwrap(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("\"user\":\"{}\"", ds.users().raw(0))));
        let back = read_records(&path, &ds).unwrap();
        assert_eq!(back, recs);
        let store = SemanticStore::from_records(&back).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.declined(), 1);
        assert_eq!(store.get(0, 1).unwrap(), &[0.1, -0.25]);
        assert!(store.get(1, 2).is_none());
    }

    #[test]
    fn anchors_round_trip_and_dims_checked() {
        let ds = ds();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.jsonl");
        let anchors: BTreeMap<_, _> = [(0, vec![1.0, 2.0]), (2, vec![3.0, 4.0])].into();
        write_anchors(&path, &ds, &anchors).unwrap();
        assert_eq!(read_anchors(&path, &ds).unwrap(), anchors);
        let bad: BTreeMap<_, _> = [(0, vec![1.0])].into();
        let mut store = SemanticStore::default();
        store.insert(0, 0, vec![1.0, 1.0]).unwrap();
        assert!(store.with_anchors(bad).is_err());
    }

    #[test]
    fn missing_store_is_reported() {
        let err = read_records(Path::new("/nonexistent/neg.jsonl"), &ds()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}
