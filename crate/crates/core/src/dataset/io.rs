use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IdMap, InteractionDataset};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["user_id", "item_id", "rating", "timestamp"];

const TRAIN_FILE: &str = "train.csv";
const TEST_FILE: &str = "test.csv";
const MAPPING_FILE: &str = "mapping.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
}

/// Reads an interaction log. Raw ids are reindexed in order of first
/// appearance; every row counts as one positive, duplicates collapse.
pub fn ingest(path: &Path, format: InputFormat) -> Result<InteractionDataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    let file = File::open(path)?;
    match format {
        InputFormat::Csv => ingest_reader(BufReader::new(file), &path.display().to_string()),
    }
}

pub fn ingest_reader<R: Read>(reader: R, source_name: &str) -> Result<InteractionDataset> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let pairs = read_pairs(reader, source_name, |u, v| {
        Ok((users.intern(u), items.intern(v)))
    })?;
    if pairs.is_empty() {
        return Err(Error::Empty(format!("{source_name}: no interaction rows")));
    }
    InteractionDataset::new(users, items, pairs, Vec::new())
}

fn parse_error(source_name: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_pairs<R: Read>(
    reader: R,
    source_name: &str,
    mut resolve: impl FnMut(&str, &str) -> Result<(usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Empty(format!("{source_name}: empty file"))),
        Some(r) => r.map_err(|e| parse_error(source_name, 1, e.to_string()))?,
    };
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(parse_error(
            source_name,
            1,
            format!("expected header {:?}", CSV_HEADER.join(",")),
        ));
    }
    let mut pairs = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(source_name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(parse_error(
                source_name,
                line,
                format!(
                    "expected {} columns, found {}",
                    CSV_HEADER.len(),
                    record.len()
                ),
            ));
        }
        let (u, v) = (record[0].trim(), record[1].trim());
        if u.is_empty() || v.is_empty() {
            return Err(parse_error(source_name, line, "empty user_id or item_id"));
        }
        let rating = record[2].trim();
        if !rating.is_empty() && rating.parse::<f64>().is_err() {
            return Err(parse_error(
                source_name,
                line,
                format!("rating {rating:?} is not a number"),
            ));
        }
        let pair = resolve(u, v).map_err(|e| parse_error(source_name, line, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn write_pairs(path: &Path, ds: &InteractionDataset, pairs: &[(usize, usize)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(CSV_HEADER)?;
    for &(u, v) in pairs {
        w.write_record([ds.users().raw(u), ds.items().raw(v), "1", ""])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Mapping {
    users: Vec<String>,
    items: Vec<String>,
}

/// Writes all positives to a single CSV in the ingest schema plus a sidecar
/// `<stem>.mapping.json` holding the index order.
pub fn export_csv(ds: &InteractionDataset, path: &Path) -> Result<()> {
    write_pairs(path, ds, &ds.positives())?;
    let sidecar = path.with_extension("mapping.json");
    write_mapping(ds, &sidecar)
}

fn write_mapping(ds: &InteractionDataset, path: &Path) -> Result<()> {
    let mapping = Mapping {
        users: ds.users().raw_ids().to_vec(),
        items: ds.items().raw_ids().to_vec(),
    };
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &mapping)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes `train.csv`, `test.csv` and `mapping.json` into `dir`.
pub fn save_split(ds: &InteractionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_pairs(&dir.join(TRAIN_FILE), ds, ds.train())?;
    write_pairs(&dir.join(TEST_FILE), ds, ds.test())?;
    write_mapping(ds, &dir.join(MAPPING_FILE))
}

/// Inverse of [`save_split`]; indices are restored from the mapping file.
pub fn load_split(dir: &Path) -> Result<InteractionDataset> {
    let read = |name: &str| -> Result<File> {
        let p = dir.join(name);
        File::open(&p).map_err(|_| Error::MissingFile(p.display().to_string()))
    };
    let mapping: Mapping = serde_json::from_reader(BufReader::new(read(MAPPING_FILE)?))?;
    let users = IdMap::from_raw(mapping.users)?;
    let items = IdMap::from_raw(mapping.items)?;
    let mut parts = Vec::new();
    for name in [TRAIN_FILE, TEST_FILE] {
        let source = dir.join(name).display().to_string();
        let pairs = read_pairs(BufReader::new(read(name)?), &source, |u, v| {
            match (users.get(u), items.get(v)) {
                (Some(u), Some(v)) => Ok((u, v)),
                _ => Err(Error::InvalidArgument(format!(
                    "id ({u}, {v}) missing from mapping"
                ))),
            }
        });
        // an empty test split is legitimate
        let pairs = match pairs {
            Err(Error::Empty(_)) => Vec::new(),
            other => other?,
        };
        parts.push(pairs);
    }
    let test = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    InteractionDataset::new(users, items, train, test)
}
