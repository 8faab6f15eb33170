//! Output files. CSV files open with a `# config_hash=<hex>` comment line;
//! JSON files carry a top-level `config_hash` field.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chronos_core::chronology::ChronologyEnsemble;
use chronos_core::genealogy::{FamilyTree, GenerationMap, TreeStatistics};
use chronos_core::growth::HistogramBin;
use chronos_core::identity::PersonRegistry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl ToString) -> ArtifactError {
    ArtifactError::Format { path: path.display().to_string(), message: message.to_string() }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
}

/// A JSON body with the hash of the configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, hash: &str, body: &T) -> Result<(), ArtifactError> {
    let stamped = Stamped { config_hash: hash.to_owned(), body };
    let mut text = serde_json::to_string_pretty(&stamped).map_err(|e| format_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Stamped<T>, ArtifactError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

/// Writes the hash line, a header and the rows.
pub fn write_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), ArtifactError> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}").map_err(io_err(path))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| format_err(path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| format_err(path, e))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// A CSV file read back: header and rows, with comment lines dropped.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_csv(path: &Path) -> Result<Table, ArtifactError> {
    let text = fs::read(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_slice());
    let header = r.headers().map_err(|e| format_err(path, e))?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| format_err(path, e))?;
    Ok(Table { header, rows })
}

/// Numeric column of a table, optionally restricted to rows whose `anchored`
/// column is true.
pub fn numeric_column(table: &Table, path: &Path, col: &str, anchored_only: bool) -> Result<Vec<f64>, ArtifactError> {
    let k = table.column(col).ok_or_else(|| format_err(path, format!("no column `{col}`")))?;
    let anchored = if anchored_only { table.column("anchored") } else { None };
    let mut out = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        if let Some(a) = anchored {
            if row[a] != "true" {
                continue;
            }
        }
        let v: f64 = row[k]
            .parse()
            .map_err(|_| format_err(path, format!("row {}: `{}` is not a number", i + 1, row[k])))?;
        out.push(v);
    }
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_trees(path: &Path, hash: &str, trees: &[FamilyTree], reference: Option<usize>) -> Result<(), ArtifactError> {
    let rows: Vec<Vec<String>> = trees
        .iter()
        .map(|t| {
            vec![
                t.id.to_string(),
                t.depth.to_string(),
                t.node_count().to_string(),
                t.members.len().to_string(),
                (Some(t.id) == reference).to_string(),
            ]
        })
        .collect();
    write_csv(path, hash, &["tree_id", "generations", "individuals", "members", "reference"], &rows)
}

pub fn write_tree_stats(path: &Path, hash: &str, stats: &TreeStatistics) -> Result<(), ArtifactError> {
    let rows: Vec<Vec<String>> = stats
        .histogram
        .iter()
        .map(|(&(g, n), &count)| vec![g.to_string(), n.to_string(), count.to_string()])
        .collect();
    write_csv(path, hash, &["generations", "individuals", "trees"], &rows)
}

pub fn write_persons(
    path: &Path,
    hash: &str,
    r: &PersonRegistry,
    ens: &ChronologyEnsemble,
    generations: Option<&GenerationMap>,
) -> Result<(), ArtifactError> {
    let first = &ens.timelines[0];
    let rows: Vec<Vec<String>> = r
        .persons
        .iter()
        .map(|p| {
            let i = p.id;
            let (b, d) = (ens.birth[i], ens.death[i]);
            let generation = generations.and_then(|g| g.generation[i]).map(|g| g.to_string()).unwrap_or_default();
            vec![
                i.to_string(),
                p.name_key.clone(),
                num(b.mean),
                num(d.mean),
                first.person_anchored[i].to_string(),
                generation,
                num(b.min),
                num(b.max),
                num(d.min),
                num(d.max),
            ]
        })
        .collect();
    write_csv(
        path,
        hash,
        &["person_id", "name_key", "b", "d", "anchored", "generation", "b_min", "b_max", "d_min", "d_max"],
        &rows,
    )
}

pub fn write_documents(path: &Path, hash: &str, ens: &ChronologyEnsemble) -> Result<(), ArtifactError> {
    let first = &ens.timelines[0];
    let rows: Vec<Vec<String>> = first
        .documents
        .iter()
        .enumerate()
        .map(|(k, doc)| {
            let p = ens.publication[k];
            vec![doc.clone(), num(p.mean), first.document_anchored[k].to_string(), num(p.min), num(p.max)]
        })
        .collect();
    write_csv(path, hash, &["doc_id", "P", "anchored", "P_min", "P_max"], &rows)
}

pub fn write_histogram(path: &Path, hash: &str, bins: &[HistogramBin]) -> Result<(), ArtifactError> {
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|b| {
            vec![
                num(b.left),
                num(b.right),
                b.count.to_string(),
                num(b.density),
                num(b.logistic_density),
                num(b.normal_density),
            ]
        })
        .collect();
    write_csv(
        path,
        hash,
        &["left", "right", "count", "density", "logistic_density", "normal_density"],
        &rows,
    )
}
