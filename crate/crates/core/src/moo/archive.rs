use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dominance::eps_nondominance_filter;
use super::types::{ObjectiveVector, PreferenceVector};
use crate::error::{domain, Error, Result};

/// One solved preference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveEntry {
    pub k: PreferenceVector,
    pub objectives: ObjectiveVector,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

/// Epsilon-nondominated set of solved preference vectors.
///
/// Every inserted candidate is retained internally and the visible entries
/// are recomputed from the full pool, so the final set is independent of
/// insertion order. Insertion is single-writer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoArchive {
    epsilon: f64,
    pool: Vec<ArchiveEntry>,
    kept: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveFile {
    epsilon: f64,
    entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return domain(format!("archive epsilon must be finite and >= 0, got {epsilon}"));
        }
        Ok(Self {
            epsilon,
            pool: Vec::new(),
            kept: Vec::new(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Adds a candidate and returns whether it survived the filter.
    pub fn insert(&mut self, entry: ArchiveEntry) -> Result<bool> {
        if let Some(first) = self.pool.first() {
            if first.objectives.len() != entry.objectives.len() {
                return domain(format!(
                    "archive holds {}-objective points, got {}",
                    first.objectives.len(),
                    entry.objectives.len()
                ));
            }
        }
        self.pool.push(entry);
        let points: Vec<&[f64]> = self.pool.iter().map(|e| e.objectives.values()).collect();
        self.kept = eps_nondominance_filter(&points, self.epsilon)?;
        Ok(self.kept.last() == Some(&(self.pool.len() - 1)))
    }

    pub fn entries(&self) -> impl Iterator<Item = &ArchiveEntry> {
        self.kept.iter().map(|&i| &self.pool[i])
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Number of candidates offered, kept or not.
    pub fn candidates(&self) -> usize {
        self.pool.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ArchiveFile {
            epsilon: self.epsilon,
            entries: self.entries().cloned().collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ArchiveFile = serde_json::from_str(s)?;
        let mut archive = Self::new(file.epsilon)?;
        for e in file.entries {
            archive.insert(e)?;
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes points as CSV with header `f0,f1,...,fm`.
pub fn write_points_csv<W: Write, P: AsRef<[f64]>>(w: W, points: &[P]) -> Result<()> {
    let n = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record((0..n).map(|i| format!("f{i}")))?;
    for p in points {
        wtr.write_record(p.as_ref().iter().map(|v| format_float(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads points written by [`write_points_csv`]. The header must be
/// `f0,...,fm`.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<ObjectiveVector>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    for (i, h) in headers.iter().enumerate() {
        if h.trim() != format!("f{i}") {
            return Err(Error::Format(format!("expected column f{i}, found '{h}'")));
        }
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {row}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(ObjectiveVector::new(values)?);
    }
    Ok(out)
}

/// Shortest round-trip representation; stable across runs.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}
