use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::problems::{generational_distance, AnalyticProblem};
use crate::error::{domain, Error, Result};
use crate::moo::{pareto_filter, ArchiveEntry, ParetoArchive};

/// Default width of a sparsity-rate bin.
pub const SR_BIN_WIDTH: f64 = 0.1;

/// One archive entry as it appears in the front CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub k: Vec<f64>,
    pub objectives: Vec<f64>,
    pub sr: f64,
    pub cr: f64,
    pub ps: f64,
    /// Sparsity-rate bin.
    pub cluster: usize,
}

/// Entries sharing a sparsity-rate bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrCluster {
    pub id: usize,
    pub sr_low: f64,
    pub sr_high: f64,
    pub members: Vec<usize>,
    /// Smallest mean task objective among the members.
    pub best_task_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub rows: Vec<FrontRow>,
    pub clusters: Vec<SrCluster>,
    /// Rows nondominated on the task objectives alone (sparsity objective
    /// dropped). Empty for problems with fewer than three objectives.
    pub projection: Vec<usize>,
    pub generational_distance: Option<f64>,
    pub candidates: usize,
}

fn metric(e: &ArchiveEntry, name: &str) -> Result<f64> {
    e.metrics
        .get(name)
        .copied()
        .ok_or_else(|| Error::Format(format!("archive entry is missing metric {name}")))
}

fn task_mean(f: &[f64]) -> f64 {
    let tasks = if f.len() > 2 { &f[1..] } else { f };
    tasks.iter().sum::<f64>() / tasks.len() as f64
}

/// Builds the report of an archive: sparsity-rate bins of width `bin_width`,
/// the projection onto the task objectives and, when `problem` has a known
/// front, the generational distance.
pub fn front_report(
    archive: &ParetoArchive,
    problem: Option<&dyn AnalyticProblem>,
    bin_width: f64,
) -> Result<FrontReport> {
    if archive.is_empty() {
        return domain("cannot report on an empty archive");
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return domain(format!("bin width must be in (0, 1], got {bin_width}"));
    }
    let n_bins = (1.0 / bin_width).ceil() as usize;
    let mut rows = Vec::with_capacity(archive.len());
    for e in archive.entries() {
        let sr = metric(e, "SR")?;
        rows.push(FrontRow {
            k: e.k.values().to_vec(),
            objectives: e.objectives.values().to_vec(),
            sr,
            cr: metric(e, "CR")?,
            ps: metric(e, "PS")?,
            cluster: ((sr / bin_width).floor() as usize).min(n_bins - 1),
        });
    }

    let mut clusters: Vec<SrCluster> = Vec::new();
    let mut ids: Vec<usize> = rows.iter().map(|r| r.cluster).collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].cluster == id).collect();
        let best_task_mean = members
            .iter()
            .map(|&i| task_mean(&rows[i].objectives))
            .fold(f64::INFINITY, f64::min);
        clusters.push(SrCluster {
            id,
            sr_low: id as f64 * bin_width,
            sr_high: ((id + 1) as f64 * bin_width).min(1.0),
            members,
            best_task_mean,
        });
    }

    let projection = if rows[0].objectives.len() >= 3 {
        let main: Vec<&[f64]> = rows.iter().map(|r| &r.objectives[1..]).collect();
        pareto_filter(&main)?
    } else {
        Vec::new()
    };
    let generational_distance = match problem {
        Some(p) => {
            let pts: Vec<&[f64]> = rows.iter().map(|r| r.objectives.as_slice()).collect();
            generational_distance(p, &pts)
        }
        None => None,
    };
    Ok(FrontReport {
        rows,
        clusters,
        projection,
        generational_distance,
        candidates: archive.candidates(),
    })
}

impl FrontReport {
    /// CSV with header `k0,...,km,f0,...,fm,SR,CR,PS,cluster`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.rows[0].objectives.len();
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..n).map(|i| format!("k{i}")).collect();
        header.extend((0..n).map(|i| format!("f{i}")));
        header.extend(["SR", "CR", "PS", "cluster"].map(String::from));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.k.iter().chain(&r.objectives).map(|v| format!("{v:?}")).collect();
            rec.extend([r.sr, r.cr, r.ps].map(|v| format!("{v:?}")));
            rec.push(r.cluster.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Human-readable summary in Markdown.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let n = self.rows[0].objectives.len();
        let _ = writeln!(s, "# Pareto front report\n");
        let _ = writeln!(s, "- archive entries: {} of {} candidates", self.rows.len(), self.candidates);
        let _ = writeln!(s, "- objectives: {n}");
        if let Some(gd) = self.generational_distance {
            let _ = writeln!(s, "- generational distance to the known front: {gd:.3e}");
        }
        if n >= 3 {
            let _ = writeln!(
                s,
                "- nondominated on the task objectives alone: {}",
                self.projection.len()
            );
        }
        let _ = writeln!(s, "\n## Entries clustered by sparsity rate\n");
        let _ = writeln!(s, "| cluster | SR range | entries | best mean task objective |");
        let _ = writeln!(s, "|---|---|---|---|");
        for c in &self.clusters {
            let _ = writeln!(
                s,
                "| {} | [{:.0}%, {:.0}%) | {} | {:.6} |",
                c.id,
                100.0 * c.sr_low,
                100.0 * c.sr_high,
                c.members.len(),
                c.best_task_mean
            );
        }
        let _ = writeln!(s, "\n## Entries\n");
        let mut head = String::from("| # |");
        let mut rule = String::from("|---|");
        for i in 0..n {
            let _ = write!(head, " k{i} |");
            rule.push_str("---|");
        }
        for i in 0..n {
            let _ = write!(head, " f{i} |");
            rule.push_str("---|");
        }
        head.push_str(" SR | CR | PS | cluster |");
        rule.push_str("---|---|---|---|");
        let _ = writeln!(s, "{head}\n{rule}");
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = format!("| {i} |");
            for v in r.k.iter().chain(&r.objectives) {
                let _ = write!(line, " {v:.4} |");
            }
            let _ = write!(line, " {:.4} | {:.3} | {:.3} | {} |", r.sr, r.cr, r.ps, r.cluster);
            let _ = writeln!(s, "{line}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::bench::problems::Convex2;
    use crate::moo::{ObjectiveVector, PreferenceVector};

    fn entry(k: &[f64], f: &[f64], sr: f64) -> ArchiveEntry {
        let mut metrics = BTreeMap::new();
        metrics.insert("SR".into(), sr);
        metrics.insert("CR".into(), 1.0 / (1.0 - sr));
        metrics.insert("PS".into(), 1.0);
        ArchiveEntry {
            k: PreferenceVector::new(k.to_vec()).unwrap(),
            objectives: ObjectiveVector::new(f.to_vec()).unwrap(),
            metrics,
            checkpoint: None,
        }
    }

    #[test]
    fn empty_archive_is_an_error() {
        let a = ParetoArchive::new(0.0).unwrap();
        assert!(front_report(&a, None, SR_BIN_WIDTH).is_err());
    }

    #[test]
    fn single_entry_single_cluster() {
        let mut a = ParetoArchive::new(0.0).unwrap();
        a.insert(entry(&[0.5, 0.5], &[1.0, 1.0], 0.0)).unwrap();
        let r = front_report(&a, Some(&Convex2::default()), SR_BIN_WIDTH).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.generational_distance, Some(0.0));
        assert!(r.projection.is_empty());
    }

    #[test]
    fn projection_drops_sparsity_and_refilters() {
        let mut a = ParetoArchive::new(0.0).unwrap();
        // mutually nondominated in 3D, but the second is dominated on (f1, f2)
        a.insert(entry(&[0.1, 0.45, 0.45], &[1.0, 0.5, 0.5], 0.0)).unwrap();
        a.insert(entry(&[0.1, 0.45, 0.45], &[0.5, 0.6, 0.6], 0.25)).unwrap();
        a.insert(entry(&[0.1, 0.45, 0.45], &[0.2, 0.4, 0.9], 0.55)).unwrap();
        let r = front_report(&a, None, SR_BIN_WIDTH).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.projection, vec![0, 2]);
        assert_eq!(r.clusters.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 2, 5]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k0,k1,k2,f0,f1,f2,SR,CR,PS,cluster\n"));
        assert!(r.to_markdown().contains("| 5 | [50%, 60%) | 1 |"));
    }

    #[test]
    fn full_sparsity_lands_in_last_bin() {
        let mut a = ParetoArchive::new(0.0).unwrap();
        a.insert(entry(&[0.5, 0.5], &[1.0, 1.0], 1.0 - 1e-12)).unwrap();
        let mut e = entry(&[0.4, 0.6], &[0.5, 2.0], 0.0);
        e.metrics.insert("SR".into(), 1.0);
        a.insert(e).unwrap();
        let r = front_report(&a, None, SR_BIN_WIDTH).unwrap();
        assert!(r.rows.iter().all(|row| row.cluster == 9));
    }
}
