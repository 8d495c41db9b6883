use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{domain, Result};
use crate::net::{predictions, Model, TaskBatch};

/// Parameter counts behind SR, CR and PS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub total: usize,
    pub zero: usize,
    pub unique: usize,
}

/// Sparsity, compression and sharing rates, with accuracies when the model
/// was evaluated on labelled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "PS")]
    pub ps: f64,
    pub counts: ParamCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_accuracy: Option<f64>,
}

impl MetricsRecord {
    pub fn from_counts(c: ParamCounts) -> Self {
        let nonzero = c.total - c.zero;
        let unique = c.unique.max(1) as f64;
        Self {
            sr: c.zero as f64 / c.total as f64,
            cr: c.total as f64 / unique,
            ps: if nonzero == 0 { 1.0 } else { nonzero as f64 / unique },
            counts: c,
            accuracy: Vec::new(),
            avg_accuracy: None,
        }
    }

    pub fn with_accuracy(mut self, acc: Accuracy) -> Self {
        self.accuracy = acc.per_task;
        self.avg_accuracy = Some(acc.average);
        self
    }

    /// Flat map for archives and checkpoint headers.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("SR".into(), self.sr);
        m.insert("CR".into(), self.cr);
        m.insert("PS".into(), self.ps);
        for (i, a) in self.accuracy.iter().enumerate() {
            m.insert(format!("acc{}", i + 1), *a);
        }
        if let Some(a) = self.avg_accuracy {
            m.insert("avg_acc".into(), a);
        }
        m
    }
}

/// Counts every entry of the flat parameter view. Inside layers listed in
/// `tied`, nonzero weights are unique up to exact bit equality; everywhere
/// else each nonzero entry is unique.
pub fn count_params(model: &Model, tied: &HashSet<&str>) -> ParamCounts {
    let flat = model.params.to_flat();
    let total = flat.len();
    let zero = flat.iter().filter(|v| **v == 0.0).count();
    let mut unique = 0;
    for l in &model.params.layers {
        let nz_bias = l.bias.iter().filter(|v| **v != 0.0).count();
        unique += nz_bias;
        if tied.contains(l.name.as_str()) {
            let set: HashSet<u64> = l.weight.iter().filter(|v| **v != 0.0).map(|v| v.to_bits()).collect();
            unique += set.len();
        } else {
            unique += l.weight.iter().filter(|v| **v != 0.0).count();
        }
    }
    unique += model.params.alphas.iter().flatten().filter(|v| **v != 0.0).count();
    ParamCounts { total, zero, unique }
}

/// SR, CR and PS of `model`. Layers are treated as tied when their cluster
/// assignment has a group with more than one row.
pub fn compute_metrics(model: &Model, clusters: &BTreeMap<String, ClusterAssignment>) -> MetricsRecord {
    let tied: HashSet<&str> = clusters
        .iter()
        .filter(|(_, c)| c.has_ties())
        .map(|(k, _)| k.as_str())
        .collect();
    MetricsRecord::from_counts(count_params(model, &tied))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Fraction correct per task, in `[0, 1]`.
    pub per_task: Vec<f64>,
    pub average: f64,
}

pub fn evaluate(model: &Model, data: &TaskBatch) -> Result<Accuracy> {
    if data.is_empty() {
        return domain("cannot evaluate on an empty dataset");
    }
    data.validate()?;
    let logits = model.forward(data.inputs.view())?;
    let per_task: Vec<f64> = logits
        .iter()
        .zip(&data.labels)
        .map(|(z, y)| {
            let hit = predictions(z.view()).iter().zip(y).filter(|(p, y)| p == y).count();
            hit as f64 / y.len() as f64
        })
        .collect();
    let average = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok(Accuracy { per_task, average })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelSpec;
    use ndarray::Array2;

    #[test]
    fn formula_example() {
        let m = MetricsRecord::from_counts(ParamCounts {
            total: 10,
            zero: 3,
            unique: 5,
        });
        assert!((m.sr - 0.3).abs() < 1e-15);
        assert!((m.ps - 1.4).abs() < 1e-15);
        assert!((m.cr - 2.0).abs() < 1e-15);
        assert!((m.cr - m.ps / (1.0 - m.sr)).abs() < 1e-12);
    }

    #[test]
    fn dense_untied_model() {
        let model = Model::random(&ModelSpec::mdmtn(4, vec![2, 2]), 0).unwrap();
        let mut m = model.clone();
        for l in &mut m.params.layers {
            l.bias.fill(0.1);
        }
        let r = compute_metrics(&m, &BTreeMap::new());
        assert_eq!((r.sr, r.ps, r.cr), (0.0, 1.0, 1.0));
    }

    #[test]
    fn two_task_average_accuracy() {
        let a = [0.9729, 0.9640];
        assert!(((a[0] + a[1]) / 2.0 - 0.96845f64).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let spec = ModelSpec {
            architecture: crate::net::Architecture::Hps,
            input_dim: 2,
            shared: vec![2],
            monitors: vec![],
            heads: vec![],
            classes: vec![2],
        };
        let mut m = Model::zeros(&spec).unwrap();
        for l in &mut m.params.layers {
            l.weight = Array2::eye(2);
        }
        let data = TaskBatch::new(ndarray::array![[1.0, 0.0], [0.0, 1.0]], vec![vec![0, 1]]).unwrap();
        let acc = evaluate(&m, &data).unwrap();
        assert_eq!(acc.average, 1.0);
    }
}
