//! Reverse-mode gradients of the scalarized multi-task objective.

use ndarray::{Array1, Array2, Axis, Zip};

use super::loss::cross_entropy;
use super::model::{trace_for, Layer, Model, ParamStore, StackTrace, TaskBatch};
use crate::error::{Error, Result};
use crate::growl::{growl_penalty_layer, row_norms, GrowlConfig, GrowlPattern};
use crate::moo::{al_loss, al_sensitivity, optimal_t, wc_constraints, ALState, AlSensitivity, ScalarizationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient with the layout of [`ParamStore`] plus the entry for `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGrad>,
    pub alphas: Vec<[f64; 2]>,
    pub t: f64,
}

impl Gradient {
    pub fn zeros_like(p: &ParamStore) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            alphas: vec![[0.0; 2]; p.alphas.len()],
            t: 0.0,
        }
    }

    /// Flat view in [`ParamStore::to_flat`] order, without `t`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weight.iter());
            out.extend(g.bias.iter());
        }
        for a in &self.alphas {
            out.extend_from_slice(a);
        }
        out
    }

    pub fn check_finite(&self, p: &ParamStore) -> Result<()> {
        for (g, l) in self.layers.iter().zip(&p.layers) {
            if g.weight.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in layer {}", l.name)));
            }
        }
        if self.alphas.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient in fusion coefficients".into()));
        }
        if !self.t.is_finite() {
            return Err(Error::Numeric("non-finite gradient in t".into()));
        }
        Ok(())
    }
}

fn backprop_stack(
    layers: &[Layer],
    idx: &[usize],
    tr: &StackTrace,
    mut d: Array2<f64>,
    linear_last: bool,
    grad: &mut Gradient,
) -> Array2<f64> {
    for j in (0..idx.len()).rev() {
        let li = idx[j];
        if !(linear_last && j + 1 == idx.len()) {
            Zip::from(&mut d).and(&tr.pre[j]).for_each(|d, z| {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let g = &mut grad.layers[li];
        g.weight += &tr.inputs[j].t().dot(&d);
        g.bias += &d.sum_axis(Axis(0));
        d = d.dot(&layers[li].weight.t());
    }
    d
}

/// Task losses and the gradient of `sum_i w_i L_i`.
pub fn task_gradient(model: &Model, batch: &TaskBatch, weights: &[f64]) -> Result<(Vec<f64>, Gradient)> {
    batch.validate()?;
    if weights.len() != model.n_tasks() || batch.labels.len() != model.n_tasks() {
        return Err(Error::Shape(format!(
            "model has {} tasks, got {} weights and {} label sets",
            model.n_tasks(),
            weights.len(),
            batch.labels.len()
        )));
    }
    let layers = &model.params.layers;
    let tr = trace_for(model, batch.inputs.view())?;
    let mut grad = Gradient::zeros_like(&model.params);
    let mut losses = Vec::with_capacity(weights.len());
    let mut d_shared = Array2::zeros(tr.shared.out.dim());
    for (i, task) in tr.tasks.iter().enumerate() {
        let (loss, dz) = cross_entropy(task.head.out.view(), &batch.labels[i])?;
        losses.push(loss);
        let d_rep = backprop_stack(layers, &model.index.heads[i], &task.head, dz * weights[i], true, &mut grad);
        match &task.monitor {
            Some(mon) => {
                let [a1, a2] = model.params.alphas[i];
                grad.alphas[i][0] += (&d_rep * &tr.shared.out).sum();
                grad.alphas[i][1] += (&d_rep * &mon.out).sum();
                d_shared.scaled_add(a1, &d_rep);
                backprop_stack(layers, &model.index.monitors[i], mon, d_rep * a2, false, &mut grad);
            }
            None => d_shared += &d_rep,
        }
    }
    backprop_stack(layers, &model.index.shared, &tr.shared, d_shared, false, &mut grad);
    Ok((losses, grad))
}

/// GrOWL pattern for every regularized layer, `None` elsewhere.
pub fn growl_patterns(params: &ParamStore, cfg: &GrowlConfig) -> Result<Vec<Option<GrowlPattern>>> {
    params
        .layers
        .iter()
        .map(|l| {
            l.growl
                .then(|| cfg.pattern_for(&l.name, l.weight.nrows()))
                .transpose()
        })
        .collect()
}

/// Sparsity objective `L_0`: the GrOWL penalty summed over regularized layers.
pub fn growl_objective(params: &ParamStore, patterns: &[Option<GrowlPattern>]) -> Result<f64> {
    let mut total = 0.0;
    for (l, p) in params.layers.iter().zip(patterns) {
        if let Some(p) = p {
            total += growl_penalty_layer(l.weight.view(), p)?;
        }
    }
    Ok(total)
}

/// Everything the augmented Lagrangian needs besides the model and data.
#[derive(Debug, Clone, Copy)]
pub struct AlObjective<'a> {
    pub cfg: &'a ScalarizationConfig,
    pub state: &'a ALState,
    pub patterns: &'a [Option<GrowlPattern>],
    /// Differentiate the GrOWL term (a subgradient) instead of leaving it to
    /// the proximal step.
    pub growl_subgradient: bool,
    /// Replace the supplied `t` by its exact minimiser for the current
    /// objectives; the returned gradient then has `t = 0`.
    pub exact_t: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlEval {
    /// The `t` at which the constraints were evaluated.
    pub t: f64,
    /// `(L_0, L_1, ..., L_m)`.
    pub objectives: Vec<f64>,
    pub h: Vec<f64>,
    pub value: f64,
    pub sensitivity: AlSensitivity,
}

fn finish(objectives: Vec<f64>, t: f64, obj: &AlObjective) -> Result<AlEval> {
    let t = if obj.exact_t {
        optimal_t(&wc_constraints(&objectives, 0.0, obj.cfg)?, obj.state)?
    } else {
        t
    };
    let h = wc_constraints(&objectives, t, obj.cfg)?;
    let state = ALState { t, ..obj.state.clone() };
    let value = al_loss(&h, &state)?;
    let sensitivity = al_sensitivity(&h, &state, obj.cfg);
    Ok(AlEval {
        t,
        objectives,
        h,
        value,
        sensitivity,
    })
}

fn check_tasks(model: &Model, obj: &AlObjective) -> Result<()> {
    if obj.cfg.n_objectives() != model.n_tasks() + 1 {
        return Err(Error::Shape(format!(
            "scalarization has {} objectives, model has {} tasks plus sparsity",
            obj.cfg.n_objectives(),
            model.n_tasks()
        )));
    }
    if obj.patterns.len() != model.params.layers.len() {
        return Err(Error::Shape("one GrOWL pattern slot per layer is required".into()));
    }
    Ok(())
}

/// `L_A` at parameters `model` and scalarization variable `t`.
pub fn al_objective(model: &Model, batch: &TaskBatch, t: f64, obj: &AlObjective) -> Result<AlEval> {
    check_tasks(model, obj)?;
    let logits = model.forward(batch.inputs.view())?;
    let mut objectives = vec![growl_objective(&model.params, obj.patterns)?];
    objectives.extend(super::loss::task_losses(&logits, &batch.labels)?);
    finish(objectives, t, obj)
}

/// Value and gradient of `L_A` with respect to every parameter and `t`.
pub fn backward(model: &Model, batch: &TaskBatch, t: f64, obj: &AlObjective) -> Result<(AlEval, Gradient)> {
    check_tasks(model, obj)?;
    let l0 = growl_objective(&model.params, obj.patterns)?;
    // losses first, then sensitivities, then one weighted backward pass
    let logits = model.forward(batch.inputs.view())?;
    let mut objectives = vec![l0];
    objectives.extend(super::loss::task_losses(&logits, &batch.labels)?);
    let eval = finish(objectives, t, obj)?;
    let c = &eval.sensitivity.objective;
    let (_, mut grad) = task_gradient(model, batch, &c[1..])?;
    if obj.growl_subgradient {
        for ((l, g), p) in model.params.layers.iter().zip(&mut grad.layers).zip(obj.patterns) {
            if let Some(p) = p {
                add_growl_subgradient(l.weight.view(), p, c[0], &mut g.weight);
            }
        }
    }
    grad.t = if obj.exact_t { 0.0 } else { eval.sensitivity.t };
    grad.check_finite(&model.params)?;
    Ok((eval, grad))
}

fn add_growl_subgradient(w: ndarray::ArrayView2<f64>, p: &GrowlPattern, scale: f64, g: &mut Array2<f64>) {
    let norms = row_norms(w);
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    for (rank, &r) in order.iter().enumerate() {
        if norms[r] > 0.0 {
            let f = scale * p.values()[rank] / norms[r];
            g.row_mut(r).scaled_add(f, &w.row(r));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moo::{PreferenceVector, ReferencePoint};
    use crate::net::model::{Architecture, ModelSpec};
    use ndarray::array;

    #[test]
    fn single_linear_layer_closed_form() {
        // one logit layer with two classes: dL/dW = x^T (softmax - onehot) / n
        let spec = ModelSpec {
            architecture: Architecture::Hps,
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
        let batch = TaskBatch::new(array![[1.0, 2.0]], vec![vec![0]]).unwrap();
        let (_, g) = task_gradient(&m, &batch, &[1.0]).unwrap();
        let z = [1.0f64, 2.0];
        let s0 = z[0].exp() / (z[0].exp() + z[1].exp());
        let dz = [s0 - 1.0, 1.0 - s0];
        let head = &g.layers[1];
        assert!((head.weight[[0, 0]] - 1.0 * dz[0]).abs() < 1e-15);
        assert!((head.weight[[1, 1]] - 2.0 * dz[1]).abs() < 1e-15);
        assert!((head.bias[0] - dz[0]).abs() < 1e-15);
    }

    #[test]
    fn dt_is_one_when_constraints_inactive() {
        let spec = ModelSpec {
            architecture: Architecture::Mdmtn,
            input_dim: 3,
            shared: vec![4],
            monitors: vec![4],
            heads: vec![],
            classes: vec![2, 2],
        };
        let m = Model::random(&spec, 0).unwrap();
        let batch = TaskBatch::new(Array2::from_elem((2, 3), 0.4), vec![vec![0, 1], vec![1, 1]]).unwrap();
        let cfg = ScalarizationConfig::new(PreferenceVector::new(vec![0.2, 0.4, 0.4]).unwrap())
            .with_reference(ReferencePoint(vec![-1.0; 3]));
        let patterns = growl_patterns(&m.params, &GrowlConfig::default()).unwrap();
        let state = ALState::new(3, 1.0).unwrap();
        let obj = AlObjective {
            cfg: &cfg,
            state: &state,
            patterns: &patterns,
            growl_subgradient: false,
            exact_t: false,
        };
        let (eval, g) = backward(&m, &batch, 1e6, &obj).unwrap();
        assert!(eval.h.iter().all(|h| *h < 0.0));
        assert_eq!(g.t, 1.0);
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
    }
}
