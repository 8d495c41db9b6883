use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Shared trunk plus per-task monitors fused as `a1 S(u) + a2 M_i(u)`.
    Mdmtn,
    /// Shared trunk feeding task heads directly.
    Hps,
}

/// Layer widths of a dense multi-task network.
///
/// `shared` and `monitors` list output widths of their hidden layers;
/// `heads` lists hidden widths of each task head before its logit layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub shared: Vec<usize>,
    #[serde(default)]
    pub monitors: Vec<usize>,
    #[serde(default)]
    pub heads: Vec<usize>,
    pub classes: Vec<usize>,
}

impl ModelSpec {
    pub fn mdmtn(input_dim: usize, classes: Vec<usize>) -> Self {
        Self {
            architecture: Architecture::Mdmtn,
            input_dim,
            shared: vec![64, 32],
            monitors: vec![32, 32],
            heads: vec![],
            classes,
        }
    }

    pub fn hps(input_dim: usize, classes: Vec<usize>) -> Self {
        Self {
            architecture: Architecture::Hps,
            input_dim,
            shared: vec![64, 32],
            monitors: vec![],
            heads: vec![],
            classes,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return domain("input_dim must be >= 1");
        }
        if self.shared.is_empty() {
            return domain("shared stack needs at least one layer");
        }
        if self.classes.is_empty() {
            return domain("at least one task is required");
        }
        let widths = self.shared.iter().chain(&self.monitors).chain(&self.heads);
        if widths.chain(&self.classes).any(|w| *w == 0) {
            return domain("layer widths and class counts must be >= 1");
        }
        match self.architecture {
            Architecture::Mdmtn => {
                if self.monitors.is_empty() || self.monitors.len() > 2 {
                    return domain(format!(
                        "monitors must have 1 or 2 layers, got {}",
                        self.monitors.len()
                    ));
                }
                let (s, m) = (self.shared_width(), *self.monitors.last().unwrap());
                if s != m {
                    return domain(format!(
                        "monitor output width {m} differs from shared output width {s}"
                    ));
                }
            }
            Architecture::Hps => {
                if !self.monitors.is_empty() {
                    return domain("HPS networks have no monitors");
                }
            }
        }
        Ok(())
    }

    pub fn shared_width(&self) -> usize {
        *self.shared.last().expect("validated")
    }
}

/// Position of a layer in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// First layer of the shared stack or of a monitor.
    Input,
    Shared,
    Monitor(usize),
    Output(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stack {
    Shared,
    Monitor(usize),
    Head(usize),
}

/// Dense layer `y = x W + b` with `W` of shape `inputs x outputs`, so rows
/// of `W` belong to neurons of the previous layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub stack: Stack,
    pub role: Role,
    pub growl: bool,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// All trainable parameters. The flat view concatenates, layer by layer,
/// the row-major weight matrix and the bias, then the fusion pairs
/// `(a1, a2)` of every task.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub layers: Vec<Layer>,
    pub alphas: Vec<[f64; 2]>,
}

impl ParamStore {
    pub fn flat_len(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum::<usize>() + 2 * self.alphas.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        for a in &self.alphas {
            out.extend_from_slice(a);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, parameters need {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = flat[pos];
                pos += 1;
            }
        }
        for a in &mut self.alphas {
            a.copy_from_slice(&flat[pos..pos + 2]);
            pos += 2;
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Checks the regularization flags against the roles.
    pub fn check_flags(&self) -> Result<()> {
        for l in &self.layers {
            if l.growl && matches!(l.role, Role::Input) {
                return domain(format!("input layer {} must not be regularized", l.name));
            }
        }
        Ok(())
    }
}

/// Layer indices of each stack, in forward order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackIndex {
    pub shared: Vec<usize>,
    pub monitors: Vec<Vec<usize>>,
    pub heads: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub index: StackIndex,
}

fn push_stack(
    layers: &mut Vec<Layer>,
    stack: Stack,
    prefix: &str,
    mut fan_in: usize,
    widths: &[usize],
    logits: bool,
) -> Vec<usize> {
    let mut idx = Vec::new();
    for (j, &w) in widths.iter().enumerate() {
        let last = j + 1 == widths.len();
        let role = match stack {
            Stack::Shared if j == 0 => Role::Input,
            Stack::Monitor(_) if j == 0 => Role::Input,
            Stack::Shared => Role::Shared,
            Stack::Monitor(i) => Role::Monitor(i),
            Stack::Head(i) => Role::Output(i),
        };
        let growl = !matches!(role, Role::Input) && !(logits && last);
        idx.push(layers.len());
        layers.push(Layer {
            name: format!("{prefix}.{j}"),
            stack,
            role,
            growl,
            weight: Array2::zeros((fan_in, w)),
            bias: Array1::zeros(w),
        });
        fan_in = w;
    }
    idx
}

impl Model {
    /// Builds the layout with all parameters zero and fusion pairs `(0.5, 0.5)`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let shared = push_stack(&mut layers, Stack::Shared, "shared", spec.input_dim, &spec.shared, false);
        let mut monitors = Vec::new();
        if spec.architecture == Architecture::Mdmtn {
            for i in 0..spec.n_tasks() {
                let prefix = format!("monitor{i}");
                monitors.push(push_stack(
                    &mut layers,
                    Stack::Monitor(i),
                    &prefix,
                    spec.input_dim,
                    &spec.monitors,
                    false,
                ));
            }
        }
        let mut heads = Vec::new();
        for (i, &c) in spec.classes.iter().enumerate() {
            let mut widths = spec.heads.clone();
            widths.push(c);
            let prefix = format!("head{i}");
            heads.push(push_stack(
                &mut layers,
                Stack::Head(i),
                &prefix,
                spec.shared_width(),
                &widths,
                true,
            ));
        }
        let alphas = match spec.architecture {
            Architecture::Mdmtn => vec![[0.5, 0.5]; spec.n_tasks()],
            Architecture::Hps => vec![],
        };
        Ok(Self {
            spec: spec.clone(),
            params: ParamStore { layers, alphas },
            index: StackIndex {
                shared,
                monitors,
                heads,
            },
        })
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn random(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.params.layers {
            let scale = 1.0 / (l.weight.nrows() as f64).sqrt();
            l.weight.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
        }
        Ok(m)
    }

    /// Attaches parameters to a spec after checking every shape.
    pub fn from_params(spec: &ModelSpec, params: ParamStore) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        if params.layers.len() != m.params.layers.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                m.params.layers.len(),
                params.layers.len()
            )));
        }
        for (a, b) in m.params.layers.iter().zip(&params.layers) {
            if a.weight.dim() != b.weight.dim() || a.bias.len() != b.bias.len() {
                return Err(Error::Shape(format!(
                    "layer {}: expected {:?}, got {:?}",
                    a.name,
                    a.weight.dim(),
                    b.weight.dim()
                )));
            }
        }
        if params.alphas.len() != m.params.alphas.len() {
            return Err(Error::Shape("fusion coefficient count mismatch".into()));
        }
        params.check_flags()?;
        m.params = params;
        Ok(m)
    }

    pub fn n_tasks(&self) -> usize {
        self.spec.n_tasks()
    }

    pub fn forward(&self, u: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        match self.spec.architecture {
            Architecture::Mdmtn => forward_mdmtn(self, u),
            Architecture::Hps => forward_hps(self, u),
        }
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Inputs and pre-activations of every layer of one stack.
#[derive(Debug, Clone)]
pub(crate) struct StackTrace {
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
    pub out: Array2<f64>,
}

pub(crate) fn run_stack(
    layers: &[Layer],
    idx: &[usize],
    x: Array2<f64>,
    linear_last: bool,
) -> Result<StackTrace> {
    let mut inputs = Vec::with_capacity(idx.len());
    let mut pre = Vec::with_capacity(idx.len());
    let mut cur = x;
    for (j, &li) in idx.iter().enumerate() {
        let l = &layers[li];
        if cur.ncols() != l.weight.nrows() {
            return Err(Error::Shape(format!(
                "layer {} expects {} inputs, got {}",
                l.name,
                l.weight.nrows(),
                cur.ncols()
            )));
        }
        let z = cur.dot(&l.weight) + &l.bias;
        let act = if linear_last && j + 1 == idx.len() {
            z.clone()
        } else {
            z.mapv(relu)
        };
        inputs.push(cur);
        pre.push(z);
        cur = act;
    }
    Ok(StackTrace {
        inputs,
        pre,
        out: cur,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct TaskTrace {
    pub monitor: Option<StackTrace>,
    pub head: StackTrace,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub shared: StackTrace,
    pub tasks: Vec<TaskTrace>,
}

pub(crate) fn trace(model: &Model, u: ArrayView2<f64>, fused: bool) -> Result<ForwardTrace> {
    let layers = &model.params.layers;
    let shared = run_stack(layers, &model.index.shared, u.to_owned(), false)?;
    let mut tasks = Vec::with_capacity(model.n_tasks());
    for i in 0..model.n_tasks() {
        let (monitor, rep) = if fused {
            let mon = run_stack(layers, &model.index.monitors[i], u.to_owned(), false)?;
            let [a1, a2] = model.params.alphas[i];
            let rep = &shared.out * a1 + &mon.out * a2;
            (Some(mon), rep)
        } else {
            (None, shared.out.clone())
        };
        let head = run_stack(layers, &model.index.heads[i], rep, true)?;
        tasks.push(TaskTrace { monitor, head });
    }
    Ok(ForwardTrace { shared, tasks })
}

pub(crate) fn trace_for(model: &Model, u: ArrayView2<f64>) -> Result<ForwardTrace> {
    trace(model, u, model.spec.architecture == Architecture::Mdmtn)
}

/// Per-task logits `O_i(a1 S(u) + a2 M_i(u))`.
pub fn forward_mdmtn(model: &Model, u: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    if model.index.monitors.len() != model.n_tasks() {
        return domain("model has no monitors");
    }
    Ok(trace(model, u, true)?.tasks.into_iter().map(|t| t.head.out).collect())
}

/// Per-task logits `O_i(S(u))`; monitors and fusion pairs are ignored.
pub fn forward_hps(model: &Model, u: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    Ok(trace(model, u, false)?.tasks.into_iter().map(|t| t.head.out).collect())
}

/// Inputs with labels for every task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub inputs: Array2<f64>,
    pub labels: Vec<Vec<usize>>,
}

impl TaskBatch {
    pub fn new(inputs: Array2<f64>, labels: Vec<Vec<usize>>) -> Result<Self> {
        let b = Self { inputs, labels };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.nrows() == 0 {
            return domain("batch is empty");
        }
        for (i, l) in self.labels.iter().enumerate() {
            if l.len() != self.inputs.nrows() {
                return domain(format!(
                    "task {i} has {} labels for {} inputs",
                    l.len(),
                    self.inputs.nrows()
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), rows),
            labels: self
                .labels
                .iter()
                .map(|l| rows.iter().map(|&r| l[r]).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelSpec {
        ModelSpec {
            architecture: Architecture::Mdmtn,
            input_dim: 5,
            shared: vec![6, 4],
            monitors: vec![4],
            heads: vec![],
            classes: vec![3, 2],
        }
    }

    #[test]
    fn layout_roles_and_flags() {
        let m = Model::zeros(&small()).unwrap();
        let names: Vec<_> = m.params.layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["shared.0", "shared.1", "monitor0.0", "monitor1.0", "head0.0", "head1.0"]);
        let flags: Vec<_> = m.params.layers.iter().map(|l| l.growl).collect();
        assert_eq!(flags, [false, true, false, false, false, false]);
        let expected = 5 * 6 + 6 + 6 * 4 + 4 + 2 * (5 * 4 + 4) + 4 * 3 + 3 + 4 * 2 + 2 + 4;
        assert_eq!(m.params.flat_len(), expected);
        assert_eq!(m.params.to_flat().len(), expected);
    }

    #[test]
    fn flat_round_trip() {
        let mut m = Model::random(&small(), 3).unwrap();
        let flat = m.params.to_flat();
        let shifted: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        m.params.set_flat(&shifted).unwrap();
        assert_eq!(m.params.to_flat(), shifted);
        assert!(m.params.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = small();
        s.monitors = vec![4, 4, 4];
        assert!(s.validate().is_err());
        s.monitors = vec![5];
        assert!(s.validate().unwrap_err().to_string().contains("differs"));
        let mut h = small();
        h.architecture = Architecture::Hps;
        assert!(h.validate().is_err());
    }

    #[test]
    fn logits_shapes_and_fusion_degeneracy() {
        let mut m = Model::random(&small(), 1).unwrap();
        let u = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) * 0.3);
        let out = forward_mdmtn(&m, u.view()).unwrap();
        assert_eq!(out[0].dim(), (4, 3));
        assert_eq!(out[1].dim(), (4, 2));
        m.params.alphas = vec![[1.0, 0.0]; 2];
        assert_eq!(forward_mdmtn(&m, u.view()).unwrap(), forward_hps(&m, u.view()).unwrap());
    }

    #[test]
    fn monitor_only_path() {
        let mut m = Model::random(&small(), 2).unwrap();
        m.params.alphas = vec![[0.0, 1.0]; 2];
        let u = Array2::from_elem((2, 5), 0.5);
        let out = forward_mdmtn(&m, u.view()).unwrap();
        let layers = &m.params.layers;
        let mon = run_stack(layers, &m.index.monitors[0], u.clone(), false).unwrap();
        let head = run_stack(layers, &m.index.heads[0], mon.out, true).unwrap();
        assert_eq!(out[0], head.out);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let m = Model::random(&small(), 1).unwrap();
        let u = Array2::zeros((2, 7));
        let err = forward_mdmtn(&m, u.view()).unwrap_err();
        assert!(err.to_string().contains("shared.0"));
    }
}
