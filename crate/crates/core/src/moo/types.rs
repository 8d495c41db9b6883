use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Tolerance on the preference-vector simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Default disturbance of the modified Chebyshev constraints.
pub const DEFAULT_EPSILON_DISTURBANCE: f64 = 1e-4;

/// A point in criterion space. Index 0 is the sparsity objective, indices
/// `1..=m` are the task losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return domain(format!(
                "objective vector needs at least 2 entries, got {}",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("objective entry {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ObjectiveVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ObjectiveVector> for Vec<f64> {
    fn from(v: ObjectiveVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for ObjectiveVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Importance weights `k`; nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        if k.is_empty() {
            return domain("preference vector is empty");
        }
        if let Some(i) = k.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return domain(format!("preference entry k[{i}] must be finite and >= 0"));
        }
        let sum: f64 = k.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return domain(format!("preference entries must sum to 1, got {sum}"));
        }
        Ok(Self(k))
    }

    /// Builds a preference from arbitrary nonnegative weights by normalising
    /// them onto the simplex. The last entry absorbs the rounding residue so
    /// the sum is 1 to within a few ulps.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) || raw.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return domain("cannot normalise preference weights");
        }
        let mut k: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let head: f64 = k[..k.len() - 1].iter().sum();
        let last = k.len() - 1;
        k[last] = (1.0 - head).max(0.0);
        Self::new(k)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for PreferenceVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PreferenceVector> for Vec<f64> {
    fn from(v: PreferenceVector) -> Self {
        v.0
    }
}

/// Utopian anchor `a`. Validity (strictly below the observed objectives) is
/// checked where it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferencePoint(pub Vec<f64>);

impl ReferencePoint {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Errors with the first index where `a_i >= L_i`.
    pub fn check_below(&self, l: &[f64]) -> Result<()> {
        if self.0.len() != l.len() {
            return domain(format!(
                "reference point has {} entries, objectives have {}",
                self.0.len(),
                l.len()
            ));
        }
        for (i, (a, v)) in self.0.iter().zip(l).enumerate() {
            if !(a < v) {
                return domain(format!(
                    "reference point violated at index {i}: a[{i}] = {a} >= L[{i}] = {v}"
                ));
            }
        }
        Ok(())
    }
}

/// Parameters of the modified weighted Chebyshev problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarizationConfig {
    #[serde(default = "default_eps")]
    pub epsilon_disturbance: f64,
    pub preference: PreferenceVector,
    pub reference: ReferencePoint,
}

fn default_eps() -> f64 {
    DEFAULT_EPSILON_DISTURBANCE
}

impl ScalarizationConfig {
    /// Default disturbance and the origin as reference point.
    pub fn new(preference: PreferenceVector) -> Self {
        let n = preference.len();
        Self {
            epsilon_disturbance: DEFAULT_EPSILON_DISTURBANCE,
            preference,
            reference: ReferencePoint::zeros(n),
        }
    }

    pub fn with_reference(mut self, reference: ReferencePoint) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon_disturbance = eps;
        self
    }

    pub fn n_objectives(&self) -> usize {
        self.preference.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_disturbance >= 0.0) || !self.epsilon_disturbance.is_finite() {
            return domain("epsilon_disturbance must be finite and >= 0");
        }
        if self.reference.0.len() != self.preference.len() {
            return domain(format!(
                "reference has {} entries but preference has {}",
                self.reference.0.len(),
                self.preference.len()
            ));
        }
        if self.reference.0.iter().any(|v| !v.is_finite()) {
            return domain("reference point must be finite");
        }
        Ok(())
    }
}
