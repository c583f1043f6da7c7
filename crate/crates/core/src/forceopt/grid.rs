//! Discretized search spaces over actuation parameters.
//!
//! A parameter is named after the joint it sets: `r_<joint>` (moment arm),
//! `K_<joint>` (spring stiffness) or `theta0_<joint>` (preload angle). When the
//! joint belongs to a mirror group the value is applied to every member.
//!
//! In documents, values carry their unit in the key (`min_mm`,
//! `values_nmm_per_rad`, `count`, ...) and are converted to SI on load.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::HandKinematics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    MomentArm,
    Stiffness,
    Preload,
}

impl ParamKind {
    fn prefix(self) -> &'static str {
        match self {
            ParamKind::MomentArm => "r_",
            ParamKind::Stiffness => "K_",
            ParamKind::Preload => "theta0_",
        }
    }

    /// Unit suffix used in documents.
    pub fn file_unit(self) -> &'static str {
        match self {
            ParamKind::MomentArm => "mm",
            ParamKind::Stiffness => "nmm_per_rad",
            ParamKind::Preload => "rad",
        }
    }

    /// SI unit suffix used in reports.
    pub fn si_unit(self) -> &'static str {
        match self {
            ParamKind::MomentArm => "m",
            ParamKind::Stiffness => "nm_per_rad",
            ParamKind::Preload => "rad",
        }
    }

    /// Converts a document value to SI.
    fn to_si(self, v: f64) -> f64 {
        match self {
            ParamKind::MomentArm => crate::units::mm_to_m(v),
            ParamKind::Stiffness => crate::units::nmm_to_nm(v),
            ParamKind::Preload => v,
        }
    }

    /// Splits `r_td` into (`MomentArm`, `td`).
    pub fn parse(name: &str) -> Option<(ParamKind, &str)> {
        [
            ParamKind::MomentArm,
            ParamKind::Stiffness,
            ParamKind::Preload,
        ]
        .into_iter()
        .find_map(|k| {
            name.strip_prefix(k.prefix())
                .filter(|j| !j.is_empty())
                .map(|j| (k, j))
        })
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::MomentArm => "moment arm",
            ParamKind::Stiffness => "stiffness",
            ParamKind::Preload => "preload",
        })
    }
}

/// One enumerated parameter with its candidate values in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParameter {
    pub name: String,
    pub kind: ParamKind,
    pub joint: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedParameter {
    pub name: String,
    pub kind: ParamKind,
    pub joint: String,
    pub value: f64,
}

/// Free parameters (sorted by name, which fixes the enumeration order) and
/// pinned ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub parameters: Vec<GridParameter>,
    pub fixed: Vec<FixedParameter>,
}

impl ParameterGrid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a free parameter with explicit SI values.
    pub fn with_values(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        let (kind, joint) = parse_name(name)?;
        if values.is_empty() {
            return Err(Error::schema(
                format!("parameters.{name}"),
                "value list is empty",
            ));
        }
        check_values(name, kind, &values)?;
        self.remove(name);
        self.parameters.push(GridParameter {
            name: name.to_string(),
            kind,
            joint: joint.to_string(),
            values,
        });
        self.parameters.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(self)
    }

    /// Adds a free parameter `min, min + step, ...` up to `max` (SI units).
    pub fn with_range(self, name: &str, min: f64, max: f64, step: f64) -> Result<Self> {
        let values =
            stepped(min, max, step).map_err(|m| Error::schema(format!("parameters.{name}"), m))?;
        self.with_values(name, values)
    }

    /// Pins a parameter (SI units); it is excluded from enumeration.
    pub fn with_fixed(mut self, name: &str, value: f64) -> Result<Self> {
        let (kind, joint) = parse_name(name)?;
        check_values(name, kind, &[value])?;
        self.remove(name);
        self.fixed.push(FixedParameter {
            name: name.to_string(),
            kind,
            joint: joint.to_string(),
            value,
        });
        self.fixed.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(self)
    }

    fn remove(&mut self, name: &str) {
        self.parameters.retain(|p| p.name != name);
        self.fixed.retain(|p| p.name != name);
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<GridDocument>(text)?.into_grid()
    }

    /// Number of combinations; a grid without free parameters has one.
    pub fn cardinality(&self) -> u64 {
        self.parameters
            .iter()
            .map(|p| p.values.len() as u64)
            .product()
    }

    /// Per-parameter value indices of combination `index`; the first
    /// parameter is the most significant digit, so increasing `index` is
    /// lexicographic order on the index tuple.
    pub fn combo(&self, mut index: u64) -> Vec<usize> {
        let mut digits = vec![0; self.parameters.len()];
        for (d, p) in digits.iter_mut().zip(&self.parameters).rev() {
            let n = p.values.len() as u64;
            *d = (index % n) as usize;
            index /= n;
        }
        digits
    }

    pub fn values_of(&self, combo: &[usize]) -> Vec<f64> {
        self.parameters
            .iter()
            .zip(combo)
            .map(|(p, &i)| p.values[i])
            .collect()
    }

    /// The middle grid point of every free parameter (lower middle for an
    /// even count), so the baseline is always on the grid.
    pub fn baseline_combo(&self) -> Vec<usize> {
        self.parameters
            .iter()
            .map(|p| (p.values.len() - 1) / 2)
            .collect()
    }

    pub fn index_of(&self, combo: &[usize]) -> u64 {
        self.parameters
            .iter()
            .zip(combo)
            .fold(0u64, |acc, (p, &i)| acc * p.values.len() as u64 + i as u64)
    }

    /// Only the parameters whose joints satisfy `keep`, in the same order.
    pub(crate) fn restricted(&self, keep: impl Fn(&str) -> bool) -> ParameterGrid {
        ParameterGrid {
            parameters: self
                .parameters
                .iter()
                .filter(|p| keep(&p.joint))
                .cloned()
                .collect(),
            fixed: self
                .fixed
                .iter()
                .filter(|p| keep(&p.joint))
                .cloned()
                .collect(),
        }
    }

    /// Binds every parameter to the joints it sets, rejecting unknown joints
    /// and parameters that would set the same joint twice.
    pub(crate) fn bind(&self, hand: &HandKinematics) -> Result<BoundGrid> {
        let mut owner: BTreeMap<(ParamKind, usize), String> = BTreeMap::new();
        let mut bind_one =
            |name: &str, kind: ParamKind, joint: &str, field: String| -> Result<Vec<usize>> {
                let j = hand.joint_index(joint).ok_or_else(|| Error::Linkage {
                    kind: "joint",
                    id: joint.to_string(),
                    referrer: field.clone(),
                })?;
                let group = hand.mirror_group_of(j);
                for &m in &group {
                    if let Some(prev) = owner.insert((kind, m), name.to_string()) {
                        return Err(Error::schema(
                            field,
                            format!(
                                "sets the {kind} of joint `{}`, already set by `{prev}`",
                                hand.joints[m].id
                            ),
                        ));
                    }
                }
                Ok(group)
            };
        let mut free = Vec::with_capacity(self.parameters.len());
        for p in &self.parameters {
            free.push(bind_one(
                &p.name,
                p.kind,
                &p.joint,
                format!("parameters.{}", p.name),
            )?);
        }
        let mut fixed = Vec::with_capacity(self.fixed.len());
        for p in &self.fixed {
            fixed.push(bind_one(
                &p.name,
                p.kind,
                &p.joint,
                format!("fixed.{}", p.name),
            )?);
        }
        Ok(BoundGrid {
            grid: self.clone(),
            free,
            fixed,
            n_joints: hand.n_joints(),
            covered: owner.keys().copied().collect(),
        })
    }
}

/// A grid resolved against a hand: parameter `i` writes joints `free[i]`.
#[derive(Clone, Debug)]
pub(crate) struct BoundGrid {
    pub grid: ParameterGrid,
    pub free: Vec<Vec<usize>>,
    pub fixed: Vec<Vec<usize>>,
    pub n_joints: usize,
    covered: std::collections::BTreeSet<(ParamKind, usize)>,
}

impl BoundGrid {
    pub fn covers(&self, kind: ParamKind, joint: usize) -> bool {
        self.covered.contains(&(kind, joint))
    }

    /// Dense per-joint vector of `kind` with fixed values applied and free
    /// entries left `NaN`.
    pub fn base(&self, kind: ParamKind) -> Vec<f64> {
        let mut v = vec![f64::NAN; self.n_joints];
        for (p, joints) in self.grid.fixed.iter().zip(&self.fixed) {
            if p.kind == kind {
                for &j in joints {
                    v[j] = p.value;
                }
            }
        }
        v
    }

    /// Writes the free values of `combo` into the per-kind vectors.
    pub fn apply(&self, combo: &[usize], kind: ParamKind, out: &mut [f64]) {
        for ((p, joints), &i) in self.grid.parameters.iter().zip(&self.free).zip(combo) {
            if p.kind == kind {
                for &j in joints {
                    out[j] = p.values[i];
                }
            }
        }
    }
}

fn parse_name(name: &str) -> Result<(ParamKind, &str)> {
    ParamKind::parse(name).ok_or_else(|| {
        Error::schema(
            format!("parameters.{name}"),
            "parameter names must be r_<joint>, K_<joint> or theta0_<joint>",
        )
    })
}

fn check_values(name: &str, kind: ParamKind, values: &[f64]) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(Error::schema(name, format!("non-finite value {v}")));
        }
        if kind != ParamKind::Preload && v <= 0.0 {
            return Err(Error::schema(
                name,
                format!("{kind} must be positive, got {v}"),
            ));
        }
    }
    Ok(())
}

fn stepped(min: f64, max: f64, step: f64) -> std::result::Result<Vec<f64>, String> {
    if !(step > 0.0) {
        return Err(format!("step must be positive, got {step}"));
    }
    if !(min <= max) {
        return Err(format!("min {min} exceeds max {max}"));
    }
    // tolerate max sitting a rounding error below the last step
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

fn counted(min: f64, max: f64, count: usize) -> std::result::Result<Vec<f64>, String> {
    if count == 0 {
        return Err("count must be at least 1".into());
    }
    if !(min <= max) {
        return Err(format!("min {min} exceeds max {max}"));
    }
    if count == 1 {
        return if min == max {
            Ok(vec![min])
        } else {
            Err("count 1 needs min == max".into())
        };
    }
    let h = (max - min) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else {
                min + i as f64 * h
            }
        })
        .collect())
}

/// JSON form of a [`ParameterGrid`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    #[serde(default)]
    pub parameters: BTreeMap<String, RangeDocument>,
    /// Keys are parameter names with a unit suffix, e.g. `r_tp_mm`.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

/// Exactly one of: `values_<unit>`, `min_<unit>/max_<unit>/step_<unit>`, or
/// `min_<unit>/max_<unit>/count`, in the unit of the parameter's kind.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_mm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_nmm_per_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nmm_per_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_nmm_per_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_nmm_per_rad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_rad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl RangeDocument {
    /// Values in document units.
    fn resolve(&self, kind: ParamKind, field: &str) -> Result<Vec<f64>> {
        let (min, max, step, values) = match kind {
            ParamKind::MomentArm => (self.min_mm, self.max_mm, self.step_mm, &self.values_mm),
            ParamKind::Stiffness => (
                self.min_nmm_per_rad,
                self.max_nmm_per_rad,
                self.step_nmm_per_rad,
                &self.values_nmm_per_rad,
            ),
            ParamKind::Preload => (self.min_rad, self.max_rad, self.step_rad, &self.values_rad),
        };
        let unit = kind.file_unit();
        let given = [
            self.min_mm,
            self.max_mm,
            self.step_mm,
            self.min_nmm_per_rad,
            self.max_nmm_per_rad,
        ]
        .iter()
        .chain(&[
            self.step_nmm_per_rad,
            self.min_rad,
            self.max_rad,
            self.step_rad,
        ])
        .filter(|v| v.is_some())
        .count()
            + [&self.values_mm, &self.values_nmm_per_rad, &self.values_rad]
                .iter()
                .filter(|v| v.is_some())
                .count();
        let own =
            [min, max, step].iter().filter(|v| v.is_some()).count() + values.is_some() as usize;
        if given != own {
            return Err(Error::schema(
                field,
                format!("{kind} ranges must be given in {unit}"),
            ));
        }
        let err = |m: String| Error::schema(field, m);
        match (min, max, step, values, self.count) {
            (None, None, None, Some(v), None) => {
                if v.is_empty() {
                    Err(err("value list is empty".into()))
                } else {
                    Ok(v.clone())
                }
            }
            (Some(lo), Some(hi), Some(h), None, None) => stepped(lo, hi, h).map_err(err),
            (Some(lo), Some(hi), None, None, Some(n)) => counted(lo, hi, n).map_err(err),
            _ => Err(err(format!(
                "expected values_{unit}, min_{unit}/max_{unit}/step_{unit}, or min_{unit}/max_{unit}/count"
            ))),
        }
    }
}

impl GridDocument {
    pub fn into_grid(self) -> Result<ParameterGrid> {
        let mut grid = ParameterGrid::new();
        for (name, range) in &self.parameters {
            let field = format!("parameters.{name}");
            let (kind, _) = parse_name(name).map_err(|_| {
                Error::schema(
                    &field,
                    "parameter names must be r_<joint>, K_<joint> or theta0_<joint>",
                )
            })?;
            let values: Vec<f64> = range
                .resolve(kind, &field)?
                .into_iter()
                .map(|v| kind.to_si(v))
                .collect();
            grid = grid
                .with_values(name, values)
                .map_err(|e| relabel(e, &field))?;
        }
        for (key, &value) in &self.fixed {
            let field = format!("fixed.{key}");
            let (name, kind) = [
                ParamKind::MomentArm,
                ParamKind::Stiffness,
                ParamKind::Preload,
            ]
            .into_iter()
            .find_map(|k| {
                key.strip_suffix(&format!("_{}", k.file_unit()))
                    .filter(|n| ParamKind::parse(n).map(|(pk, _)| pk) == Some(k))
                    .map(|n| (n, k))
            })
            .ok_or_else(|| {
                Error::schema(
                    &field,
                    "fixed keys are r_<joint>_mm, K_<joint>_nmm_per_rad or theta0_<joint>_rad",
                )
            })?;
            if grid.parameters.iter().any(|p| p.name == name) {
                return Err(Error::schema(
                    field,
                    format!("`{name}` is both fixed and enumerated"),
                ));
            }
            grid = grid
                .with_fixed(name, kind.to_si(value))
                .map_err(|e| relabel(e, &field))?;
        }
        Ok(grid)
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::Schema { message, .. } => Error::schema(field, message),
        other => other,
    }
}
