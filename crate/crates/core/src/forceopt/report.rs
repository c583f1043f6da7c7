use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::{FixedParameter, GridParameter, ParameterGrid};
use crate::error::{Error, Result};
use crate::hand::ActuationParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Force,
    Kinematic,
}

/// Stability metric of one grasp (or pose) at one parameter combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspScore {
    pub name: String,
    pub weight: f64,
    /// `null` in JSON when the grasp is infeasible.
    #[serde(with = "crate::serde_finite")]
    pub q: f64,
}

/// Weighted aggregate `sqrt(sum w_i^2 q_i^2)`; infinite if any weighted
/// grasp is.
pub fn aggregate(scores: &[GraspScore]) -> f64 {
    aggregate_iter(scores.iter().map(|s| (s.weight, s.q)))
}

pub(crate) fn aggregate_iter(scores: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut sum = 0.0;
    for (w, q) in scores {
        if w == 0.0 {
            continue;
        }
        if !q.is_finite() {
            return f64::INFINITY;
        }
        sum += (w * q) * (w * q);
    }
    sum.sqrt()
}

/// One evaluated combination, recorded when tracing is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Independent block the combination belongs to (always 0 in the force phase).
    pub block: usize,
    pub combo: Vec<usize>,
    #[serde(with = "crate::serde_finite")]
    pub q: f64,
}

/// Result for one independently searched group of fingers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub fingers: Vec<String>,
    pub parameters: Vec<String>,
    pub combos_evaluated: u64,
    pub best_combo: Vec<usize>,
    pub best_q: f64,
    pub baseline_q: f64,
}

/// Outcome of an exhaustive search. All physical quantities are SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub phase: Phase,
    /// The enumerated parameters in enumeration order, with their grids.
    pub parameters: Vec<GridParameter>,
    pub fixed: Vec<FixedParameter>,
    /// Index into each parameter's value list.
    pub best_combo: Vec<usize>,
    pub best_values: BTreeMap<String, f64>,
    /// Every parameter the phase resolves, fixed ones included.
    pub best_params: ActuationParams,
    #[serde(with = "crate::serde_finite")]
    pub best_q: f64,
    pub per_grasp_q: Vec<GraspScore>,
    pub baseline_combo: Vec<usize>,
    pub baseline_values: BTreeMap<String, f64>,
    pub baseline_params: ActuationParams,
    #[serde(with = "crate::serde_finite")]
    pub baseline_q: f64,
    pub baseline_per_grasp_q: Vec<GraspScore>,
    /// `1 - best_q / baseline_q`, when the baseline is finite and nonzero.
    pub reduction: Option<f64>,
    pub combos_evaluated: u64,
    /// Combinations disqualified because some grasp was infeasible.
    pub skipped_infeasible: u64,
    /// Independent finger groups searched separately (kinematic phase).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl OptimizationReport {
    pub fn grid(&self) -> ParameterGrid {
        ParameterGrid {
            parameters: self.parameters.clone(),
            fixed: self.fixed.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes the trace as CSV: block, the SI value of every parameter, and
    /// `q`. Parameters outside a row's block are left empty.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let trace = self
            .trace
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("report was produced without a trace".into()))?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["block".to_string()];
        header.extend(
            self.parameters
                .iter()
                .map(|p| format!("{}_{}", p.name, p.kind.si_unit())),
        );
        header.push("q".into());
        w.write_record(&header)?;

        let owners = self.block_columns();
        for row in trace {
            let mut record = vec![row.block.to_string()];
            let mut cells = vec![String::new(); self.parameters.len()];
            for (&col, &i) in owners[row.block].iter().zip(&row.combo) {
                cells[col] = self.parameters[col].values[i].to_string();
            }
            record.extend(cells);
            record.push(if row.q.is_finite() {
                row.q.to_string()
            } else {
                "inf".into()
            });
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Column indices (into `parameters`) owned by each block.
    fn block_columns(&self) -> Vec<Vec<usize>> {
        if self.blocks.is_empty() {
            return vec![(0..self.parameters.len()).collect()];
        }
        self.blocks
            .iter()
            .map(|b| {
                b.parameters
                    .iter()
                    .filter_map(|name| self.parameters.iter().position(|p| &p.name == name))
                    .collect()
            })
            .collect()
    }
}
