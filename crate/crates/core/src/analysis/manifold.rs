use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{ActuationParams, HandKinematics};

/// Line of joint configurations a single-tendon finger reaches in free
/// motion: `theta(t) = direction * t + offset` for tension `t` in
/// `parameter_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MRManifold {
    pub finger_id: String,
    pub tendon: String,
    /// Joint ids, root first; the order of `direction` and `offset`.
    pub joints: Vec<String>,
    /// rad/N.
    pub direction: Vec<f64>,
    /// rad.
    pub offset: Vec<f64>,
    /// Tensions (N) for which every joint stays within its limits.
    pub parameter_range: [f64; 2],
    /// False when no tension keeps every joint within limits; the range then
    /// collapses to the tension of least limit violation.
    pub within_limits: bool,
}

impl MRManifold {
    pub fn point(&self, t: f64) -> Vec<f64> {
        self.direction
            .iter()
            .zip(&self.offset)
            .map(|(d, o)| d * t + o)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }
}

/// Free-motion manifold of `finger_id` under `params`.
///
/// Balancing the tendon torque against the spring torque joint by joint
/// gives `theta_j = c_j r_j t / K_j - c_j theta0_j`, with `c_j` the crossing
/// sign, because a joint crossed with sign -1 carries a mirrored spring.
pub fn derive_mrm(
    hand: &HandKinematics,
    params: &ActuationParams,
    finger_id: &str,
) -> Result<MRManifold> {
    let f = hand.finger_index(finger_id).ok_or_else(|| Error::Linkage {
        kind: "finger",
        id: finger_id.to_string(),
        referrer: "manifold derivation".into(),
    })?;
    let joints = &hand.fingers[f].joints;
    let tendons: Vec<usize> = (0..hand.n_tendons())
        .filter(|&t| joints.iter().any(|&j| hand.crossing_sign(j, t).is_some()))
        .collect();
    let unsupported = |reason: String| Error::UnsupportedManifold {
        finger: finger_id.to_string(),
        reason,
    };
    let t = match tendons.as_slice() {
        [t] => *t,
        [] => return Err(unsupported("no tendon crosses it".into())),
        many => {
            let ids: Vec<&str> = many.iter().map(|&t| hand.tendons[t].id.as_str()).collect();
            return Err(unsupported(format!(
                "it is driven by {} tendons ({})",
                ids.len(),
                ids.join(", ")
            )));
        }
    };

    let lookup = |map: &std::collections::BTreeMap<String, f64>, id: &str, what: &'static str| {
        map.get(id).copied().ok_or_else(|| Error::MissingJoint {
            joint: id.to_string(),
            what,
        })
    };
    let mut direction = Vec::with_capacity(joints.len());
    let mut offset = Vec::with_capacity(joints.len());
    for &j in joints {
        let id = &hand.joints[j].id;
        let k = lookup(&params.stiffness, id, "stiffnesses")?;
        let theta0 = lookup(&params.preload, id, "preload angles")?;
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stiffness for joint `{id}` must be positive, got {k}"
            )));
        }
        match hand.crossing_sign(j, t) {
            Some(c) => {
                let r = lookup(&params.moment_arm, id, "moment arms")?;
                direction.push(c * r / k);
                offset.push(-c * theta0);
            }
            None => {
                direction.push(0.0);
                offset.push(-hand.spring_sense(j) * theta0);
            }
        }
    }

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for (i, &j) in joints.iter().enumerate() {
        let (a, b) = hand.joints[j].limits;
        let (d, o) = (direction[i], offset[i]);
        if d == 0.0 {
            if o < a || o > b {
                hi = f64::NEG_INFINITY;
            }
            continue;
        }
        let (t1, t2) = ((a - o) / d, (b - o) / d);
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    let manifold = |range, within_limits| MRManifold {
        finger_id: finger_id.to_string(),
        tendon: hand.tendons[t].id.clone(),
        joints: joints.iter().map(|&j| hand.joints[j].id.clone()).collect(),
        direction: direction.clone(),
        offset: offset.clone(),
        parameter_range: range,
        within_limits,
    };
    if lo <= hi {
        return Ok(manifold([lo, hi], true));
    }
    let worst = |t: f64| {
        joints
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let (a, b) = hand.joints[j].limits;
                let v = direction[i] * t + offset[i];
                (a - v).max(v - b).max(0.0)
            })
            .fold(0.0f64, f64::max)
    };
    // The worst violation is convex in t, so golden-section search finds its minimum.
    let t_star = if hi.is_finite() {
        golden_min(worst, hi.max(0.0), lo)
    } else {
        lo
    };
    Ok(manifold([t_star, t_star], false))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Distance (rad) from `theta` to the manifold segment over `parameter_range`.
pub fn mrm_distance(manifold: &MRManifold, theta: &[f64]) -> Result<f64> {
    if theta.len() != manifold.dim() {
        return Err(Error::Dimension {
            context: "pose on manifold",
            expected: manifold.dim(),
            actual: theta.len(),
        });
    }
    let d = &manifold.direction;
    let dd: f64 = d.iter().map(|x| x * x).sum();
    let [lo, hi] = manifold.parameter_range;
    let t = if dd > 0.0 {
        let proj: f64 = d
            .iter()
            .zip(theta.iter().zip(&manifold.offset))
            .map(|(d, (x, o))| d * (x - o))
            .sum();
        (proj / dd).clamp(lo, hi)
    } else {
        lo
    };
    Ok(manifold
        .point(t)
        .iter()
        .zip(theta)
        .map(|(p, x)| (p - x) * (p - x))
        .sum::<f64>()
        .sqrt())
}
