//! Sampled-direction force-closure margin.
//!
//! The wrench hull is spanned by the friction-pyramid edges of every contact,
//! each scaled to unit normal force, with torques divided by the object's
//! characteristic radius. For a unit direction `u` the LP
//! `max eps  s.t.  W beta = eps u,  n^T beta = 1,  beta >= 0` gives the
//! distance from the origin to the hull boundary along `u`; the margin is the
//! least such distance over the sampled directions.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{assemble_contact_system, GraspSample};
use crate::hand::HandKinematics;
use crate::parallel::with_threads;
use crate::solver::{solve_qp_with, QpOptions, QpStatus, QuadraticProgram};

/// Margins at or below this are not force closure.
pub const CLOSURE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceClosureReport {
    pub grasp: String,
    /// `null` in JSON when some direction is unreachable (minus infinity).
    #[serde(with = "crate::serde_finite::negative")]
    pub margin: f64,
    pub is_closure: bool,
}

#[derive(Clone, Debug)]
pub struct MarginOptions {
    /// Number of sampled unit directions; the 12 signed coordinate axes come
    /// first, the rest are seeded random directions.
    pub directions: usize,
    pub seed: u64,
    /// Descend from the best sampled directions along supporting-hyperplane
    /// normals. Never raises the margin.
    pub refine: bool,
    /// Worker threads, 0 for the global pool.
    pub threads: usize,
}

impl Default for MarginOptions {
    fn default() -> Self {
        MarginOptions {
            directions: 642,
            seed: 0x5eed,
            refine: true,
            threads: 0,
        }
    }
}

pub fn force_closure_margin(
    grasp: &str,
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<ForceClosureReport> {
    force_closure_margin_with(grasp, g, d, &MarginOptions::default())
}

pub fn force_closure_margin_with(
    grasp: &str,
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
    options: &MarginOptions,
) -> Result<ForceClosureReport> {
    let hull = WrenchHull::new(g, d)?;
    let dirs = sample_directions(options.directions, options.seed);
    let rho: Vec<f64> = with_threads(options.threads, || {
        dirs.par_iter()
            .map(|u| hull.reach(u).map(|r| r.eps))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut margin = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if options.refine && margin > 0.0 {
        let mut order: Vec<usize> = (0..dirs.len()).collect();
        order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]));
        for &i in order.iter().take(4) {
            margin = margin.min(hull.descend(&dirs[i])?);
        }
    }
    Ok(ForceClosureReport {
        grasp: grasp.to_string(),
        margin,
        is_closure: margin > CLOSURE_TOLERANCE,
    })
}

/// Least reach over caller-chosen unit directions, without refinement.
pub fn margin_along(
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
    directions: &[DVector<f64>],
) -> Result<f64> {
    let hull = WrenchHull::new(g, d)?;
    let mut margin = f64::INFINITY;
    for u in directions {
        if u.len() != 6 {
            return Err(Error::Dimension {
                context: "wrench direction",
                expected: 6,
                actual: u.len(),
            });
        }
        margin = margin.min(hull.reach(u)?.eps);
    }
    Ok(margin)
}

/// Margin of a grasp sample, from its contact system.
pub fn grasp_force_closure(
    hand: &HandKinematics,
    grasp: &GraspSample,
    options: &MarginOptions,
) -> Result<ForceClosureReport> {
    let sys = assemble_contact_system(hand, grasp)?;
    force_closure_margin_with(&grasp.name, &sys.g, &sys.d, options)
}

/// Unit directions in wrench space: the signed axes, then seeded Gaussian
/// samples normalized to the sphere.
pub fn sample_directions(count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(count);
    for i in 0..count.min(12) {
        let mut u = DVector::zeros(6);
        u[i / 2] = if i % 2 == 0 { 1.0 } else { -1.0 };
        dirs.push(u);
    }
    while dirs.len() < count {
        let u: DVector<f64> = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        let norm = u.norm();
        if norm > 1e-6 {
            dirs.push(u / norm);
        }
    }
    dirs
}

struct Reach {
    eps: f64,
    /// Outward normal of a hull face containing the exit point, scaled so
    /// that `normal . u = 1`.
    normal: Option<DVector<f64>>,
}

struct WrenchHull {
    /// Edge wrenches, one column per edge, at unit normal force.
    w: DMatrix<f64>,
    qp: QpOptions,
}

impl WrenchHull {
    fn new(g: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<Self> {
        if g.nrows() != 6 {
            return Err(Error::Dimension {
                context: "grasp map rows",
                expected: 6,
                actual: g.nrows(),
            });
        }
        if g.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "force-closure margin needs at least one contact".into(),
            ));
        }
        if d.nrows() != g.ncols() {
            return Err(Error::Dimension {
                context: "edge matrix rows",
                expected: g.ncols(),
                actual: d.nrows(),
            });
        }
        let n_c = g.ncols() / 3;
        let mut radius = 0.0f64;
        for k in 0..n_c {
            // moment block = [p]x R, with R orthonormal
            let frame = g.view((0, 3 * k), (3, 3));
            let s = g.view((3, 3 * k), (3, 3)) * frame.transpose();
            let p = nalgebra::Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]);
            radius = radius.max(p.norm());
        }
        if radius == 0.0 {
            radius = 1.0;
        }
        let mut w = g * d;
        for r in 3..6 {
            w.row_mut(r).scale_mut(1.0 / radius);
        }
        let normal_force: DVector<f64> =
            DVector::from_fn(d.ncols(), |c, _| (0..n_c).map(|k| d[(3 * k, c)]).sum());
        if let Some(c) = normal_force.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "edge {c} has no positive normal component"
            )));
        }
        for (c, &nf) in normal_force.iter().enumerate() {
            w.column_mut(c).scale_mut(1.0 / nf);
        }
        Ok(WrenchHull {
            w,
            qp: QpOptions {
                check_psd: false,
                ..QpOptions::default()
            },
        })
    }

    /// Distance from the origin to the hull boundary along `u`; minus
    /// infinity when the line through the origin along `u` misses the hull.
    fn reach(&self, u: &DVector<f64>) -> Result<Reach> {
        let m = self.w.ncols();
        let mut a = DMatrix::zeros(7, m + 1);
        a.view_mut((0, 0), (6, m)).copy_from(&self.w);
        a.view_mut((0, m), (6, 1)).copy_from(&(-u));
        a.view_mut((6, 0), (1, m)).fill(1.0);
        let mut b = DVector::zeros(7);
        b[6] = 1.0;
        let mut c = DVector::zeros(m + 1);
        c[m] = -1.0;
        let mut lb = DVector::zeros(m + 1);
        lb[m] = f64::NEG_INFINITY;
        let lp = QuadraticProgram::linear(c)
            .with_equalities(a, b)
            .with_lower_bounds(lb);
        let sol = solve_qp_with(&lp, &self.qp)?;
        match sol.status {
            QpStatus::Optimal => {
                let normal = -sol.eq_multipliers.rows(0, 6);
                let aligned = normal.dot(u);
                Ok(Reach {
                    eps: sol.x[m],
                    normal: (aligned > 1e-9).then(|| normal / aligned),
                })
            }
            QpStatus::Infeasible => Ok(Reach {
                eps: f64::NEG_INFINITY,
                normal: None,
            }),
            status => Err(Error::InvalidArgument(format!(
                "margin LP did not converge ({status:?})"
            ))),
        }
    }

    /// Follows face normals from `u` while the reach keeps shrinking. The
    /// ray along a face normal leaves the hull no later than the face does.
    fn descend(&self, u: &DVector<f64>) -> Result<f64> {
        let mut current = self.reach(u)?;
        for _ in 0..25 {
            let Some(normal) = current.normal.as_ref() else {
                break;
            };
            let next_dir = normal.normalize();
            let next = self.reach(&next_dir)?;
            if !(next.eps < current.eps - 1e-12) {
                break;
            }
            current = next;
        }
        Ok(current.eps)
    }
}
