use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::GraspSample;

/// Principal axes of a set of joint configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PCAResult {
    /// rad.
    pub mean: Vec<f64>,
    /// Orthonormal axes, largest variance first. The first nonzero entry of
    /// each axis is positive.
    pub components: Vec<Vec<f64>>,
    /// rad², sample variance along each axis.
    pub explained_variance: Vec<f64>,
    /// Every pose is identical; `components` is then the coordinate basis.
    pub degenerate: bool,
}

/// PCA of the joint angles `joint_subset` (indices into `theta`) over `poses`.
pub fn pca_grasps(poses: &[GraspSample], joint_subset: &[usize]) -> Result<PCAResult> {
    if poses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 poses, got {}",
            poses.len()
        )));
    }
    if joint_subset.is_empty() {
        return Err(Error::InvalidArgument(
            "PCA needs at least one joint".into(),
        ));
    }
    let n = joint_subset.len();
    let mut x = DMatrix::zeros(poses.len(), n);
    for (i, pose) in poses.iter().enumerate() {
        for (c, &j) in joint_subset.iter().enumerate() {
            x[(i, c)] = *pose.theta.get(j).ok_or_else(|| {
                Error::InvalidArgument(format!("pose `{}` has no joint index {j}", pose.name))
            })?;
        }
    }
    Ok(pca_rows(&x))
}

/// PCA of the rows of `x` (at least two).
pub fn pca_rows(x: &DMatrix<f64>) -> PCAResult {
    let (m, n) = x.shape();
    let mean: DVector<f64> = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    let scale = cov.amax();
    if scale == 0.0 {
        return PCAResult {
            mean: mean.as_slice().to_vec(),
            components: (0..n)
                .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
                .collect(),
            explained_variance: vec![0.0; n],
            degenerate: true,
        };
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(n);
    let mut explained_variance = Vec::with_capacity(n);
    for i in order {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    PCAResult {
        mean: mean.as_slice().to_vec(),
        components,
        explained_variance,
        degenerate: false,
    }
}
