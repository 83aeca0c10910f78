//! Rigid trajectory alignment and absolute trajectory error.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{input, Error, Result};
use crate::model::{StampedVec3, Timestamp, Trajectory, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        Trajectory::new(
            traj.kind,
            traj.points()
                .iter()
                .map(|p| StampedVec3::new(p.t, self.apply(&p.v)))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Time span covered by both trajectories.
pub fn overlap_window(a: &Trajectory, b: &Trajectory) -> Result<EvalWindow> {
    let (Some(a0), Some(a1), Some(b0), Some(b1)) = (a.start(), a.end(), b.start(), b.end()) else {
        return input("cannot evaluate an empty trajectory");
    };
    let (start, end) = (a0.max(b0), a1.min(b1));
    if start >= end {
        return input(format!(
            "trajectories do not overlap in time ([{a0}, {a1}] vs [{b0}, {b1}])"
        ));
    }
    Ok(EvalWindow { start, end })
}

/// Truth samples in the window paired with the estimate linearly resampled
/// at the same instants, after applying `transform` to the estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub transform: RigidTransform,
    pub truth: Vec<StampedVec3>,
    pub estimate: Vec<StampedVec3>,
    pub window: EvalWindow,
}

fn associate(
    estimate: &Trajectory,
    truth: &Trajectory,
    window: Option<EvalWindow>,
) -> Result<(EvalWindow, Vec<StampedVec3>, Vec<StampedVec3>)> {
    let overlap = overlap_window(estimate, truth)?;
    let window = match window {
        Some(w) => {
            if w.start < overlap.start || w.end > overlap.end || w.start >= w.end {
                return input(format!(
                    "evaluation window [{}, {}] is not inside the overlap [{}, {}]",
                    w.start, w.end, overlap.start, overlap.end
                ));
            }
            w
        }
        None => overlap,
    };
    let truth_pts: Vec<StampedVec3> = truth
        .points()
        .iter()
        .filter(|p| p.t >= window.start && p.t <= window.end)
        .copied()
        .collect();
    if truth_pts.is_empty() {
        return input("no ground-truth samples inside the evaluation window");
    }
    let est = truth_pts
        .iter()
        .map(|p| Ok(StampedVec3::new(p.t, estimate.position_at(p.t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((window, truth_pts, est))
}

/// Pairs the trajectories without moving the estimate.
pub fn pair_unaligned(estimate: &Trajectory, truth: &Trajectory, window: Option<EvalWindow>) -> Result<AlignedPair> {
    let (window, truth, estimate) = associate(estimate, truth, window)?;
    Ok(AlignedPair {
        transform: RigidTransform::identity(),
        truth,
        estimate,
        window,
    })
}

fn centroid(points: &[StampedVec3]) -> Vec3 {
    points.iter().map(|p| p.v).sum::<Vec3>() / points.len() as f64
}

/// Least-squares rotation and translation (unit scale) taking the estimate
/// onto the truth, closed form via SVD of the cross-covariance.
pub fn align_rigid(estimate: &Trajectory, truth: &Trajectory, window: Option<EvalWindow>) -> Result<AlignedPair> {
    let (window, truth_pts, est_pts) = associate(estimate, truth, window)?;
    if truth_pts.len() < 3 {
        return Err(Error::Alignment(format!(
            "need at least 3 ground-truth samples, got {}",
            truth_pts.len()
        )));
    }
    let mu_t = centroid(&truth_pts);
    let mu_e = centroid(&est_pts);
    let mut spread = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (t, e) in truth_pts.iter().zip(&est_pts) {
        let dt = t.v - mu_t;
        spread += dt * dt.transpose();
        cross += (t.v - mu_t) * (e.v - mu_e).transpose();
    }
    let mut eig = SymmetricEigen::new(spread).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(eig[0] > 0.0) || eig[1] <= 1e-12 * eig[0] {
        return Err(Error::Alignment(
            "ground-truth points are collinear in the evaluation window".into(),
        ));
    }
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (u * v_t).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    let translation = mu_t - rotation * mu_e;
    let transform = RigidTransform { rotation, translation };
    let estimate = est_pts
        .iter()
        .map(|p| StampedVec3::new(p.t, transform.apply(&p.v)))
        .collect();
    Ok(AlignedPair {
        transform,
        truth: truth_pts,
        estimate,
        window,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub ate_cm: f64,
    /// Per-sample l2 error in cm at ground-truth timestamps.
    pub errors_cm: Vec<(Timestamp, f64)>,
}

/// Root-mean-square l2 distance over the paired samples, in cm.
pub fn ate(pair: &AlignedPair) -> Result<AteReport> {
    if pair.truth.is_empty() || pair.truth.len() != pair.estimate.len() {
        return input("ATE needs a non-empty, equally sized pair");
    }
    let errors_cm: Vec<(Timestamp, f64)> = pair
        .truth
        .iter()
        .zip(&pair.estimate)
        .map(|(t, e)| (t.t, 100.0 * (t.v - e.v).norm()))
        .collect();
    let mse = errors_cm.iter().map(|(_, e)| e * e).sum::<f64>() / errors_cm.len() as f64;
    Ok(AteReport {
        ate_cm: mse.sqrt(),
        errors_cm,
    })
}

/// ATE, duration and path length of the truth over the evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSummary {
    pub ate_cm: f64,
    pub duration_s: f64,
    pub path_length_m: f64,
}

pub fn summarize(pair: &AlignedPair, truth: &Trajectory) -> Result<SequenceSummary> {
    Ok(SequenceSummary {
        ate_cm: ate(pair)?.ate_cm,
        duration_s: pair.window.end.secs_since(pair.window.start),
        path_length_m: truth.path_length(pair.window.start, pair.window.end),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrajectoryKind;
    use nalgebra::Rotation3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn helix(n: usize) -> Trajectory {
        let pts = (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                StampedVec3::new(Timestamp::from_secs(t), Vec3::new(t.cos(), (1.3 * t).sin(), 0.2 * t))
            })
            .collect();
        Trajectory::new(TrajectoryKind::GroundTruth, pts).unwrap()
    }

    fn as_estimate(t: &Trajectory, mut f: impl FnMut(&Vec3) -> Vec3) -> Trajectory {
        Trajectory::new(
            TrajectoryKind::Estimate,
            t.points().iter().map(|p| StampedVec3::new(p.t, f(&p.v))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_trajectories() {
        let truth = helix(400);
        let pair = align_rigid(&as_estimate(&truth, |v| *v), &truth, None).unwrap();
        assert!((pair.transform.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(pair.transform.translation.norm() < 1e-12);
        assert!(ate(&pair).unwrap().ate_cm < 1e-9);
    }

    #[test]
    fn rigid_copy_is_recovered() {
        let truth = helix(400);
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let t = Vec3::new(1.0, -2.0, 0.5);
        let est = as_estimate(&truth, |v| r * v + t);
        let pair = align_rigid(&est, &truth, None).unwrap();
        assert!((pair.transform.rotation - r.transpose()).abs().max() < 1e-12);
        assert!(ate(&pair).unwrap().ate_cm < 1e-7);
    }

    #[test]
    fn noise_floor() {
        let truth = helix(2000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let est = as_estimate(&truth, |v| v + Vec3::from_fn(|_, _| noise.sample(&mut rng)));
        let rmse = ate(&align_rigid(&est, &truth, None).unwrap()).unwrap().ate_cm;
        let expected = 3f64.sqrt();
        assert!((rmse - expected).abs() < 0.2 * expected, "{rmse}");
    }

    #[test]
    fn constant_offset_without_alignment() {
        let truth = helix(50);
        let est = as_estimate(&truth, |v| v + Vec3::new(0.0, 0.03, 0.0));
        let report = ate(&pair_unaligned(&est, &truth, None).unwrap()).unwrap();
        assert!((report.ate_cm - 3.0).abs() < 1e-9);
        assert_eq!(report.errors_cm.len(), 50);
    }

    #[test]
    fn collinear_and_disjoint_inputs() {
        let line = Trajectory::new(
            TrajectoryKind::GroundTruth,
            (0..10)
                .map(|k| StampedVec3::new(Timestamp::from_secs(k as f64), Vec3::new(k as f64, 0.0, 0.0)))
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            align_rigid(&as_estimate(&line, |v| *v), &line, None),
            Err(Error::Alignment(_))
        ));
        let later = Trajectory::new(
            TrajectoryKind::Estimate,
            vec![
                StampedVec3::new(Timestamp::from_secs(20.0), Vec3::zeros()),
                StampedVec3::new(Timestamp::from_secs(21.0), Vec3::zeros()),
            ],
        )
        .unwrap();
        assert!(matches!(align_rigid(&later, &line, None), Err(Error::Input(_))));
    }

    #[test]
    fn alignment_never_worse_than_identity() {
        let truth = helix(300);
        let est = as_estimate(&truth, |v| Vec3::new(v.x * 1.05, v.y + 0.02 * v.z, v.z - 0.1));
        let aligned = ate(&align_rigid(&est, &truth, None).unwrap()).unwrap().ate_cm;
        let raw = ate(&pair_unaligned(&est, &truth, None).unwrap()).unwrap().ate_cm;
        assert!(aligned <= raw + 1e-12);
    }
}
