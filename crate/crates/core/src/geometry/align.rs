use nalgebra::{Matrix3, Vector3};

use super::{AbsolutePose, GeometryError, Trajectory};

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Maps every pose of `traj` into the target frame. Orientations are rotated, positions scaled.
    pub fn apply(&self, traj: &Trajectory) -> Trajectory {
        let poses = traj
            .poses()
            .iter()
            .map(|p| AbsolutePose {
                rotation: self.rotation * p.rotation,
                translation: self.apply_point(&p.translation),
            })
            .collect();
        Trajectory::new(traj.timestamps().to_vec(), poses)
            .expect("alignment preserves trajectory validity")
    }
}

/// Least-squares similarity (Umeyama) mapping `est` positions onto `reference` positions.
///
/// Needs at least three poses whose positions span at least a line plus one
/// off-line point (covariance rank >= 2). Planar trajectories are fine.
pub fn umeyama_align(est: &Trajectory, reference: &Trajectory) -> Result<Similarity, GeometryError> {
    if est.len() != reference.len() {
        return Err(GeometryError::Mismatch(format!(
            "lengths {} and {}",
            est.len(),
            reference.len()
        )));
    }
    let n = est.len();
    if n < 3 {
        return Err(GeometryError::AlignmentDegenerate(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let src = est.positions();
    let dst = reference.positions();
    let inv_n = 1.0 / n as f64;
    let mu_src = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_dst = dst.iter().sum::<Vector3<f64>>() * inv_n;

    let mut var_src = 0.0;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(&dst) {
        let sc = s - mu_src;
        let dc = d - mu_dst;
        var_src += sc.norm_squared();
        cov += dc * sc.transpose();
    }
    var_src *= inv_n;
    cov *= inv_n;

    if var_src <= f64::EPSILON * mu_src.norm_squared().max(1.0) {
        return Err(GeometryError::AlignmentDegenerate(
            "estimated positions are coincident".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(GeometryError::AlignmentDegenerate(
                "SVD did not converge".into(),
            ))
        }
    };
    // singular values come back unsorted from nalgebra
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
        return Err(GeometryError::AlignmentDegenerate(
            "cross-covariance rank below 2".into(),
        ));
    }

    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // reflection fix goes on the axis with the smallest singular value
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap_or(2);
        s[(smallest, smallest)] = -1.0;
    }
    let rotation = u * s * v_t;
    let trace_ds: f64 = (0..3).map(|i| svd.singular_values[i] * s[(i, i)]).sum();
    let scale = trace_ds / var_src;
    let translation = mu_dst - scale * (rotation * mu_src);
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euler_to_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        let poses = (0..n)
            .map(|_| {
                AbsolutePose::from_euler(
                    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)),
                    Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                )
            })
            .collect();
        Trajectory::new((0..n).map(|i| i as f64).collect(), poses).unwrap()
    }

    #[test]
    fn identical_inputs_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = cloud(&mut rng, 10);
        let sim = umeyama_align(&t, &t).unwrap();
        assert!((sim.scale - 1.0).abs() < 1e-9);
        assert!((sim.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(sim.translation.norm() < 1e-9);
    }

    #[test]
    fn recovers_constructed_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let est = cloud(&mut rng, 12);
            let truth = Similarity {
                scale: 2.0,
                rotation: euler_to_matrix(&Vector3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.4..1.4),
                    rng.random_range(-3.0..3.0),
                )),
                translation: Vector3::new(1.0, -4.0, 0.5),
            };
            let reference = truth.apply(&est);
            let sim = umeyama_align(&est, &reference).unwrap();
            assert!((sim.scale - 2.0).abs() < 1e-9);
            assert!((sim.rotation - truth.rotation).abs().max() < 1e-9);
            assert!((sim.translation - truth.translation).abs().max() < 1e-9);
            let aligned = sim.apply(&est);
            for (a, b) in aligned.positions().iter().zip(reference.positions()) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn planar_points_are_aligned() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 2.0), (3.0, 1.0)];
        let est = Trajectory::new(
            (0..4).map(|i| i as f64).collect(),
            pts.iter()
                .map(|&(x, y)| AbsolutePose::from_translation(Vector3::new(x, y, 0.0)))
                .collect(),
        )
        .unwrap();
        let truth = Similarity {
            scale: 0.5,
            rotation: euler_to_matrix(&Vector3::new(0.0, 0.0, 1.0)),
            translation: Vector3::new(2.0, 0.0, 0.0),
        };
        let sim = umeyama_align(&est, &truth.apply(&est)).unwrap();
        assert!((sim.scale - 0.5).abs() < 1e-9);
        assert!((sim.rotation - truth.rotation).abs().max() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let two = cloud(&mut rng, 2);
        assert!(matches!(
            umeyama_align(&two, &two),
            Err(GeometryError::AlignmentDegenerate(_))
        ));
        let same = Trajectory::new(vec![0.0, 1.0, 2.0], vec![AbsolutePose::identity(); 3]).unwrap();
        assert!(matches!(
            umeyama_align(&same, &same),
            Err(GeometryError::AlignmentDegenerate(_))
        ));
        let line = Trajectory::new(
            vec![0.0, 1.0, 2.0, 3.0],
            (0..4)
                .map(|i| AbsolutePose::from_translation(Vector3::new(i as f64, 0.0, 0.0)))
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            umeyama_align(&line, &line),
            Err(GeometryError::AlignmentDegenerate(_))
        ));
    }
}
