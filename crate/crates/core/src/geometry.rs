//! Rigid-body algebra for the transform chains between robot, endeffector,
//! camera and electrodes.
//!
//! Rotations are kept as 3×3 matrices. A [`RigidTransform`] `T` maps points
//! from its child frame into its parent frame, `T·p = R·p + t`, and
//! `a.compose(&b)` applies `b` first.

use core::f64::consts::PI;
use core::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::Rng;

use crate::rng;
use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for in-memory rotation validity checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps `m` after checking `mᵀm = I` and `det m = 1` to [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        Self::from_matrix_with_tolerance(m, ROTATION_TOLERANCE)
    }

    pub fn from_matrix_with_tolerance(m: Mat3, tolerance: f64) -> Result<Self> {
        let deviation = rotation_deviation(&m);
        if deviation <= tolerance {
            Ok(Rotation(m))
        } else {
            Err(Error::InvalidRotation { max_deviation: deviation })
        }
    }

    /// Rodrigues rotation about a unit `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let norm = axis.norm();
        if (norm - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::NonUnitAxis { norm });
        }
        Ok(Self::rodrigues(axis, angle))
    }

    fn rodrigues(axis: &Vec3, angle: f64) -> Self {
        let k = skew(axis);
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Rotation(Mat3::identity() + k * s + k * k * (1.0 - c))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::rodrigues(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::rodrigues(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::rodrigues(&Vec3::z(), angle)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let s = 0.5 * skew_part(m).norm();
        // atan2 keeps full precision near 0 and π where acos does not.
        libm::atan2(s.min(1.0), c)
    }

    /// Unit axis and angle in `[0, π]`. The axis is arbitrary (`x`) for the identity.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        let angle = self.angle();
        let w = skew_part(&self.0) * 0.5;
        let wn = w.norm();
        if wn > 1e-6 {
            return (w / wn, angle);
        }
        if angle < 1.0 {
            return (Vec3::x(), angle);
        }
        // Near π the skew part vanishes; read the axis from (R + I) / 2 = a aᵀ.
        let b = (self.0 + Mat3::identity()) * 0.5;
        let i = (0..3)
            .max_by(|&a, &c| b[(a, a)].total_cmp(&b[(c, c)]))
            .unwrap_or(0);
        let mut axis = b.column(i).into_owned();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        (axis, angle)
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `vee(m - mᵀ)`.
fn skew_part(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Largest of the per-entry deviation of `mᵀm` from `I` and of `det m` from 1.
pub fn rotation_deviation(m: &Mat3) -> f64 {
    if m.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let gram = m.transpose() * m - Mat3::identity();
    let ortho = gram.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    ortho.max((m.determinant() - 1.0).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation,
    /// Meters.
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidTransform { rotation: Rotation::identity(), translation }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        Ok(RigidTransform { rotation: Rotation::from_axis_angle(axis, angle)?, translation })
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -rt.apply(&self.translation) }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Angle of `aᵀb`, in `[0, π]`.
pub fn rotation_angle_between(a: &Rotation, b: &Rotation) -> f64 {
    (a.transpose() * *b).angle()
}

/// Nearest rotation to `m` in the Frobenius sense (orthogonal polar factor).
///
/// Uses the scaled Newton iteration `X ← (γX + X⁻ᵀ/γ) / 2`. For `det m < 0`
/// the polar factor is a reflection; the nearest proper rotation then flips
/// the singular direction with the smallest singular value.
pub fn nearest_orthogonal(m: &Mat3) -> Result<Rotation> {
    let scale = m.norm();
    let det = m.determinant();
    if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-12 * scale * scale * scale {
        return Err(Error::SingularMatrix);
    }
    if det < 0.0 {
        let svd = m.svd(true, true);
        let (u, v_t) = svd.u.zip(svd.v_t).ok_or(Error::Numeric("svd did not converge"))?;
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap_or(2);
        let mut d = Mat3::identity();
        d[(smallest, smallest)] = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
        return Ok(Rotation(u * d * v_t));
    }

    let mut x = *m;
    for _ in 0..100 {
        let inv_t = x.try_inverse().ok_or(Error::SingularMatrix)?.transpose();
        let gamma = libm::sqrt(inv_t.norm() / x.norm());
        let next = (x * gamma + inv_t / gamma) * 0.5;
        let delta = (next - x).norm();
        x = next;
        if delta <= 1e-15 {
            break;
        }
    }
    let deviation = rotation_deviation(&x);
    if deviation > ROTATION_TOLERANCE {
        return Err(Error::Numeric("polar iteration did not converge"));
    }
    Ok(Rotation(x))
}

/// Pose noise: per-axis Gaussian translation and a Gaussian-angle rotation
/// about a uniformly random axis.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NoiseParams {
    /// Translation standard deviation per axis, meters.
    pub sigma_t: f64,
    /// Rotation angle standard deviation, radians.
    pub sigma_r: f64,
}

impl NoiseParams {
    pub fn new(sigma_t: f64, sigma_r: f64) -> Result<Self> {
        if !(sigma_t >= 0.0 && sigma_r >= 0.0) {
            return Err(Error::InvalidConfig("noise standard deviations must be non-negative"));
        }
        Ok(NoiseParams { sigma_t, sigma_r })
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_t == 0.0 && self.sigma_r == 0.0
    }
}

/// Seeded [`perturb_with`].
pub fn perturb(t: &RigidTransform, noise: &NoiseParams, rng_seed: u64) -> RigidTransform {
    perturb_with(t, noise, &mut rng::seeded(rng_seed))
}

/// Offsets the translation by `N(0, σ_t²)` per axis (parent frame) and
/// right-multiplies the rotation by a rotation of angle `N(0, σ_r²)` about a
/// uniform random axis (child frame).
pub fn perturb_with<R: Rng + ?Sized>(t: &RigidTransform, noise: &NoiseParams, rng: &mut R) -> RigidTransform {
    if noise.is_zero() {
        return *t;
    }
    let offset = Vec3::new(
        rng::normal(rng, noise.sigma_t),
        rng::normal(rng, noise.sigma_t),
        rng::normal(rng, noise.sigma_t),
    );
    let axis = random_unit_vector(rng);
    let angle = rng::normal(rng, noise.sigma_r);
    RigidTransform {
        rotation: t.rotation * Rotation::rodrigues(&axis, angle),
        translation: t.translation + offset,
    }
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng::standard_normal(rng), rng::standard_normal(rng), rng::standard_normal(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Uniformly distributed rotation and a translation uniform in `[-half, half]³`.
pub fn random_transform<R: Rng + ?Sized>(rng: &mut R, half_extent: f64) -> RigidTransform {
    let axis = random_unit_vector(rng);
    let angle = rng.random::<f64>() * PI;
    RigidTransform {
        rotation: Rotation::rodrigues(&axis, angle),
        translation: Vec3::new(
            rng::symmetric_uniform(rng, half_extent),
            rng::symmetric_uniform(rng, half_extent),
            rng::symmetric_uniform(rng, half_extent),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn close_transform(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.rotation.matrix() - b.rotation.matrix()).amax() <= tol && (a.translation - b.translation).amax() <= tol
    }

    #[test]
    fn compose_with_identity() {
        let mut r = rng::seeded(1);
        let t = random_transform(&mut r, 1.0);
        assert_eq!(RigidTransform::identity().compose(&t), t);
    }

    #[test]
    fn two_quarter_turns_make_half_turn() {
        let q = RigidTransform::new(Rotation::rot_z(PI / 2.0), Vec3::zeros());
        let h = q.compose(&q);
        // Rz(π/2) = [[0,-1,0],[1,0,0],[0,0,1]], squared by hand: diag(-1,-1,1).
        let expected = Mat3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.rotation.matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn invert_identity_and_pure_translation() {
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
        let t = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(t.inverse().translation, Vec3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn inverse_composes_to_identity_on_random_samples() {
        let mut r = rng::seeded(2);
        for _ in 0..1000 {
            let t = random_transform(&mut r, 2.0);
            assert!(close_transform(&t.compose(&t.inverse()), &RigidTransform::identity(), 1e-12));
            assert!(close_transform(&t.inverse().inverse(), &t, 1e-12));
        }
    }

    #[test]
    fn transform_point_matches_homogeneous_product() {
        let mut r = rng::seeded(3);
        for _ in 0..200 {
            let t = random_transform(&mut r, 2.0);
            let p = Vec3::new(r.random(), r.random(), r.random());
            let h = t.to_homogeneous() * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
            let q = t.transform_point(&p);
            assert!((q - h.xyz()).amax() < 1e-14);
        }
        let p = Vec3::new(0.3, -0.2, 0.9);
        assert_eq!(RigidTransform::identity().transform_point(&p), p);
        let d = Vec3::new(1.0, -1.0, 0.5);
        assert_eq!(RigidTransform::from_translation(d).transform_point(&p), p + d);
    }

    #[test]
    fn compose_is_associative() {
        let mut r = rng::seeded(4);
        for _ in 0..500 {
            let (a, b, c) = (random_transform(&mut r, 1.0), random_transform(&mut r, 1.0), random_transform(&mut r, 1.0));
            assert!(close_transform(&((a * b) * c), &(a * (b * c)), 1e-9));
        }
    }

    #[test]
    fn axis_angle_canonical_cases() {
        let r = Rotation::from_axis_angle(&Vec3::z(), 0.0).unwrap();
        assert_eq!(r, Rotation::identity());
        let q = Rotation::from_axis_angle(&Vec3::z(), PI / 2.0).unwrap();
        assert!((q.apply(&Vec3::x()) - Vec3::y()).amax() < 1e-15);
        assert!(matches!(
            Rotation::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.3),
            Err(Error::NonUnitAxis { .. })
        ));
    }

    #[test]
    fn axis_angle_outputs_are_rotations_with_expected_angle() {
        let mut r = rng::seeded(5);
        for _ in 0..10_000 {
            let axis = random_unit_vector(&mut r);
            let angle = rng::symmetric_uniform(&mut r, PI - 0.01);
            let rot = Rotation::from_axis_angle(&axis, angle).unwrap();
            assert!(rotation_deviation(rot.matrix()) < 1e-9);
            // Trace formula, independent of the atan2 path in `angle`.
            let trace_angle = libm::acos(((rot.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0));
            if angle.abs() > 0.01 {
                assert!((trace_angle - angle.abs()).abs() < 1e-9);
            }
            assert!((rot.angle() - angle.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_angle_recovers_axis_near_half_turn() {
        let mut r = rng::seeded(6);
        for _ in 0..100 {
            let axis = random_unit_vector(&mut r);
            let angle = PI - 1e-9;
            let (a, th) = Rotation::from_axis_angle(&axis, angle).unwrap().axis_angle();
            assert!((th - angle).abs() < 1e-7);
            assert!((a - axis).amax() < 1e-6 || (a + axis).amax() < 1e-6);
        }
    }

    #[test]
    fn angle_between_basics() {
        let mut r = rng::seeded(7);
        let a = random_transform(&mut r, 0.0).rotation;
        assert_eq!(rotation_angle_between(&a, &a), 0.0);
        assert!((rotation_angle_between(&Rotation::identity(), &Rotation::rot_z(0.5)) - 0.5).abs() < 1e-15);
        for _ in 0..1000 {
            let (a, b) = (random_transform(&mut r, 0.0).rotation, random_transform(&mut r, 0.0).rotation);
            let ab = rotation_angle_between(&a, &b);
            assert!((0.0..=PI).contains(&ab));
            assert!((ab - rotation_angle_between(&b, &a)).abs() < 1e-12);
        }
    }

    /// Polar factor through the SVD, `U Vᵀ`.
    fn svd_polar(m: &Mat3) -> Mat3 {
        let svd = m.svd(true, true);
        svd.u.unwrap() * svd.v_t.unwrap()
    }

    #[test]
    fn nearest_orthogonal_cases() {
        let mut r = rng::seeded(8);
        for _ in 0..200 {
            let rot = random_transform(&mut r, 0.0).rotation;
            let same = nearest_orthogonal(rot.matrix()).unwrap();
            assert!((same.matrix() - rot.matrix()).amax() < 1e-12);
            let scaled = nearest_orthogonal(&(rot.matrix() * 1.1)).unwrap();
            assert!((scaled.matrix() - rot.matrix()).amax() < 1e-12);

            let noise = Mat3::from_fn(|_, _| rng::symmetric_uniform(&mut r, 1e-3));
            let m = rot.matrix() + noise;
            let repaired = nearest_orthogonal(&m).unwrap();
            assert!(rotation_angle_between(&repaired, &rot) < 2e-3);
            assert!((repaired.matrix() - svd_polar(&m)).amax() < 1e-12);
        }
    }

    #[test]
    fn nearest_orthogonal_removes_symmetric_positive_factor() {
        let mut r = rng::seeded(9);
        for _ in 0..200 {
            let rot = random_transform(&mut r, 0.0).rotation;
            let s = Mat3::from_diagonal(&Vec3::new(
                0.2 + 3.0 * r.random::<f64>(),
                0.2 + 3.0 * r.random::<f64>(),
                0.2 + 3.0 * r.random::<f64>(),
            ));
            let q = random_transform(&mut r, 0.0).rotation;
            // Q S Qᵀ is symmetric positive definite with a random eigenbasis.
            let spd = q.matrix() * s * q.matrix().transpose();
            for m in [rot.matrix() * s, rot.matrix() * spd] {
                let n = nearest_orthogonal(&m).unwrap();
                assert!((n.matrix() - rot.matrix()).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn nearest_orthogonal_rejects_singular_and_handles_reflection() {
        let singular = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(nearest_orthogonal(&singular), Err(Error::SingularMatrix));
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, -0.5));
        let rot = nearest_orthogonal(&reflect).unwrap();
        assert!(rotation_deviation(rot.matrix()) < 1e-12);
    }

    #[test]
    fn perturb_zero_noise_and_determinism() {
        let mut r = rng::seeded(10);
        let t = random_transform(&mut r, 1.0);
        assert_eq!(perturb(&t, &NoiseParams::default(), 3), t);
        let noise = NoiseParams::new(0.01, 0.02).unwrap();
        assert_eq!(perturb(&t, &noise, 42), perturb(&t, &noise, 42));
        assert_ne!(perturb(&t, &noise, 42), perturb(&t, &noise, 43));
        assert!(NoiseParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn perturb_translation_offset_follows_chi_distribution() {
        // |offset| for three i.i.d. N(0, σ²) axes is chi-distributed with
        // mean σ·2·√(2/π) = σ·√(8/π).
        let sigma = 0.002;
        let expected = sigma * libm::sqrt(8.0 / PI);
        let noise = NoiseParams::new(sigma, 0.01).unwrap();
        let t = RigidTransform::identity();
        let mut r = rng::seeded(11);
        let offsets: Vec<f64> = (0..10_000).map(|_| perturb_with(&t, &noise, &mut r).translation.norm()).collect();
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean} expected {expected}");

        // |angle| of the rotation noise is half-normal with mean σ_r·√(2/π).
        let angles: Vec<f64> = (0..10_000).map(|_| perturb_with(&t, &noise, &mut r).rotation.angle()).collect();
        let mean_angle = angles.iter().sum::<f64>() / angles.len() as f64;
        let expected_angle = 0.01 * libm::sqrt(2.0 / PI);
        assert!((mean_angle / expected_angle - 1.0).abs() < 0.05);
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_matrix(Mat3::identity()).is_ok());
        assert!(Rotation::from_matrix(Mat3::identity() * 1.001).is_err());
        assert!(Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))).is_err());
        assert!(Rotation::from_matrix_with_tolerance(Mat3::identity() * (1.0 + 1e-7), 1e-6).is_ok());
    }
}
