//! Canonical rotation subproblems used by the analytic S-R-S solver.
//! All axes are unit vectors; points are relative to a point on the axis.

use nalgebra::{Matrix3, Vector3};

/// Rotation matrix for `angle` about unit `axis`.
pub(crate) fn rot(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), angle).into_inner()
}

/// Angle θ such that `rot(k, θ)·p` points along `q` in the plane normal to `k`.
pub(crate) fn angle_between_about(k: &Vector3<f64>, p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    let pp = p - k * k.dot(p);
    let qq = q - k * k.dot(q);
    k.dot(&pp.cross(&qq)).atan2(pp.dot(&qq))
}

/// Solutions of `|rot(k, θ)·p − c| = d` as `(θ₀, φ)`, giving θ = θ₀ ± φ.
///
/// `φ` is the interior angle between the rotated `p` and `c` projected on the
/// plane normal to `k`; `None` when no θ reaches the distance.
pub(crate) fn rotate_to_distance(k: &Vector3<f64>, p: &Vector3<f64>, c: &Vector3<f64>, d: f64) -> Option<(f64, f64)> {
    let kp = k.dot(p);
    let kc = k.dot(c);
    let pp = p - k * kp;
    let cc = c - k * kc;
    let d2 = d * d - (kp - kc) * (kp - kc);
    let (np, nc) = (pp.norm(), cc.norm());
    if d2 < 0.0 || np < 1e-12 || nc < 1e-12 {
        return None;
    }
    let cos_phi = (np * np + nc * nc - d2) / (2.0 * np * nc);
    if !(-1.0..=1.0).contains(&cos_phi) {
        return None;
    }
    Some((angle_between_about(k, &pp, &cc), cos_phi.acos()))
}

/// Both solutions `(a, b)` of `rot(k1, a)·rot(k2, b)·u = v`, `|u| = |v|`.
/// The second tuple element is the `flip` branch.
pub(crate) fn two_axis(
    k1: &Vector3<f64>,
    k2: &Vector3<f64>,
    u: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Option<[(f64, f64); 2]> {
    let c12 = k1.dot(k2);
    let k12 = k1.cross(k2);
    let s2 = k12.norm_squared();
    if s2 < 1e-20 {
        return None;
    }
    let (a1, a2) = (k1.dot(v), k2.dot(u));
    let alpha = (a1 - c12 * a2) / (1.0 - c12 * c12);
    let beta = (a2 - c12 * a1) / (1.0 - c12 * c12);
    let g2 = (u.norm_squared() - alpha * alpha - beta * beta - 2.0 * alpha * beta * c12) / s2;
    if g2 < -1e-9 {
        return None;
    }
    let gamma = g2.max(0.0).sqrt();
    let solve = |g: f64| {
        let z = k1 * alpha + k2 * beta + k12 * g;
        (angle_between_about(k1, &z, v), angle_between_about(k2, u, &z))
    };
    Some([solve(gamma), solve(-gamma)])
}

fn any_perpendicular(k: &Vector3<f64>) -> Vector3<f64> {
    let trial = if k.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    k.cross(&trial).normalize()
}

/// Decompose `r = rot(k1,a)·rot(k2,b)·rot(k3,c)`; both `flip` branches.
pub(crate) fn three_axis(
    r: &Matrix3<f64>,
    k1: &Vector3<f64>,
    k2: &Vector3<f64>,
    k3: &Vector3<f64>,
) -> Option<[[f64; 3]; 2]> {
    let sols = two_axis(k1, k2, k3, &(r * k3))?;
    let x = any_perpendicular(k3);
    Some(sols.map(|(a, b)| {
        let rab = rot(k1, a) * rot(k2, b);
        let rest = rab.transpose() * r;
        [a, b, angle_between_about(k3, &x, &(rest * x))]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_axis_recovers_known_angles() {
        let k1 = Vector3::z();
        let k2 = Vector3::y();
        let u = Vector3::new(0.3, -0.2, 0.9).normalize();
        let (a, b) = (0.7, -1.1);
        let v = rot(&k1, a) * rot(&k2, b) * u;
        let sols = two_axis(&k1, &k2, &u, &v).unwrap();
        for (sa, sb) in sols {
            assert!((rot(&k1, sa) * rot(&k2, sb) * u - v).norm() < 1e-12);
        }
        assert!(sols.iter().any(|&(sa, sb)| (sa - a).abs() < 1e-12 && (sb - b).abs() < 1e-12));
    }

    #[test]
    fn three_axis_reconstructs_rotation() {
        let (k1, k2, k3) = (Vector3::z(), Vector3::y(), Vector3::z());
        let r = rot(&k1, -0.4) * rot(&k2, 0.9) * rot(&k3, 2.2);
        for s in three_axis(&r, &k1, &k2, &k3).unwrap() {
            let back = rot(&k1, s[0]) * rot(&k2, s[1]) * rot(&k3, s[2]);
            assert!((back - r).norm() < 1e-12);
        }
    }

    #[test]
    fn rotate_to_distance_hits_target() {
        let k = Vector3::y();
        let p = Vector3::new(0.0, 0.0, 0.4);
        let c = Vector3::new(0.0, 0.0, -0.42);
        let d = 0.7;
        let (t0, phi) = rotate_to_distance(&k, &p, &c, d).unwrap();
        for t in [t0 + phi, t0 - phi] {
            assert!(((rot(&k, t) * p - c).norm() - d).abs() < 1e-12);
        }
        assert!(rotate_to_distance(&k, &p, &c, 0.9).is_none());
    }
}
