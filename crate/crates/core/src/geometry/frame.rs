//! Fixed-size 3-D vectors, rotation matrices and rigid transforms over any
//! [`Real`] scalar. These carry the derivative-aware kinematics path; the
//! public `f64` types in the parent module convert to and from them.

use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

/// Rigid transform `x ↦ rot·x + trans`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform<T> {
    pub rot: Mat3<T>,
    pub trans: Vec3<T>,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zeros() -> Self {
        Self([T::zero(); 3])
    }

    pub fn lift(v: [f64; 3]) -> Self {
        Self([T::from_f64(v[0]), T::from_f64(v[1]), T::from_f64(v[2])])
    }

    pub fn values(&self) -> [f64; 3] {
        [self.0[0].value(), self.0[1].value(), self.0[2].value()]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        Self([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn add(&self, o: &Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn mul(&self, k: T) -> Self {
        Self([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn lift(m: [[f64; 3]; 3]) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                out[r][c] = T::from_f64(*v);
            }
        }
        Self(out)
    }

    pub fn values(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = self.0[r][c].value();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.0[r][0] * o.0[0][c] + self.0[r][1] * o.0[1][c] + self.0[r][2] * o.0[2][c];
            }
        }
        Self(out)
    }

    pub fn apply(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        let v = &v.0;
        Vec3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn axis_angle(axis: [f64; 3], angle: T) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let v = T::one() - c;
        let [x, y, z] = axis;
        Self([
            [c + v.scale(x * x), v.scale(x * y) - s.scale(z), v.scale(x * z) + s.scale(y)],
            [v.scale(x * y) + s.scale(z), c + v.scale(y * y), v.scale(y * z) - s.scale(x)],
            [v.scale(x * z) - s.scale(y), v.scale(y * z) + s.scale(x), c + v.scale(z * z)],
        ])
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Rotation vector of a rotation matrix, smooth through the identity.
    ///
    /// Uses `log R = f(x)·vee(R − Rᵀ)/2` with `x = 1 − cos θ` and
    /// `f = θ / sin θ`; near the identity `f` is its power series in `x`, so
    /// first and second derivatives stay exact there. Callers must keep the
    /// angle away from π.
    pub fn log(&self) -> Vec3<T> {
        let m = &self.0;
        let half = 0.5;
        let v =
            Vec3([(m[2][1] - m[1][2]).scale(half), (m[0][2] - m[2][0]).scale(half), (m[1][0] - m[0][1]).scale(half)]);
        let c = (self.trace() - T::one()).scale(half);
        let x = T::one() - c;
        let factor = if x.value() < 1e-2 {
            // θ/sinθ = 1 + x/3 + 2x²/15 + 2x³/35 + 8x⁴/315 + 8x⁵/693 + 16x⁶/3003 + O(x⁷)
            const COEFFS: [f64; 7] = [1.0, 1.0 / 3.0, 2.0 / 15.0, 2.0 / 35.0, 8.0 / 315.0, 8.0 / 693.0, 16.0 / 3003.0];
            let mut acc = T::from_f64(COEFFS[6]);
            for k in COEFFS[..6].iter().rev() {
                acc = acc * x + T::from_f64(*k);
            }
            acc
        } else {
            let s = v.norm();
            s.atan2(c) / s
        };
        v.mul(factor)
    }
}

impl<T: Real> Transform<T> {
    pub fn identity() -> Self {
        Self { rot: Mat3::identity(), trans: Vec3::zeros() }
    }

    pub fn from_parts(rot: Mat3<T>, trans: Vec3<T>) -> Self {
        Self { rot, trans }
    }

    pub fn rotation(rot: Mat3<T>) -> Self {
        Self { rot, trans: Vec3::zeros() }
    }

    pub fn lift(t: &Transform<f64>) -> Self {
        Self { rot: Mat3::lift(t.rot.0), trans: Vec3::lift(t.trans.0) }
    }

    pub fn compose(&self, o: &Self) -> Self {
        Self { rot: self.rot.mul(&o.rot), trans: self.rot.apply(&o.trans).add(&self.trans) }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        let t = rt.apply(&self.trans);
        Self { rot: rt, trans: Vec3([-t.0[0], -t.0[1], -t.0[2]]) }
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rot.apply(p).add(&self.trans)
    }

    /// `self⁻¹ ∘ o` without forming the inverse explicitly.
    pub fn inverse_compose(&self, o: &Self) -> Self {
        let rt = self.rot.transpose();
        Self { rot: rt.mul(&o.rot), trans: rt.apply(&o.trans.sub(&self.trans)) }
    }
}
