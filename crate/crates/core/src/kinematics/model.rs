//! Arm model: serialized description plus the derived S-R-S geometry the
//! analytic solver needs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{JointConfig, KinematicsError};
use crate::geometry::{Pose, PoseSpec, Rotation, Transform};

pub const ARM_MODEL_SCHEMA: &str = "arm_model_v1";
const CONCURRENCY_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-12;

/// On-disk form: lengths in meters, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModelFile {
    pub schema_version: String,
    pub name: String,
    pub structure_tag: String,
    pub base_pose: PoseSpec,
    pub joint_offsets: Vec<PoseSpec>,
    pub joint_axes: Vec<[f64; 3]>,
    pub joint_limits_deg: Vec<[f64; 2]>,
    /// Stereographic pole, base frame. Points away from the workspace.
    pub sew_pole: [f64; 3],
    /// Elbow direction that reads as ψ = 0 when the wrist lies opposite the pole.
    pub sew_reference: [f64; 3],
}

/// Zero-configuration geometry in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SrsGeometry {
    pub axes: [Vector3<f64>; 7],
    pub shoulder: Vector3<f64>,
    pub elbow0: Vector3<f64>,
    pub wrist0: Vector3<f64>,
    /// Elbow point in joint-4 coordinates.
    pub elbow_local: Vector3<f64>,
    /// Wrist point in joint-7 coordinates.
    pub wrist_local: Vector3<f64>,
    pub wrist_in_flange: Vector3<f64>,
    pub home_flange_rot: Matrix3<f64>,
    /// Unit pole and reference (orthogonal to the pole), world frame.
    pub pole: Vector3<f64>,
    pub reference: Vector3<f64>,
    pub reach_min: f64,
    pub reach_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmModel {
    pub name: String,
    pub base_pose: Pose,
    pub joint_offsets: [Pose; 8],
    /// Unit axes, each in its own joint frame.
    pub joint_axes: [Vector3<f64>; 7],
    /// Radians, `lo < hi`.
    pub joint_limits: [(f64, f64); 7],
    pub sew_pole: Vector3<f64>,
    pub sew_reference: Vector3<f64>,
    offsets_tf: [Transform<f64>; 8],
    srs: Option<SrsGeometry>,
}

fn line_distance(p1: &Vector3<f64>, d1: &Vector3<f64>, p2: &Vector3<f64>, d2: &Vector3<f64>) -> f64 {
    let n = d1.cross(d2);
    if n.norm() < 1e-12 {
        (p2 - p1).cross(d1).norm()
    } else {
        (p2 - p1).dot(&n).abs() / n.norm()
    }
}

/// Common point of three axis lines, or `None` if they are not concurrent.
fn concurrent_point(points: &[Vector3<f64>], dirs: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let (i, j) = [(0, 1), (1, 2), (0, 2)].into_iter().find(|&(i, j)| dirs[i].cross(&dirs[j]).norm() > 1e-6)?;
    // closest points between lines i and j
    let (p, u, q, v) = (points[i], dirs[i], points[j], dirs[j]);
    let w0 = p - q;
    let (b, d, e) = (u.dot(&v), u.dot(&w0), v.dot(&w0));
    let den = 1.0 - b * b;
    let s = (b * e - d) / den;
    let t = (e - b * d) / den;
    let x = ((p + u * s) + (q + v * t)) * 0.5;
    for a in 0..3 {
        for c in (a + 1)..3 {
            if line_distance(&points[a], &dirs[a], &points[c], &dirs[c]) > CONCURRENCY_TOL {
                return None;
            }
        }
        if (x - points[a]).cross(&dirs[a]).norm() > CONCURRENCY_TOL {
            return None;
        }
    }
    Some(x)
}

impl ArmModel {
    /// Validates axes and limits; derives S-R-S geometry when the chain has it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        base_pose: Pose,
        joint_offsets: [Pose; 8],
        joint_axes: [Vector3<f64>; 7],
        joint_limits: [(f64, f64); 7],
        sew_pole: Vector3<f64>,
        sew_reference: Vector3<f64>,
    ) -> Result<Self, KinematicsError> {
        for (i, a) in joint_axes.iter().enumerate() {
            if (a.norm() - 1.0).abs() > UNIT_TOL {
                return Err(KinematicsError::InvalidModel(format!("axis {} has norm {}", i + 1, a.norm())));
            }
        }
        for (i, &(lo, hi)) in joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(KinematicsError::InvalidModel(format!("joint {} limits [{lo}, {hi}] are empty", i + 1)));
            }
        }
        let offsets_tf = joint_offsets.map(|p| p.to_transform());
        let mut model = Self {
            name: name.to_string(),
            base_pose,
            joint_offsets,
            joint_axes,
            joint_limits,
            sew_pole,
            sew_reference,
            offsets_tf,
            srs: None,
        };
        model.srs = model.derive_srs().ok();
        Ok(model)
    }

    pub fn from_file(file: &ArmModelFile) -> Result<Self, KinematicsError> {
        let bad = |m: String| KinematicsError::InvalidModel(m);
        if file.schema_version != ARM_MODEL_SCHEMA {
            return Err(bad(format!("schema_version {:?}, expected {ARM_MODEL_SCHEMA:?}", file.schema_version)));
        }
        if !matches!(file.structure_tag.as_str(), "SRS" | "S-R-S") {
            return Err(bad(format!("structure_tag {:?} is not S-R-S", file.structure_tag)));
        }
        if file.joint_offsets.len() != 8 || file.joint_axes.len() != 7 || file.joint_limits_deg.len() != 7 {
            return Err(bad("expected 8 joint_offsets, 7 joint_axes and 7 joint_limits_deg".into()));
        }
        let offsets: [Pose; 8] = std::array::from_fn(|i| file.joint_offsets[i].to_pose());
        let axes: [Vector3<f64>; 7] = std::array::from_fn(|i| Vector3::from(file.joint_axes[i]));
        let limits: [(f64, f64); 7] = std::array::from_fn(|i| {
            (file.joint_limits_deg[i][0].to_radians(), file.joint_limits_deg[i][1].to_radians())
        });
        let model = Self::new(
            &file.name,
            file.base_pose.to_pose(),
            offsets,
            axes,
            limits,
            Vector3::from(file.sew_pole),
            Vector3::from(file.sew_reference),
        )?;
        model.derive_srs()?;
        Ok(model)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, KinematicsError> {
        let file: ArmModelFile =
            toml::from_str(s).map_err(|e| KinematicsError::InvalidModel(format!("arm model parse error: {e}")))?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> ArmModelFile {
        let spec = |p: &Pose| {
            let m = p.rotation.matrix();
            // ZYX extraction matching `Rotation::from_rpy`
            let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
            let roll = m[(2, 1)].atan2(m[(2, 2)]);
            let yaw = m[(1, 0)].atan2(m[(0, 0)]);
            PoseSpec {
                translation: p.translation.into(),
                rpy_deg: [roll.to_degrees(), pitch.to_degrees(), yaw.to_degrees()],
            }
        };
        ArmModelFile {
            schema_version: ARM_MODEL_SCHEMA.into(),
            name: self.name.clone(),
            structure_tag: "SRS".into(),
            base_pose: spec(&self.base_pose),
            joint_offsets: self.joint_offsets.iter().map(spec).collect(),
            joint_axes: self.joint_axes.iter().map(|a| (*a).into()).collect(),
            joint_limits_deg: self.joint_limits.iter().map(|&(l, h)| [l.to_degrees(), h.to_degrees()]).collect(),
            sew_pole: self.sew_pole.into(),
            sew_reference: self.sew_reference.into(),
        }
    }

    /// Bundled left arm of the default tabletop cell.
    pub fn default_left() -> Self {
        Self::from_toml_str(include_str!("../../config/iiwa14_left.toml")).expect("bundled left arm model is valid")
    }

    /// Bundled right arm of the default tabletop cell.
    pub fn default_right() -> Self {
        Self::from_toml_str(include_str!("../../config/iiwa14_right.toml")).expect("bundled right arm model is valid")
    }

    pub fn offset_transforms(&self) -> &[Transform<f64>; 8] {
        &self.offsets_tf
    }

    pub fn srs(&self) -> Result<&SrsGeometry, KinematicsError> {
        self.srs.as_ref().ok_or_else(|| KinematicsError::InvalidModel(format!("{} is not an S-R-S arm", self.name)))
    }

    /// Same model placed at another base pose.
    pub fn with_base_pose(&self, base_pose: Pose) -> Self {
        Self::new(
            &self.name,
            base_pose,
            self.joint_offsets,
            self.joint_axes,
            self.joint_limits,
            self.sew_pole,
            self.sew_reference,
        )
        .expect("rebasing keeps a valid model valid")
    }

    /// Zero-based indices of joints outside their limits.
    pub fn limit_violations(&self, q: &JointConfig) -> Vec<usize> {
        (0..7).filter(|&i| q.0[i] < self.joint_limits[i].0 || q.0[i] > self.joint_limits[i].1).collect()
    }

    fn derive_srs(&self) -> Result<SrsGeometry, KinematicsError> {
        let bad = |m: &str| KinematicsError::InvalidModel(format!("{}: {m}", self.name));
        let frames = super::joint_frames_generic::<f64>(self, &[0.0; 7]);
        let mut axes = [Vector3::zeros(); 7];
        let mut points = [Vector3::zeros(); 7];
        for i in 0..7 {
            let a = self.joint_axes[i];
            axes[i] = Vector3::from(frames[i].rot.apply(&crate::geometry::Vec3([a.x, a.y, a.z])).0);
            points[i] = Vector3::from(frames[i].trans.0);
        }
        let shoulder =
            concurrent_point(&points[0..3], &axes[0..3]).ok_or_else(|| bad("joints 1-3 are not concurrent"))?;
        let wrist0 =
            concurrent_point(&points[4..7], &axes[4..7]).ok_or_else(|| bad("joints 5-7 are not concurrent"))?;
        let elbow0 = points[3] + axes[3] * axes[3].dot(&(shoulder - points[3]));

        let inv_pt = |f: &Transform<f64>, p: &Vector3<f64>| {
            Vector3::from(f.inverse().apply(&crate::geometry::Vec3([p.x, p.y, p.z])).0)
        };
        let flange = frames[6].compose(&self.offsets_tf[7]);
        let elbow_local = inv_pt(&frames[3], &elbow0);
        let wrist_local = inv_pt(&frames[6], &wrist0);
        let wrist_in_flange = inv_pt(&flange, &wrist0);
        let home_flange_rot = *Rotation::from_mat3(&flange.rot).matrix();

        let base = self.base_pose.rotation;
        if self.sew_pole.norm() < 1e-9 {
            return Err(bad("sew_pole is zero"));
        }
        let pole = base.apply(&self.sew_pole.normalize());
        let t = -pole;
        let r = base.apply(&self.sew_reference);
        let r = r - t * t.dot(&r);
        if r.norm() < 1e-9 {
            return Err(bad("sew_reference is parallel to sew_pole"));
        }
        let reference = r.normalize();

        let k = axes[3];
        let p = wrist0 - elbow0;
        let c = shoulder - elbow0;
        let h = k.dot(&p) - k.dot(&c);
        let np = (p - k * k.dot(&p)).norm();
        let nc = (c - k * k.dot(&c)).norm();
        let reach_min = ((np - nc).powi(2) + h * h).sqrt();
        let reach_max = ((np + nc).powi(2) + h * h).sqrt();
        if np < 1e-9 || nc < 1e-9 {
            return Err(bad("elbow axis passes through the shoulder or wrist"));
        }

        Ok(SrsGeometry {
            axes,
            shoulder,
            elbow0,
            wrist0,
            elbow_local,
            wrist_local,
            wrist_in_flange,
            home_flange_rot,
            pole,
            reference,
            reach_min,
            reach_max,
        })
    }
}
