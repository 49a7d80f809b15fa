//! Skeleton schema, 2D detections and 3D skeletons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraId, Point2, Point3};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("schema needs at least 2 joints")]
    TooFewJoints,
    #[error("limb {limb} references joint {joint} outside 0..{count}")]
    LimbOutOfRange { limb: String, joint: usize, count: usize },
}

/// Body part groups scored separately by PCP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Head,
    Torso,
    UpperArm,
    LowerArm,
    UpperLeg,
    LowerLeg,
}

impl Part {
    pub const ALL: [Part; 6] =
        [Part::Head, Part::Torso, Part::UpperArm, Part::LowerArm, Part::UpperLeg, Part::LowerLeg];

    pub fn name(self) -> &'static str {
        match self {
            Part::Head => "head",
            Part::Torso => "torso",
            Part::UpperArm => "upper_arm",
            Part::LowerArm => "lower_arm",
            Part::UpperLeg => "upper_leg",
            Part::LowerLeg => "lower_leg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Limb {
    pub name: String,
    pub a: usize,
    pub b: usize,
    pub part: Part,
}

/// Joint names, limbs, and the PCP part of every limb.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSchema {
    name: String,
    joints: Vec<String>,
    limbs: Vec<Limb>,
}

impl JointSchema {
    pub fn new(name: &str, joints: Vec<String>, limbs: Vec<Limb>) -> Result<Self, SchemaError> {
        let count = joints.len();
        if count < 2 {
            return Err(SchemaError::TooFewJoints);
        }
        for l in &limbs {
            for j in [l.a, l.b] {
                if j >= count {
                    return Err(SchemaError::LimbOutOfRange { limb: l.name.clone(), joint: j, count });
                }
            }
        }
        Ok(Self { name: name.to_string(), joints, limbs })
    }

    /// The 14-joint layout of the Campus/Shelf annotations.
    ///
    /// Torso is scored as the two hip-to-shoulder sides.
    pub fn campus14() -> Self {
        let joints = [
            "r_ankle",
            "r_knee",
            "r_hip",
            "l_hip",
            "l_knee",
            "l_ankle",
            "r_wrist",
            "r_elbow",
            "r_shoulder",
            "l_shoulder",
            "l_elbow",
            "l_wrist",
            "neck",
            "head_top",
        ];
        let limb = |name: &str, a, b, part| Limb { name: name.to_string(), a, b, part };
        let limbs = vec![
            limb("head", 12, 13, Part::Head),
            limb("torso_r", 2, 8, Part::Torso),
            limb("torso_l", 3, 9, Part::Torso),
            limb("upper_arm_r", 8, 7, Part::UpperArm),
            limb("upper_arm_l", 9, 10, Part::UpperArm),
            limb("lower_arm_r", 7, 6, Part::LowerArm),
            limb("lower_arm_l", 10, 11, Part::LowerArm),
            limb("upper_leg_r", 2, 1, Part::UpperLeg),
            limb("upper_leg_l", 3, 4, Part::UpperLeg),
            limb("lower_leg_r", 1, 0, Part::LowerLeg),
            limb("lower_leg_l", 4, 5, Part::LowerLeg),
        ];
        Self::new("campus14", joints.iter().map(|s| s.to_string()).collect(), limbs).expect("built-in schema is valid")
    }

    /// Look up a built-in schema by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "campus14" => Some(Self::campus14()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joints
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn limbs_of(&self, part: Part) -> impl Iterator<Item = &Limb> {
        self.limbs.iter().filter(move |l| l.part == part)
    }
}

/// One detected joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint2D<T> {
    pub position: Point2<T>,
    pub confidence: T,
    pub valid: bool,
}

impl<T: Scalar> Joint2D<T> {
    /// Joint whose validity is `confidence >= floor`.
    pub fn with_floor(u: T, v: T, confidence: T, floor: T) -> Self {
        Self { position: Point2::new(u, v), confidence, valid: confidence >= floor }
    }

    pub fn invalid() -> Self {
        Self { position: Point2::zeros(), confidence: T::zero(), valid: false }
    }
}

/// One detected person in one camera at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D<T> {
    pub camera: CameraId,
    /// Seconds.
    pub timestamp: T,
    pub joints: Vec<Joint2D<T>>,
}

impl<T: Scalar> Pose2D<T> {
    pub fn valid_count(&self) -> usize {
        self.joints.iter().filter(|j| j.valid).count()
    }

    pub fn joint(&self, n: usize) -> Option<&Point2<T>> {
        self.joints.get(n).filter(|j| j.valid).map(|j| &j.position)
    }

    pub fn cast<U: Scalar>(&self) -> Pose2D<U> {
        Pose2D {
            camera: self.camera,
            timestamp: U::lit(self.timestamp.as_f64()),
            joints: self
                .joints
                .iter()
                .map(|j| Joint2D {
                    position: j.position.cast(),
                    confidence: U::lit(j.confidence.as_f64()),
                    valid: j.valid,
                })
                .collect(),
        }
    }
}

/// Provenance of a 3D joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointFlag {
    /// Reconstructed from at least two surviving observations.
    Triangulated,
    /// Motion-model output standing in for a joint that could not be reconstructed.
    Predicted,
    Missing,
}

impl JointFlag {
    pub fn code(self) -> &'static str {
        match self {
            JointFlag::Triangulated => "T",
            JointFlag::Predicted => "P",
            JointFlag::Missing => "M",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "T" => Some(JointFlag::Triangulated),
            "P" => Some(JointFlag::Predicted),
            "M" => Some(JointFlag::Missing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint3D<T> {
    pub position: Point3<T>,
    pub flag: JointFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3D<T> {
    /// Seconds.
    pub timestamp: T,
    pub joints: Vec<Joint3D<T>>,
}

impl<T: Scalar> Skeleton3D<T> {
    pub fn from_positions(timestamp: T, positions: &[Point3<T>], flag: JointFlag) -> Self {
        Self { timestamp, joints: positions.iter().map(|&position| Joint3D { position, flag }).collect() }
    }

    pub fn positions(&self) -> Vec<Point3<T>> {
        self.joints.iter().map(|j| j.position).collect()
    }

    pub fn count(&self, flag: JointFlag) -> usize {
        self.joints.iter().filter(|j| j.flag == flag).count()
    }

    /// Mean of the joints that are not `Missing`.
    pub fn centroid(&self) -> Option<Point3<T>> {
        let present: Vec<_> = self.joints.iter().filter(|j| j.flag != JointFlag::Missing).collect();
        if present.is_empty() {
            return None;
        }
        let sum = present.iter().fold(Point3::zeros(), |acc, j| acc + j.position);
        Some(sum * (T::one() / T::lit(present.len() as f64)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn campus_schema_shape() {
        let s = JointSchema::campus14();
        assert_eq!(s.joint_count(), 14);
        assert_eq!(s.limbs().len(), 11);
        for p in Part::ALL {
            assert!(s.limbs_of(p).count() >= 1, "{p:?}");
        }
    }

    #[test]
    fn schema_rejects_bad_limb() {
        let err = JointSchema::new(
            "x",
            vec!["a".into(), "b".into()],
            vec![Limb { name: "ab".into(), a: 0, b: 2, part: Part::Head }],
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::LimbOutOfRange { joint: 2, .. }));
        assert_eq!(JointSchema::new("x", vec!["a".into()], vec![]).unwrap_err(), SchemaError::TooFewJoints);
    }

    #[test]
    fn flag_codes() {
        for f in [JointFlag::Triangulated, JointFlag::Predicted, JointFlag::Missing] {
            assert_eq!(JointFlag::from_code(f.code()), Some(f));
        }
        assert_eq!(JointFlag::Triangulated.code(), "T");
        assert_eq!(JointFlag::from_code("X"), None);
    }
}
