//! Serial kinematic chains: representation, loading and forward kinematics.

mod loader;
mod sampling;

use std::path::PathBuf;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::RigidTransform;
use crate::scalar::Real;

pub use loader::{load_chain, load_chain_json, load_urdf, parse_chain_json, parse_urdf, ChainDocument};
pub use sampling::{
    is_base_visible, pose_is_distinct, sample_base_looking_pose, sample_base_looking_poses, PoseDiffRule,
    ViewConstraints,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Fixed,
    Revolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint<T: Real> {
    pub name: String,
    pub kind: JointKind,
    /// Parent-to-child transform at zero angle.
    pub origin: RigidTransform<T>,
    /// Rotation axis in the child frame, unit length.
    pub axis: Vector3<T>,
    /// `[lo, hi]` in radians, revolute joints only.
    pub limits: Option<(T, T)>,
}

impl<T: Real> Joint<T> {
    pub fn fixed(name: impl Into<String>, origin: RigidTransform<T>) -> Self {
        Self {
            name: name.into(),
            kind: JointKind::Fixed,
            origin,
            axis: Vector3::z(),
            limits: None,
        }
    }

    pub fn revolute(
        name: impl Into<String>,
        origin: RigidTransform<T>,
        axis: Vector3<T>,
        limits: (T, T),
    ) -> Result<Self> {
        let name = name.into();
        let n = axis.norm();
        if !(n > T::zero()) {
            return Err(Error::ChainLoad {
                element: format!("joint[{name}]/axis"),
                msg: "zero axis".into(),
            });
        }
        if limits.0 > limits.1 {
            return Err(Error::ChainLoad {
                element: format!("joint[{name}]/limit"),
                msg: "lower limit above upper limit".into(),
            });
        }
        Ok(Self {
            name,
            kind: JointKind::Revolute,
            origin,
            axis: axis / n,
            limits: Some(limits),
        })
    }

    /// Joint transform at `angle` (ignored for fixed joints).
    pub fn transform(&self, angle: T) -> RigidTransform<T> {
        match self.kind {
            JointKind::Fixed => self.origin,
            JointKind::Revolute if angle == T::zero() => self.origin,
            JointKind::Revolute => self.origin.compose(&RigidTransform::from_rotation(
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(self.axis), angle),
            )),
        }
    }
}

/// One angle per revolute joint, radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig<T: Real> {
    pub angles: Vec<T>,
}

impl<T: Real> JointConfig<T> {
    pub fn new(angles: Vec<T>) -> Self {
        Self { angles }
    }

    pub fn zeros(n: usize) -> Self {
        Self { angles: vec![T::zero(); n] }
    }
}

/// Unbranched chain of joints ordered base → flange.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain<T: Real> {
    pub name: String,
    pub joints: Vec<Joint<T>>,
    pub base_mesh: Option<PathBuf>,
}

impl<T: Real> KinematicChain<T> {
    pub fn new(name: impl Into<String>, joints: Vec<Joint<T>>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::ChainLoad {
                element: "robot".into(),
                msg: "chain has no joints".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            joints,
            base_mesh: None,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.iter().filter(|j| j.kind == JointKind::Revolute).count()
    }

    pub fn revolute_joints(&self) -> impl Iterator<Item = &Joint<T>> {
        self.joints.iter().filter(|j| j.kind == JointKind::Revolute)
    }

    /// Checks length and limits.
    pub fn validate(&self, q: &JointConfig<T>) -> Result<()> {
        if q.angles.len() != self.dof() {
            return Err(Error::ConfigLength {
                expected: self.dof(),
                got: q.angles.len(),
            });
        }
        for (joint, &a) in self.revolute_joints().zip(&q.angles) {
            let (lo, hi) = joint.limits.expect("revolute joints carry limits");
            if !(a >= lo && a <= hi) {
                return Err(Error::JointLimit {
                    joint: joint.name.clone(),
                    angle: a.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Flange pose in the base frame (`ᵇₜT`).
    pub fn forward_kinematics(&self, q: &JointConfig<T>) -> Result<RigidTransform<T>> {
        self.validate(q)?;
        Ok(self.fk_unchecked(&q.angles))
    }

    pub(crate) fn fk_unchecked(&self, angles: &[T]) -> RigidTransform<T> {
        let mut it = angles.iter();
        self.joints.iter().fold(RigidTransform::identity(), |acc, j| {
            let a = match j.kind {
                JointKind::Revolute => *it.next().expect("angle per revolute joint"),
                JointKind::Fixed => T::zero(),
            };
            acc.compose(&j.transform(a))
        })
    }

    /// Pose of every joint's child frame in the base frame, base → flange.
    pub fn link_frames(&self, q: &JointConfig<T>) -> Result<Vec<RigidTransform<T>>> {
        self.validate(q)?;
        let mut it = q.angles.iter();
        let mut acc = RigidTransform::identity();
        Ok(self
            .joints
            .iter()
            .map(|j| {
                let a = match j.kind {
                    JointKind::Revolute => *it.next().unwrap(),
                    JointKind::Fixed => T::zero(),
                };
                acc = acc.compose(&j.transform(a));
                acc
            })
            .collect())
    }

    /// Splits into the first `k` joints and the rest. Either side may be empty.
    pub fn split_at(&self, k: usize) -> (Vec<Joint<T>>, Vec<Joint<T>>) {
        let (a, b) = self.joints.split_at(k);
        (a.to_vec(), b.to_vec())
    }

    /// Converts the chain to another scalar type.
    pub fn cast<U: Real>(&self) -> KinematicChain<U> {
        KinematicChain {
            name: self.name.clone(),
            base_mesh: self.base_mesh.clone(),
            joints: self
                .joints
                .iter()
                .map(|j| Joint {
                    name: j.name.clone(),
                    kind: j.kind,
                    origin: j.origin.cast(),
                    axis: j.axis.map(|v| U::lit(v.as_f64())),
                    limits: j.limits.map(|(a, b)| (U::lit(a.as_f64()), U::lit(b.as_f64()))),
                })
                .collect(),
        }
    }
}

/// Product of joint transforms over an arbitrary joint slice.
pub fn chain_product<T: Real>(joints: &[Joint<T>], angles: &[T]) -> RigidTransform<T> {
    let mut it = angles.iter();
    joints.iter().fold(RigidTransform::identity(), |acc, j| {
        let a = match j.kind {
            JointKind::Revolute => *it.next().expect("angle per revolute joint"),
            JointKind::Fixed => T::zero(),
        };
        acc.compose(&j.transform(a))
    })
}
