//! The 17-joint side-view cow skeleton.
//!
//! Joints are indexed in a fixed canonical order. That order is also the
//! plane order of every confidence-map stack.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Head,
    Body,
    LegHoof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum JointId {
    Nose,
    Head,
    NeckTop,
    NeckBottom,
    Shoulder,
    Spine,
    Tailhead,
    MidThigh,
    ShoulderBottom,
    RightFrontLeg,
    RightFrontHoof,
    LeftFrontLeg,
    LeftFrontHoof,
    RightBackLeg,
    RightBackHoof,
    LeftBackLeg,
    LeftBackHoof,
}

/// Front or rear pair of limbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LimbEnd {
    Front,
    Back,
}

/// Camera side of a limb. Cows walk left to right, so the right side faces
/// the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Right,
    Left,
}

/// One of the four limbs, identified by its end and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Limb {
    pub end: LimbEnd,
    pub side: Side,
}

pub const NUM_JOINTS: usize = 17;
pub const NUM_UPPER: usize = 9;

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Nose,
        JointId::Head,
        JointId::NeckTop,
        JointId::NeckBottom,
        JointId::Shoulder,
        JointId::Spine,
        JointId::Tailhead,
        JointId::MidThigh,
        JointId::ShoulderBottom,
        JointId::RightFrontLeg,
        JointId::RightFrontHoof,
        JointId::LeftFrontLeg,
        JointId::LeftFrontHoof,
        JointId::RightBackLeg,
        JointId::RightBackHoof,
        JointId::LeftBackLeg,
        JointId::LeftBackHoof,
    ];

    /// Upper-body joints in canonical index order.
    pub const UPPER: [JointId; NUM_UPPER] = [
        JointId::Nose,
        JointId::Head,
        JointId::NeckTop,
        JointId::NeckBottom,
        JointId::Shoulder,
        JointId::Spine,
        JointId::Tailhead,
        JointId::MidThigh,
        JointId::ShoulderBottom,
    ];

    /// The closed upper-body contour, walked from the nose over the back and
    /// along the belly.
    pub const CONTOUR: [JointId; NUM_UPPER] = [
        JointId::Nose,
        JointId::Head,
        JointId::NeckTop,
        JointId::Shoulder,
        JointId::Spine,
        JointId::Tailhead,
        JointId::MidThigh,
        JointId::ShoulderBottom,
        JointId::NeckBottom,
    ];

    pub const LEG_HOOF: [JointId; 8] = [
        JointId::RightFrontLeg,
        JointId::RightFrontHoof,
        JointId::LeftFrontLeg,
        JointId::LeftFrontHoof,
        JointId::RightBackLeg,
        JointId::RightBackHoof,
        JointId::LeftBackLeg,
        JointId::LeftBackHoof,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        JointId::ALL.get(index).copied()
    }

    pub fn region(self) -> Region {
        use JointId::*;
        match self {
            Nose | Head | NeckTop | NeckBottom => Region::Head,
            Shoulder | Spine | Tailhead | MidThigh | ShoulderBottom => Region::Body,
            _ => Region::LegHoof,
        }
    }

    #[inline]
    pub fn is_upper(self) -> bool {
        self.region() != Region::LegHoof
    }

    pub fn is_hoof(self) -> bool {
        use JointId::*;
        matches!(self, RightFrontHoof | LeftFrontHoof | RightBackHoof | LeftBackHoof)
    }

    /// Limb of a leg or hoof joint.
    pub fn limb(self) -> Option<Limb> {
        use JointId::*;
        let (end, side) = match self {
            RightFrontLeg | RightFrontHoof => (LimbEnd::Front, Side::Right),
            LeftFrontLeg | LeftFrontHoof => (LimbEnd::Front, Side::Left),
            RightBackLeg | RightBackHoof => (LimbEnd::Back, Side::Right),
            LeftBackLeg | LeftBackHoof => (LimbEnd::Back, Side::Left),
            _ => return None,
        };
        Some(Limb { end, side })
    }

    pub fn name(self) -> &'static str {
        use JointId::*;
        match self {
            Nose => "NOSE",
            Head => "HEAD",
            NeckTop => "NECK_TOP",
            NeckBottom => "NECK_BOTTOM",
            Shoulder => "SHOULDER",
            Spine => "SPINE",
            Tailhead => "TAILHEAD",
            MidThigh => "MID_THIGH",
            ShoulderBottom => "SHOULDER_BOTTOM",
            RightFrontLeg => "RIGHT_FRONT_LEG",
            RightFrontHoof => "RIGHT_FRONT_HOOF",
            LeftFrontLeg => "LEFT_FRONT_LEG",
            LeftFrontHoof => "LEFT_FRONT_HOOF",
            RightBackLeg => "RIGHT_BACK_LEG",
            RightBackHoof => "RIGHT_BACK_HOOF",
            LeftBackLeg => "LEFT_BACK_LEG",
            LeftBackHoof => "LEFT_BACK_HOOF",
        }
    }
}

impl Limb {
    pub const ALL: [Limb; 4] = [
        Limb {
            end: LimbEnd::Front,
            side: Side::Right,
        },
        Limb {
            end: LimbEnd::Front,
            side: Side::Left,
        },
        Limb {
            end: LimbEnd::Back,
            side: Side::Right,
        },
        Limb {
            end: LimbEnd::Back,
            side: Side::Left,
        },
    ];

    pub fn leg(self) -> JointId {
        use JointId::*;
        match (self.end, self.side) {
            (LimbEnd::Front, Side::Right) => RightFrontLeg,
            (LimbEnd::Front, Side::Left) => LeftFrontLeg,
            (LimbEnd::Back, Side::Right) => RightBackLeg,
            (LimbEnd::Back, Side::Left) => LeftBackLeg,
        }
    }

    pub fn hoof(self) -> JointId {
        use JointId::*;
        match (self.end, self.side) {
            (LimbEnd::Front, Side::Right) => RightFrontHoof,
            (LimbEnd::Front, Side::Left) => LeftFrontHoof,
            (LimbEnd::Back, Side::Right) => RightBackHoof,
            (LimbEnd::Back, Side::Left) => LeftBackHoof,
        }
    }
}

impl LimbEnd {
    /// The body joint a limb of this end hangs from.
    pub fn anchor(self) -> JointId {
        match self {
            LimbEnd::Front => JointId::ShoulderBottom,
            LimbEnd::Back => JointId::MidThigh,
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownJoint(pub String);

impl fmt::Display for UnknownJoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown joint name {:?}", self.0)
    }
}

impl std::error::Error for UnknownJoint {}

impl FromStr for JointId {
    type Err = UnknownJoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| UnknownJoint(s.to_string()))
    }
}

impl Serialize for JointId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for JointId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
