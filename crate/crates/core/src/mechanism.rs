//! Compilation of terminal design graphs into simulable gripper descriptions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::grammar::{DesignGraph, MountTransform, NodeKind, PalmSide};

/// Fixed physical properties that are not part of the design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalParams {
    pub palm_width_m: f64,
    pub palm_thickness_m: f64,
    pub phalanx_thickness_m: f64,
    pub pulley_radius_m: f64,
    /// Joint travel is limited to [0, joint_limit_deg] to keep fingers from
    /// folding onto themselves.
    pub joint_limit_deg: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            palm_width_m: 0.08,
            palm_thickness_m: 0.02,
            phalanx_thickness_m: 0.01,
            pulley_radius_m: 0.01,
            joint_limit_deg: 110.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PalmSpec {
    pub width_m: f64,
    pub thickness_m: f64,
}

/// One rigid link of a finger together with the spring at its driving joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhalanxSpec {
    pub length_m: f64,
    pub stiffness_nm_per_rad: f64,
    pub rest_angle_rad: f64,
    pub thickness_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub mount: MountTransform,
    /// Base-to-tip order.
    pub phalanges: Vec<PhalanxSpec>,
    /// Shared by every joint of the gripper.
    pub pulley_radius_m: f64,
}

impl FingerSpec {
    pub fn joint_count(&self) -> usize {
        self.phalanges.len()
    }

    pub fn total_length(&self) -> f64 {
        self.phalanges.iter().map(|p| p.length_m).sum()
    }
}

/// A compiled gripper: palm plus fingers, ready for simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub palm: PalmSpec,
    pub fingers: Vec<FingerSpec>,
    pub joint_limit_rad: f64,
}

impl MechanismSpec {
    pub fn joint_count(&self) -> usize {
        self.fingers.iter().map(FingerSpec::joint_count).sum()
    }

    /// Palm plus every phalanx.
    pub fn body_count(&self) -> usize {
        1 + self.joint_count()
    }

    /// World-frame anchor point of a finger mount. The palm is centered at
    /// the origin with its width along x; fingers attach on the +y (top) or
    /// -y (bottom) face.
    pub fn mount_anchor(&self, mount: &MountTransform) -> Vec2 {
        let y = match mount.side {
            PalmSide::Top => self.palm.thickness_m / 2.0,
            PalmSide::Bottom => -self.palm.thickness_m / 2.0,
        };
        Vec2::new(mount.offset_m, y)
    }

    /// Unit direction a fully extended finger points along: the palm-face
    /// normal rotated by the mount angle (counter-clockwise positive).
    pub fn mount_direction(&self, mount: &MountTransform) -> Vec2 {
        let normal = match mount.side {
            PalmSide::Top => Vec2::new(0.0, 1.0),
            PalmSide::Bottom => Vec2::new(0.0, -1.0),
        };
        normal.rotated(mount.angle_deg.to_radians())
    }

    /// Sign mapping non-negative joint angles to world rotation, chosen so
    /// tendon tension curls the finger toward the gripper centerline.
    pub fn curl_sign(&self, mount: &MountTransform) -> f64 {
        let inward = if mount.offset_m > 0.0 {
            1.0
        } else if mount.offset_m < 0.0 {
            -1.0
        } else if mount.angle_deg > 0.0 {
            -1.0
        } else if mount.angle_deg < 0.0 {
            1.0
        } else {
            1.0
        };
        match mount.side {
            PalmSide::Top => inward,
            PalmSide::Bottom => -inward,
        }
    }
}

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("design graph is not terminal; node {node} is {kind}")]
    NotTerminal { node: u32, kind: String },
    #[error("design graph structure is not compilable: {0}")]
    Structure(String),
}

/// Validation findings that do not prevent simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    /// The finger cannot span the distance from its mount to the workspace
    /// center even fully extended.
    Unreachable {
        finger: usize,
        total_length_m: f64,
        distance_m: f64,
    },
    /// Two fingers share a mount anchor and collide at rest.
    OverlappingMounts { a: usize, b: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::Unreachable {
                finger,
                total_length_m,
                distance_m,
            } => write!(
                f,
                "finger {finger} reaches {total_length_m:.3} m but the workspace center is {distance_m:.3} m away"
            ),
            Warning::OverlappingMounts { a, b } => {
                write!(f, "fingers {a} and {b} share a mount anchor")
            }
        }
    }
}

/// Compiles a terminal design graph into a mechanism. Fingers are ordered by
/// mount (side, offset, angle) and phalanges base-to-tip; joints rest fully
/// extended.
pub fn compile(g: &DesignGraph, phys: &PhysicalParams) -> Result<MechanismSpec, MechanismError> {
    if let Some((node, kind)) = g.nodes().find(|(_, k)| !k.is_terminal()) {
        return Err(MechanismError::NotTerminal {
            node,
            kind: format!("{kind:?}"),
        });
    }

    let mut fingers = Vec::new();
    for base in g.finger_bases() {
        let NodeKind::BaseT(mount) = g.node(base).unwrap() else {
            unreachable!("finger bases of a terminal graph are BaseT");
        };
        let chain = g.finger_chain(base);
        let mut phalanges = Vec::new();
        let mut rest = chain[1..].iter();
        loop {
            let Some(joint_id) = rest.next() else { break };
            let NodeKind::JointT {
                stiffness_nm_per_rad,
            } = g.node(*joint_id).unwrap()
            else {
                return Err(MechanismError::Structure(format!(
                    "expected a joint at node {joint_id}"
                )));
            };
            let Some(link_id) = rest.next() else {
                return Err(MechanismError::Structure(format!(
                    "joint {joint_id} has no link after it"
                )));
            };
            let NodeKind::LinkT { length_m } = g.node(*link_id).unwrap() else {
                return Err(MechanismError::Structure(format!(
                    "expected a link at node {link_id}"
                )));
            };
            phalanges.push(PhalanxSpec {
                length_m: *length_m,
                stiffness_nm_per_rad: *stiffness_nm_per_rad,
                rest_angle_rad: 0.0,
                thickness_m: phys.phalanx_thickness_m,
            });
        }
        if phalanges.is_empty() {
            return Err(MechanismError::Structure(format!(
                "finger at base {base} has no phalanges"
            )));
        }
        fingers.push(FingerSpec {
            mount: *mount,
            phalanges,
            pulley_radius_m: phys.pulley_radius_m,
        });
    }

    if fingers.is_empty() {
        return Err(MechanismError::Structure("gripper has no fingers".into()));
    }
    if fingers.len() > 4 {
        return Err(MechanismError::Structure(format!(
            "gripper has {} fingers; at most 4 are supported",
            fingers.len()
        )));
    }

    fingers.sort_by(|a, b| {
        (a.mount.side, a.mount.offset_m, a.mount.angle_deg)
            .partial_cmp(&(b.mount.side, b.mount.offset_m, b.mount.angle_deg))
            .expect("mount parameters are finite")
    });

    Ok(MechanismSpec {
        palm: PalmSpec {
            width_m: phys.palm_width_m,
            thickness_m: phys.palm_thickness_m,
        },
        fingers,
        joint_limit_rad: phys.joint_limit_deg.to_radians(),
    })
}

/// Geometric sanity checks against the workspace the object will occupy.
pub fn validate(spec: &MechanismSpec, workspace_center: Vec2) -> Vec<Warning> {
    let mut warnings = Vec::new();
    for (i, finger) in spec.fingers.iter().enumerate() {
        let anchor = spec.mount_anchor(&finger.mount);
        let distance = (workspace_center - anchor).norm();
        let reach = finger.total_length();
        if reach < distance {
            warnings.push(Warning::Unreachable {
                finger: i,
                total_length_m: reach,
                distance_m: distance,
            });
        }
    }
    for i in 0..spec.fingers.len() {
        for j in i + 1..spec.fingers.len() {
            let (a, b) = (&spec.fingers[i].mount, &spec.fingers[j].mount);
            if a.side == b.side && a.offset_m == b.offset_m {
                warnings.push(Warning::OverlappingMounts { a: i, b: j });
            }
        }
    }
    warnings
}
