//! Planar chain kinematics and tendon actuation.

use crate::geometry::{Segment, Vec2};
use crate::mechanism::{FingerSpec, MechanismSpec};

use super::SimError;

/// World-frame layout of one finger at a given joint configuration.
#[derive(Clone, Debug)]
pub struct FingerKinematics {
    /// Position of joint i (the pivot phalanx i rotates about), base first.
    pub joint_positions: Vec<Vec2>,
    /// Phalanx center-line segments, base first.
    pub segments: Vec<Segment>,
    /// World direction angle of each phalanx, radians.
    pub directions: Vec<Vec2>,
}

impl FingerKinematics {
    pub fn tip(&self) -> Vec2 {
        self.segments.last().map(|s| s.b).unwrap_or(Vec2::ZERO)
    }
}

/// Chains every finger out from its mount. `q` holds joint angles per finger
/// (base joint first); joint angle `q_i` rotates phalanx i relative to its
/// parent by `curl_sign * q_i`.
pub fn forward_kinematics(
    spec: &MechanismSpec,
    q: &[Vec<f64>],
) -> Result<Vec<FingerKinematics>, SimError> {
    if q.len() != spec.fingers.len() {
        return Err(SimError::DimensionMismatch(format!(
            "{} joint vectors for {} fingers",
            q.len(),
            spec.fingers.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.fingers.len());
    for (finger, angles) in spec.fingers.iter().zip(q) {
        if angles.len() != finger.joint_count() {
            return Err(SimError::DimensionMismatch(format!(
                "{} joint angles for a {}-phalanx finger",
                angles.len(),
                finger.joint_count()
            )));
        }
        let sign = spec.curl_sign(&finger.mount);
        let base_dir = spec.mount_direction(&finger.mount);
        let mut position = spec.mount_anchor(&finger.mount);
        let mut cumulative = 0.0;
        let mut joint_positions = Vec::with_capacity(angles.len());
        let mut segments = Vec::with_capacity(angles.len());
        let mut directions = Vec::with_capacity(angles.len());
        for (phalanx, q_i) in finger.phalanges.iter().zip(angles) {
            cumulative += sign * q_i;
            let dir = base_dir.rotated(cumulative);
            joint_positions.push(position);
            let end = position + dir * phalanx.length_m;
            segments.push(Segment::new(position, end));
            directions.push(dir);
            position = end;
        }
        out.push(FingerKinematics {
            joint_positions,
            segments,
            directions,
        });
    }
    Ok(out)
}

/// Net actuation torque at each joint of one finger: tendon tension acting on
/// the constant-radius pulley minus the return spring. Tension is identical
/// at every joint (frictionless routing).
pub fn actuation_torques(finger: &FingerSpec, q: &[f64], tension_n: f64) -> Vec<f64> {
    finger
        .phalanges
        .iter()
        .zip(q)
        .map(|(p, q_i)| {
            tension_n * finger.pulley_radius_m - p.stiffness_nm_per_rad * (q_i - p.rest_angle_rad)
        })
        .collect()
}
