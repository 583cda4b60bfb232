//! Deterministic planar quasi-static grasp simulation.
//!
//! The world is the x-y plane: the palm is a static capsule centered at the
//! origin, fingers are chains of capsule phalanges driven by a single tendon
//! each, and the object floats freely with gravity off. A grasp run has two
//! stages: the fingers close until the grasp is secured (everything quiet,
//! at least two bodies touching, sustained), then a ramped external load
//! probes whether the object can be pulled out.
//!
//! Contact uses the penalty method (normal force proportional to
//! interpenetration plus damping, viscous-regularized Coulomb friction); the
//! integrator treats the stiff penalty terms implicitly so the default step
//! is stable at realistic contact stiffnesses.

mod contact;
mod engine;
mod kinematics;

pub use contact::{detect_contacts, penalty_forces, world_body_capsules, BodyCapsule, ContactParams};
pub use engine::{run_grasp, Engine, StepInfo};
pub use kinematics::{actuation_torques, forward_kinematics, FingerKinematics};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Planar pose of the grasped object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
}

impl Pose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x_m, self.y_m)
    }

    pub fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite() && self.theta_rad.is_finite()
    }
}

/// Shape of a grasped object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius_m: f64 },
    Rect { width_m: f64, height_m: f64 },
    RegularPolygon { sides: usize, circumradius_m: f64 },
}

impl Shape {
    /// Characteristic size: the largest extent of the shape.
    pub fn char_size(&self) -> f64 {
        match self {
            Shape::Disc { radius_m } => 2.0 * radius_m,
            Shape::Rect { width_m, height_m } => width_m.max(*height_m),
            Shape::RegularPolygon { circumradius_m, .. } => 2.0 * circumradius_m,
        }
    }

    /// Smallest extent, used for penetration sanity bounds.
    pub fn min_size(&self) -> f64 {
        match self {
            Shape::Disc { radius_m } => 2.0 * radius_m,
            Shape::Rect { width_m, height_m } => width_m.min(*height_m),
            Shape::RegularPolygon {
                sides,
                circumradius_m,
            } => 2.0 * circumradius_m * (std::f64::consts::PI / *sides as f64).cos(),
        }
    }

    pub fn moment_of_inertia(&self, mass_kg: f64) -> f64 {
        match self {
            Shape::Disc { radius_m } => 0.5 * mass_kg * radius_m * radius_m,
            Shape::Rect { width_m, height_m } => {
                mass_kg * (width_m * width_m + height_m * height_m) / 12.0
            }
            Shape::RegularPolygon {
                sides,
                circumradius_m,
            } => {
                let a = std::f64::consts::PI / *sides as f64;
                mass_kg * circumradius_m * circumradius_m / 6.0 * (1.0 + 2.0 * a.cos().powi(2))
            }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match self {
            Shape::Disc { radius_m } => *radius_m > 0.0,
            Shape::Rect { width_m, height_m } => *width_m > 0.0 && *height_m > 0.0,
            Shape::RegularPolygon {
                sides,
                circumradius_m,
            } => *sides >= 3 && *circumradius_m > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("object shape dimensions must be positive".into()))
        }
    }
}

/// A free-floating object to be grasped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub shape: Shape,
    pub mass_kg: f64,
    pub initial_pose: Pose,
}

impl SimObject {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.mass_kg <= 0.0 {
            return Err(SimError::Config("object mass must be positive".into()));
        }
        self.shape.validate()
    }
}

/// Identifies a contactable body of the mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyId {
    Palm,
    /// `link` indexes the phalanx within the finger, base first.
    Phalanx { finger: usize, link: usize },
}

/// One contact between a mechanism body and the object. `normal` points from
/// the body into the object; `force` is the force applied to the object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub body: BodyId,
    pub point: Vec2,
    pub normal: Vec2,
    pub penetration_m: f64,
    pub force_n: Vec2,
}

impl Contact {
    /// Normal component of the applied force (non-negative: no adhesion).
    pub fn normal_force(&self) -> f64 {
        self.force_n.dot(self.normal)
    }
}

/// Generalized coordinates of the planar model.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    /// Joint angles per finger, base joint first. Always within [0, limit].
    pub q: Vec<Vec<f64>>,
    /// Joint velocities per finger, rad/s.
    pub q_dot: Vec<Vec<f64>>,
    pub object_pose: Pose,
    pub object_vel: Vec2,
    pub object_omega: f64,
    pub t_s: f64,
}

impl WorldState {
    pub fn is_finite(&self) -> bool {
        self.q.iter().flatten().all(|v| v.is_finite())
            && self.q_dot.iter().flatten().all(|v| v.is_finite())
            && self.object_pose.is_finite()
            && self.object_vel.is_finite()
            && self.object_omega.is_finite()
    }
}

/// Everything the integrator needs to know that is not part of the design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub h_s: f64,
    /// Stage-1 time limit.
    pub t_max_s: f64,
    /// How long the quiet-and-touching condition must hold to secure.
    pub t_hold_s: f64,
    /// How long contact may be lost after first touch before aborting.
    pub t_loss_s: f64,
    pub eps_joint_vel_rad_per_s: f64,
    pub eps_obj_lin_m_per_s: f64,
    pub eps_obj_ang_rad_per_s: f64,
    /// External load peak as a multiple of object weight.
    pub load_alpha: f64,
    pub t_ramp_s: f64,
    /// Escape threshold floor; the effective threshold is
    /// `max(object char size, d_fail_min_m)`.
    pub d_fail_min_m: f64,
    /// Unit directions the stage-2 load is applied along; worst case kept.
    pub force_directions: Vec<Vec2>,
    pub contact_stiffness_n_per_m: f64,
    pub contact_damping_ns_per_m: f64,
    pub friction_mu: f64,
    /// Viscous regularization of Coulomb friction.
    pub friction_reg_ns_per_m: f64,
    pub joint_damping_nms_per_rad: f64,
    pub object_lin_damping_ns_per_m: f64,
    pub object_ang_damping_nms_per_rad: f64,
    /// Record every Nth step into the trace time series.
    pub trace_decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h_s: 1e-3,
            t_max_s: 5.0,
            t_hold_s: 0.2,
            t_loss_s: 0.1,
            eps_joint_vel_rad_per_s: 1e-3,
            eps_obj_lin_m_per_s: 1e-4,
            eps_obj_ang_rad_per_s: 1e-3,
            load_alpha: 2.0,
            t_ramp_s: 1.0,
            d_fail_min_m: 0.03,
            force_directions: vec![
                Vec2::new(1.0, 0.0),
                Vec2::new(-1.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(0.0, -1.0),
            ],
            contact_stiffness_n_per_m: 1e5,
            contact_damping_ns_per_m: 50.0,
            friction_mu: 0.6,
            // Stiff enough that loads inside the friction cone creep well
            // below the grasp-secured velocity threshold.
            friction_reg_ns_per_m: 1e4,
            joint_damping_nms_per_rad: 0.02,
            object_lin_damping_ns_per_m: 5.0,
            object_ang_damping_nms_per_rad: 0.005,
            trace_decimation: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("h_s", self.h_s),
            ("t_max_s", self.t_max_s),
            ("t_hold_s", self.t_hold_s),
            ("t_loss_s", self.t_loss_s),
            ("t_ramp_s", self.t_ramp_s),
            ("contact_stiffness_n_per_m", self.contact_stiffness_n_per_m),
            ("joint_damping_nms_per_rad", self.joint_damping_nms_per_rad),
            (
                "object_lin_damping_ns_per_m",
                self.object_lin_damping_ns_per_m,
            ),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        if self.friction_mu < 0.0 || self.load_alpha < 0.0 {
            return Err(SimError::Config(
                "friction_mu and load_alpha must be non-negative".into(),
            ));
        }
        if self.force_directions.is_empty() {
            return Err(SimError::Config(
                "at least one load direction is required".into(),
            ));
        }
        if self.trace_decimation == 0 {
            return Err(SimError::Config("trace_decimation must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ContactParams {
        ContactParams {
            stiffness: self.contact_stiffness_n_per_m,
            damping: self.contact_damping_ns_per_m,
            mu: self.friction_mu,
            friction_reg: self.friction_reg_ns_per_m,
        }
    }
}

/// Event timestamps of one grasp run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimEvents {
    pub t_first_contact: Option<f64>,
    pub t_grasp: Option<f64>,
    pub t_contact_loss: Option<f64>,
    pub t_final: f64,
}

/// Full record of one simulation, consumed by the reward criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: SimEvents,
    pub t_max_s: f64,
    /// Decimated contact lists, aligned with `object_path`.
    pub contact_snapshots: Vec<(f64, Vec<Contact>)>,
    pub object_path: Vec<(f64, Pose)>,
    /// Decimated joint angles per finger, aligned with `object_path`.
    pub joint_path: Vec<(f64, Vec<Vec<f64>>)>,
    pub bodies_total: usize,
    /// Distinct bodies in contact over the hold window when secured,
    /// otherwise distinct bodies ever in contact.
    pub bodies_contacted: usize,
    /// Contact force magnitudes at the grasp event.
    pub grasp_forces_n: Vec<f64>,
    pub contact_centroid_at_grasp: Option<Vec2>,
    pub object_center_at_grasp: Option<Vec2>,
    pub escaped: bool,
    /// Worst-direction object displacement between grasp and end of load.
    pub load_displacement_m: Option<f64>,
    pub d_fail_m: f64,
    pub final_joint_angles: Vec<Vec<f64>>,
    /// Max |joint torque residual| at the grasp event, limit-pinned joints
    /// excluded.
    pub residual_torque_nm: Option<f64>,
    /// |net object force| at the grasp event.
    pub residual_object_force_n: Option<f64>,
    pub max_penetration_at_grasp_m: Option<f64>,
}

impl SimTrace {
    pub fn secured(&self) -> bool {
        self.events.t_grasp.is_some()
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Renders the decimated time series as the documented CSV:
/// `t,object_x,object_y,object_theta,n_contacts,sum_normal_force`.
pub fn trace_to_csv(trace: &SimTrace) -> String {
    let mut out = String::from("t,object_x,object_y,object_theta,n_contacts,sum_normal_force\n");
    for ((t, pose), (_, contacts)) in trace.object_path.iter().zip(&trace.contact_snapshots) {
        let sum_normal = contacts
            .iter()
            .map(Contact::normal_force)
            .sum::<f64>()
            .max(0.0);
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            t,
            pose.x_m,
            pose.y_m,
            pose.theta_rad,
            contacts.len(),
            sum_normal
        ));
    }
    out
}
