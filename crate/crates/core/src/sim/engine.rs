//! Two-stage grasp runner on top of an implicit quasi-static integrator.
//!
//! Fingers are first-order (joint damping, no inertia); the object carries
//! its physical mass plus viscous damping so it settles instead of ringing.
//! Both subsystems take a backward-Euler step with the penalty stiffness
//! linearized into the system matrix, which keeps the default step stable
//! at contact stiffnesses stiff enough to satisfy the penetration bounds.
//! Coupling is staggered: fingers move against the frozen object, then the
//! object moves against the refreshed fingers.

use std::collections::BTreeSet;

use crate::geometry::{solve_dense, Vec2};
use crate::mechanism::MechanismSpec;

use super::contact::{detect_contacts, penalty_forces, world_body_capsules};
use super::kinematics::{forward_kinematics, FingerKinematics};
use super::{
    BodyId, Contact, Pose, SimConfig, SimError, SimEvents, SimObject, SimTrace, WorldState,
};

const STANDARD_GRAVITY: f64 = 9.81;

/// Outcome of one integration step.
#[derive(Clone, Debug)]
pub struct StepInfo {
    /// Contacts (with forces) after the step's finger update, as applied to
    /// the object.
    pub contacts: Vec<Contact>,
    /// Net force applied to the object this step (contacts plus external).
    pub object_force: Vec2,
    pub object_torque: f64,
}

/// The integrator with its full state; `run_grasp` drives it through the
/// two-stage protocol, tests may drive it step by step.
pub struct Engine {
    spec: MechanismSpec,
    object: SimObject,
    tensions: Vec<f64>,
    cfg: SimConfig,
    state: WorldState,
    mass: f64,
    inertia: f64,
    step_count: usize,
}

impl Engine {
    pub fn new(
        spec: &MechanismSpec,
        object: &SimObject,
        tensions: &[f64],
        cfg: &SimConfig,
    ) -> Result<Engine, SimError> {
        cfg.validate()?;
        object.validate()?;
        if tensions.len() != spec.fingers.len() {
            return Err(SimError::DimensionMismatch(format!(
                "{} tendon tensions for {} fingers",
                tensions.len(),
                spec.fingers.len()
            )));
        }
        if tensions.iter().any(|t| *t < 0.0 || !t.is_finite()) {
            return Err(SimError::Config(
                "tendon tensions must be finite and non-negative".into(),
            ));
        }
        let q: Vec<Vec<f64>> = spec
            .fingers
            .iter()
            .map(|f| vec![0.0; f.joint_count()])
            .collect();
        Ok(Engine {
            spec: spec.clone(),
            object: object.clone(),
            tensions: tensions.to_vec(),
            cfg: cfg.clone(),
            state: WorldState {
                q: q.clone(),
                q_dot: q,
                object_pose: object.initial_pose,
                object_vel: Vec2::ZERO,
                object_omega: 0.0,
                t_s: 0.0,
            },
            mass: object.mass_kg,
            inertia: object.shape.moment_of_inertia(object.mass_kg),
            step_count: 0,
        })
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn set_state(&mut self, state: WorldState) {
        self.state = state;
    }

    /// Overrides the joint configuration (testing hook for relaxation and
    /// equilibrium checks).
    pub fn set_joint_angles(&mut self, q: Vec<Vec<f64>>) -> Result<(), SimError> {
        forward_kinematics(&self.spec, &q)?;
        self.state.q_dot = q.iter().map(|f| vec![0.0; f.len()]).collect();
        self.state.q = q;
        Ok(())
    }

    /// Object material-point velocity at `point`.
    fn point_velocity(&self, point: Vec2) -> Vec2 {
        let r = point - self.state.object_pose.position();
        self.state.object_vel + r.perp() * self.state.object_omega
    }

    fn contacts_now(&self, fk: &[FingerKinematics]) -> Vec<Contact> {
        let capsules = world_body_capsules(&self.spec, fk);
        let mut contacts = detect_contacts(&capsules, &self.object, &self.state.object_pose);
        let rel: Vec<Vec2> = contacts.iter().map(|c| self.point_velocity(c.point)).collect();
        penalty_forces(&mut contacts, &rel, &self.cfg.params());
        contacts
    }

    /// One backward-Euler step; `external` is an extra force on the object.
    pub fn step(&mut self, external: Vec2) -> Result<StepInfo, SimError> {
        let h = self.cfg.h_s;

        // Fingers move against the frozen object.
        let fk = forward_kinematics(&self.spec, &self.state.q)?;
        let contacts = self.contacts_now(&fk);
        for f in 0..self.spec.fingers.len() {
            self.step_finger(f, &fk[f], &contacts, h);
        }

        // The object moves against the refreshed fingers.
        let fk = forward_kinematics(&self.spec, &self.state.q)?;
        let contacts = self.contacts_now(&fk);
        let (force, torque) = self.step_object(&contacts, external, h);

        self.state.t_s += h;
        self.step_count += 1;
        if !self.state.is_finite() {
            return Err(SimError::Diverged {
                step: self.step_count,
            });
        }
        Ok(StepInfo {
            contacts,
            object_force: force,
            object_torque: torque,
        })
    }

    /// Joint torques at the current state: actuation + springs + contacts.
    fn joint_torques(&self, finger: usize, kin: &FingerKinematics, contacts: &[Contact]) -> Vec<f64> {
        let fspec = &self.spec.fingers[finger];
        let sign = self.spec.curl_sign(&fspec.mount);
        let q = &self.state.q[finger];
        let mut tau: Vec<f64> = fspec
            .phalanges
            .iter()
            .zip(q)
            .map(|(p, q_i)| {
                self.tensions[finger] * fspec.pulley_radius_m
                    - p.stiffness_nm_per_rad * (q_i - p.rest_angle_rad)
            })
            .collect();
        for c in contacts {
            let BodyId::Phalanx { finger: cf, link } = c.body else {
                continue;
            };
            if cf != finger {
                continue;
            }
            // Reaction on the finger is -force; joints at or below the
            // contacted phalanx feel it.
            for i in 0..=link {
                let r = c.point - kin.joint_positions[i];
                tau[i] -= sign * r.cross(c.force_n);
            }
        }
        tau
    }

    fn step_finger(&mut self, finger: usize, kin: &FingerKinematics, contacts: &[Contact], h: f64) {
        let n = self.spec.fingers[finger].joint_count();
        let sign = self.spec.curl_sign(&self.spec.fingers[finger].mount);
        let c_q = self.cfg.joint_damping_nms_per_rad;
        let k_p = self.cfg.contact_stiffness_n_per_m;

        let tau = self.joint_torques(finger, kin, contacts);

        // A = c_q/h I + diag(k_spring) + sum over active contacts of
        // k_p * g g^T, where g_i is the penetration rate per unit q_i.
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = c_q / h + self.spec.fingers[finger].phalanges[i].stiffness_nm_per_rad;
        }
        for c in contacts {
            let BodyId::Phalanx { finger: cf, link } = c.body else {
                continue;
            };
            if cf != finger || c.normal_force() <= 0.0 {
                continue;
            }
            let mut g = vec![0.0; n];
            for (i, g_i) in g.iter_mut().enumerate().take(link + 1) {
                let r = c.point - kin.joint_positions[i];
                *g_i = sign * r.cross(c.normal);
            }
            for i in 0..n {
                for j in 0..n {
                    a[i][j] += k_p * g[i] * g[j];
                }
            }
        }

        let mut rhs = tau;
        let delta = solve_dense(&mut a, &mut rhs).unwrap_or_else(|| vec![0.0; n]);
        let limit = self.spec.joint_limit_rad;
        for i in 0..n {
            let q_old = self.state.q[finger][i];
            let q_new = (q_old + delta[i]).clamp(0.0, limit);
            self.state.q_dot[finger][i] = (q_new - q_old) / h;
            self.state.q[finger][i] = q_new;
        }
    }

    fn step_object(&mut self, contacts: &[Contact], external: Vec2, h: f64) -> (Vec2, f64) {
        let pos = self.state.object_pose.position();
        let mut force = external;
        let mut torque = 0.0;
        for c in contacts {
            force = force + c.force_n;
            torque += (c.point - pos).cross(c.force_n);
        }

        // Generalized velocity u = (vx, vy, omega). Backward Euler with the
        // penalty stiffness and damping linearized into the matrix:
        // (M/h + C + h K) u+ = M u/h + F + C_contact u.
        let m = self.mass;
        let inertia = self.inertia;
        let mut a = vec![vec![0.0; 3]; 3];
        a[0][0] = m / h + self.cfg.object_lin_damping_ns_per_m;
        a[1][1] = m / h + self.cfg.object_lin_damping_ns_per_m;
        a[2][2] = inertia / h + self.cfg.object_ang_damping_nms_per_rad;

        let u = [
            self.state.object_vel.x,
            self.state.object_vel.y,
            self.state.object_omega,
        ];
        let mut rhs = [
            m / h * u[0] + force.x,
            m / h * u[1] + force.y,
            inertia / h * u[2] + torque,
        ];

        let params = self.cfg.params();
        for c in contacts {
            if c.normal_force() <= 0.0 {
                continue;
            }
            let r = c.point - pos;
            let n = c.normal;
            let t = n.perp();
            let w_n = [n.x, n.y, r.cross(n)];
            let w_t = [t.x, t.y, r.cross(t)];
            // Friction slope: viscous inside the cone, saturated outside.
            let v_t = self.point_velocity(c.point).dot(t);
            let visc = if params.friction_reg * v_t.abs() < params.mu * c.normal_force() {
                params.friction_reg
            } else {
                0.0
            };
            for i in 0..3 {
                for j in 0..3 {
                    let damp = params.damping * w_n[i] * w_n[j] + visc * w_t[i] * w_t[j];
                    a[i][j] += damp + h * params.stiffness * w_n[i] * w_n[j];
                    rhs[i] += damp * u[j];
                }
            }
        }

        let mut rhs_vec = rhs.to_vec();
        let v_new = solve_dense(&mut a, &mut rhs_vec).unwrap_or_else(|| vec![0.0; 3]);
        self.state.object_vel = Vec2::new(v_new[0], v_new[1]);
        self.state.object_omega = v_new[2];
        self.state.object_pose.x_m += h * v_new[0];
        self.state.object_pose.y_m += h * v_new[1];
        self.state.object_pose.theta_rad += h * v_new[2];
        (force, torque)
    }

    /// Residuals of the quasi-static balance at the current state: max
    /// |joint torque| (joints pinned at a travel limit excluded when the
    /// torque pushes into the limit), |net object force|, and the deepest
    /// penetration.
    pub fn residuals(&self) -> (f64, f64, f64) {
        let fk = forward_kinematics(&self.spec, &self.state.q).expect("state dims are consistent");
        let contacts = self.contacts_now(&fk);
        let limit = self.spec.joint_limit_rad;
        let mut torque_inf: f64 = 0.0;
        for f in 0..self.spec.fingers.len() {
            let tau = self.joint_torques(f, &fk[f], &contacts);
            for (i, t) in tau.iter().enumerate() {
                let q_i = self.state.q[f][i];
                let pinned_low = q_i <= 1e-12 && *t < 0.0;
                let pinned_high = q_i >= limit - 1e-12 && *t > 0.0;
                if !pinned_low && !pinned_high {
                    torque_inf = torque_inf.max(t.abs());
                }
            }
        }
        let net: Vec2 = contacts
            .iter()
            .fold(Vec2::ZERO, |acc, c| acc + c.force_n);
        let max_pen = contacts
            .iter()
            .map(|c| c.penetration_m)
            .fold(0.0, f64::max);
        (torque_inf, net.norm(), max_pen)
    }
}

struct StageTwoBranch {
    max_displacement: f64,
    final_displacement: f64,
    escaped: bool,
    end_t: f64,
    samples: Vec<BranchSample>,
    end_state: WorldState,
}

struct BranchSample {
    t: f64,
    pose: Pose,
    contacts: Vec<Contact>,
    q: Vec<Vec<f64>>,
}

/// Runs the full two-stage grasp experiment.
///
/// Stage 1 closes the fingers under constant tendon tension until the grasp
/// is secured (all joints and the object quiet, at least two distinct bodies
/// touching, sustained for `t_hold_s`), aborting if the object is never
/// touched by `t_max_s` or contact is lost for longer than `t_loss_s`.
/// Stage 2, reached only when secured, ramps an external force from zero to
/// `load_alpha` times the object weight over `t_ramp_s` along each configured
/// direction; the worst direction is retained.
///
/// Fully deterministic: identical inputs produce an identical trace. `seed`
/// is threaded through for interface stability and provenance; the
/// quasi-static solver draws no random numbers.
pub fn run_grasp(
    spec: &MechanismSpec,
    object: &SimObject,
    tensions: &[f64],
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimTrace, SimError> {
    let _ = seed;
    let mut engine = Engine::new(spec, object, tensions, cfg)?;
    let h = cfg.h_s;
    let d_fail = object.shape.char_size().max(cfg.d_fail_min_m);

    let mut trace = SimTrace {
        events: SimEvents::default(),
        t_max_s: cfg.t_max_s,
        contact_snapshots: Vec::new(),
        object_path: Vec::new(),
        joint_path: Vec::new(),
        bodies_total: spec.body_count(),
        bodies_contacted: 0,
        grasp_forces_n: Vec::new(),
        contact_centroid_at_grasp: None,
        object_center_at_grasp: None,
        escaped: false,
        load_displacement_m: None,
        d_fail_m: d_fail,
        final_joint_angles: Vec::new(),
        residual_torque_nm: None,
        residual_object_force_n: None,
        max_penetration_at_grasp_m: None,
    };

    let push_sample =
        |trace: &mut SimTrace, t: f64, pose: Pose, contacts: &[Contact], q: &[Vec<f64>]| {
            trace.object_path.push((t, pose));
            trace.contact_snapshots.push((t, contacts.to_vec()));
            trace.joint_path.push((t, q.to_vec()));
        };

    // Initial sample at t = 0.
    {
        let fk = forward_kinematics(spec, &engine.state.q)?;
        let contacts = engine.contacts_now(&fk);
        push_sample(
            &mut trace,
            0.0,
            engine.state.object_pose,
            &contacts,
            &engine.state.q,
        );
    }

    let steps_max = (cfg.t_max_s / h).ceil() as usize;
    let mut quiet_start: Option<f64> = None;
    let mut hold_bodies: BTreeSet<BodyId> = BTreeSet::new();
    let mut ever_bodies: BTreeSet<BodyId> = BTreeSet::new();
    let mut loss_start: Option<f64> = None;
    let mut secured_at: Option<(f64, Vec<Contact>)> = None;

    for step in 1..=steps_max {
        let info = engine.step(Vec2::ZERO)?;
        let t = engine.state.t_s;
        let bodies_now: BTreeSet<BodyId> = info.contacts.iter().map(|c| c.body).collect();
        ever_bodies.extend(bodies_now.iter().copied());
        let in_contact = !info.contacts.is_empty();

        if in_contact && trace.events.t_first_contact.is_none() {
            trace.events.t_first_contact = Some(t);
        }

        // Contact-loss abort.
        if trace.events.t_first_contact.is_some() && !in_contact {
            let start = *loss_start.get_or_insert(t);
            if t - start > cfg.t_loss_s {
                trace.events.t_contact_loss = Some(start);
                push_sample(
                    &mut trace,
                    t,
                    engine.state.object_pose,
                    &info.contacts,
                    &engine.state.q,
                );
                break;
            }
        } else {
            loss_start = None;
        }

        // Grasp-secured detection.
        let quiet = engine
            .state
            .q_dot
            .iter()
            .flatten()
            .all(|v| v.abs() < cfg.eps_joint_vel_rad_per_s)
            && engine.state.object_vel.norm() < cfg.eps_obj_lin_m_per_s
            && engine.state.object_omega.abs() < cfg.eps_obj_ang_rad_per_s;
        if quiet && bodies_now.len() >= 2 {
            let start = *quiet_start.get_or_insert(t);
            hold_bodies.extend(bodies_now.iter().copied());
            if t - start >= cfg.t_hold_s {
                secured_at = Some((t, info.contacts.clone()));
                push_sample(
                    &mut trace,
                    t,
                    engine.state.object_pose,
                    &info.contacts,
                    &engine.state.q,
                );
                break;
            }
        } else {
            quiet_start = None;
            hold_bodies.clear();
        }

        if step % cfg.trace_decimation == 0 || step == steps_max {
            push_sample(
                &mut trace,
                t,
                engine.state.object_pose,
                &info.contacts,
                &engine.state.q,
            );
        }
    }

    let Some((t_grasp, grasp_contacts)) = secured_at else {
        // Never secured: the run ends where stage 1 stopped.
        trace.events.t_final = engine.state.t_s;
        trace.bodies_contacted = ever_bodies.len();
        trace.final_joint_angles = engine.state.q.clone();
        return Ok(trace);
    };

    trace.events.t_grasp = Some(t_grasp);
    trace.bodies_contacted = hold_bodies.len();
    trace.grasp_forces_n = grasp_contacts.iter().map(|c| c.force_n.norm()).collect();
    let centroid = grasp_contacts
        .iter()
        .fold(Vec2::ZERO, |acc, c| acc + c.point)
        * (1.0 / grasp_contacts.len() as f64);
    trace.contact_centroid_at_grasp = Some(centroid);
    let p_grasp = engine.state.object_pose.position();
    trace.object_center_at_grasp = Some(p_grasp);
    let (res_torque, res_force, max_pen) = engine.residuals();
    trace.residual_torque_nm = Some(res_torque);
    trace.residual_object_force_n = Some(res_force);
    trace.max_penetration_at_grasp_m = Some(max_pen);

    // Stage 2: ramp the external load along each direction from the secured
    // state; keep the worst direction.
    let snapshot = engine.state.clone();
    let ramp_steps = (cfg.t_ramp_s / h).ceil() as usize;
    let peak = cfg.load_alpha * object.mass_kg * STANDARD_GRAVITY;
    let mut worst: Option<StageTwoBranch> = None;

    for dir in &cfg.force_directions {
        engine.set_state(snapshot.clone());
        let dir = dir.normalized();
        let mut branch = StageTwoBranch {
            max_displacement: 0.0,
            final_displacement: 0.0,
            escaped: false,
            end_t: snapshot.t_s,
            samples: Vec::new(),
            end_state: snapshot.clone(),
        };
        for j in 1..=ramp_steps {
            let magnitude = peak * ((j as f64 * h) / cfg.t_ramp_s).min(1.0);
            let info = engine.step(dir * magnitude)?;
            let disp = (engine.state.object_pose.position() - p_grasp).norm();
            branch.max_displacement = branch.max_displacement.max(disp);
            branch.final_displacement = disp;
            branch.end_t = engine.state.t_s;
            let escaped_now = disp > d_fail;
            if j % cfg.trace_decimation == 0 || j == ramp_steps || escaped_now {
                branch.samples.push(BranchSample {
                    t: engine.state.t_s,
                    pose: engine.state.object_pose,
                    contacts: info.contacts,
                    q: engine.state.q.clone(),
                });
            }
            if escaped_now {
                branch.escaped = true;
                break;
            }
        }
        branch.end_state = engine.state.clone();
        let is_worse = worst
            .as_ref()
            .map_or(true, |w| branch.max_displacement > w.max_displacement);
        if is_worse {
            worst = Some(branch);
        }
    }

    let worst = worst.expect("at least one load direction");
    for s in &worst.samples {
        push_sample(&mut trace, s.t, s.pose, &s.contacts, &s.q);
    }
    trace.events.t_final = worst.end_t;
    trace.escaped = worst.escaped;
    trace.load_displacement_m = Some(worst.final_displacement);
    trace.final_joint_angles = worst.end_state.q.clone();
    // Make sure the path ends exactly at the final pose.
    if trace
        .object_path
        .last()
        .map_or(true, |(t, _)| *t < worst.end_t)
    {
        push_sample(
            &mut trace,
            worst.end_t,
            worst.end_state.object_pose,
            &[],
            &worst.end_state.q,
        );
    }
    Ok(trace)
}
