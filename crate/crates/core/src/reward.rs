//! Grasp-quality criteria and design-level evaluation.
//!
//! Six per-simulation criteria, each in [0, 1], are combined as a weighted
//! sum. A design is evaluated by sweeping every object in the object set,
//! every initial orientation, and every per-finger tension assignment from
//! the tension grid; the per-object best (over tensions, averaged over
//! orientations) is summed into the design's final reward.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::MechanismSpec;
use crate::sim::{run_grasp, SimConfig, SimError, SimObject, SimTrace};

/// Weights of the six criteria.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
}

impl RewardWeights {
    /// Weights matching the fully numeric worked decomposition; the default.
    pub fn worked() -> Self {
        RewardWeights {
            w1: 3.0,
            w2: 2.0,
            w3: 1.0,
            w4: 1.0,
            w5: 1.0,
            w6: 5.0,
        }
    }

    /// The alternative weighting with w2 = 1. Both presets ship because the
    /// two sources for w2 disagree; see the README's configuration notes.
    pub fn text() -> Self {
        RewardWeights {
            w2: 1.0,
            ..Self::worked()
        }
    }

    pub fn sum(&self) -> f64 {
        self.w1 + self.w2 + self.w3 + self.w4 + self.w5 + self.w6
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let all = [self.w1, self.w2, self.w3, self.w4, self.w5, self.w6];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EvalError::Config(
                "reward weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::worked()
    }
}

/// The six criteria of one simulation plus their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
    pub total: f64,
}

/// Contact persistence. Designs that never touch the object score zero and a
/// secured grasp scores one; in between, losing contact later scores higher:
/// with `t_rem` the simulation time left after the fatal contact loss, the
/// score is `1 / (1 + t_rem^2 / t_max^2)`. A run that kept contact to the
/// end without securing has `t_rem = 0` and scores one.
pub fn r1_time(trace: &SimTrace) -> f64 {
    if trace.events.t_first_contact.is_none() {
        return 0.0;
    }
    if trace.secured() {
        return 1.0;
    }
    let t_rem = trace.t_max_s - trace.events.t_contact_loss.unwrap_or(trace.t_max_s);
    1.0 / (1.0 + (t_rem * t_rem) / (trace.t_max_s * trace.t_max_s))
}

/// Fraction of mechanism bodies (palm included) that touched the object:
/// over the hold window for a secured grasp, over the whole run otherwise.
pub fn r2_contact_fraction(trace: &SimTrace) -> f64 {
    if trace.bodies_total == 0 {
        return 0.0;
    }
    trace.bodies_contacted as f64 / trace.bodies_total as f64
}

/// Evenness of the grip: `1 / (1 + std(|f_i|))` over the contact forces at
/// the grasp event (population standard deviation, newtons).
pub fn r3_force_dispersion(trace: &SimTrace) -> f64 {
    if !trace.secured() || trace.grasp_forces_n.is_empty() {
        return 0.0;
    }
    let n = trace.grasp_forces_n.len() as f64;
    let mean = trace.grasp_forces_n.iter().sum::<f64>() / n;
    let var = trace
        .grasp_forces_n
        .iter()
        .map(|f| (f - mean) * (f - mean))
        .sum::<f64>()
        / n;
    1.0 / (1.0 + var.sqrt())
}

/// Centering of the grip: `1 / (1 + d)` with `d` the distance in meters
/// between the contact centroid and the object center at the grasp event.
pub fn r4_centroid_distance(trace: &SimTrace) -> f64 {
    let (Some(centroid), Some(center)) = (
        trace.contact_centroid_at_grasp,
        trace.object_center_at_grasp,
    ) else {
        return 0.0;
    };
    1.0 / (1.0 + (centroid - center).norm())
}

/// Grasp speed: `(t_max - t_grasp) / t_max`.
pub fn r5_grasp_speed(trace: &SimTrace) -> f64 {
    match trace.events.t_grasp {
        Some(t_grasp) => ((trace.t_max_s - t_grasp) / trace.t_max_s).max(0.0),
        None => 0.0,
    }
}

/// Load resistance: zero if the external load took the object away,
/// otherwise a displacement penalty `1 - |Δp| / d_fail`, clamped to [0, 1].
pub fn r6_load_resistance(trace: &SimTrace) -> f64 {
    let Some(displacement) = trace.load_displacement_m else {
        return 0.0;
    };
    if trace.escaped {
        return 0.0;
    }
    (1.0 - displacement / trace.d_fail_m).clamp(0.0, 1.0)
}

/// Weighted sum of the six components.
pub fn combine(components: [f64; 6], weights: &RewardWeights) -> f64 {
    let [r1, r2, r3, r4, r5, r6] = components;
    weights.w1 * r1
        + weights.w2 * r2
        + weights.w3 * r3
        + weights.w4 * r4
        + weights.w5 * r5
        + weights.w6 * r6
}

/// Scores one trace against all six criteria.
pub fn breakdown(trace: &SimTrace, weights: &RewardWeights) -> RewardBreakdown {
    let components = [
        r1_time(trace),
        r2_contact_fraction(trace),
        r3_force_dispersion(trace),
        r4_centroid_distance(trace),
        r5_grasp_speed(trace),
        r6_load_resistance(trace),
    ];
    RewardBreakdown {
        r1: components[0],
        r2: components[1],
        r3: components[2],
        r4: components[3],
        r5: components[4],
        r6: components[5],
        total: combine(components, weights),
    }
}

/// An object of the evaluation set, keyed by name in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedObject {
    pub name: String,
    #[serde(flatten)]
    pub object: SimObject,
}

/// Everything needed to score a design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSetup {
    pub objects: Vec<NamedObject>,
    /// Tendon tension levels; each finger independently takes each level,
    /// giving a grid of `levels ^ fingers` control assignments.
    pub tension_levels_n: Vec<f64>,
    /// Initial object orientations to average over, degrees.
    pub orientations_deg: Vec<f64>,
    pub weights: RewardWeights,
    pub sim: SimConfig,
}

impl EvaluationSetup {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.objects.is_empty() {
            return Err(EvalError::Config("object set is empty".into()));
        }
        if self.tension_levels_n.is_empty() {
            return Err(EvalError::Config("tension grid is empty".into()));
        }
        if self
            .tension_levels_n
            .iter()
            .any(|t| !t.is_finite() || *t < 0.0)
        {
            return Err(EvalError::Config(
                "tension levels must be finite and non-negative".into(),
            ));
        }
        if self.orientations_deg.is_empty() {
            return Err(EvalError::Config("orientation set is empty".into()));
        }
        self.weights.validate()?;
        self.sim.validate().map_err(EvalError::from_sim_config)?;
        for o in &self.objects {
            o.object.validate().map_err(EvalError::from_sim_config)?;
        }
        Ok(())
    }

    /// Upper bound of the final reward: every criterion at 1 on every object.
    pub fn max_final_reward(&self) -> f64 {
        self.objects.len() as f64 * self.weights.sum()
    }
}

/// Per-object outcome: the best control assignment and its score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectReward {
    pub best_total: f64,
    pub best_controls_n: Vec<f64>,
    pub breakdown: RewardBreakdown,
}

/// Full evaluation report of one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReward {
    pub per_object: BTreeMap<String, ObjectReward>,
    pub final_reward: f64,
    pub sim_count: usize,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation setup: {0}")]
    Config(String),
    #[error("simulation failed on object {object:?}, tensions {tensions:?}, orientation {orientation_deg} deg: {source}")]
    Sim {
        object: String,
        tensions: Vec<f64>,
        orientation_deg: f64,
        source: SimError,
    },
}

impl EvalError {
    fn from_sim_config(e: SimError) -> Self {
        EvalError::Config(e.to_string())
    }
}

/// Enumerates the tension grid in deterministic order: assignment `k` reads
/// its digits base `levels.len()`, most significant digit on finger 0.
pub fn tension_assignments(levels: &[f64], fingers: usize) -> Vec<Vec<f64>> {
    let l = levels.len();
    let count = l.pow(fingers as u32);
    (0..count)
        .map(|k| {
            (0..fingers)
                .map(|i| levels[(k / l.pow((fingers - 1 - i) as u32)) % l])
                .collect()
        })
        .collect()
}

fn eval_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("GRASPGEN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0); // 0 = one per hardware thread
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("evaluation thread pool")
    })
}

/// Scores a compiled design over the whole object × orientation × tension
/// grid. Simulations fan out to a worker pool (capped by the
/// `GRASPGEN_THREADS` environment variable); aggregation is by max and sum,
/// so the result does not depend on completion order.
pub fn evaluate_design(
    spec: &MechanismSpec,
    setup: &EvaluationSetup,
    seed: u64,
) -> Result<DesignReward, EvalError> {
    evaluate_design_observed(spec, setup, seed, None)
}

/// Like [`evaluate_design`], with an optional callback invoked on every
/// simulation trace (from worker threads, in no particular order).
pub fn evaluate_design_observed(
    spec: &MechanismSpec,
    setup: &EvaluationSetup,
    seed: u64,
    observer: Option<&(dyn Fn(&SimTrace) + Sync)>,
) -> Result<DesignReward, EvalError> {
    setup.validate()?;
    let assignments = tension_assignments(&setup.tension_levels_n, spec.fingers.len());

    struct Job {
        object_idx: usize,
        assignment_idx: usize,
        orientation_deg: f64,
    }
    let mut jobs = Vec::new();
    for object_idx in 0..setup.objects.len() {
        for assignment_idx in 0..assignments.len() {
            for orientation_deg in &setup.orientations_deg {
                jobs.push(Job {
                    object_idx,
                    assignment_idx,
                    orientation_deg: *orientation_deg,
                });
            }
        }
    }
    let sim_count = jobs.len();

    let results: Vec<Result<RewardBreakdown, EvalError>> = eval_pool().install(|| {
        jobs.par_iter()
            .map(|job| {
                let named = &setup.objects[job.object_idx];
                let mut object = named.object.clone();
                object.initial_pose.theta_rad += job.orientation_deg.to_radians();
                let tensions = &assignments[job.assignment_idx];
                let trace = run_grasp(spec, &object, tensions, &setup.sim, seed).map_err(|e| {
                    EvalError::Sim {
                        object: named.name.clone(),
                        tensions: tensions.clone(),
                        orientation_deg: job.orientation_deg,
                        source: e,
                    }
                })?;
                if let Some(obs) = observer {
                    obs(&trace);
                }
                Ok(breakdown(&trace, &setup.weights))
            })
            .collect()
    });

    // Orientation-averaged score per (object, assignment).
    let orientations = setup.orientations_deg.len() as f64;
    let mut grid: Vec<Vec<(f64, RewardBreakdown)>> = vec![
        vec![(0.0, RewardBreakdown::default()); assignments.len()];
        setup.objects.len()
    ];
    for (job, result) in jobs.iter().zip(results) {
        let bd = result?;
        let cell = &mut grid[job.object_idx][job.assignment_idx];
        cell.0 += bd.total / orientations;
        let acc = &mut cell.1;
        acc.r1 += bd.r1 / orientations;
        acc.r2 += bd.r2 / orientations;
        acc.r3 += bd.r3 / orientations;
        acc.r4 += bd.r4 / orientations;
        acc.r5 += bd.r5 / orientations;
        acc.r6 += bd.r6 / orientations;
        acc.total += bd.total / orientations;
    }

    let mut per_object = BTreeMap::new();
    let mut final_reward = 0.0;
    for (object_idx, row) in grid.iter().enumerate() {
        let best_idx = argmax(row.iter().map(|(score, _)| *score));
        let (best_total, best_breakdown) = row[best_idx];
        final_reward += best_total;
        per_object.insert(
            setup.objects[object_idx].name.clone(),
            ObjectReward {
                best_total,
                best_controls_n: assignments[best_idx].clone(),
                breakdown: best_breakdown,
            },
        );
    }

    Ok(DesignReward {
        per_object,
        final_reward,
        sim_count,
    })
}

/// Index of the maximum, lowest index on ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
