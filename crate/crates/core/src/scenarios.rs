//! Ready-made reference scenarios shared by the test suite, the acceptance
//! gate and the benchmarks.

use crate::config::Config;
use crate::grammar::{
    init_graph, Action, DesignGraph, Grammar, GrammarLimits, GrammarParams, MountTransform,
    PalmSide, RuleId,
};
use crate::mechanism::{FingerSpec, MechanismSpec, PalmSpec, PhalanxSpec};
use crate::sim::{Pose, Shape, SimObject};

fn phalanx(length_m: f64, stiffness: f64) -> PhalanxSpec {
    PhalanxSpec {
        length_m,
        stiffness_nm_per_rad: stiffness,
        rest_angle_rad: 0.0,
        thickness_m: 0.01,
    }
}

/// Two opposed two-phalanx fingers leaning outward over the palm; the
/// canonical pinch-grasp testbed.
pub fn reference_two_finger_spec() -> MechanismSpec {
    let finger = |offset_m: f64, angle_deg: f64| FingerSpec {
        mount: MountTransform {
            side: PalmSide::Top,
            offset_m,
            angle_deg,
        },
        phalanges: vec![phalanx(0.08, 0.1), phalanx(0.08, 0.1)],
        pulley_radius_m: 0.01,
    };
    MechanismSpec {
        palm: PalmSpec {
            width_m: 0.08,
            thickness_m: 0.02,
        },
        // Left finger leans left (+30 deg CCW), right finger leans right.
        fingers: vec![finger(-0.03, 30.0), finger(0.03, -30.0)],
        joint_limit_rad: 110f64.to_radians(),
    }
}

/// A single straight-up finger with one phalanx; used for free-finger
/// equilibrium checks.
pub fn single_finger_spec(length_m: f64, stiffness: f64) -> MechanismSpec {
    MechanismSpec {
        palm: PalmSpec {
            width_m: 0.08,
            thickness_m: 0.02,
        },
        fingers: vec![FingerSpec {
            mount: MountTransform {
                side: PalmSide::Top,
                offset_m: 0.0,
                angle_deg: 0.0,
            },
            phalanges: vec![phalanx(length_m, stiffness)],
            pulley_radius_m: 0.01,
        }],
        joint_limit_rad: 110f64.to_radians(),
    }
}

/// The default disc centered in the workspace.
pub fn disc_object() -> SimObject {
    SimObject {
        shape: Shape::Disc { radius_m: 0.03 },
        mass_kg: 0.1,
        initial_pose: Pose {
            x_m: 0.0,
            y_m: 0.06,
            theta_rad: 0.0,
        },
    }
}

/// A disc placed far outside every finger's reach.
pub fn unreachable_object() -> SimObject {
    SimObject {
        shape: Shape::Disc { radius_m: 0.03 },
        mass_kg: 0.1,
        initial_pose: Pose {
            x_m: 1.0,
            y_m: 1.0,
            theta_rad: 0.0,
        },
    }
}

/// The terminal design graph whose compilation is
/// [`reference_two_finger_spec`], built through the grammar under the
/// default parameter sets.
pub fn reference_two_finger_graph() -> DesignGraph {
    let grammar = Grammar::default();
    let mut g = init_graph();
    let apply = |g: &DesignGraph, rule, target: u32, param: Option<usize>| {
        grammar
            .apply(
                g,
                &Action {
                    rule,
                    target: Some(target),
                    param,
                },
            )
            .expect("reference construction sequence is valid")
    };
    // Two fingers with two phalanges each.
    g = apply(&g, RuleId::R2, 1, None); // base 7, joint 8, growth 9
    g = apply(&g, RuleId::R3, 9, None); // link 10, joint 11, growth 12
    g = apply(&g, RuleId::R9, 12, None);
    g = apply(&g, RuleId::R2, 2, None); // base 13, joint 14, growth 15
    g = apply(&g, RuleId::R3, 15, None); // link 16, joint 17, growth 18
    g = apply(&g, RuleId::R9, 18, None);
    for dummy in 3..=6 {
        g = apply(&g, RuleId::R8, dummy, None);
    }
    // Terminate. Mount indices under the default sets: 2 = (top, -0.03 m,
    // +30 deg), 6 = (top, +0.03 m, -30 deg); stiffness 0 = 0.1 N·m/rad;
    // length 1 = 0.08 m.
    g = apply(&g, RuleId::R4, 0, Some(0));
    g = apply(&g, RuleId::R5, 7, Some(2));
    g = apply(&g, RuleId::R6, 8, Some(0));
    g = apply(&g, RuleId::R7, 10, Some(1));
    g = apply(&g, RuleId::R6, 11, Some(0));
    g = apply(&g, RuleId::R7, 12, Some(1));
    g = apply(&g, RuleId::R5, 13, Some(6));
    g = apply(&g, RuleId::R6, 14, Some(0));
    g = apply(&g, RuleId::R7, 16, Some(1));
    g = apply(&g, RuleId::R6, 17, Some(0));
    g = apply(&g, RuleId::R7, 18, Some(1));
    debug_assert!(grammar.is_terminal(&g));
    g
}

/// A one-finger terminal graph (three phalanges curling over the workspace),
/// useful as a small but simulable design.
pub fn one_finger_graph() -> DesignGraph {
    let grammar = Grammar::default();
    let mut g = init_graph();
    let apply = |g: &DesignGraph, rule, target: u32, param: Option<usize>| {
        grammar
            .apply(
                g,
                &Action {
                    rule,
                    target: Some(target),
                    param,
                },
            )
            .expect("construction sequence is valid")
    };
    g = apply(&g, RuleId::R2, 1, None); // base 7, joint 8, growth 9
    g = apply(&g, RuleId::R3, 9, None); // link 10, joint 11, growth 12
    g = apply(&g, RuleId::R3, 12, None); // link 13, joint 14, growth 15
    g = apply(&g, RuleId::R9, 15, None);
    for dummy in 2..=6 {
        g = apply(&g, RuleId::R8, dummy, None);
    }
    g = apply(&g, RuleId::R4, 0, Some(0));
    g = apply(&g, RuleId::R5, 7, Some(2)); // (top, -0.03 m, +30 deg)
    for joint in [8u32, 11, 14] {
        g = apply(&g, RuleId::R6, joint, Some(0));
    }
    for link in [10u32, 13, 15] {
        g = apply(&g, RuleId::R7, link, Some(1));
    }
    debug_assert!(grammar.is_terminal(&g));
    g
}

/// The constrained desk-scale search: at most two fingers with up to three
/// phalanges, two link lengths, one spring stiffness, two tension levels,
/// top-side mounts only. Small enough to finish in minutes, rich enough to
/// contain designs that secure and hold the default objects.
pub fn desk_search_config() -> Config {
    let mut config = Config::default();
    config.grammar.params = GrammarParams {
        lengths_m: vec![0.05, 0.08],
        stiffnesses_nm_per_rad: vec![0.1],
        mount_sides: vec![PalmSide::Top],
        mount_offsets_m: vec![-0.03, 0.03],
        mount_angles_deg: vec![-30.0, 0.0, 30.0],
    };
    config.grammar.limits = GrammarLimits {
        max_fingers: 2,
        max_phalanges: 3,
        min_fingers: 1,
        depth_cap: 20,
    };
    config.reward.tension_levels_n = vec![10.0, 15.0];
    config.search.iterations = 300;
    config.search.seed = 7;
    config.search.top_k = 5;
    config
}
