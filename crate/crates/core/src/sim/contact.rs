//! Narrow-phase contact detection and the penalty force law.
//!
//! Mechanism bodies (palm and phalanges) are capsules; the object is a disc
//! or a convex polygon. Detection emits at most one contact per body: the
//! deepest penetrating configuration against the object.

use crate::geometry::{ConvexPolygon, Segment, Vec2};
use crate::mechanism::MechanismSpec;

use super::kinematics::FingerKinematics;
use super::{BodyId, Contact, Pose, Shape, SimObject};

/// A capsule body: center-line segment plus radius.
#[derive(Clone, Copy, Debug)]
pub struct BodyCapsule {
    pub body: BodyId,
    pub segment: Segment,
    pub radius_m: f64,
}

/// Penalty-law coefficients.
#[derive(Clone, Copy, Debug)]
pub struct ContactParams {
    /// Normal stiffness, N/m.
    pub stiffness: f64,
    /// Normal damping on the approach rate, N·s/m.
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
    /// Viscous regularization of the friction cone, N·s/m.
    pub friction_reg: f64,
}

/// Lays the palm and every phalanx out as world-frame capsules.
pub fn world_body_capsules(spec: &MechanismSpec, fk: &[FingerKinematics]) -> Vec<BodyCapsule> {
    let mut out = Vec::with_capacity(1 + spec.joint_count());
    let half = (spec.palm.width_m - spec.palm.thickness_m).max(0.0) / 2.0;
    out.push(BodyCapsule {
        body: BodyId::Palm,
        segment: Segment::new(Vec2::new(-half, 0.0), Vec2::new(half, 0.0)),
        radius_m: spec.palm.thickness_m / 2.0,
    });
    for (f, (finger, kin)) in spec.fingers.iter().zip(fk).enumerate() {
        for (l, (phalanx, segment)) in finger.phalanges.iter().zip(&kin.segments).enumerate() {
            out.push(BodyCapsule {
                body: BodyId::Phalanx { finger: f, link: l },
                segment: *segment,
                radius_m: phalanx.thickness_m / 2.0,
            });
        }
    }
    out
}

fn polygon_at(shape: &Shape, pose: &Pose) -> Option<ConvexPolygon> {
    let center = pose.position();
    let verts = match shape {
        Shape::Disc { .. } => return None,
        Shape::Rect { width_m, height_m } => {
            let (hw, hh) = (width_m / 2.0, height_m / 2.0);
            vec![
                Vec2::new(-hw, -hh),
                Vec2::new(hw, -hh),
                Vec2::new(hw, hh),
                Vec2::new(-hw, hh),
            ]
        }
        Shape::RegularPolygon {
            sides,
            circumradius_m,
        } => (0..*sides)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / *sides as f64;
                Vec2::new(circumradius_m * a.cos(), circumradius_m * a.sin())
            })
            .collect(),
    };
    Some(ConvexPolygon::new(
        verts
            .into_iter()
            .map(|v| v.rotated(pose.theta_rad) + center)
            .collect(),
    ))
}

/// Geometric contacts (forces zeroed) between the capsules and the object.
pub fn detect_contacts(
    capsules: &[BodyCapsule],
    object: &SimObject,
    pose: &Pose,
) -> Vec<Contact> {
    let polygon = polygon_at(&object.shape, pose);
    let mut contacts = Vec::new();
    for capsule in capsules {
        let contact = match &object.shape {
            Shape::Disc { radius_m } => capsule_disc(capsule, pose.position(), *radius_m),
            _ => capsule_polygon(capsule, polygon.as_ref().expect("non-disc has a polygon")),
        };
        if let Some(c) = contact {
            contacts.push(c);
        }
    }
    contacts
}

fn capsule_disc(capsule: &BodyCapsule, center: Vec2, radius: f64) -> Option<Contact> {
    let closest = capsule.segment.closest_point(center);
    let delta = center - closest;
    let dist = delta.norm();
    let penetration = capsule.radius_m + radius - dist;
    if penetration <= 0.0 {
        return None;
    }
    let normal = if dist > 1e-12 {
        delta * (1.0 / dist)
    } else {
        // Disc center exactly on the capsule axis: push along the segment
        // normal, deterministically.
        (capsule.segment.b - capsule.segment.a).perp().normalized()
    };
    // Midpoint of the overlapping surfaces.
    let point = (closest + normal * capsule.radius_m + center - normal * radius) * 0.5;
    Some(Contact {
        body: capsule.body,
        point,
        normal,
        penetration_m: penetration,
        force_n: Vec2::ZERO,
    })
}

fn capsule_polygon(capsule: &BodyCapsule, polygon: &ConvexPolygon) -> Option<Contact> {
    let seg = &capsule.segment;
    let crossing = polygon.edges().any(|e| e.intersects(seg));
    let inside = polygon.contains(seg.a) || polygon.contains(seg.b);

    if !crossing && !inside {
        // Separated: exact closest pair over the polygon boundary.
        let mut best: Option<(f64, Vec2, Vec2)> = None;
        for edge in polygon.edges() {
            let (on_seg, on_edge) = seg.closest_points(&edge);
            let d = (on_edge - on_seg).norm();
            if best.as_ref().map_or(true, |(bd, _, _)| d < *bd) {
                best = Some((d, on_seg, on_edge));
            }
        }
        let (dist, on_seg, on_edge) = best?;
        let penetration = capsule.radius_m - dist;
        if penetration <= 0.0 {
            return None;
        }
        let normal = if dist > 1e-12 {
            (on_edge - on_seg) * (1.0 / dist)
        } else {
            (seg.b - seg.a).perp().normalized()
        };
        let point = (on_seg + normal * capsule.radius_m + on_edge) * 0.5;
        return Some(Contact {
            body: capsule.body,
            point,
            normal,
            penetration_m: penetration,
            force_n: Vec2::ZERO,
        });
    }

    // Core penetration (transient overload): take the deepest of the segment
    // endpoints and midpoint, push the object out through its nearest face.
    let mid = (seg.a + seg.b) * 0.5;
    let deepest = [seg.a, seg.b, mid]
        .into_iter()
        .min_by(|p, q| {
            polygon
                .signed_distance(*p)
                .partial_cmp(&polygon.signed_distance(*q))
                .expect("finite distances")
        })
        .expect("three candidates");
    let sd = polygon.signed_distance(deepest);
    let depth_core = (-sd).max(0.0);
    // Nearest face and its outward normal.
    let (edge, _) = polygon
        .edges()
        .map(|e| {
            let d = e.distance_to_point(deepest);
            (e, d)
        })
        .min_by(|(_, d1), (_, d2)| d1.partial_cmp(d2).expect("finite distances"))
        .expect("polygon has edges");
    let outward = -(edge.b - edge.a).perp().normalized(); // CCW polygon: perp points inward
    let normal = -outward;
    let boundary = edge.closest_point(deepest);
    Some(Contact {
        body: capsule.body,
        point: boundary,
        normal,
        penetration_m: capsule.radius_m + depth_core,
        force_n: Vec2::ZERO,
    })
}

/// Fills in contact forces from the penalty law. `rel_vel[i]` is the velocity
/// of the object material point at contact i relative to the mechanism
/// surface (the mechanism side is treated as quasi-static by the caller).
///
/// Normal: `f_n = max(0, k·penetration + c·approach_rate)` — separating
/// contacts carry no force (no adhesion). Tangential: viscous-regularized
/// Coulomb, `|f_t| = min(mu·f_n, c_t·|v_t|)` opposing slip.
pub fn penalty_forces(contacts: &mut [Contact], rel_vel: &[Vec2], params: &ContactParams) {
    debug_assert_eq!(contacts.len(), rel_vel.len());
    for (c, v) in contacts.iter_mut().zip(rel_vel) {
        let approach_rate = -v.dot(c.normal); // positive while penetrating deeper
        let f_n = (params.stiffness * c.penetration_m + params.damping * approach_rate).max(0.0);
        let tangent = c.normal.perp();
        let v_t = v.dot(tangent);
        let f_t = -(params.mu * f_n).min(params.friction_reg * v_t.abs()) * v_t.signum();
        let f_t = if v_t == 0.0 { 0.0 } else { f_t };
        c.force_n = c.normal * f_n + tangent * f_t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn capsule(a: (f64, f64), b: (f64, f64), r: f64) -> BodyCapsule {
        BodyCapsule {
            body: BodyId::Palm,
            segment: Segment::new(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)),
            radius_m: r,
        }
    }

    fn disc(radius_m: f64, x: f64, y: f64) -> (SimObject, Pose) {
        let pose = Pose {
            x_m: x,
            y_m: y,
            theta_rad: 0.0,
        };
        (
            SimObject {
                shape: Shape::Disc { radius_m },
                mass_kg: 0.1,
                initial_pose: pose,
            },
            pose,
        )
    }

    #[test]
    fn far_disc_yields_no_contact() {
        let caps = [capsule((0.0, 0.0), (0.1, 0.0), 0.005)];
        let (obj, pose) = disc(0.03, 0.0, 1.0);
        assert!(detect_contacts(&caps, &obj, &pose).is_empty());
    }

    #[test]
    fn disc_penetration_matches_point_segment_oracle() {
        // Disc center at distance d from the segment: penetration must be
        // r_disc + r_capsule - d.
        let caps = [capsule((-0.1, 0.0), (0.1, 0.0), 0.005)];
        let d = 0.02;
        let (obj, pose) = disc(0.03, 0.03, d);
        let contacts = detect_contacts(&caps, &obj, &pose);
        assert_eq!(contacts.len(), 1);
        assert_abs_diff_eq!(contacts[0].penetration_m, 0.03 + 0.005 - d, epsilon = 1e-12);
        assert_abs_diff_eq!(contacts[0].normal.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(contacts[0].normal.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_pinch_has_opposite_normals() {
        let caps = [
            capsule((-0.034, -0.1), (-0.034, 0.1), 0.005),
            capsule((0.034, -0.1), (0.034, 0.1), 0.005),
        ];
        let (obj, pose) = disc(0.03, 0.0, 0.0);
        let contacts = detect_contacts(&caps, &obj, &pose);
        assert_eq!(contacts.len(), 2);
        assert_abs_diff_eq!(contacts[0].normal.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(contacts[1].normal.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            contacts[0].penetration_m,
            contacts[1].penetration_m,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rect_side_contact() {
        // Vertical capsule brushing the right face of a square.
        let caps = [capsule((0.028, -0.1), (0.028, 0.1), 0.005)];
        let pose = Pose::default();
        let obj = SimObject {
            shape: Shape::Rect {
                width_m: 0.05,
                height_m: 0.05,
            },
            mass_kg: 0.1,
            initial_pose: pose,
        };
        let contacts = detect_contacts(&caps, &obj, &pose);
        assert_eq!(contacts.len(), 1);
        // Gap: 0.028 - 0.025 = 0.003 < capsule radius 0.005.
        assert_abs_diff_eq!(contacts[0].penetration_m, 0.002, epsilon = 1e-12);
        assert_abs_diff_eq!(contacts[0].normal.x, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn hexagon_vertex_contact() {
        let obj = SimObject {
            shape: Shape::RegularPolygon {
                sides: 6,
                circumradius_m: 0.035,
            },
            mass_kg: 0.1,
            initial_pose: Pose::default(),
        };
        // Vertex at (0.035, 0); capsule face at x = 0.037 - 0.005 = 0.032.
        let caps = [capsule((0.037, -0.1), (0.037, 0.1), 0.005)];
        let contacts = detect_contacts(&caps, &obj, &Pose::default());
        assert_eq!(contacts.len(), 1);
        assert_abs_diff_eq!(contacts[0].penetration_m, 0.003, epsilon = 1e-12);
        assert!(contacts[0].normal.x < -0.5);
    }

    #[test]
    fn penalty_law_examples() {
        let params = ContactParams {
            stiffness: 1e4,
            damping: 50.0,
            mu: 0.6,
            friction_reg: 200.0,
        };
        let mk = |pen: f64| Contact {
            body: BodyId::Palm,
            point: Vec2::ZERO,
            normal: Vec2::new(0.0, 1.0),
            penetration_m: pen,
            force_n: Vec2::ZERO,
        };

        // Static 1 mm penetration at k = 1e4 gives 10 N.
        let mut contacts = [mk(1e-3)];
        penalty_forces(&mut contacts, &[Vec2::ZERO], &params);
        assert_abs_diff_eq!(contacts[0].normal_force(), 10.0, epsilon = 1e-9);

        // Fast separation clamps to zero (no adhesion).
        let mut contacts = [mk(1e-4)];
        penalty_forces(&mut contacts, &[Vec2::new(0.0, 10.0)], &params);
        assert_abs_diff_eq!(contacts[0].normal_force(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(contacts[0].force_n.norm(), 0.0, epsilon = 1e-12);

        // Sliding stays inside the friction cone and opposes the slip.
        for slip in [1e-4, 1e-2, 0.5, 3.0] {
            let mut contacts = [mk(5e-4)];
            let slip_vel = Vec2::new(slip, 0.0);
            penalty_forces(&mut contacts, &[slip_vel], &params);
            let f_n = contacts[0].normal_force();
            let tangential = contacts[0].force_n - contacts[0].normal * f_n;
            assert!(tangential.norm() <= params.mu * f_n + 1e-12, "slip {slip}");
            assert!(tangential.dot(slip_vel) <= 0.0, "friction must oppose slip");
        }
    }

    #[test]
    fn deep_overlap_still_produces_outward_push() {
        // Segment passing straight through the square.
        let caps = [capsule((-0.1, 0.01), (0.1, 0.01), 0.005)];
        let pose = Pose::default();
        let obj = SimObject {
            shape: Shape::Rect {
                width_m: 0.05,
                height_m: 0.05,
            },
            mass_kg: 0.1,
            initial_pose: pose,
        };
        let contacts = detect_contacts(&caps, &obj, &pose);
        assert_eq!(contacts.len(), 1);
        assert!(contacts[0].penetration_m > 0.005);
        assert!(contacts[0].normal.norm() > 0.99);
    }
}
