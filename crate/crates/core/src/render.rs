//! SVG rendering of simulation frames.
//!
//! Output is deterministic vector graphics: fixed viewport, fixed-precision
//! coordinates, no timestamps, so frames are diffable in tests.

use std::fmt::Write as _;

use crate::geometry::Vec2;
use crate::mechanism::MechanismSpec;
use crate::sim::{forward_kinematics, Contact, Pose, Shape, SimObject, SimTrace};

/// World-to-image mapping and canvas size.
#[derive(Clone, Copy, Debug)]
pub struct Viewport {
    pub world_min: Vec2,
    pub world_max: Vec2,
    pub width_px: f64,
}

impl Default for Viewport {
    fn default() -> Self {
        Viewport {
            world_min: Vec2::new(-0.16, -0.08),
            world_max: Vec2::new(0.16, 0.24),
            width_px: 640.0,
        }
    }
}

impl Viewport {
    fn scale(&self) -> f64 {
        self.width_px / (self.world_max.x - self.world_min.x)
    }

    fn height_px(&self) -> f64 {
        (self.world_max.y - self.world_min.y) * self.scale()
    }

    /// World point to pixel coordinates (SVG y points down).
    fn map(&self, p: Vec2) -> (f64, f64) {
        let s = self.scale();
        ((p.x - self.world_min.x) * s, (self.world_max.y - p.y) * s)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn capsule_line(out: &mut String, vp: &Viewport, a: Vec2, b: Vec2, thickness_m: f64, color: &str) {
    let (x1, y1) = vp.map(a);
    let (x2, y2) = vp.map(b);
    let w = thickness_m * vp.scale();
    let _ = writeln!(
        out,
        r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="{}" stroke-linecap="round"/>"#,
        px(x1),
        px(y1),
        px(x2),
        px(y2),
        px(w)
    );
}

/// Renders one frame: palm, fingers at the given joint angles, the object,
/// and the current contacts with force arrows.
pub fn render_frame(
    spec: &MechanismSpec,
    object: &SimObject,
    pose: &Pose,
    q: &[Vec<f64>],
    contacts: &[Contact],
    t_s: f64,
    vp: &Viewport,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        px(vp.width_px),
        px(vp.height_px()),
        px(vp.width_px),
        px(vp.height_px())
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);

    // Palm.
    let half = (spec.palm.width_m - spec.palm.thickness_m).max(0.0) / 2.0;
    capsule_line(
        &mut out,
        vp,
        Vec2::new(-half, 0.0),
        Vec2::new(half, 0.0),
        spec.palm.thickness_m,
        "#444444",
    );

    // Fingers.
    if let Ok(fk) = forward_kinematics(spec, q) {
        for (finger, kin) in spec.fingers.iter().zip(&fk) {
            for (phalanx, segment) in finger.phalanges.iter().zip(&kin.segments) {
                capsule_line(
                    &mut out,
                    vp,
                    segment.a,
                    segment.b,
                    phalanx.thickness_m,
                    "#1565c0",
                );
            }
        }
    }

    // Object.
    let center = pose.position();
    match object.shape {
        Shape::Disc { radius_m } => {
            let (cx, cy) = vp.map(center);
            let _ = writeln!(
                out,
                r##"  <circle cx="{}" cy="{}" r="{}" fill="#ffb74d" stroke="#e65100" stroke-width="1.5"/>"##,
                px(cx),
                px(cy),
                px(radius_m * vp.scale())
            );
        }
        Shape::Rect { width_m, height_m } => {
            polygon_element(&mut out, vp, &rect_vertices(width_m, height_m), pose);
        }
        Shape::RegularPolygon {
            sides,
            circumradius_m,
        } => {
            let verts: Vec<Vec2> = (0..sides)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / sides as f64;
                    Vec2::new(circumradius_m * a.cos(), circumradius_m * a.sin())
                })
                .collect();
            polygon_element(&mut out, vp, &verts, pose);
        }
    }

    // Contacts and their force arrows (1 N = 2 cm of arrow).
    for c in contacts {
        let (cx, cy) = vp.map(c.point);
        let _ = writeln!(
            out,
            r##"  <circle cx="{}" cy="{}" r="3" fill="#d32f2f"/>"##,
            px(cx),
            px(cy)
        );
        let f = c.force_n;
        if f.norm() > 1e-9 {
            let tip = c.point + f * 0.02;
            let (tx, ty) = vp.map(tip);
            let _ = writeln!(
                out,
                r##"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#2e7d32" stroke-width="1.5"/>"##,
                px(cx),
                px(cy),
                px(tx),
                px(ty)
            );
        }
    }

    let _ = writeln!(
        out,
        r#"  <text x="8" y="18" font-family="monospace" font-size="14">t = {t_s:.3} s</text>"#
    );
    out.push_str("</svg>\n");
    out
}

fn rect_vertices(width_m: f64, height_m: f64) -> Vec<Vec2> {
    let (hw, hh) = (width_m / 2.0, height_m / 2.0);
    vec![
        Vec2::new(-hw, -hh),
        Vec2::new(hw, -hh),
        Vec2::new(hw, hh),
        Vec2::new(-hw, hh),
    ]
}

fn polygon_element(out: &mut String, vp: &Viewport, local_verts: &[Vec2], pose: &Pose) {
    let points: Vec<String> = local_verts
        .iter()
        .map(|v| {
            let w = v.rotated(pose.theta_rad) + pose.position();
            let (x, y) = vp.map(w);
            format!("{},{}", px(x), px(y))
        })
        .collect();
    let _ = writeln!(
        out,
        r##"  <polygon points="{}" fill="#ffb74d" stroke="#e65100" stroke-width="1.5"/>"##,
        points.join(" ")
    );
}

/// Samples the trace at (approximately) `interval_s` and renders each sample.
/// Returns `(t, svg)` pairs; at least the first and last samples are present.
pub fn render_trace_frames(
    spec: &MechanismSpec,
    object: &SimObject,
    trace: &SimTrace,
    interval_s: f64,
    vp: &Viewport,
) -> Vec<(f64, String)> {
    let mut frames = Vec::new();
    let mut next_t = 0.0;
    let n = trace.object_path.len();
    for (i, ((t, pose), (_, contacts))) in trace
        .object_path
        .iter()
        .zip(&trace.contact_snapshots)
        .enumerate()
    {
        let q = &trace.joint_path[i].1;
        if *t + 1e-12 >= next_t || i == n - 1 {
            frames.push((
                *t,
                render_frame(spec, object, pose, q, contacts, *t, vp),
            ));
            next_t = *t + interval_s;
        }
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn frame_is_wellformed_and_deterministic() {
        let spec = scenarios::reference_two_finger_spec();
        let object = scenarios::disc_object();
        let pose = object.initial_pose;
        let q = vec![vec![0.2, 0.3], vec![0.2, 0.3]];
        let a = render_frame(&spec, &object, &pose, &q, &[], 0.5, &Viewport::default());
        let b = render_frame(&spec, &object, &pose, &q, &[], 0.5, &Viewport::default());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("<circle")); // the disc
        assert!(a.matches("<line").count() >= 5); // palm + 4 phalanges
    }

    #[test]
    fn all_shapes_render() {
        let spec = scenarios::reference_two_finger_spec();
        let q = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        for named in crate::config::default_objects() {
            let svg = render_frame(
                &spec,
                &named.object,
                &named.object.initial_pose.clone(),
                &q,
                &[],
                0.0,
                &Viewport::default(),
            );
            assert!(svg.contains("<circle") || svg.contains("<polygon"));
        }
    }
}
