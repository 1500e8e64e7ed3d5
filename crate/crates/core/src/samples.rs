//! Synthetic models used by the examples, the CLI and the test suites.

use std::f64::consts::PI;

use crate::collapse::{CollapseSchedule, CollapseStats, NodeRef, Orientation, TraceSet};
use crate::error::{Error, Result};
use crate::geometry::{involute, PlanarArcCurve, Polyline3, TimedPath, Vec3};
use crate::rod::{Anchor, CrossSection, GridModel, Member, MemberState, RodState, SlidingJoint};

/// Straight strip bent over a circular arc, every vertex anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripSpec {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    pub vertices: usize,
    /// Angle subtended by the wrapped strip.
    pub wrap_angle: f64,
}

impl Default for StripSpec {
    fn default() -> Self {
        Self {
            length: 1.0,
            width: 0.02,
            thickness: 0.002,
            youngs_modulus: 1e10,
            shear_modulus: 4e9,
            vertices: 101,
            wrap_angle: PI / 2.0,
        }
    }
}

impl StripSpec {
    pub fn radius(&self) -> f64 {
        self.length / self.wrap_angle
    }

    /// Point of the arc at signed arc length `s` from the strip middle.
    /// The arc lies in the `x-z` plane and bulges towards `+z`.
    pub fn arc_point(&self, s: f64) -> Vec3 {
        let r = self.radius();
        Vec3::new(r * (s / r).sin(), 0.0, r * ((s / r).cos() - 1.0))
    }

    fn arc_normal(&self, s: f64) -> Vec3 {
        let r = self.radius();
        Vec3::new((s / r).sin(), 0.0, (s / r).cos())
    }

    /// Involute traced by the strip end on side `sign` (+1 or −1) as the half
    /// strip unwraps from the middle; `t = 0` is the straight strip.
    pub fn end_involute(&self, sign: f64, samples: usize) -> Result<TimedPath> {
        let half = 0.5 * self.length;
        let curve = PlanarArcCurve::from_fn(|u| self.arc_point(sign * u), 0.0, half, 2000)?;
        involute(&curve, half, samples)
    }
}

pub fn wrapped_strip(spec: &StripSpec) -> Result<GridModel> {
    if spec.vertices < 3 || !(spec.wrap_angle > 0.0 && spec.wrap_angle < 2.0 * PI) {
        return Err(Error::invalid("strip needs >= 3 vertices and a wrap angle in (0, 2π)"));
    }
    let cs = CrossSection::new(spec.width, spec.thickness, spec.youngs_modulus, spec.shear_modulus)?;
    let h = spec.length / (spec.vertices - 1) as f64;
    let s: Vec<f64> = (0..spec.vertices).map(|i| -0.5 * spec.length + h * i as f64).collect();
    let rest = Polyline3::new(s.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect())?;
    let member = Member::new("strip", rest, cs)?;
    let positions: Vec<Vec3> = s.iter().map(|&x| spec.arc_point(x)).collect();
    let normals: Vec<Vec3> = s.windows(2).map(|w| spec.arc_normal(0.5 * (w[0] + w[1]))).collect();
    let anchors = positions
        .iter()
        .enumerate()
        .map(|(vertex, p)| Anchor {
            member: 0,
            vertex,
            target: *p,
        })
        .collect();
    let deployed = RodState {
        members: vec![MemberState::with_normals(positions, &normals)],
        slides: vec![],
    };
    GridModel::new(vec![member], vec![], anchors, deployed)
}

/// Two families of great-circle lamellae over a spherical cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomeSpec {
    pub radius: f64,
    /// Members per family.
    pub count: usize,
    /// Angle between neighbouring members of a family.
    pub spacing: f64,
    /// Half of the angle subtended by each member.
    pub half_angle: f64,
    /// Target edge length.
    pub edge: f64,
    pub width: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    /// Half length of every joint hole.
    pub hole: f64,
}

impl Default for DomeSpec {
    fn default() -> Self {
        Self {
            radius: 1.5,
            count: 5,
            spacing: 0.15,
            half_angle: 0.7,
            edge: 0.05,
            width: 0.03,
            thickness: 0.004,
            youngs_modulus: 1e10,
            shear_modulus: 6e8,
            hole: 0.05,
        }
    }
}

/// Vertices along `[-half, half]` (angles) at about `step`, with `extra` angles inserted.
fn member_angles(half: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let segments = (2.0 * half / step).round().max(1.0) as usize;
    let mut angles: Vec<f64> = (0..=segments)
        .map(|i| -half + 2.0 * half * i as f64 / segments as f64)
        .filter(|a| extra.iter().all(|e| (a - e).abs() > 0.3 * step))
        .collect();
    angles.extend_from_slice(extra);
    angles.sort_by(f64::total_cmp);
    angles
}

pub fn dome(spec: &DomeSpec) -> Result<GridModel> {
    let r = spec.radius;
    let center = Vec3::new(0.0, 0.0, -r);
    let cs = CrossSection::new(spec.width, spec.thickness, spec.youngs_modulus, spec.shear_modulus)?;
    let offsets: Vec<f64> = (0..spec.count)
        .map(|i| (i as f64 - 0.5 * (spec.count - 1) as f64) * spec.spacing)
        .collect();
    // A members lie in planes through the x axis, B members in planes through the y axis
    let a_dir = |alpha: f64| Vec3::new(0.0, alpha.sin(), alpha.cos());
    let b_dir = |beta: f64| Vec3::new(beta.sin(), 0.0, beta.cos());
    let a_point = |alpha: f64, phi: f64| center + (Vec3::x() * phi.sin() + a_dir(alpha) * phi.cos()) * r;
    let b_point = |beta: f64, psi: f64| center + (b_dir(beta) * psi.cos() + Vec3::y() * psi.sin()) * r;

    // crossing angles along A_i and B_j
    let mut phi = vec![vec![0.0; spec.count]; spec.count];
    let mut psi = vec![vec![0.0; spec.count]; spec.count];
    for (i, &alpha) in offsets.iter().enumerate() {
        for (j, &beta) in offsets.iter().enumerate() {
            let na = Vec3::new(0.0, -alpha.cos(), alpha.sin());
            let nb = Vec3::new(beta.cos(), 0.0, -beta.sin());
            let mut d = na.cross(&nb).normalize();
            if d.z < 0.0 {
                d = -d;
            }
            phi[i][j] = d.x.atan2(d.dot(&a_dir(alpha)));
            psi[i][j] = d.y.atan2(d.dot(&b_dir(beta)));
            if phi[i][j].abs() >= spec.half_angle || psi[i][j].abs() >= spec.half_angle {
                return Err(Error::invalid("dome members are too short to reach every crossing"));
            }
        }
    }

    let step = spec.edge / r;
    let mut members = Vec::new();
    let mut states = Vec::new();
    let mut anchors = Vec::new();
    let mut crossing_vertex = vec![vec![[0usize; 2]; spec.count]; spec.count];
    for family in 0..2 {
        for (i, &offset) in offsets.iter().enumerate() {
            let crossings: Vec<f64> = (0..spec.count)
                .map(|k| if family == 0 { phi[i][k] } else { psi[k][i] })
                .collect();
            let angles = member_angles(spec.half_angle, step, &crossings);
            for (k, c) in crossings.iter().enumerate() {
                let v = angles.iter().position(|a| a == c).unwrap();
                if family == 0 {
                    crossing_vertex[i][k][0] = v;
                } else {
                    crossing_vertex[k][i][1] = v;
                }
            }
            let (rest, positions): (Vec<Vec3>, Vec<Vec3>) = angles
                .iter()
                .map(|&a| {
                    if family == 0 {
                        (Vec3::new(r * a, r * offset, 0.0), a_point(offset, a))
                    } else {
                        (Vec3::new(r * offset, r * a, 0.0), b_point(offset, a))
                    }
                })
                .unzip();
            let normals: Vec<Vec3> = positions
                .windows(2)
                .map(|w| (0.5 * (w[0] + w[1]) - center).normalize())
                .collect();
            let m = members.len();
            let id = format!("{}{i}", if family == 0 { 'A' } else { 'B' });
            members.push(Member::new(id, Polyline3::new(rest)?, cs)?);
            anchors.extend(positions.iter().enumerate().map(|(vertex, p)| Anchor {
                member: m,
                vertex,
                target: *p,
            }));
            states.push(MemberState::with_normals(positions, &normals));
        }
    }

    let mut joints = Vec::new();
    let mut slides = Vec::new();
    for (i, row) in crossing_vertex.iter().enumerate() {
        for (j, vertices) in row.iter().enumerate() {
            let (ma, mb) = (i, spec.count + j);
            let hole = |m: usize, v: usize| -> ([f64; 2], f64) {
                let s = members[m].rest_arclength()[v];
                let lo = (s - spec.hole).max(0.0);
                let hi = (s + spec.hole).min(members[m].rest_length());
                ([lo, hi], (s - lo) / (hi - lo))
            };
            let (hole_a, t1) = hole(ma, vertices[0]);
            let (hole_b, t2) = hole(mb, vertices[1]);
            joints.push(SlidingJoint {
                member_a: ma,
                member_b: mb,
                hole_a,
                hole_b,
            });
            slides.push([t1, t2]);
        }
    }
    let deployed = RodState {
        members: states,
        slides,
    };
    GridModel::new(members, joints, anchors, deployed)
}

/// Both end vertices of every first-family member.
pub fn dome_traced_nodes(grid: &GridModel) -> Vec<NodeRef> {
    grid.members()
        .iter()
        .filter(|m| m.id().starts_with('A'))
        .flat_map(|m| {
            [0, m.vertex_count() - 1].map(|vertex| NodeRef {
                member: m.id().to_string(),
                vertex,
            })
        })
        .collect()
}

/// A lamella of length π wrapped onto the unit circle, as a deployment trace
/// of its two ends: the root stays at `(1, 0, 0)`, the tip follows the involute.
pub fn semicircle_wrap(vertices: usize, samples: usize) -> Result<(GridModel, TraceSet)> {
    let cs = CrossSection::new(0.02, 0.002, 1e10, 4e9)?;
    let s: Vec<f64> = (0..vertices).map(|i| PI * i as f64 / (vertices - 1) as f64).collect();
    let rest = Polyline3::new(s.iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect())?;
    let member = Member::new("lamella", rest, cs)?;
    let positions: Vec<Vec3> = s.iter().map(|&u| Vec3::new(u.cos(), u.sin(), 0.0)).collect();
    let normals: Vec<Vec3> = s
        .windows(2)
        .map(|w| {
            let u = 0.5 * (w[0] + w[1]);
            Vec3::new(u.cos(), u.sin(), 0.0)
        })
        .collect();
    let grid = GridModel::new(
        vec![member],
        vec![],
        vec![],
        RodState {
            members: vec![MemberState::with_normals(positions, &normals)],
            slides: vec![],
        },
    )?;
    let curve = PlanarArcCurve::from_fn(|u| Vec3::new(u.cos(), u.sin(), 0.0), 0.0, PI, 4000)?;
    let tip = involute(&curve, PI, samples)?;
    let root = TimedPath::new(vec![Vec3::new(1.0, 0.0, 0.0); samples], tip.times().to_vec())?;
    let trace = TraceSet {
        nodes: vec![
            NodeRef {
                member: "lamella".into(),
                vertex: 0,
            },
            NodeRef {
                member: "lamella".into(),
                vertex: vertices - 1,
            },
        ],
        weights: tip.times().iter().map(|t| 1.0 - t).collect(),
        paths: vec![root, tip],
        orientation: Orientation::Deployment,
        stats: CollapseStats {
            accepted_steps: samples - 1,
            rejected_steps: 0,
            relax_iterations: 0,
            max_length_drift: 0.0,
        },
        model_fingerprint: crate::io::model_fingerprint(&grid),
        schedule: CollapseSchedule::for_grid(&grid),
    };
    Ok((grid, trace))
}
