//! Discrete elastic rod model of a lamella grid.
//!
//! Members are straight or planar-curved strips whose flat layout lies in a
//! plane of constant `z`. Each edge carries a twist angle measured against a
//! reference frame that is parallel-transported in time as the state evolves.
//! Sliding joints couple two members through a pair of hole segments.

mod energy;

pub use energy::{
    anchor_energy, bend_energy, energy_value, joint_energy, stretch_energy, total_energy, twist_energy, EnergyEval,
    EnergyWeights, Terms,
};
pub(crate) use energy::{assemble_system, System};

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Polyline3, Vec3};

/// Rectangular lamella cross-section and material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub width: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
}

impl CrossSection {
    pub fn new(width: f64, thickness: f64, youngs_modulus: f64, shear_modulus: f64) -> Result<Self> {
        let cs = Self {
            width,
            thickness,
            youngs_modulus,
            shear_modulus,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.width) || !positive(self.thickness) {
            return Err(Error::invalid("cross-section width and thickness must be > 0"));
        }
        if self.thickness > self.width {
            return Err(Error::invalid("cross-section thickness must not exceed its width"));
        }
        if !positive(self.youngs_modulus) || !positive(self.shear_modulus) {
            return Err(Error::invalid("elastic moduli must be > 0"));
        }
        Ok(())
    }

    /// `E·w·r`
    pub fn axial_stiffness(&self) -> f64 {
        self.youngs_modulus * self.width * self.thickness
    }

    /// Bending out of the lamella plane, `E·w·r³/12`.
    pub fn flatwise_bending(&self) -> f64 {
        self.youngs_modulus * self.width * self.thickness.powi(3) / 12.0
    }

    /// Bending within the lamella plane, `E·w³·r/12`.
    pub fn edgewise_bending(&self) -> f64 {
        self.youngs_modulus * self.width.powi(3) * self.thickness / 12.0
    }

    /// Saint-Venant approximation for a thin rectangle.
    pub fn torsion_constant(&self) -> f64 {
        let (w, r) = (self.width, self.thickness);
        w * r.powi(3) * (1.0 / 3.0 - 0.21 * (r / w) * (1.0 - r.powi(4) / (12.0 * w.powi(4))))
    }

    pub fn torsional_stiffness(&self) -> f64 {
        self.shear_modulus * self.torsion_constant()
    }
}

/// Rest-state quantities cached per member.
#[derive(Debug, Clone)]
pub(crate) struct RestData {
    pub edge_lengths: Vec<f64>,
    pub arclength: Vec<f64>,
    /// `|ē_{i-1}| + |ē_i|` for interior vertex `i` (index `i - 1`).
    pub voronoi: Vec<f64>,
    /// Rest material curvatures for interior vertex `i`, for edges `i-1` and `i`.
    pub curvature: Vec<[[f64; 2]; 2]>,
    pub twist: Vec<f64>,
}

/// A lamella with its flat rest centerline.
#[derive(Debug, Clone)]
pub struct Member {
    id: String,
    rest_centerline: Polyline3,
    cross_section: CrossSection,
    pub(crate) rest: RestData,
}

/// Director normal to the flat layout plane.
pub const LAYOUT_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

impl Member {
    pub fn new(id: impl Into<String>, rest_centerline: Polyline3, cross_section: CrossSection) -> Result<Self> {
        let id = id.into();
        cross_section.validate()?;
        let verts = rest_centerline.vertices();
        let length = rest_centerline.length();
        let z0 = verts[0].z;
        if verts.iter().any(|v| (v.z - z0).abs() > 1e-9 * length.max(1.0)) {
            return Err(Error::invalid(format!(
                "member `{id}`: rest centerline must lie in a plane of constant z"
            )));
        }
        let frames = MemberState::rest(&rest_centerline);
        let edge_lengths = rest_centerline.edge_lengths();
        let n = verts.len();
        let mut voronoi = Vec::with_capacity(n.saturating_sub(2));
        let mut curvature = Vec::with_capacity(n.saturating_sub(2));
        let mut twist = Vec::with_capacity(n.saturating_sub(2));
        for i in 1..n.saturating_sub(1) {
            let out = energy::stencil_f64(&frames, i)
                .map_err(|e| Error::invalid(format!("member `{id}` rest shape: {e}")))?;
            voronoi.push(edge_lengths[i - 1] + edge_lengths[i]);
            curvature.push(out.omega);
            twist.push(out.twist);
        }
        let rest = RestData {
            arclength: rest_centerline.cumulative_lengths(),
            edge_lengths,
            voronoi,
            curvature,
            twist,
        };
        Ok(Self {
            id,
            rest_centerline,
            cross_section,
            rest,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rest_centerline(&self) -> &Polyline3 {
        &self.rest_centerline
    }

    pub fn cross_section(&self) -> &CrossSection {
        &self.cross_section
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_centerline.vertex_count()
    }

    pub fn rest_length(&self) -> f64 {
        *self.rest.arclength.last().unwrap()
    }

    /// Rest arc length at each vertex.
    pub fn rest_arclength(&self) -> &[f64] {
        &self.rest.arclength
    }

    /// Edge index and interpolation weight for rest arc length `s`.
    pub(crate) fn locate(&self, s: f64) -> (usize, f64) {
        let cum = &self.rest.arclength;
        let edges = cum.len() - 1;
        let e = cum.partition_point(|&c| c <= s).saturating_sub(1).min(edges - 1);
        let alpha = ((s - cum[e]) / self.rest.edge_lengths[e]).clamp(0.0, 1.0);
        (e, alpha)
    }
}

/// Sliding connection between two members: a point constrained to a hole
/// segment on each, with the two points forced to coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingJoint {
    pub member_a: usize,
    pub member_b: usize,
    /// Rest arc-length interval `[s_A, s_B]` on `member_a`.
    pub hole_a: [f64; 2],
    /// Rest arc-length interval `[s_C, s_D]` on `member_b`.
    pub hole_b: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HoleEnds {
    /// (edge, weight) for the two ends of each hole: A, B on member_a; C, D on member_b.
    pub ends: [(usize, f64); 4],
}

/// Quadratic pull of one vertex toward a fixed target.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub member: usize,
    pub vertex: usize,
    pub target: Vec3,
}

/// Degrees of freedom of one member plus its reference frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberState {
    pub positions: Vec<Vec3>,
    /// Material frame angle per edge, relative to the reference frame.
    pub twists: Vec<f64>,
    ref_tangents: Vec<Vec3>,
    ref_directors: Vec<Vec3>,
}

impl MemberState {
    /// Flat rest configuration: untwisted, second director along the layout normal.
    pub fn rest(centerline: &Polyline3) -> Self {
        let normal = Vec3::from(LAYOUT_NORMAL);
        let normals = vec![normal; centerline.vertex_count() - 1];
        Self::with_normals(centerline.vertices().to_vec(), &normals)
    }

    /// Builds frames whose second director follows the given per-edge normals
    /// (projected perpendicular to each edge). Twist angles start at zero.
    pub fn with_normals(positions: Vec<Vec3>, normals: &[Vec3]) -> Self {
        let mut ref_tangents = Vec::with_capacity(normals.len());
        let mut ref_directors = Vec::with_capacity(normals.len());
        for (e, n) in normals.iter().enumerate() {
            let t = (positions[e + 1] - positions[e]).normalize();
            let mut d2 = n - t * n.dot(&t);
            if d2.norm() < 1e-12 {
                d2 = any_perpendicular(&t);
            }
            let d2 = d2.normalize();
            ref_tangents.push(t);
            ref_directors.push(d2.cross(&t));
        }
        Self {
            twists: vec![0.0; normals.len()],
            positions,
            ref_tangents,
            ref_directors,
        }
    }

    /// Frames obtained by parallel transport along the centerline from a
    /// first-edge frame whose second director follows `first_normal`.
    pub fn transported(positions: Vec<Vec3>, first_normal: Vec3) -> Self {
        let n = positions.len();
        let mut normals = Vec::with_capacity(n - 1);
        let mut prev_t = (positions[1] - positions[0]).normalize();
        let mut d2 = first_normal - prev_t * first_normal.dot(&prev_t);
        for e in 0..n - 1 {
            let t = (positions[e + 1] - positions[e]).normalize();
            d2 = transport(&prev_t, &t, &d2);
            normals.push(d2);
            prev_t = t;
        }
        Self::with_normals(positions, &normals)
    }

    pub fn edge_count(&self) -> usize {
        self.twists.len()
    }

    /// Reference director `d1` and tangent for edge `e`.
    pub fn reference_frame(&self, e: usize) -> (Vec3, Vec3) {
        (self.ref_tangents[e], self.ref_directors[e])
    }

    /// Material frame `(t, m1, m2)` of edge `e` at the current positions.
    pub fn material_frame(&self, e: usize) -> [Vec3; 3] {
        let t = (self.positions[e + 1] - self.positions[e]).normalize();
        let d1 = transport(&self.ref_tangents[e], &t, &self.ref_directors[e]);
        let d2 = t.cross(&d1);
        let (s, c) = self.twists[e].sin_cos();
        [t, d1 * c + d2 * s, -d1 * s + d2 * c]
    }

    fn update_reference(&mut self) -> Result<()> {
        for e in 0..self.edge_count() {
            let d = self.positions[e + 1] - self.positions[e];
            let len = d.norm();
            if len == 0.0 {
                return Err(Error::singular(format!("edge {e} has zero length")));
            }
            let t = d / len;
            if 1.0 + self.ref_tangents[e].dot(&t) < 1e-10 {
                return Err(Error::singular(format!("edge {e} flipped against its reference frame")));
            }
            let d1 = transport(&self.ref_tangents[e], &t, &self.ref_directors[e]);
            let d1 = (d1 - t * d1.dot(&t)).normalize();
            self.ref_tangents[e] = t;
            self.ref_directors[e] = d1;
        }
        Ok(())
    }

    fn frames_orthonormal(&self, tol: f64) -> bool {
        self.ref_tangents
            .iter()
            .zip(&self.ref_directors)
            .all(|(t, d)| (t.norm() - 1.0).abs() < tol && (d.norm() - 1.0).abs() < tol && t.dot(d).abs() < tol)
    }

    pub fn centerline_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Rotation taking unit `a` to unit `b` about `a × b`, applied to `v`.
pub(crate) fn transport(a: &Vec3, b: &Vec3, v: &Vec3) -> Vec3 {
    let c = a.dot(b);
    let axis = a.cross(b);
    v * c + axis.cross(v) + axis * (axis.dot(v) / (1.0 + c))
}

fn any_perpendicular(t: &Vec3) -> Vec3 {
    let helper = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    t.cross(&helper).normalize()
}

/// Full simulation state: member vertices, twists and joint sliding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub members: Vec<MemberState>,
    /// `(t1, t2)` per joint.
    pub slides: Vec<[f64; 2]>,
}

impl RodState {
    /// Re-bases every reference frame on the current tangents.
    pub fn update_reference_frames(&mut self) -> Result<()> {
        self.members.iter_mut().try_for_each(MemberState::update_reference)
    }

    pub fn frames_orthonormal(&self, tol: f64) -> bool {
        self.members.iter().all(|m| m.frames_orthonormal(tol))
    }

    /// Rigidly moved copy (positions and frames rotated, then translated).
    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: &Vector3<f64>) -> RodState {
        RodState {
            members: self
                .members
                .iter()
                .map(|m| MemberState {
                    positions: m.positions.iter().map(|p| rotation * p + translation).collect(),
                    twists: m.twists.clone(),
                    ref_tangents: m.ref_tangents.iter().map(|t| rotation * t).collect(),
                    ref_directors: m.ref_directors.iter().map(|d| rotation * d).collect(),
                })
                .collect(),
            slides: self.slides.clone(),
        }
    }

    pub fn to_dofs(&self, layout: &DofLayout) -> Vec<f64> {
        let mut x = vec![0.0; layout.len()];
        for (m, ms) in self.members.iter().enumerate() {
            for (v, p) in ms.positions.iter().enumerate() {
                let o = layout.position(m, v);
                x[o..o + 3].copy_from_slice(p.as_slice());
            }
            for (e, th) in ms.twists.iter().enumerate() {
                x[layout.twist(m, e)] = *th;
            }
        }
        for (j, s) in self.slides.iter().enumerate() {
            x[layout.slide(j, 0)] = s[0];
            x[layout.slide(j, 1)] = s[1];
        }
        x
    }

    /// Overwrites the degrees of freedom; reference frames are left untouched.
    pub fn set_dofs(&mut self, layout: &DofLayout, x: &[f64]) {
        for (m, ms) in self.members.iter_mut().enumerate() {
            for (v, p) in ms.positions.iter_mut().enumerate() {
                let o = layout.position(m, v);
                *p = Vec3::new(x[o], x[o + 1], x[o + 2]);
            }
            for (e, th) in ms.twists.iter_mut().enumerate() {
                *th = x[layout.twist(m, e)];
            }
        }
        for (j, s) in self.slides.iter_mut().enumerate() {
            *s = [x[layout.slide(j, 0)], x[layout.slide(j, 1)]];
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.members.iter().map(|m| m.positions.len()).sum()
    }

    /// Mean distance between corresponding vertices of two states.
    pub fn mean_displacement(&self, other: &RodState) -> f64 {
        let (sum, count) = self
            .members
            .iter()
            .zip(&other.members)
            .flat_map(|(a, b)| a.positions.iter().zip(&b.positions))
            .fold((0.0, 0usize), |(s, c), (p, q)| (s + (p - q).norm(), c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn position(&self, member: usize, vertex: usize) -> Vec3 {
        self.members[member].positions[vertex]
    }
}

/// Flat index map of the state's degrees of freedom: per member the vertex
/// coordinates then the edge twists, followed by the joint sliding coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofLayout {
    position_offsets: Vec<usize>,
    twist_offsets: Vec<usize>,
    slide_offset: usize,
    len: usize,
}

impl DofLayout {
    pub fn new(grid: &GridModel) -> Self {
        let mut position_offsets = Vec::with_capacity(grid.members.len());
        let mut twist_offsets = Vec::with_capacity(grid.members.len());
        let mut o = 0;
        for m in &grid.members {
            let n = m.vertex_count();
            position_offsets.push(o);
            o += 3 * n;
            twist_offsets.push(o);
            o += n - 1;
        }
        let slide_offset = o;
        Self {
            position_offsets,
            twist_offsets,
            slide_offset,
            len: slide_offset + 2 * grid.joints.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn position(&self, member: usize, vertex: usize) -> usize {
        self.position_offsets[member] + 3 * vertex
    }

    #[inline]
    pub fn twist(&self, member: usize, edge: usize) -> usize {
        self.twist_offsets[member] + edge
    }

    #[inline]
    pub fn slide(&self, joint: usize, which: usize) -> usize {
        self.slide_offset + 2 * joint + which
    }

    /// First index of the joint sliding coordinates.
    pub fn slide_start(&self) -> usize {
        self.slide_offset
    }

    /// Length units of each dof: 1 for coordinates, 0 for angles and slides.
    pub fn is_position(&self, dof: usize) -> bool {
        if dof >= self.slide_offset {
            return false;
        }
        let m = self.position_offsets.partition_point(|&o| o <= dof) - 1;
        dof < self.twist_offsets[m]
    }
}

/// Members, joints, anchors and the deployed configuration.
#[derive(Debug, Clone)]
pub struct GridModel {
    members: Vec<Member>,
    joints: Vec<SlidingJoint>,
    hole_ends: Vec<HoleEnds>,
    anchors: Vec<Anchor>,
    deployed: RodState,
}

impl GridModel {
    pub fn new(
        members: Vec<Member>,
        joints: Vec<SlidingJoint>,
        anchors: Vec<Anchor>,
        deployed: RodState,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("grid has no members"));
        }
        for (i, a) in members.iter().enumerate() {
            if members[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::invalid(format!("duplicate member id `{}`", a.id)));
            }
        }
        let mut hole_ends = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            let (Some(ma), Some(mb)) = (members.get(joint.member_a), members.get(joint.member_b)) else {
                return Err(Error::invalid(format!("joint {j} references a missing member")));
            };
            if joint.member_a == joint.member_b {
                return Err(Error::invalid(format!("joint {j} connects a member to itself")));
            }
            for (hole, m) in [(joint.hole_a, ma), (joint.hole_b, mb)] {
                let ok = hole.iter().all(|s| s.is_finite())
                    && hole[1] > hole[0]
                    && hole[0] >= 0.0
                    && hole[1] <= m.rest_length() * (1.0 + 1e-12);
                if !ok {
                    return Err(Error::invalid(format!(
                        "joint {j}: hole [{}, {}] must be a positive-length interval within member `{}` (length {})",
                        hole[0],
                        hole[1],
                        m.id,
                        m.rest_length()
                    )));
                }
            }
            hole_ends.push(HoleEnds {
                ends: [
                    ma.locate(joint.hole_a[0]),
                    ma.locate(joint.hole_a[1]),
                    mb.locate(joint.hole_b[0]),
                    mb.locate(joint.hole_b[1]),
                ],
            });
        }
        for (i, a) in anchors.iter().enumerate() {
            let Some(m) = members.get(a.member) else {
                return Err(Error::invalid(format!("anchor {i} references a missing member")));
            };
            if a.vertex >= m.vertex_count() {
                return Err(Error::invalid(format!(
                    "anchor {i}: vertex {} does not exist on member `{}`",
                    a.vertex, m.id
                )));
            }
            if !a.target.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("anchor {i}: target is not finite")));
            }
        }
        let grid = Self {
            members,
            joints,
            hole_ends,
            anchors,
            deployed,
        };
        grid.check_state(&grid.deployed)?;
        Ok(grid)
    }

    /// Checks that `state` has the shape this grid expects.
    pub fn check_state(&self, state: &RodState) -> Result<()> {
        if state.members.len() != self.members.len() {
            return Err(Error::invalid(format!(
                "state has {} members, grid has {}",
                state.members.len(),
                self.members.len()
            )));
        }
        for (m, (ms, member)) in state.members.iter().zip(&self.members).enumerate() {
            let n = member.vertex_count();
            if ms.positions.len() != n || ms.twists.len() != n - 1 || ms.ref_tangents.len() != n - 1 {
                return Err(Error::invalid(format!(
                    "state of member {m} (`{}`) does not match its {n} rest vertices",
                    member.id
                )));
            }
            if ms.positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(Error::invalid(format!("state of member `{}` is not finite", member.id)));
            }
        }
        if state.slides.len() != self.joints.len() {
            return Err(Error::invalid("state joint count does not match the grid"));
        }
        if state.slides.iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::invalid("joint sliding coordinates must be finite"));
        }
        if !state.frames_orthonormal(1e-9) {
            return Err(Error::invalid("reference frames are not orthonormal"));
        }
        Ok(())
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn joints(&self) -> &[SlidingJoint] {
        &self.joints
    }

    pub(crate) fn hole_ends(&self) -> &[HoleEnds] {
        &self.hole_ends
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn deployed(&self) -> &RodState {
        &self.deployed
    }

    pub fn member_index(&self, id: &str) -> Option<usize> {
        self.members.iter().position(|m| m.id == id)
    }

    /// Stress-free flat configuration (joint coordinates taken from the deployed state).
    pub fn rest_state(&self) -> RodState {
        RodState {
            members: self
                .members
                .iter()
                .map(|m| MemberState::rest(&m.rest_centerline))
                .collect(),
            slides: self.deployed.slides.clone(),
        }
    }

    /// Same grid with different anchors.
    pub fn with_anchors(&self, anchors: Vec<Anchor>) -> Result<Self> {
        Self::new(
            self.members.clone(),
            self.joints.clone(),
            anchors,
            self.deployed.clone(),
        )
    }

    /// Default joint penalty weight: `1e2 · E·w·r / L` (largest over members).
    pub fn default_joint_weight(&self) -> f64 {
        self.members
            .iter()
            .map(|m| 1e2 * m.cross_section.axial_stiffness() / m.rest_length())
            .fold(0.0, f64::max)
    }

    /// Diagonal of the axis-aligned bounding box of the deployed state.
    pub fn deployed_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in self.deployed.members.iter().flat_map(|m| &m.positions) {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Force scale `B/L²` of the softest member, used for solver tolerances.
    pub fn bending_force_scale(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.cross_section.flatwise_bending() / m.rest_length().powi(2))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight(n: usize, length: f64) -> Polyline3 {
        Polyline3::new(
            (0..n)
                .map(|i| Vec3::new(length * i as f64 / (n - 1) as f64, 0.0, 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cross_section_validation() {
        assert!(CrossSection::new(0.02, 0.002, 1e10, 5e8).is_ok());
        assert!(CrossSection::new(0.002, 0.02, 1e10, 5e8).is_err());
        assert!(CrossSection::new(0.02, 0.0, 1e10, 5e8).is_err());
        assert!(CrossSection::new(0.02, 0.002, -1.0, 5e8).is_err());
    }

    #[test]
    fn torsion_constant_of_thin_strip_approaches_one_third() {
        let cs = CrossSection::new(1.0, 1e-3, 1.0, 1.0).unwrap();
        let ratio = cs.torsion_constant() / (cs.width * cs.thickness.powi(3));
        assert!((ratio - 1.0 / 3.0).abs() < 1e-3);
        let square = CrossSection::new(1.0, 1.0, 1.0, 1.0).unwrap();
        // tabulated value for a square section is about 0.141
        assert!((square.torsion_constant() - 0.141).abs() < 2e-3);
    }

    #[test]
    fn rest_state_frames_are_orthonormal_and_untwisted() {
        let poly = straight(5, 1.0);
        let st = MemberState::rest(&poly);
        assert!(st.frames_orthonormal(1e-12));
        let [t, m1, m2] = st.material_frame(0);
        assert!((t - Vec3::x()).norm() < 1e-15);
        assert!((m1 - Vec3::y()).norm() < 1e-15);
        assert!((m2 - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn planar_rest_is_enforced() {
        let cs = CrossSection::new(0.02, 0.002, 1e10, 5e8).unwrap();
        let poly = Polyline3::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.1)]).unwrap();
        assert!(Member::new("a", poly, cs).is_err());
    }

    #[test]
    fn dof_layout_is_contiguous() {
        let cs = CrossSection::new(0.02, 0.002, 1e10, 5e8).unwrap();
        let a = Member::new("a", straight(4, 1.0), cs).unwrap();
        let b = Member::new("b", straight(3, 1.0), cs).unwrap();
        let deployed = RodState {
            members: vec![
                MemberState::rest(a.rest_centerline()),
                MemberState::rest(b.rest_centerline()),
            ],
            slides: vec![[0.5, 0.5]],
        };
        let joint = SlidingJoint {
            member_a: 0,
            member_b: 1,
            hole_a: [0.4, 0.6],
            hole_b: [0.4, 0.6],
        };
        let grid = GridModel::new(vec![a, b], vec![joint], vec![], deployed).unwrap();
        let layout = DofLayout::new(&grid);
        assert_eq!(layout.len(), 12 + 3 + 9 + 2 + 2);
        assert_eq!(layout.twist(0, 0), 12);
        assert_eq!(layout.position(1, 0), 15);
        assert_eq!(layout.slide(0, 1), 27);
        assert!(layout.is_position(11) && layout.is_position(16));
        assert!(!layout.is_position(12) && !layout.is_position(24) && !layout.is_position(26));
        let x = grid.deployed().to_dofs(&layout);
        let mut s = grid.rest_state();
        s.set_dofs(&layout, &x);
        assert_eq!(&s, grid.deployed());
    }

    #[test]
    fn grid_rejects_bad_references() {
        let cs = CrossSection::new(0.02, 0.002, 1e10, 5e8).unwrap();
        let a = Member::new("a", straight(4, 1.0), cs).unwrap();
        let deployed = RodState {
            members: vec![MemberState::rest(a.rest_centerline())],
            slides: vec![],
        };
        let anchor = Anchor {
            member: 0,
            vertex: 9,
            target: Vec3::zeros(),
        };
        assert!(GridModel::new(vec![a.clone()], vec![], vec![anchor], deployed.clone()).is_err());
        let joint = SlidingJoint {
            member_a: 0,
            member_b: 3,
            hole_a: [0.1, 0.2],
            hole_b: [0.1, 0.2],
        };
        assert!(GridModel::new(vec![a], vec![joint], vec![], deployed).is_err());
    }

    #[test]
    fn update_reference_preserves_material_frame() {
        let poly = straight(4, 1.0);
        let mut st = MemberState::rest(&poly);
        st.twists = vec![0.1, -0.2, 0.3];
        st.positions[2] += Vec3::new(0.0, 0.05, 0.08);
        st.positions[3] += Vec3::new(0.0, -0.02, 0.1);
        let before: Vec<_> = (0..3).map(|e| st.material_frame(e)).collect();
        st.update_reference().unwrap();
        for (e, f) in before.iter().enumerate() {
            let g = st.material_frame(e);
            for k in 0..3 {
                assert!((f[k] - g[k]).norm() < 1e-12);
            }
        }
    }
}
