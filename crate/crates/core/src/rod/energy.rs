//! Elastic, anchor and joint energies written as sums of squared residuals,
//! `E = ½ Σ r²`. Gradients are `Jᵀ r`; the solver uses `JᵀJ` as its Hessian model.

use crate::dual::{Dual, Real, V3};
use crate::error::{Error, Result};
use crate::rod::{DofLayout, GridModel, MemberState, RodState};

/// Penalty weights of the non-elastic terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    /// Anchor weight `λ`.
    pub anchor: f64,
    /// Joint coincidence weight.
    pub joint: f64,
}

/// Selection of energy terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub stretch: bool,
    pub bend: bool,
    pub twist: bool,
    pub anchor: bool,
    pub joint: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        stretch: true,
        bend: true,
        twist: true,
        anchor: true,
        joint: true,
    };
    pub const NONE: Terms = Terms {
        stretch: false,
        bend: false,
        twist: false,
        anchor: false,
        joint: false,
    };
    pub const ELASTIC: Terms = Terms {
        anchor: false,
        joint: false,
        ..Terms::ALL
    };
}

/// Energy value and its gradient in [`DofLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEval {
    pub energy: f64,
    pub gradient: Vec<f64>,
}

pub fn stretch_energy(grid: &GridModel, state: &RodState) -> Result<EnergyEval> {
    evaluate(
        grid,
        state,
        Terms {
            stretch: true,
            ..Terms::NONE
        },
        zero_weights(),
    )
}

pub fn bend_energy(grid: &GridModel, state: &RodState) -> Result<EnergyEval> {
    evaluate(
        grid,
        state,
        Terms {
            bend: true,
            ..Terms::NONE
        },
        zero_weights(),
    )
}

pub fn twist_energy(grid: &GridModel, state: &RodState) -> Result<EnergyEval> {
    evaluate(
        grid,
        state,
        Terms {
            twist: true,
            ..Terms::NONE
        },
        zero_weights(),
    )
}

/// `λ Σ |p − a|²` over the grid's anchors.
pub fn anchor_energy(grid: &GridModel, state: &RodState, lambda: f64) -> Result<EnergyEval> {
    check_weight(lambda, "anchor weight")?;
    let weights = EnergyWeights {
        anchor: lambda,
        joint: 0.0,
    };
    evaluate(
        grid,
        state,
        Terms {
            anchor: true,
            ..Terms::NONE
        },
        weights,
    )
}

/// `w Σ |x1 − x2|²` over the sliding joints.
pub fn joint_energy(grid: &GridModel, state: &RodState, weight: f64) -> Result<EnergyEval> {
    check_weight(weight, "joint weight")?;
    let weights = EnergyWeights {
        anchor: 0.0,
        joint: weight,
    };
    evaluate(
        grid,
        state,
        Terms {
            joint: true,
            ..Terms::NONE
        },
        weights,
    )
}

pub fn total_energy(grid: &GridModel, state: &RodState, weights: EnergyWeights) -> Result<EnergyEval> {
    check_weight(weights.anchor, "anchor weight")?;
    check_weight(weights.joint, "joint weight")?;
    evaluate(grid, state, Terms::ALL, weights)
}

/// Energy of the selected terms without derivatives.
pub fn energy_value(grid: &GridModel, state: &RodState, weights: EnergyWeights, terms: Terms) -> Result<f64> {
    grid.check_state(state)?;
    let layout = DofLayout::new(grid);
    let mut sink = ValueSink(0.0);
    assemble(grid, state, &layout, weights, terms, &mut sink)?;
    Ok(sink.0)
}

/// Energy, gradient and lower-triangle `JᵀJ` triplets.
pub(crate) struct System {
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub triplets: Vec<(usize, usize, f64)>,
}

pub(crate) fn assemble_system(
    grid: &GridModel,
    state: &RodState,
    layout: &DofLayout,
    weights: EnergyWeights,
) -> Result<System> {
    let mut sink = SystemSink {
        energy: 0.0,
        gradient: vec![0.0; layout.len()],
        triplets: Vec::new(),
    };
    assemble(grid, state, layout, weights, Terms::ALL, &mut sink)?;
    Ok(System {
        energy: sink.energy,
        gradient: sink.gradient,
        triplets: sink.triplets,
    })
}

fn zero_weights() -> EnergyWeights {
    EnergyWeights {
        anchor: 0.0,
        joint: 0.0,
    }
}

fn check_weight(w: f64, what: &str) -> Result<()> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite and >= 0, got {w}")))
    }
}

fn evaluate(grid: &GridModel, state: &RodState, terms: Terms, weights: EnergyWeights) -> Result<EnergyEval> {
    grid.check_state(state)?;
    let layout = DofLayout::new(grid);
    let mut sink = GradientSink {
        energy: 0.0,
        gradient: vec![0.0; layout.len()],
    };
    assemble(grid, state, &layout, weights, terms, &mut sink)?;
    Ok(EnergyEval {
        energy: sink.energy,
        gradient: sink.gradient,
    })
}

/// Receives residual blocks with their dof indices and (optionally) the
/// row-major Jacobian of the residuals with respect to those dofs.
trait Sink {
    const JACOBIAN: bool;
    fn block(&mut self, dofs: &[usize], residuals: &[f64], jac: &[f64]);
}

struct ValueSink(f64);

impl Sink for ValueSink {
    const JACOBIAN: bool = false;
    fn block(&mut self, _: &[usize], residuals: &[f64], _: &[f64]) {
        self.0 += 0.5 * residuals.iter().map(|r| r * r).sum::<f64>();
    }
}

struct GradientSink {
    energy: f64,
    gradient: Vec<f64>,
}

impl Sink for GradientSink {
    const JACOBIAN: bool = true;
    fn block(&mut self, dofs: &[usize], residuals: &[f64], jac: &[f64]) {
        let nd = dofs.len();
        for (k, r) in residuals.iter().enumerate() {
            self.energy += 0.5 * r * r;
            let row = &jac[k * nd..(k + 1) * nd];
            for (d, j) in dofs.iter().zip(row) {
                self.gradient[*d] += j * r;
            }
        }
    }
}

struct SystemSink {
    energy: f64,
    gradient: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
}

impl Sink for SystemSink {
    const JACOBIAN: bool = true;
    fn block(&mut self, dofs: &[usize], residuals: &[f64], jac: &[f64]) {
        let nd = dofs.len();
        let nr = residuals.len();
        for (k, r) in residuals.iter().enumerate() {
            self.energy += 0.5 * r * r;
            let row = &jac[k * nd..(k + 1) * nd];
            for (d, j) in dofs.iter().zip(row) {
                self.gradient[*d] += j * r;
            }
        }
        for a in 0..nd {
            for b in 0..=a {
                let mut h = 0.0;
                for k in 0..nr {
                    h += jac[k * nd + a] * jac[k * nd + b];
                }
                if h == 0.0 {
                    continue;
                }
                let (da, db) = (dofs[a], dofs[b]);
                if a != b && da == db {
                    h *= 2.0;
                }
                self.triplets.push((da.max(db), da.min(db), h));
            }
        }
    }
}

fn assemble<S: Sink>(
    grid: &GridModel,
    state: &RodState,
    layout: &DofLayout,
    weights: EnergyWeights,
    terms: Terms,
    sink: &mut S,
) -> Result<()> {
    let mut dofs: Vec<usize> = Vec::with_capacity(32);
    let mut jac: Vec<f64> = Vec::with_capacity(3 * 32);

    for (m, (member, ms)) in grid.members().iter().zip(&state.members).enumerate() {
        let cs = member.cross_section();
        let n = ms.positions.len();

        if terms.stretch {
            let k = cs.axial_stiffness();
            for e in 0..n - 1 {
                let d = ms.positions[e + 1] - ms.positions[e];
                let len = d.norm();
                if len == 0.0 {
                    return Err(Error::singular(format!(
                        "member `{}`: edge {e} has zero length",
                        member.id()
                    )));
                }
                let rest = member.rest.edge_lengths[e];
                let c = (k / rest).sqrt();
                dofs.clear();
                jac.clear();
                let (p0, p1) = (layout.position(m, e), layout.position(m, e + 1));
                dofs.extend([p0, p0 + 1, p0 + 2, p1, p1 + 1, p1 + 2]);
                if S::JACOBIAN {
                    let u = d * (c / len);
                    jac.extend([-u.x, -u.y, -u.z, u.x, u.y, u.z]);
                }
                sink.block(&dofs, &[c * (len - rest)], &jac);
            }
        }

        if terms.bend || terms.twist {
            let bend_c = [cs.edgewise_bending(), cs.flatwise_bending()];
            let gj = cs.torsional_stiffness();
            let range = match (terms.bend, terms.twist) {
                (true, true) => 0..5,
                (true, false) => 0..4,
                _ => 4..5,
            };
            for i in 1..n.saturating_sub(1) {
                let k = i - 1;
                let lbar = member.rest.voronoi[k];
                let coef = [
                    (bend_c[0] / lbar).sqrt(),
                    (bend_c[1] / lbar).sqrt(),
                    (2.0 * gj / lbar).sqrt(),
                ];
                let rest_omega = member.rest.curvature[k];
                let rest_twist = member.rest.twist[k];
                dofs.clear();
                jac.clear();
                let (p0, p1, p2) = (
                    layout.position(m, i - 1),
                    layout.position(m, i),
                    layout.position(m, i + 1),
                );
                dofs.extend([p0, p0 + 1, p0 + 2, p1, p1 + 1, p1 + 2, p2, p2 + 1, p2 + 2]);
                dofs.extend([layout.twist(m, i - 1), layout.twist(m, i)]);
                if S::JACOBIAN {
                    let out = stencil_at::<Dual<11>>(ms, i, true).map_err(|e| with_member(e, member.id(), i))?;
                    let r = stencil_residuals(&out, &coef, &rest_omega, rest_twist);
                    let vals: Vec<f64> = r[range.clone()].iter().map(|d| d.re).collect();
                    for d in &r[range.clone()] {
                        jac.extend_from_slice(&d.eps);
                    }
                    sink.block(&dofs, &vals, &jac);
                } else {
                    let out = stencil_at::<f64>(ms, i, false).map_err(|e| with_member(e, member.id(), i))?;
                    let r = stencil_residuals(&out, &coef, &rest_omega, rest_twist);
                    sink.block(&dofs, &r[range.clone()], &jac);
                }
            }
        }
    }

    if terms.anchor && weights.anchor > 0.0 {
        let c = (2.0 * weights.anchor).sqrt();
        for a in grid.anchors() {
            let diff = state.position(a.member, a.vertex) - a.target;
            let p = layout.position(a.member, a.vertex);
            dofs.clear();
            jac.clear();
            dofs.extend([p, p + 1, p + 2]);
            if S::JACOBIAN {
                jac.extend([c, 0.0, 0.0, 0.0, c, 0.0, 0.0, 0.0, c]);
            }
            sink.block(&dofs, &[c * diff.x, c * diff.y, c * diff.z], &jac);
        }
    }

    if terms.joint && weights.joint > 0.0 {
        let c = (2.0 * weights.joint).sqrt();
        for (j, (joint, holes)) in grid.joints().iter().zip(grid.hole_ends()).enumerate() {
            let [t1, t2] = state.slides[j];
            let members = [joint.member_a, joint.member_a, joint.member_b, joint.member_b];
            // weight of each hole end in x1 - x2
            let end_coef = [(1.0 - t1), t1, -(1.0 - t2), -t2];
            let mut ends = [nalgebra::Vector3::zeros(); 4];
            dofs.clear();
            let mut vertex_coef = [0.0; 8];
            for h in 0..4 {
                let (e, alpha) = holes.ends[h];
                let ms = &state.members[members[h]];
                ends[h] = ms.positions[e] * (1.0 - alpha) + ms.positions[e + 1] * alpha;
                for (v, (vertex, w)) in [(e, 1.0 - alpha), (e + 1, alpha)].into_iter().enumerate() {
                    let p = layout.position(members[h], vertex);
                    dofs.extend([p, p + 1, p + 2]);
                    vertex_coef[2 * h + v] = end_coef[h] * w;
                }
            }
            dofs.extend([layout.slide(j, 0), layout.slide(j, 1)]);
            let x1 = ends[0] * (1.0 - t1) + ends[1] * t1;
            let x2 = ends[2] * (1.0 - t2) + ends[3] * t2;
            let r = (x1 - x2) * c;
            jac.clear();
            if S::JACOBIAN {
                let nd = dofs.len();
                jac.resize(3 * nd, 0.0);
                for row in 0..3 {
                    for (v, vc) in vertex_coef.iter().enumerate() {
                        jac[row * nd + 3 * v + row] = c * vc;
                    }
                    jac[row * nd + 24] = c * (ends[1][row] - ends[0][row]);
                    jac[row * nd + 25] = -c * (ends[3][row] - ends[2][row]);
                }
            }
            sink.block(&dofs, &[r.x, r.y, r.z], &jac);
        }
    }
    Ok(())
}

fn with_member(e: Error, id: &str, vertex: usize) -> Error {
    match e {
        Error::SingularConfiguration(msg) => Error::singular(format!("member `{id}` at vertex {vertex}: {msg}")),
        other => other,
    }
}

fn stencil_residuals<T: Real>(
    out: &StencilOut<T>,
    coef: &[f64; 3],
    rest_omega: &[[f64; 2]; 2],
    rest_twist: f64,
) -> [T; 5] {
    let b = |j: usize, a: usize| (out.omega[j][a] - T::cst(rest_omega[j][a])).scale(coef[a]);
    [
        b(0, 0),
        b(0, 1),
        b(1, 0),
        b(1, 1),
        (out.twist - T::cst(rest_twist)).scale(coef[2]),
    ]
}

/// Material curvatures of the two edges meeting at an interior vertex and the
/// integrated twist across it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StencilOut<T> {
    /// `[edge][component]`: component 0 bends within the lamella plane, 1 out of it.
    pub omega: [[T; 2]; 2],
    pub twist: T,
}

pub(crate) fn stencil_f64(ms: &MemberState, i: usize) -> Result<StencilOut<f64>> {
    stencil_at::<f64>(ms, i, false)
}

fn stencil_at<T: Real + Seed>(ms: &MemberState, i: usize, seeded: bool) -> Result<StencilOut<T>> {
    let mut x = [V3::from_f64([0.0; 3]); 3];
    for (v, xv) in x.iter_mut().enumerate() {
        let p = ms.positions[i - 1 + v];
        for c in 0..3 {
            xv.0[c] = T::seed(p[c], 3 * v + c, seeded);
        }
    }
    let theta = [T::seed(ms.twists[i - 1], 9, seeded), T::seed(ms.twists[i], 10, seeded)];
    let (t0, d0) = ms.reference_frame(i - 1);
    let (t1, d1) = ms.reference_frame(i);
    stencil(
        x,
        theta,
        [[t0.x, t0.y, t0.z], [t1.x, t1.y, t1.z]],
        [[d0.x, d0.y, d0.z], [d1.x, d1.y, d1.z]],
    )
}

trait Seed {
    fn seed(v: f64, index: usize, seeded: bool) -> Self;
}

impl Seed for f64 {
    fn seed(v: f64, _: usize, _: bool) -> Self {
        v
    }
}

impl Seed for Dual<11> {
    fn seed(v: f64, index: usize, seeded: bool) -> Self {
        if seeded {
            Dual::var(v, index)
        } else {
            Dual::cst(v)
        }
    }
}

fn transport<T: Real>(a: &V3<T>, b: &V3<T>, v: &V3<T>) -> V3<T> {
    let c = a.dot(b);
    let axis = a.cross(b);
    let k = axis.dot(v) / (T::cst(1.0) + c);
    v.mul(c).add(&axis.cross(v)).add(&axis.mul(k))
}

fn stencil<T: Real>(
    x: [V3<T>; 3],
    theta: [T; 2],
    t_ref: [[f64; 3]; 2],
    d1_ref: [[f64; 3]; 2],
) -> Result<StencilOut<T>> {
    let e = [x[1].sub(&x[0]), x[2].sub(&x[1])];
    let len = [e[0].norm(), e[1].norm()];
    if len[0].value() == 0.0 || len[1].value() == 0.0 {
        return Err(Error::singular("zero-length edge"));
    }
    let t = [e[0].div(len[0]), e[1].div(len[1])];
    let denom = len[0] * len[1] + e[0].dot(&e[1]);
    if denom.value() <= 1e-12 * len[0].value() * len[1].value() {
        return Err(Error::singular("consecutive edges fold back onto each other"));
    }
    let kb = e[0].cross(&e[1]).mul(T::cst(2.0) / denom);

    let mut d1 = [V3::from_f64([0.0; 3]); 2];
    let mut omega = [[T::cst(0.0); 2]; 2];
    for j in 0..2 {
        let a = V3::<T>::from_f64(t_ref[j]);
        if 1.0 + a.dot(&t[j]).value() < 1e-10 {
            return Err(Error::singular("edge flipped against its reference frame"));
        }
        d1[j] = transport(&a, &t[j], &V3::from_f64(d1_ref[j]));
        let d2 = t[j].cross(&d1[j]);
        let (s, c) = (theta[j].sin(), theta[j].cos());
        let m1 = d1[j].mul(c).add(&d2.mul(s));
        let m2 = d2.mul(c).sub(&d1[j].mul(s));
        omega[j] = [kb.dot(&m2), -kb.dot(&m1)];
    }
    let u = transport(&t[0], &t[1], &d1[0]);
    let reference_twist = u.cross(&d1[1]).dot(&t[1]).atan2(u.dot(&d1[1]));
    Ok(StencilOut {
        omega,
        twist: theta[1] - theta[0] + reference_twist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polyline3, Vec3};
    use crate::rod::{Anchor, CrossSection, Member, SlidingJoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type EnergyFn<'a> = dyn Fn(&RodState) -> EnergyEval + 'a;

    fn section() -> CrossSection {
        CrossSection::new(0.02, 0.002, 1e10, 4e9).unwrap()
    }

    fn line(n: usize, from: Vec3, to: Vec3) -> Polyline3 {
        Polyline3::new(
            (0..n)
                .map(|i| from + (to - from) * (i as f64 / (n - 1) as f64))
                .collect(),
        )
        .unwrap()
    }

    /// Two crossing strips joined at their middles, one anchored vertex each.
    fn cross_grid() -> GridModel {
        let a = Member::new(
            "a",
            line(7, Vec3::new(-0.5, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0)),
            section(),
        )
        .unwrap();
        let b = Member::new(
            "b",
            line(6, Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)),
            section(),
        )
        .unwrap();
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
            hole_a: [0.42, 0.58],
            hole_b: [0.45, 0.55],
        };
        let anchors = vec![
            Anchor {
                member: 0,
                vertex: 0,
                target: Vec3::new(-0.5, 0.0, 0.1),
            },
            Anchor {
                member: 1,
                vertex: 5,
                target: Vec3::new(0.0, 0.5, -0.05),
            },
        ];
        GridModel::new(vec![a, b], vec![joint], anchors, deployed).unwrap()
    }

    fn perturbed(grid: &GridModel, rng: &mut ChaCha8Rng, amp: f64) -> RodState {
        let mut s = grid.rest_state();
        for m in &mut s.members {
            for p in &mut m.positions {
                *p += Vec3::new(
                    rng.random_range(-amp..amp),
                    rng.random_range(-amp..amp),
                    rng.random_range(-amp..amp),
                );
            }
            for th in &mut m.twists {
                *th = rng.random_range(-0.3..0.3);
            }
        }
        s.slides = vec![[rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)]];
        s.update_reference_frames().unwrap();
        s
    }

    fn fd_error(grid: &GridModel, state: &RodState, f: &dyn Fn(&RodState) -> EnergyEval) -> f64 {
        let layout = DofLayout::new(grid);
        let g = f(state).gradient;
        let x = state.to_dofs(&layout);
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = 1e-6;
            let mut s = state.clone();
            let mut xp = x.clone();
            xp[i] += h;
            s.set_dofs(&layout, &xp);
            let ep = f(&s).energy;
            xp[i] -= 2.0 * h;
            s.set_dofs(&layout, &xp);
            let em = f(&s).energy;
            fd[i] = (ep - em) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff / norm.max(1e-300)
    }

    #[test]
    fn stretch_example() {
        let cs = CrossSection::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let m = Member::new("s", line(2, Vec3::zeros(), Vec3::x()), cs).unwrap();
        let mut st = MemberState::rest(m.rest_centerline());
        st.positions[1] = Vec3::new(1.1, 0.0, 0.0);
        let deployed = RodState {
            members: vec![st],
            slides: vec![],
        };
        let grid = GridModel::new(vec![m], vec![], vec![], deployed).unwrap();
        let e = stretch_energy(&grid, grid.deployed()).unwrap();
        assert!((e.energy - 0.005).abs() < 1e-15);
        assert!((e.gradient[3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn anchor_and_joint_examples() {
        let grid = cross_grid();
        let mut s = grid.rest_state();
        assert_eq!(anchor_energy(&grid, &s, 0.0).unwrap().energy, 0.0);
        let single = grid
            .with_anchors(vec![Anchor {
                member: 0,
                vertex: 3,
                target: Vec3::new(0.0, 2.0, 0.0),
            }])
            .unwrap();
        assert!((anchor_energy(&single, &s, 3.0).unwrap().energy - 12.0).abs() < 1e-12);
        // member b shifted 0.1 along z: the joint points separate by 0.1
        for p in &mut s.members[1].positions {
            p.z += 0.1;
        }
        let e = joint_energy(&grid, &s, 100.0).unwrap().energy;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rest_state_is_stress_free() {
        let grid = cross_grid();
        let s = grid.rest_state();
        let w = EnergyWeights {
            anchor: 0.0,
            joint: grid.default_joint_weight(),
        };
        let e = total_energy(&grid, &s, w).unwrap();
        assert!(e.energy.abs() < 1e-20);
        // round-off of the stiff joint penalty only
        assert!(e.gradient.iter().all(|g| g.abs() < 1e-5));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let grid = cross_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let s = perturbed(&grid, &mut rng, 0.02);
            let checks: [(&str, Box<EnergyFn>); 5] = [
                ("stretch", Box::new(|s| stretch_energy(&grid, s).unwrap())),
                ("bend", Box::new(|s| bend_energy(&grid, s).unwrap())),
                ("twist", Box::new(|s| twist_energy(&grid, s).unwrap())),
                ("anchor", Box::new(|s| anchor_energy(&grid, s, 7.0).unwrap())),
                ("joint", Box::new(|s| joint_energy(&grid, s, 50.0).unwrap())),
            ];
            for (name, f) in &checks {
                let err = fd_error(&grid, &s, f.as_ref());
                assert!(err < 1e-4, "{name}: relative error {err:e}");
            }
        }
    }

    #[test]
    fn total_is_sum_of_terms() {
        let grid = cross_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = perturbed(&grid, &mut rng, 0.03);
        let w = EnergyWeights {
            anchor: 2.0,
            joint: 30.0,
        };
        let total = total_energy(&grid, &s, w).unwrap();
        let parts = [
            stretch_energy(&grid, &s).unwrap(),
            bend_energy(&grid, &s).unwrap(),
            twist_energy(&grid, &s).unwrap(),
            anchor_energy(&grid, &s, 2.0).unwrap(),
            joint_energy(&grid, &s, 30.0).unwrap(),
        ];
        let sum: f64 = parts.iter().map(|p| p.energy).sum();
        assert!((total.energy - sum).abs() <= 1e-12 * total.energy.abs().max(1.0));
        for i in 0..total.gradient.len() {
            let g: f64 = parts.iter().map(|p| p.gradient[i]).sum();
            assert!((total.gradient[i] - g).abs() <= 1e-9 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn arc_bending_energy_converges_to_beam_value() {
        let cs = section();
        let (length, radius) = (1.0, 0.8);
        let exact = cs.flatwise_bending() * length / (2.0 * radius * radius);
        let mut last_err = f64::INFINITY;
        let mut last_h = 0.0;
        for n in [11, 41, 161] {
            let m = Member::new("arc", line(n, Vec3::zeros(), Vec3::new(length, 0.0, 0.0)), cs).unwrap();
            let positions: Vec<Vec3> = m
                .rest_arclength()
                .iter()
                .map(|s| Vec3::new(radius * (s / radius).sin(), 0.0, radius * (1.0 - (s / radius).cos())))
                .collect();
            let st = MemberState::transported(positions, Vec3::z());
            let deployed = RodState {
                members: vec![st],
                slides: vec![],
            };
            let grid = GridModel::new(vec![m], vec![], vec![], deployed).unwrap();
            let e = bend_energy(&grid, grid.deployed()).unwrap().energy;
            let err = (e - exact).abs() / exact;
            assert!(err < last_err);
            last_err = err;
            last_h = length / (n - 1) as f64;
        }
        // interior vertices cover L - h; the remaining error is the half edges at the ends
        assert!((last_err - last_h / length).abs() < 1e-4, "relative error {last_err}");
    }

    #[test]
    fn uniform_twist_energy_converges() {
        let cs = section();
        let (length, rate) = (1.0, 0.7);
        let exact = 0.5 * cs.torsional_stiffness() * rate * rate * length;
        let n = 101;
        let m = Member::new("t", line(n, Vec3::zeros(), Vec3::new(length, 0.0, 0.0)), cs).unwrap();
        let mut st = MemberState::rest(m.rest_centerline());
        let h = length / (n - 1) as f64;
        for (e, th) in st.twists.iter_mut().enumerate() {
            *th = rate * h * (e as f64 + 0.5);
        }
        let deployed = RodState {
            members: vec![st],
            slides: vec![],
        };
        let grid = GridModel::new(vec![m], vec![], vec![], deployed).unwrap();
        let e = twist_energy(&grid, grid.deployed()).unwrap().energy;
        // interior vertices cover L - h of the strip
        let expected = exact * (length - h) / length;
        assert!((e - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn elastic_energies_are_rigid_invariant() {
        let grid = cross_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = perturbed(&grid, &mut rng, 0.03);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let moved = s.transformed(&rot, &Vec3::new(1.0, -2.0, 0.5));
        let w = EnergyWeights {
            anchor: 0.0,
            joint: 40.0,
        };
        let e0 = total_energy(&grid, &s, w).unwrap().energy;
        let e1 = total_energy(&grid, &moved, w).unwrap().energy;
        assert!((e0 - e1).abs() < 1e-9 * e0.max(1.0));
    }

    #[test]
    fn folded_edges_are_singular() {
        let grid = cross_grid();
        let mut s = grid.rest_state();
        s.members[0].positions[2] = s.members[0].positions[0];
        assert!(matches!(bend_energy(&grid, &s), Err(Error::SingularConfiguration(_))));
        let mut z = grid.rest_state();
        z.members[0].positions[1] = z.members[0].positions[0];
        assert!(matches!(
            stretch_energy(&grid, &z),
            Err(Error::SingularConfiguration(_))
        ));
    }
}
