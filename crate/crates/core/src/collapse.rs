//! Quasi-static collapse: equilibrium solves at a decreasing anchor weight,
//! with traced vertex positions recorded at every accepted step.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TimedPath, Vec3};
use crate::rod::{assemble_system, energy_value, DofLayout, EnergyWeights, GridModel, RodState, System, Terms};

/// Stopping rule and limits of the inner equilibrium solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    /// Bound on the ∞-norm of the (projected) energy gradient.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Keep joint sliding coordinates inside their holes.
    pub limit_holes: bool,
}

impl RelaxOptions {
    pub fn for_grid(grid: &GridModel) -> Self {
        Self {
            gradient_tolerance: 1e-4 * grid.bending_force_scale(),
            max_iterations: 500,
            limit_holes: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxReport {
    pub iterations: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

/// Damped Gauss-Newton (Levenberg-Marquardt) descent to a local minimum of the
/// total energy at fixed weights. Every accepted iterate lowers the energy.
pub fn relax(
    grid: &GridModel,
    state: &RodState,
    weights: EnergyWeights,
    options: &RelaxOptions,
) -> Result<(RodState, RelaxReport)> {
    if !(options.gradient_tolerance > 0.0) {
        return Err(Error::invalid("gradient tolerance must be > 0"));
    }
    for (w, what) in [(weights.anchor, "anchor weight"), (weights.joint, "joint weight")] {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::invalid(format!("{what} must be finite and >= 0")));
        }
    }
    grid.check_state(state)?;
    let layout = DofLayout::new(grid);
    let n = layout.len();
    let mut state = state.clone();
    if options.limit_holes {
        for s in state.slides.iter_mut().flatten() {
            *s = s.clamp(0.0, 1.0);
        }
    }
    let mut x = state.to_dofs(&layout);
    let mut sys = assemble_system(grid, &state, &layout, weights)?;
    let mut mu = 1e-4;

    for iteration in 0..=options.max_iterations {
        let gradient_norm = projected_norm(&sys.gradient, &x, &layout, options.limit_holes);
        if gradient_norm < options.gradient_tolerance {
            return Ok((
                state,
                RelaxReport {
                    iterations: iteration,
                    energy: sys.energy,
                    gradient_norm,
                },
            ));
        }
        if iteration == options.max_iterations {
            return Err(Error::ConvergenceFailure {
                iterations: iteration,
                gradient_norm,
                tolerance: options.gradient_tolerance,
                last_state: Box::new(state),
            });
        }
        let damped = DampedSystem::new(&sys, n)?;
        let allowance = 1e-12 * sys.energy.abs();
        loop {
            if mu > 1e16 {
                return Err(Error::ConvergenceFailure {
                    iterations: iteration,
                    gradient_norm,
                    tolerance: options.gradient_tolerance,
                    last_state: Box::new(state),
                });
            }
            let Some(step) = damped.solve(&sys.gradient, mu) else {
                mu *= 10.0;
                continue;
            };
            let mut x_new: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + d).collect();
            if options.limit_holes {
                for v in &mut x_new[layout.slide_start()..] {
                    *v = v.clamp(0.0, 1.0);
                }
            }
            let mut trial = state.clone();
            trial.set_dofs(&layout, &x_new);
            match trial.update_reference_frames() {
                Ok(()) => {}
                Err(Error::SingularConfiguration(_)) => {
                    mu *= 4.0;
                    continue;
                }
                Err(e) => return Err(e),
            }
            let energy = match energy_value(grid, &trial, weights, Terms::ALL) {
                Ok(e) => e,
                Err(Error::SingularConfiguration(_)) => {
                    mu *= 4.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if energy > sys.energy + allowance {
                mu *= 4.0;
                continue;
            }
            let trial_sys = assemble_system(grid, &trial, &layout, weights)?;
            // below the energy round-off the gradient decides
            if energy > sys.energy - allowance
                && projected_norm(&trial_sys.gradient, &x_new, &layout, options.limit_holes) >= gradient_norm
            {
                mu *= 4.0;
                continue;
            }
            state = trial;
            x = x_new;
            sys = trial_sys;
            mu = (mu / 3.0).max(1e-12);
            break;
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// ∞-norm of the gradient with bound-active sliding components removed.
fn projected_norm(g: &[f64], x: &[f64], layout: &DofLayout, limit_holes: bool) -> f64 {
    let start = layout.slide_start();
    g.iter()
        .enumerate()
        .map(|(i, gi)| {
            if limit_holes && i >= start && ((x[i] <= 0.0 && *gi > 0.0) || (x[i] >= 1.0 && *gi < 0.0)) {
                0.0
            } else {
                gi.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `JᵀJ` with its diagonal kept apart so that the damping can vary cheaply.
struct DampedSystem {
    triplets: Vec<Triplet<usize, usize, f64>>,
    diag: Vec<f64>,
    floor: f64,
    symbolic: SymbolicLlt<usize>,
}

impl DampedSystem {
    fn new(sys: &System, n: usize) -> Result<Self> {
        let mut diag = vec![0.0; n];
        let mut triplets = Vec::with_capacity(sys.triplets.len() + n);
        for &(r, c, v) in &sys.triplets {
            if r == c {
                diag[r] += v;
            }
            triplets.push(Triplet::new(r, c, v));
        }
        let floor = 1e-12 * diag.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..n {
            triplets.push(Triplet::new(i, i, 0.0));
        }
        let pattern = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::singular(format!("system assembly failed: {e:?}")))?;
        let symbolic = SymbolicLlt::try_new(pattern.symbolic(), Side::Lower)
            .map_err(|e| Error::singular(format!("symbolic factorization failed: {e:?}")))?;
        Ok(Self {
            triplets,
            diag,
            floor,
            symbolic,
        })
    }

    /// Solves `(JᵀJ + μ(diag + floor)) δ = −g`; `None` if the factorization fails.
    fn solve(&self, gradient: &[f64], mu: f64) -> Option<Vec<f64>> {
        let n = self.diag.len();
        let mut triplets = self.triplets.clone();
        let base = triplets.len() - n;
        for i in 0..n {
            triplets[base + i] = Triplet::new(i, i, mu * (self.diag[i] + self.floor));
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets).ok()?;
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), a.as_ref(), Side::Lower).ok()?;
        let mut rhs = Col::from_fn(n, |i| -gradient[i]);
        llt.solve_in_place(rhs.as_mat_mut());
        let step: Vec<f64> = (0..n).map(|i| rhs[i]).collect();
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

/// How sample times are assigned to accepted collapse steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeParam {
    /// `t_k = k / K` over the accepted steps.
    StepIndex,
    /// `t = 1 − λ/λ0`.
    LambdaProgress,
}

/// Anchor-weight schedule and adaptive rate control of a collapse run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseSchedule {
    pub lambda0: f64,
    pub delta_lambda: f64,
    /// Largest mean vertex displacement accepted between consecutive equilibria (meters).
    pub jump_threshold: f64,
    pub rate_backoff: f64,
    pub min_delta_lambda: f64,
    pub max_steps: usize,
    pub joint_weight: f64,
    pub time_param: TimeParam,
    pub relax: RelaxOptions,
}

impl CollapseSchedule {
    /// Scale-aware defaults: anchors start far stiffer than the softest bending
    /// mode and the jump threshold is 1% of the deployed bounding-box diagonal.
    pub fn for_grid(grid: &GridModel) -> Self {
        let lambda0 = grid
            .members()
            .iter()
            .map(|m| {
                let h = m.rest_length() / (m.vertex_count() - 1) as f64;
                1e2 * m.cross_section().flatwise_bending() / h.powi(3)
            })
            .fold(0.0, f64::max);
        Self {
            lambda0,
            delta_lambda: lambda0 / 100.0,
            jump_threshold: 0.01 * grid.deployed_diagonal(),
            rate_backoff: 0.5,
            min_delta_lambda: lambda0 * 1e-14,
            max_steps: 20_000,
            joint_weight: grid.default_joint_weight(),
            time_param: TimeParam::StepIndex,
            relax: RelaxOptions::for_grid(grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lambda0) || !positive(self.delta_lambda) || !positive(self.jump_threshold) {
            return Err(Error::invalid("lambda0, delta_lambda and jump_threshold must be > 0"));
        }
        if !(self.rate_backoff > 0.0 && self.rate_backoff < 1.0) {
            return Err(Error::invalid("rate_backoff must lie in (0, 1)"));
        }
        if !positive(self.min_delta_lambda) {
            return Err(Error::invalid("min_delta_lambda must be > 0"));
        }
        if !(self.joint_weight.is_finite() && self.joint_weight >= 0.0) {
            return Err(Error::invalid("joint_weight must be finite and >= 0"));
        }
        if !positive(self.relax.gradient_tolerance) || self.relax.max_iterations == 0 {
            return Err(Error::invalid("relax tolerance and iteration limit must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be > 0"));
        }
        Ok(())
    }
}

/// A traced vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub member: String,
    pub vertex: usize,
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.member, self.vertex)
    }
}

/// Direction of time along the traced paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `t = 0` is the deployed state, `t = 1` the collapsed one.
    Collapse,
    /// `t = 0` is the collapsed state, `t = 1` the deployed one.
    Deployment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub relax_iterations: usize,
    /// Largest `|length − rest length| / rest length` over members and steps.
    pub max_length_drift: f64,
}

/// Synchronized paths of the traced vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub nodes: Vec<NodeRef>,
    pub paths: Vec<TimedPath>,
    /// Anchor weight of each sample.
    pub weights: Vec<f64>,
    pub orientation: Orientation,
    pub stats: CollapseStats,
    /// Fingerprint of the model the trace was computed from.
    pub model_fingerprint: String,
    pub schedule: CollapseSchedule,
}

impl TraceSet {
    pub fn times(&self) -> &[f64] {
        self.paths.first().map(TimedPath::times).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Checks the shared-time-grid invariant.
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::invalid("trace set has no paths"));
        }
        if self.paths.len() != self.nodes.len() {
            return Err(Error::invalid("trace set node count does not match its paths"));
        }
        let times = self.paths[0].times();
        if self.paths.iter().any(|p| p.times() != times) {
            return Err(Error::invalid("trace paths do not share one time grid"));
        }
        if self.weights.len() != times.len() {
            return Err(Error::invalid("trace weights do not match its samples"));
        }
        Ok(())
    }
}

/// Vertices nearest to the joint positions on each joint's first member,
/// or the member endpoints of a grid without joints.
pub fn default_traced_nodes(grid: &GridModel) -> Vec<NodeRef> {
    let mut nodes: Vec<NodeRef> = Vec::new();
    let mut push = |member: usize, vertex: usize| {
        let node = NodeRef {
            member: grid.members()[member].id().to_string(),
            vertex,
        };
        if !nodes.contains(&node) {
            nodes.push(node);
        }
    };
    if grid.joints().is_empty() {
        for (m, member) in grid.members().iter().enumerate() {
            push(m, 0);
            push(m, member.vertex_count() - 1);
        }
    } else {
        for (joint, slides) in grid.joints().iter().zip(&grid.deployed().slides) {
            let member = &grid.members()[joint.member_a];
            let s = joint.hole_a[0] + slides[0].clamp(0.0, 1.0) * (joint.hole_a[1] - joint.hole_a[0]);
            let vertex = member
                .rest_arclength()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
                .map(|(i, _)| i)
                .unwrap();
            push(joint.member_a, vertex);
        }
    }
    nodes
}

const TIME_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Rounds to a multiple of 2⁻⁴⁰ so that `1 − t` is exact.
fn quantize(t: f64) -> f64 {
    (t / TIME_QUANTUM).round() * TIME_QUANTUM
}

/// Collapses the deployed grid by lowering the anchor weight from `λ0` to 0.
///
/// The returned paths are in [`Orientation::Collapse`]: sample 0 holds the
/// deployed positions exactly.
pub fn collapse(grid: &GridModel, schedule: &CollapseSchedule, traced: &[NodeRef]) -> Result<TraceSet> {
    schedule.validate()?;
    if traced.is_empty() {
        return Err(Error::invalid("no nodes to trace"));
    }
    let mut refs = Vec::with_capacity(traced.len());
    for node in traced {
        let m = grid
            .member_index(&node.member)
            .ok_or_else(|| Error::invalid(format!("traced node {node}: unknown member")))?;
        if node.vertex >= grid.members()[m].vertex_count() {
            return Err(Error::invalid(format!("traced node {node}: vertex out of range")));
        }
        refs.push((m, node.vertex));
    }

    let weights_at = |lambda: f64| EnergyWeights {
        anchor: lambda,
        joint: schedule.joint_weight,
    };
    let record = |state: &RodState| -> Vec<Vec3> { refs.iter().map(|&(m, v)| state.position(m, v)).collect() };
    let rest_lengths: Vec<f64> = grid.members().iter().map(|m| m.rest_length()).collect();
    let drift = |state: &RodState| -> f64 {
        state
            .members
            .iter()
            .zip(&rest_lengths)
            .map(|(ms, l)| (ms.centerline_length() - l).abs() / l)
            .fold(0.0, f64::max)
    };

    let mut samples = vec![record(grid.deployed())];
    let mut lambdas = vec![schedule.lambda0];
    let (mut state, report) = relax(grid, grid.deployed(), weights_at(schedule.lambda0), &schedule.relax)?;
    let mut stats = CollapseStats {
        accepted_steps: 0,
        rejected_steps: 0,
        relax_iterations: report.iterations,
        max_length_drift: drift(&state),
    };
    let mut lambda = schedule.lambda0;
    let mut delta = schedule.delta_lambda;

    while lambda > 0.0 {
        if stats.accepted_steps + stats.rejected_steps >= schedule.max_steps {
            return Err(Error::invalid(format!(
                "collapse exceeded max_steps = {} at weight {lambda:.6e}",
                schedule.max_steps
            )));
        }
        let next = (lambda - delta).max(0.0);
        let outcome = relax(grid, &state, weights_at(next), &schedule.relax);
        let accepted = match outcome {
            Ok((candidate, report)) => {
                stats.relax_iterations += report.iterations;
                let jump = candidate.mean_displacement(&state);
                (jump < schedule.jump_threshold).then_some((candidate, jump))
            }
            Err(Error::ConvergenceFailure { iterations, .. }) => {
                stats.relax_iterations += iterations;
                None
            }
            Err(Error::SingularConfiguration(_)) => None,
            Err(e) => return Err(e),
        };
        match accepted {
            Some((candidate, jump)) => {
                state = candidate;
                // recover the nominal rate once the motion is well below the threshold again
                if jump < 0.5 * schedule.jump_threshold {
                    delta = (delta / schedule.rate_backoff).min(schedule.delta_lambda);
                }
                lambda = next;
                stats.accepted_steps += 1;
                stats.max_length_drift = stats.max_length_drift.max(drift(&state));
                samples.push(record(&state));
                lambdas.push(lambda);
            }
            None => {
                stats.rejected_steps += 1;
                delta *= schedule.rate_backoff;
                if delta < schedule.min_delta_lambda {
                    return Err(Error::StalledCollapse {
                        weight: lambda,
                        step: delta,
                        min_step: schedule.min_delta_lambda,
                        accepted: stats.accepted_steps,
                        weights: lambdas,
                    });
                }
            }
        }
    }

    let k = samples.len() - 1;
    let times: Vec<f64> = match schedule.time_param {
        TimeParam::StepIndex => (0..=k).map(|i| quantize(i as f64 / k as f64)).collect(),
        TimeParam::LambdaProgress => lambdas.iter().map(|l| quantize(1.0 - l / schedule.lambda0)).collect(),
    };
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("collapse steps too fine to assign distinct times"));
    }
    let paths = (0..refs.len())
        .map(|j| TimedPath::new(samples.iter().map(|s| s[j]).collect(), times.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceSet {
        nodes: traced.to_vec(),
        paths,
        weights: lambdas,
        orientation: Orientation::Collapse,
        stats,
        model_fingerprint: crate::io::model_fingerprint(grid),
        schedule: schedule.clone(),
    })
}

/// Inverts the time direction of every path (`t → 1 − t`, samples reversed).
pub fn reverse_for_deployment(trace: &TraceSet) -> TraceSet {
    let mut out = trace.clone();
    out.paths = trace.paths.iter().map(TimedPath::reversed).collect();
    out.weights.reverse();
    out.orientation = match trace.orientation {
        Orientation::Collapse => Orientation::Deployment,
        Orientation::Deployment => Orientation::Collapse,
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline3;
    use crate::rod::{Anchor, CrossSection, Member, MemberState};
    use crate::samples::{wrapped_strip, StripSpec};

    fn straight_strip(anchors: impl Fn(&[Vec3]) -> Vec<Anchor>) -> GridModel {
        let cs = CrossSection::new(0.02, 0.002, 1e10, 4e9).unwrap();
        let verts: Vec<Vec3> = (0..11).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect();
        let member = Member::new("s", Polyline3::new(verts.clone()).unwrap(), cs).unwrap();
        let deployed = RodState {
            members: vec![MemberState::rest(member.rest_centerline())],
            slides: vec![],
        };
        let anchors = anchors(&verts);
        GridModel::new(vec![member], vec![], anchors, deployed).unwrap()
    }

    fn all_anchored(verts: &[Vec3]) -> Vec<Anchor> {
        verts
            .iter()
            .enumerate()
            .map(|(vertex, p)| Anchor {
                member: 0,
                vertex,
                target: *p,
            })
            .collect()
    }

    #[test]
    fn relax_at_minimum_is_a_no_op() {
        let grid = straight_strip(all_anchored);
        let options = RelaxOptions::for_grid(&grid);
        let weights = EnergyWeights {
            anchor: 1e3,
            joint: 0.0,
        };
        let (state, report) = relax(&grid, grid.deployed(), weights, &options).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(&state, grid.deployed());
    }

    #[test]
    fn single_anchor_pulls_its_vertex_to_the_target() {
        let target = Vec3::new(0.0, 0.03, 0.01);
        let grid = straight_strip(|_| {
            vec![Anchor {
                member: 0,
                vertex: 0,
                target,
            }]
        });
        let options = RelaxOptions::for_grid(&grid);
        let lambda = 1e6;
        let weights = EnergyWeights {
            anchor: lambda,
            joint: 0.0,
        };
        let (state, _) = relax(&grid, grid.deployed(), weights, &options).unwrap();
        // anchor force 2λ|p − a| is bounded by the gradient tolerance per component
        let bound = 3f64.sqrt() * options.gradient_tolerance / (2.0 * lambda);
        assert!((state.position(0, 0) - target).norm() <= bound);
    }

    #[test]
    fn relax_lowers_the_energy() {
        let grid = wrapped_strip(&StripSpec {
            vertices: 21,
            ..StripSpec::default()
        })
        .unwrap();
        let options = RelaxOptions::for_grid(&grid);
        let weights = EnergyWeights {
            anchor: 10.0,
            joint: 0.0,
        };
        let before = energy_value(&grid, grid.deployed(), weights, Terms::ALL).unwrap();
        let (state, report) = relax(&grid, grid.deployed(), weights, &options).unwrap();
        assert!(report.iterations > 0);
        assert!(report.energy <= before);
        assert!(report.gradient_norm < options.gradient_tolerance);
        assert!(state.frames_orthonormal(1e-9));
    }

    #[test]
    fn relax_reports_convergence_failure_with_its_state() {
        let grid = wrapped_strip(&StripSpec {
            vertices: 21,
            ..StripSpec::default()
        })
        .unwrap();
        let options = RelaxOptions {
            max_iterations: 1,
            ..RelaxOptions::for_grid(&grid)
        };
        let weights = EnergyWeights {
            anchor: 10.0,
            joint: 0.0,
        };
        match relax(&grid, grid.deployed(), weights, &options) {
            Err(Error::ConvergenceFailure {
                iterations, last_state, ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(grid.check_state(&last_state).is_ok());
            }
            other => panic!("expected a convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn unstressed_strip_paths_are_stationary() {
        let grid = straight_strip(all_anchored);
        let schedule = CollapseSchedule::for_grid(&grid);
        let trace = collapse(&grid, &schedule, &default_traced_nodes(&grid)).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.stats.accepted_steps + 1, trace.times().len());
        for path in &trace.paths {
            let first = path.vertices()[0];
            assert!(path.vertices().iter().all(|p| (p - first).norm() < 1e-9));
        }
        assert_eq!(trace.times()[0], 0.0);
        assert_eq!(*trace.times().last().unwrap(), 1.0);
    }

    #[test]
    fn wrapped_strip_straightens_without_stretching() {
        let spec = StripSpec {
            vertices: 21,
            ..StripSpec::default()
        };
        let grid = wrapped_strip(&spec).unwrap();
        let nodes = default_traced_nodes(&grid);
        let trace = collapse(&grid, &CollapseSchedule::for_grid(&grid), &nodes).unwrap();
        trace.validate().unwrap();
        assert_eq!(trace.orientation, Orientation::Collapse);
        assert_eq!(trace.paths[0].vertices()[0], grid.deployed().position(0, 0));
        let ends: Vec<Vec3> = trace.paths.iter().map(|p| *p.vertices().last().unwrap()).collect();
        assert!(((ends[1] - ends[0]).norm() - spec.length).abs() < 1e-3);
        assert!(trace.stats.max_length_drift < 5e-3);
        assert_eq!(*trace.weights.last().unwrap(), 0.0);
        assert!(trace.weights.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn lambda_progress_times_follow_the_weights() {
        let grid = straight_strip(all_anchored);
        let schedule = CollapseSchedule {
            time_param: TimeParam::LambdaProgress,
            ..CollapseSchedule::for_grid(&grid)
        };
        let trace = collapse(&grid, &schedule, &default_traced_nodes(&grid)).unwrap();
        for (t, w) in trace.times().iter().zip(&trace.weights) {
            assert!((t - (1.0 - w / schedule.lambda0)).abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_rejects_unknown_nodes() {
        let grid = straight_strip(all_anchored);
        let schedule = CollapseSchedule::for_grid(&grid);
        let bad = [NodeRef {
            member: "nope".into(),
            vertex: 0,
        }];
        assert!(matches!(collapse(&grid, &schedule, &bad), Err(Error::InvalidInput(_))));
        let out_of_range = [NodeRef {
            member: "s".into(),
            vertex: 11,
        }];
        assert!(matches!(
            collapse(&grid, &schedule, &out_of_range),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(collapse(&grid, &schedule, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn schedule_validation() {
        let grid = straight_strip(all_anchored);
        let ok = CollapseSchedule::for_grid(&grid);
        assert!(ok.validate().is_ok());
        for bad in [
            CollapseSchedule {
                lambda0: 0.0,
                ..ok.clone()
            },
            CollapseSchedule {
                rate_backoff: 1.0,
                ..ok.clone()
            },
            CollapseSchedule {
                jump_threshold: -1.0,
                ..ok.clone()
            },
            CollapseSchedule {
                delta_lambda: f64::NAN,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn stalled_collapse_reports_progress() {
        let grid = wrapped_strip(&StripSpec {
            vertices: 21,
            ..StripSpec::default()
        })
        .unwrap();
        let mut schedule = CollapseSchedule::for_grid(&grid);
        schedule.jump_threshold = 1e-12;
        schedule.min_delta_lambda = schedule.delta_lambda * 0.2;
        match collapse(&grid, &schedule, &default_traced_nodes(&grid)) {
            Err(Error::StalledCollapse { weights, accepted, .. }) => assert_eq!(weights.len(), accepted + 1),
            other => panic!("expected a stalled collapse, got {other:?}"),
        }
    }

    #[test]
    fn reversal_round_trips() {
        let grid = wrapped_strip(&StripSpec {
            vertices: 21,
            ..StripSpec::default()
        })
        .unwrap();
        let trace = collapse(&grid, &CollapseSchedule::for_grid(&grid), &default_traced_nodes(&grid)).unwrap();
        let reversed = reverse_for_deployment(&trace);
        assert_eq!(reversed.orientation, Orientation::Deployment);
        reversed.validate().unwrap();
        for (r, p) in reversed.paths.iter().zip(&trace.paths) {
            assert_eq!(r.vertices()[0], *p.vertices().last().unwrap());
            assert!(r.times().windows(2).all(|w| w[1] > w[0]));
            assert_eq!((r.times()[0], *r.times().last().unwrap()), (0.0, 1.0));
        }
        assert_eq!(reverse_for_deployment(&reversed), trace);
    }

    #[test]
    fn quantized_times_reverse_exactly() {
        for k in 1..50 {
            let t = quantize(k as f64 / 49.0);
            assert_eq!(1.0 - (1.0 - t), t);
        }
    }

    #[test]
    fn stiff_joints_stay_together_at_equilibrium() {
        use crate::rod::joint_energy;
        use crate::samples::{dome, DomeSpec};
        let grid = dome(&DomeSpec::default()).unwrap();
        let schedule = CollapseSchedule::for_grid(&grid);
        let weights = EnergyWeights {
            anchor: schedule.lambda0 * 1e-5,
            joint: 1e2 * grid.default_joint_weight(),
        };
        let options = RelaxOptions {
            max_iterations: 2000,
            ..RelaxOptions::for_grid(&grid)
        };
        let (state, _) = relax(&grid, grid.deployed(), weights, &options).unwrap();
        // E = ½ Σ |x₁ − x₂|² at unit weight bounds the largest gap
        let gap = (2.0 * joint_energy(&grid, &state, 1.0).unwrap().energy).sqrt();
        let shortest = grid.members().iter().map(|m| m.rest_length()).fold(f64::INFINITY, f64::min);
        let moved = state.mean_displacement(grid.deployed());
        assert!(moved > 1e-3, "moved {moved}");
        assert!(gap < 1e-3 * shortest, "gap {gap}");
    }
}
