//! Compression audit of linearized schedules.
//!
//! Straight-line interpolation between knots moves constrained nodes along
//! chords instead of their traced curves. Where the chord between two
//! consecutive constrained nodes of a member becomes shorter than along the
//! traced motion, the member is pushed together and may buckle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reparam::LinearizedPathSet;
use crate::rod::GridModel;

pub const DEFAULT_THRESHOLD: f64 = 0.02;
pub const DEFAULT_SAMPLES: usize = 9;

/// One sampled node pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSample {
    pub member: String,
    /// Path indices of the two constrained nodes.
    pub nodes: [usize; 2],
    /// Knot segment index.
    pub segment: usize,
    pub t: f64,
    /// Linearized chord / traced chord at the same time.
    pub ratio: f64,
    /// Linearized chord / rest arc length between the nodes.
    pub rest_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub threshold: f64,
    pub samples_per_segment: usize,
    /// Node pairs checked (consecutive constrained nodes along each member).
    pub pairs: usize,
    pub worst_ratio: f64,
    pub flagged: Vec<CompressionSample>,
    /// Distinct knot segments with at least one flag.
    pub flagged_segments: Vec<usize>,
}

impl CompressionReport {
    pub fn is_clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Samples every knot segment at `samples_per_segment` interior times and
/// flags node pairs whose chord ratio drops below `1 − threshold`.
pub fn check_compression(
    paths: &LinearizedPathSet,
    grid: &GridModel,
    samples_per_segment: usize,
    threshold: f64,
) -> Result<CompressionReport> {
    paths.validate()?;
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid("threshold must lie in [0, 1)"));
    }
    if samples_per_segment == 0 {
        return Err(Error::invalid("samples_per_segment must be >= 1"));
    }
    // constrained nodes grouped per member, ordered along the rest centerline
    let mut by_member: Vec<Vec<(usize, usize)>> = vec![Vec::new(); grid.members().len()];
    for (j, node) in paths.nodes.iter().enumerate() {
        let m = grid
            .member_index(&node.member)
            .ok_or_else(|| Error::invalid(format!("constrained node {node} is not on any member")))?;
        if node.vertex >= grid.members()[m].vertex_count() {
            return Err(Error::invalid(format!("constrained node {node}: vertex out of range")));
        }
        by_member[m].push((node.vertex, j));
    }
    let mut pairs = Vec::new();
    for (m, nodes) in by_member.iter_mut().enumerate() {
        nodes.sort();
        nodes.dedup_by_key(|n| n.0);
        let arclength = grid.members()[m].rest_arclength();
        for w in nodes.windows(2) {
            let rest = arclength[w[1].0] - arclength[w[0].0];
            pairs.push((m, [w[0].1, w[1].1], rest));
        }
    }

    let trace = &paths.source.paths;
    let mut worst_ratio = 1.0f64;
    let mut flagged = Vec::new();
    for (segment, k) in paths.knots.windows(2).enumerate() {
        for s in 1..=samples_per_segment {
            let t = k[0] + (k[1] - k[0]) * s as f64 / (samples_per_segment + 1) as f64;
            for &(m, [a, b], rest) in &pairs {
                let chord = (paths.position_at(b, t) - paths.position_at(a, t)).norm();
                let traced = (trace[b].position_at(t) - trace[a].position_at(t)).norm();
                let ratio = if traced > 0.0 {
                    chord / traced
                } else if chord == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                };
                worst_ratio = worst_ratio.min(ratio);
                if ratio < 1.0 - threshold {
                    flagged.push(CompressionSample {
                        member: grid.members()[m].id().to_string(),
                        nodes: [a, b],
                        segment,
                        t,
                        ratio,
                        rest_ratio: chord / rest,
                    });
                }
            }
        }
    }
    let mut flagged_segments: Vec<usize> = flagged.iter().map(|f| f.segment).collect();
    flagged_segments.dedup();
    Ok(CompressionReport {
        threshold,
        samples_per_segment,
        pairs: pairs.len(),
        worst_ratio,
        flagged,
        flagged_segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reparam::{linearize, select_n, GaConfig, ParamVector};
    use crate::samples::semicircle_wrap;

    #[test]
    fn single_chord_of_the_semicircle_wrap_is_flagged() {
        let (grid, trace) = semicircle_wrap(41, 2001).unwrap();
        let knots = ParamVector::uniform(1).unwrap();
        // one chord: collapse straight to deployed, with the mid knot on the trace
        let mut lin = linearize(&trace, &knots, None).unwrap();
        lin.knots = vec![0.0, 1.0];
        lin.positions = lin.positions.iter().map(|p| vec![p[0], p[2]]).collect();
        let report = check_compression(&lin, &grid, DEFAULT_SAMPLES, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(report.pairs, 1);
        assert!(!report.is_clean());
        assert_eq!(report.flagged_segments, vec![0]);
        // at t = 1/2 the tip chord is 1.862 long against 2.757 along the trace
        let mid = report.flagged.iter().find(|f| (f.t - 0.5).abs() < 1e-12).unwrap();
        assert!((mid.ratio - 0.6754).abs() < 2e-3, "ratio {}", mid.ratio);
        assert!(report.worst_ratio < 1.0 - DEFAULT_THRESHOLD);
    }

    #[test]
    fn optimized_schedule_of_the_semicircle_wrap_is_clean() {
        let (grid, trace) = semicircle_wrap(41, 2001).unwrap();
        let selection = select_n(&trace.paths, 0.03, 12, &GaConfig::default()).unwrap();
        assert!(selection.met);
        let lin = linearize(&trace, &selection.result.knots, None).unwrap();
        let report = check_compression(&lin, &grid, DEFAULT_SAMPLES, DEFAULT_THRESHOLD).unwrap();
        assert!(report.is_clean(), "worst ratio {}", report.worst_ratio);
    }

    #[test]
    fn following_the_trace_exactly_is_clean() {
        let (grid, trace) = semicircle_wrap(41, 201).unwrap();
        let inner: Vec<f64> = trace.times()[1..trace.times().len() - 1].to_vec();
        let lin = linearize(&trace, &ParamVector::new(inner).unwrap(), None).unwrap();
        let report = check_compression(&lin, &grid, 3, DEFAULT_THRESHOLD).unwrap();
        assert!(report.is_clean());
        assert!((report.worst_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_settings() {
        let (grid, trace) = semicircle_wrap(11, 101).unwrap();
        let lin = linearize(&trace, &ParamVector::uniform(2).unwrap(), None).unwrap();
        assert!(check_compression(&lin, &grid, 0, 0.02).is_err());
        assert!(check_compression(&lin, &grid, 3, 1.0).is_err());
        assert!(check_compression(&lin, &grid, 3, -0.1).is_err());
    }
}
