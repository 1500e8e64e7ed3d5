//! File formats: grid models, traces, linearized path sets and exported
//! displacement schedules. Every file carries a schema tag; derived files
//! record fingerprints of their inputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collapse::{CollapseSchedule, CollapseStats, NodeRef, Orientation, TraceSet};
use crate::error::{Error, Result};
use crate::geometry::{Polyline3, TimedPath, Vec3};
use crate::reparam::{DeviationReport, LinearizedPathSet, OptimizerInfo};
use crate::rod::{Anchor, CrossSection, GridModel, Member, MemberState, RodState, SlidingJoint};

pub const MODEL_SCHEMA: &str = "gridguide/model@1";
pub const TRACE_SCHEMA: &str = "gridguide/trace@1";
pub const LINPATHS_SCHEMA: &str = "gridguide/linpaths@1";
pub const SCHEDULE_SCHEMA: &str = "gridguide/schedule@1";
pub const COLLAPSE_CONFIG_SCHEMA: &str = "gridguide/collapse-config@1";
pub const CURVE_SCHEMA: &str = "gridguide/curve@1";
pub const PATH_SCHEMA: &str = "gridguide/path@1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub stress: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "m".into(),
            stress: "Pa".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionRecord {
    pub width: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRecord {
    pub id: String,
    pub rest_centerline: Vec<[f64; 3]>,
    pub cross_section: SectionRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub member_a: String,
    pub member_b: String,
    pub hole_a: [f64; 2],
    pub hole_b: [f64; 2],
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorRecord {
    pub member: String,
    pub vertex: usize,
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployedRecord {
    pub member: String,
    pub positions: Vec<[f64; 3]>,
    /// Per-edge lamella normals; parallel transport of `+z` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<[f64; 3]>>,
}

/// On-disk grid model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub units: Units,
    pub members: Vec<MemberRecord>,
    #[serde(default)]
    pub joints: Vec<JointRecord>,
    #[serde(default)]
    pub anchors: Vec<AnchorRecord>,
    pub deployed: Vec<DeployedRecord>,
}

fn v3(p: &Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn schema_error(file: &str, field: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Schema {
        file: file.to_string(),
        field: field.into(),
        message: message.to_string(),
    }
}

fn check_schema(file: &str, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(schema_error(
            file,
            "schema",
            format!("expected `{expected}`, found `{found}`"),
        ));
    }
    Ok(())
}

impl ModelFile {
    pub fn from_grid(grid: &GridModel) -> Self {
        let ids: Vec<&str> = grid.members().iter().map(|m| m.id()).collect();
        let members = grid
            .members()
            .iter()
            .map(|m| {
                let cs = m.cross_section();
                MemberRecord {
                    id: m.id().to_string(),
                    rest_centerline: m.rest_centerline().vertices().iter().map(v3).collect(),
                    cross_section: SectionRecord {
                        width: cs.width,
                        thickness: cs.thickness,
                        youngs_modulus: cs.youngs_modulus,
                        shear_modulus: cs.shear_modulus,
                    },
                }
            })
            .collect();
        let joints = grid
            .joints()
            .iter()
            .zip(&grid.deployed().slides)
            .map(|(j, s)| JointRecord {
                member_a: ids[j.member_a].to_string(),
                member_b: ids[j.member_b].to_string(),
                hole_a: j.hole_a,
                hole_b: j.hole_b,
                t1: s[0],
                t2: s[1],
            })
            .collect();
        let anchors = grid
            .anchors()
            .iter()
            .map(|a| AnchorRecord {
                member: ids[a.member].to_string(),
                vertex: a.vertex,
                target: v3(&a.target),
            })
            .collect();
        let deployed = grid
            .deployed()
            .members
            .iter()
            .zip(&ids)
            .map(|(ms, id)| DeployedRecord {
                member: id.to_string(),
                positions: ms.positions.iter().map(v3).collect(),
                normals: Some((0..ms.edge_count()).map(|e| v3(&ms.material_frame(e)[2])).collect()),
            })
            .collect();
        Self {
            schema: MODEL_SCHEMA.to_string(),
            units: Units::default(),
            members,
            joints,
            anchors,
            deployed,
        }
    }

    /// Validates every cross-reference and builds the grid.
    pub fn into_grid(self, file: &str) -> Result<GridModel> {
        check_schema(file, &self.schema, MODEL_SCHEMA)?;
        if self.units.length != "m" || self.units.stress != "Pa" {
            return Err(schema_error(file, "units", "only meters and pascals are supported"));
        }
        let mut members = Vec::with_capacity(self.members.len());
        for (i, rec) in self.members.into_iter().enumerate() {
            let field = format!("members[{i}]");
            let cs = CrossSection::new(
                rec.cross_section.width,
                rec.cross_section.thickness,
                rec.cross_section.youngs_modulus,
                rec.cross_section.shear_modulus,
            )
            .map_err(|e| schema_error(file, format!("{field}.cross_section"), e))?;
            let line = Polyline3::new(rec.rest_centerline.iter().map(vec3).collect())
                .map_err(|e| schema_error(file, format!("{field}.rest_centerline"), e))?;
            members.push(Member::new(rec.id, line, cs).map_err(|e| schema_error(file, &field, e))?);
        }
        let index = |id: &str, field: String| -> Result<usize> {
            members
                .iter()
                .position(|m| m.id() == id)
                .ok_or_else(|| Error::DanglingReference {
                    file: file.to_string(),
                    field,
                    kind: "member",
                    id: id.to_string(),
                })
        };
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut slides = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.iter().enumerate() {
            let joint = SlidingJoint {
                member_a: index(&j.member_a, format!("joints[{i}].member_a"))?,
                member_b: index(&j.member_b, format!("joints[{i}].member_b"))?,
                hole_a: j.hole_a,
                hole_b: j.hole_b,
            };
            if !(0.0..=1.0).contains(&j.t1) || !(0.0..=1.0).contains(&j.t2) {
                return Err(schema_error(
                    file,
                    format!("joints[{i}]"),
                    "t1 and t2 must lie in [0, 1]",
                ));
            }
            joints.push(joint);
            slides.push([j.t1, j.t2]);
        }
        let mut anchors = Vec::with_capacity(self.anchors.len());
        for (i, a) in self.anchors.iter().enumerate() {
            anchors.push(Anchor {
                member: index(&a.member, format!("anchors[{i}].member"))?,
                vertex: a.vertex,
                target: vec3(&a.target),
            });
        }
        let mut states: Vec<Option<MemberState>> = vec![None; members.len()];
        for (i, d) in self.deployed.iter().enumerate() {
            let field = format!("deployed[{i}]");
            let m = index(&d.member, format!("{field}.member"))?;
            if states[m].is_some() {
                return Err(schema_error(file, field, format!("member `{}` listed twice", d.member)));
            }
            let n = members[m].vertex_count();
            if d.positions.len() != n {
                return Err(schema_error(
                    file,
                    format!("{field}.positions"),
                    format!("expected {n} positions, found {}", d.positions.len()),
                ));
            }
            let positions: Vec<Vec3> = d.positions.iter().map(vec3).collect();
            if positions.windows(2).any(|w| w[0] == w[1]) || positions.iter().any(|p| !p.iter().all(|c| c.is_finite()))
            {
                return Err(schema_error(
                    file,
                    format!("{field}.positions"),
                    "positions must be finite with distinct neighbours",
                ));
            }
            let state = match &d.normals {
                Some(normals) => {
                    if normals.len() != n - 1 {
                        return Err(schema_error(
                            file,
                            format!("{field}.normals"),
                            format!("expected {} normals, found {}", n - 1, normals.len()),
                        ));
                    }
                    MemberState::with_normals(positions, &normals.iter().map(vec3).collect::<Vec<_>>())
                }
                None => MemberState::transported(positions, Vec3::z()),
            };
            states[m] = Some(state);
        }
        let mut deployed = Vec::with_capacity(members.len());
        for (m, s) in states.into_iter().enumerate() {
            deployed.push(s.ok_or_else(|| {
                schema_error(
                    file,
                    "deployed",
                    format!("member `{}` has no deployed positions", members[m].id()),
                )
            })?);
        }
        let state = RodState {
            members: deployed,
            slides,
        };
        GridModel::new(members, joints, anchors, state).map_err(|e| schema_error(file, "", e))
    }
}

/// Parses JSON, reporting syntax errors by position and shape errors by field path.
pub fn parse_json<T: DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        json_error(e.into_inner(), file, field)
    })?;
    de.end().map_err(|e| json_error(e, file, String::new()))?;
    Ok(value)
}

fn json_error(inner: serde_json::Error, file: &str, field: String) -> Error {
    match inner.classify() {
        serde_json::error::Category::Data => schema_error(file, field, inner),
        _ => Error::Parse {
            file: file.to_string(),
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        },
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_model(text: &str, file: &str) -> Result<GridModel> {
    parse_json::<ModelFile>(text, file)?.into_grid(file)
}

pub fn load_model(path: &Path) -> Result<GridModel> {
    parse_model(&read_text(path)?, &label(path))
}

/// Loads a model together with the fingerprint of the file it was read from.
///
/// Rebuilding frames from stored normals is not bit-exact, so a loaded grid
/// re-fingerprints slightly differently; provenance checks use this value.
pub fn load_model_fingerprinted(path: &Path) -> Result<(GridModel, String)> {
    let file = label(path);
    let model: ModelFile = parse_json(&read_text(path)?, &file)?;
    let fingerprint = file_fingerprint(&model);
    Ok((model.into_grid(&file)?, fingerprint))
}

pub fn save_model(grid: &GridModel, path: &Path) -> Result<()> {
    write_json(path, &ModelFile::from_grid(grid))
}

/// SHA-256 of the canonical JSON form of the model.
pub fn model_fingerprint(grid: &GridModel) -> String {
    file_fingerprint(&ModelFile::from_grid(grid))
}

fn file_fingerprint(model: &ModelFile) -> String {
    sha256_hex(&serde_json::to_vec(model).expect("serializable model"))
}

/// Optional overrides of the default collapse schedule plus the traced nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    #[serde(default)]
    pub schema: Option<String>,
    pub lambda0: Option<f64>,
    pub delta_lambda: Option<f64>,
    pub jump_threshold: Option<f64>,
    pub rate_backoff: Option<f64>,
    pub min_delta_lambda: Option<f64>,
    pub max_steps: Option<usize>,
    pub joint_weight: Option<f64>,
    pub limit_holes: Option<bool>,
    pub time_param: Option<crate::collapse::TimeParam>,
    pub gradient_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub traced: Option<Vec<NodeRef>>,
}

impl CollapseConfig {
    pub fn apply(&self, mut schedule: CollapseSchedule) -> CollapseSchedule {
        let s = &mut schedule;
        if let Some(v) = self.lambda0 {
            s.lambda0 = v;
            if self.delta_lambda.is_none() {
                s.delta_lambda = v / 100.0;
            }
            if self.min_delta_lambda.is_none() {
                s.min_delta_lambda = v * 1e-14;
            }
        }
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(delta_lambda => s.delta_lambda,
            jump_threshold => s.jump_threshold,
            rate_backoff => s.rate_backoff,
            min_delta_lambda => s.min_delta_lambda,
            max_steps => s.max_steps,
            joint_weight => s.joint_weight,
            limit_holes => s.relax.limit_holes,
            time_param => s.time_param,
            gradient_tolerance => s.relax.gradient_tolerance,
            max_iterations => s.relax.max_iterations);
        schedule
    }
}

pub fn load_collapse_config(path: &Path) -> Result<CollapseConfig> {
    let file = label(path);
    let cfg: CollapseConfig = parse_json(&read_text(path)?, &file)?;
    if let Some(schema) = &cfg.schema {
        check_schema(&file, schema, COLLAPSE_CONFIG_SCHEMA)?;
    }
    Ok(cfg)
}

/// On-disk trace set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub schema: String,
    pub model_sha256: String,
    pub orientation: Orientation,
    pub schedule: CollapseSchedule,
    pub stats: CollapseStats,
    pub nodes: Vec<NodeRef>,
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// `paths[j][k]`: node `j` at sample `k`.
    pub paths: Vec<Vec<[f64; 3]>>,
}

impl TraceFile {
    pub fn from_trace(trace: &TraceSet) -> Self {
        Self {
            schema: TRACE_SCHEMA.to_string(),
            model_sha256: trace.model_fingerprint.clone(),
            orientation: trace.orientation,
            schedule: trace.schedule.clone(),
            stats: trace.stats.clone(),
            nodes: trace.nodes.clone(),
            times: trace.times().to_vec(),
            weights: trace.weights.clone(),
            paths: trace
                .paths
                .iter()
                .map(|p| p.vertices().iter().map(v3).collect())
                .collect(),
        }
    }

    pub fn into_trace(self, file: &str) -> Result<TraceSet> {
        check_schema(file, &self.schema, TRACE_SCHEMA)?;
        if self.paths.len() != self.nodes.len() {
            return Err(schema_error(file, "paths", "one path per node is required"));
        }
        let paths = self
            .paths
            .iter()
            .enumerate()
            .map(|(j, p)| {
                TimedPath::new(p.iter().map(vec3).collect(), self.times.clone())
                    .map_err(|e| schema_error(file, format!("paths[{j}]"), e))
            })
            .collect::<Result<Vec<_>>>()?;
        let trace = TraceSet {
            nodes: self.nodes,
            paths,
            weights: self.weights,
            orientation: self.orientation,
            stats: self.stats,
            model_fingerprint: self.model_sha256,
            schedule: self.schedule,
        };
        trace.validate().map_err(|e| schema_error(file, "", e))?;
        Ok(trace)
    }
}

pub fn trace_fingerprint(trace: &TraceSet) -> String {
    sha256_hex(&serde_json::to_vec(&TraceFile::from_trace(trace)).expect("serializable trace"))
}

pub fn save_trace(trace: &TraceSet, path: &Path) -> Result<()> {
    write_json(path, &TraceFile::from_trace(trace))
}

pub fn load_trace(path: &Path) -> Result<TraceSet> {
    let file = label(path);
    parse_json::<TraceFile>(&read_text(path)?, &file)?.into_trace(&file)
}

/// On-disk linearized path set; embeds its source trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinPathsFile {
    pub schema: String,
    pub model_sha256: String,
    pub trace_sha256: String,
    pub knots: Vec<f64>,
    pub nodes: Vec<NodeRef>,
    pub positions: Vec<Vec<[f64; 3]>>,
    pub report: DeviationReport,
    #[serde(default)]
    pub optimizer: Option<OptimizerInfo>,
    pub trace: TraceFile,
}

impl LinPathsFile {
    pub fn from_paths(paths: &LinearizedPathSet) -> Self {
        Self {
            schema: LINPATHS_SCHEMA.to_string(),
            model_sha256: paths.source.model_fingerprint.clone(),
            trace_sha256: trace_fingerprint(&paths.source),
            knots: paths.knots.clone(),
            nodes: paths.nodes.clone(),
            positions: paths.positions.iter().map(|p| p.iter().map(v3).collect()).collect(),
            report: paths.report.clone(),
            optimizer: paths.optimizer.clone(),
            trace: TraceFile::from_trace(&paths.source),
        }
    }

    pub fn into_paths(self, file: &str) -> Result<LinearizedPathSet> {
        check_schema(file, &self.schema, LINPATHS_SCHEMA)?;
        let source = self.trace.into_trace(file)?;
        if trace_fingerprint(&source) != self.trace_sha256 {
            return Err(Error::Provenance(format!(
                "{file}: embedded trace does not match its fingerprint"
            )));
        }
        let paths = LinearizedPathSet {
            knots: self.knots,
            nodes: self.nodes,
            positions: self.positions.iter().map(|p| p.iter().map(vec3).collect()).collect(),
            report: self.report,
            optimizer: self.optimizer,
            source,
        };
        paths.validate().map_err(|e| schema_error(file, "", e))?;
        Ok(paths)
    }
}

pub fn save_linpaths(paths: &LinearizedPathSet, path: &Path) -> Result<()> {
    write_json(path, &LinPathsFile::from_paths(paths))
}

pub fn load_linpaths(path: &Path) -> Result<LinearizedPathSet> {
    let file = label(path);
    parse_json::<LinPathsFile>(&read_text(path)?, &file)?.into_paths(&file)
}

/// Polyline input of the involute utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFile {
    #[serde(default)]
    pub schema: Option<String>,
    pub points: Vec<[f64; 3]>,
}

pub fn load_curve(path: &Path) -> Result<Vec<Vec3>> {
    let file = label(path);
    let curve: CurveFile = parse_json(&read_text(path)?, &file)?;
    if let Some(schema) = &curve.schema {
        check_schema(&file, schema, CURVE_SCHEMA)?;
    }
    if curve.points.len() < 2 {
        return Err(schema_error(&file, "points", "a curve needs at least 2 points"));
    }
    Ok(curve.points.iter().map(vec3).collect())
}

/// A single timed path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    pub schema: String,
    pub times: Vec<f64>,
    pub vertices: Vec<[f64; 3]>,
}

pub fn save_path(path: &TimedPath, file: &Path) -> Result<()> {
    write_json(
        file,
        &PathFile {
            schema: PATH_SCHEMA.to_string(),
            times: path.times().to_vec(),
            vertices: path.vertices().iter().map(v3).collect(),
        },
    )
}

pub fn load_path(file: &Path) -> Result<TimedPath> {
    let label = label(file);
    let parsed: PathFile = parse_json(&read_text(file)?, &label)?;
    check_schema(&label, &parsed.schema, PATH_SCHEMA)?;
    TimedPath::new(parsed.vertices.iter().map(vec3).collect(), parsed.times).map_err(|e| schema_error(&label, "", e))
}

/// Export format of a displacement schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProvenance {
    pub model_sha256: String,
    pub trace_sha256: String,
    pub e_ass: f64,
    pub n: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleNode {
    pub id: String,
    pub positions: Vec<[f64; 3]>,
}

/// JSON mirror of the CSV schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub schema: String,
    pub provenance: ScheduleProvenance,
    pub knots: Vec<f64>,
    pub nodes: Vec<ScheduleNode>,
}

impl ScheduleFile {
    pub fn from_paths(paths: &LinearizedPathSet) -> Self {
        Self {
            schema: SCHEDULE_SCHEMA.to_string(),
            provenance: ScheduleProvenance {
                model_sha256: paths.source.model_fingerprint.clone(),
                trace_sha256: trace_fingerprint(&paths.source),
                e_ass: paths.report.energy,
                n: paths.n(),
                seed: paths.optimizer.as_ref().map(|o| o.ga.seed),
            },
            knots: paths.knots.clone(),
            nodes: paths
                .nodes
                .iter()
                .zip(&paths.positions)
                .map(|(node, p)| ScheduleNode {
                    id: node.to_string(),
                    positions: p.iter().map(v3).collect(),
                })
                .collect(),
        }
    }
}

/// `node_id,t,x,y,z`, nodes grouped, knots ascending, 9 significant digits.
pub fn schedule_csv(paths: &LinearizedPathSet) -> String {
    let mut out = String::from("node_id,t,x,y,z\n");
    for (node, positions) in paths.nodes.iter().zip(&paths.positions) {
        for (t, p) in paths.knots.iter().zip(positions) {
            writeln!(out, "{node},{t:.8e},{:.8e},{:.8e},{:.8e}", p.x, p.y, p.z).unwrap();
        }
    }
    out
}

pub fn export_schedule(paths: &LinearizedPathSet, format: ExportFormat, path: &Path) -> Result<()> {
    paths.validate()?;
    match format {
        ExportFormat::Csv => write_atomic(path, schedule_csv(paths).as_bytes()),
        ExportFormat::Json => write_json(path, &ScheduleFile::from_paths(paths)),
    }
}

/// Parsed CSV schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTable {
    pub knots: Vec<f64>,
    pub nodes: Vec<(String, Vec<Vec3>)>,
}

/// Reads a CSV schedule and checks that every node block shares one `t` column.
pub fn parse_schedule_csv(text: &str, file: &str) -> Result<ScheduleTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        file: file.to_string(),
        line,
        column: 1,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "node_id,t,x,y,z")) => {}
        _ => return Err(parse_err(1, "expected header `node_id,t,x,y,z`".into())),
    }
    let mut blocks: Vec<(String, Vec<f64>, Vec<Vec3>)> = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(i + 1, format!("expected 5 columns, found {}", cols.len())));
        }
        let mut nums = [0.0; 4];
        for (k, c) in cols[1..].iter().enumerate() {
            nums[k] = c
                .parse()
                .map_err(|_| parse_err(i + 1, format!("invalid number `{c}`")))?;
        }
        let id = cols[0];
        if blocks.last().is_none_or(|b| b.0 != id) {
            if blocks.iter().any(|b| b.0 == id) {
                return Err(parse_err(i + 1, format!("rows of node `{id}` are not grouped")));
            }
            blocks.push((id.to_string(), Vec::new(), Vec::new()));
        }
        let block = blocks.last_mut().unwrap();
        block.1.push(nums[0]);
        block.2.push(Vec3::new(nums[1], nums[2], nums[3]));
    }
    let Some(first) = blocks.first() else {
        return Err(parse_err(2, "schedule has no rows".into()));
    };
    let knots = first.1.clone();
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(parse_err(2, "t column must be strictly increasing".into()));
    }
    if let Some(b) = blocks.iter().find(|b| b.1 != knots) {
        return Err(schema_error(
            file,
            "t",
            format!("node `{}` has a different t column", b.0),
        ));
    }
    Ok(ScheduleTable {
        knots,
        nodes: blocks.into_iter().map(|(id, _, p)| (id, p)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "schema": "gridguide/model@1",
  "units": {"length": "m", "stress": "Pa"},
  "members": [
    {"id": "a", "rest_centerline": [[0,0,0],[0.5,0,0],[1,0,0]],
     "cross_section": {"width": 0.02, "thickness": 0.002, "youngs_modulus": 1e10, "shear_modulus": 4e9}},
    {"id": "b", "rest_centerline": [[0.5,-0.5,0],[0.5,0,0],[0.5,0.5,0]],
     "cross_section": {"width": 0.02, "thickness": 0.002, "youngs_modulus": 1e10, "shear_modulus": 4e9}}
  ],
  "joints": [{"member_a": "a", "member_b": "b", "hole_a": [0.45, 0.55], "hole_b": [0.45, 0.55], "t1": 0.5, "t2": 0.5}],
  "anchors": [{"member": "a", "vertex": 0, "target": [0,0,0]}],
  "deployed": [
    {"member": "a", "positions": [[0,0,0],[0.5,0,0.1],[1,0,0]]},
    {"member": "b", "positions": [[0.5,-0.5,0],[0.5,0,0.1],[0.5,0.5,0]]}
  ]
}"#;

    #[test]
    fn minimal_model_loads() {
        let grid = parse_model(MINIMAL, "m.json").unwrap();
        assert_eq!(grid.members().len(), 2);
        assert_eq!(grid.joints()[0].member_b, 1);
        assert_eq!(grid.member_index("b"), Some(1));
    }

    #[test]
    fn dangling_joint_names_the_id() {
        let text = MINIMAL.replace(r#""member_b": "b""#, r#""member_b": "zz""#);
        match parse_model(&text, "m.json") {
            Err(Error::DanglingReference { id, field, .. }) => {
                assert_eq!(id, "zz");
                assert_eq!(field, "joints[0].member_b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let text = MINIMAL.replace(r#""units":"#, r#""units" "#);
        match parse_model(&text, "m.json") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_error_has_field_path() {
        let text = MINIMAL.replace(r#""width": 0.02"#, r#""width": "wide""#);
        match parse_model(&text, "m.json") {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "members[0].cross_section.width"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let text = MINIMAL.replace("gridguide/model@1", "gridguide/model@9");
        assert!(matches!(parse_model(&text, "m.json"), Err(Error::Schema { .. })));
    }

    #[test]
    fn model_round_trip_is_semantic_identity() {
        let grid = parse_model(MINIMAL, "m.json").unwrap();
        let file = ModelFile::from_grid(&grid);
        let again = file.clone().into_grid("m.json").unwrap();
        let back = ModelFile::from_grid(&again);
        assert_eq!(back.members, file.members);
        assert_eq!(back.joints, file.joints);
        assert_eq!(back.anchors, file.anchors);
        for (a, b) in back.deployed.iter().zip(&file.deployed) {
            assert_eq!(a.positions, b.positions);
        }
        for (a, b) in grid.deployed().members.iter().zip(&again.deployed().members) {
            for e in 0..a.edge_count() {
                let (fa, fb) = (a.material_frame(e), b.material_frame(e));
                assert!((0..3).all(|k| (fa[k] - fb[k]).norm() < 1e-12));
            }
        }
    }

    #[test]
    fn csv_parse_rejects_mismatched_times() {
        let text = "node_id,t,x,y,z\na:0,0,0,0,0\na:0,1,1,0,0\nb:0,0,0,0,0\nb:0,0.5,1,0,0\n";
        assert!(parse_schedule_csv(text, "s.csv").is_err());
        let ok = "node_id,t,x,y,z\na:0,0,0,0,0\na:0,1,1,0,0\nb:0,0,0,0,0\nb:0,1,1,0,0\n";
        let table = parse_schedule_csv(ok, "s.csv").unwrap();
        assert_eq!(table.knots, vec![0.0, 1.0]);
        assert_eq!(table.nodes.len(), 2);
    }

    #[test]
    fn path_and_curve_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = TimedPath::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0)],
            vec![0.0, 0.5, 1.0],
        )
        .unwrap();
        let file = dir.path().join("p.json");
        save_path(&path, &file).unwrap();
        assert_eq!(load_path(&file).unwrap(), path);

        let curve = dir.path().join("c.json");
        std::fs::write(&curve, r#"{"points": [[1,0,0],[0,1,0]]}"#).unwrap();
        assert_eq!(load_curve(&curve).unwrap().len(), 2);
        std::fs::write(&curve, r#"{"schema": "gridguide/path@1", "points": [[1,0,0],[0,1,0]]}"#).unwrap();
        assert!(matches!(load_curve(&curve), Err(Error::Schema { .. })));
        std::fs::write(&curve, r#"{"points": [[1,0,0]]}"#).unwrap();
        assert!(matches!(load_curve(&curve), Err(Error::Schema { .. })));
    }
}
