//! Parameter sweeps over `(mu, Mach)`, snapshot persistence and full-order
//! bifurcation diagrams.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::container::{expect_kind, read_container, write_container};
use crate::dg::{DGField, PointEvaluator, ReferenceElement};
use crate::error::{Error, Result};
use crate::mesh::{build_channel_mesh, ChannelGeometry, QuadMesh};
use crate::physics::{outlet_pressure_for_mach, ConservedState, GasModel, TransformedState};
use crate::solver::{probe, Channel, FlowCase, FlowConditions, Quantity, RunStatus, SolverConfig, WarmStart};

/// Names of the stored variables, in storage order.
pub const VARIABLES: [&str; 4] = ["inv_rho", "u1", "u2", "p"];

/// Asymmetry threshold as a fraction of the inlet velocity.
pub const ASYMMETRY_FRACTION: f64 = 0.02;

/// Probe location on the channel centreline.
pub const PROBE_POINT: [f64; 2] = [15.0, 0.0];

pub fn variable_index(name: &str) -> Result<usize> {
    VARIABLES
        .iter()
        .position(|v| *v == name)
        .ok_or_else(|| Error::Pipeline(format!("unknown field `{name}`, expected one of {VARIABLES:?}")))
}

/// Everything shared by the cases of a study except `(mu, Mach)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub geometry: ChannelGeometry,
    pub gas: GasModel,
    pub flow: FlowConditions,
    pub n_y: usize,
    pub order: usize,
    pub solver: SolverConfig,
}

impl Study {
    pub fn mesh(&self) -> Result<QuadMesh> {
        build_channel_mesh(&self.geometry, self.n_y)
    }

    pub fn element(&self) -> Result<ReferenceElement> {
        ReferenceElement::new(self.order)
    }

    pub fn case(&self, mu: f64, mach: f64) -> Result<CaseSpec> {
        CaseSpec::new(mu, mach, self.n_y, self.order)
    }

    /// `rho_in u_in D / mu` with `D` the inlet width.
    pub fn reynolds(&self, mu: f64) -> f64 {
        self.flow.inlet_density * self.flow.inlet_velocity * self.geometry.inlet_width() / mu
    }

    pub fn outlet_pressure(&self, mach: f64) -> f64 {
        outlet_pressure_for_mach(self.flow.inlet_density, self.flow.inlet_velocity, self.gas.gamma, mach)
    }

    pub fn threshold(&self) -> f64 {
        ASYMMETRY_FRACTION * self.flow.inlet_velocity
    }
}

/// One sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub mu: f64,
    pub mach: f64,
    pub n_y: usize,
    pub order: usize,
}

impl CaseSpec {
    pub fn new(mu: f64, mach: f64, n_y: usize, order: usize) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config {
                path: "sweep.mu".into(),
                message: format!("viscosity must be positive, got {mu}"),
            });
        }
        if !(mach > 0.0 && mach < 1.0) {
            return Err(Error::Config {
                path: "sweep.mach".into(),
                message: format!("Mach number must lie in (0, 1), got {mach}"),
            });
        }
        Ok(Self { mu, mach, n_y, order })
    }

    /// Reynolds number for the reference inflow (`rho = 1`, `u = 20`, `D = 2.5`).
    pub fn reynolds(&self) -> f64 {
        50.0 / self.mu
    }

    pub fn flow_case(&self) -> FlowCase {
        FlowCase {
            mu: self.mu,
            mach: self.mach,
        }
    }
}

/// Outcome of one full-order run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub mu: f64,
    pub mach: f64,
    pub p_out: f64,
    pub probe_uy: f64,
    pub converged: bool,
    pub status: CaseStatus,
    pub steps: usize,
    pub final_residual: f64,
    pub reference_residual: f64,
    pub wall_time: f64,
    pub warm_from: Option<f64>,
    pub fingerprint: String,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Converged,
    MaxSteps,
    Failed,
}

impl From<RunStatus> for CaseStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => CaseStatus::Converged,
            RunStatus::MaxSteps => CaseStatus::MaxSteps,
            RunStatus::Aborted => CaseStatus::Failed,
        }
    }
}

/// Nodewise `(1/rho, u1, u2, p)` of a conserved field, one element-major
/// DOF vector per variable.
pub fn transformed_fields(field: &DGField, gamma: f64) -> [Vec<f64>; 4] {
    let nn = field.n_nodes();
    let mut out: [Vec<f64>; 4] = Default::default();
    for v in out.iter_mut() {
        v.reserve(field.n_elements() * nn);
    }
    for e in 0..field.n_elements() {
        let vals = field.element(e);
        for k in 0..nn {
            let s = ConservedState {
                rho: vals[k],
                mom: [vals[nn + k], vals[2 * nn + k]],
                rho_e: vals[3 * nn + k],
            };
            let t = TransformedState::from_conserved(&s, gamma).to_array();
            for (o, x) in out.iter_mut().zip(t) {
                o.push(x);
            }
        }
    }
    out
}

/// Per-case metadata stored in the snapshot header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCase {
    pub mu: f64,
    pub mach: f64,
    pub p_out: f64,
    pub probe_uy: f64,
    pub converged: bool,
}

/// Converged solutions in transformed variables, ordered by `(mach, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub mesh_hash: String,
    pub order: usize,
    pub n_y: usize,
    pub n_dofs: usize,
    pub cases: Vec<SnapshotCase>,
    /// `fields[case][variable]`.
    pub fields: Vec<[Vec<f64>; 4]>,
}

impl SnapshotSet {
    pub fn new(mesh_hash: String, order: usize, n_y: usize, n_dofs: usize) -> Self {
        Self {
            mesh_hash,
            order,
            n_y,
            n_dofs,
            cases: Vec::new(),
            fields: Vec::new(),
        }
    }

    /// Append a case; it must sort strictly after the last one.
    pub fn push(&mut self, case: SnapshotCase, fields: [Vec<f64>; 4]) -> Result<()> {
        if let Some(bad) = fields.iter().find(|f| f.len() != self.n_dofs) {
            return Err(Error::Dimension {
                expected: self.n_dofs,
                found: bad.len(),
            });
        }
        if let Some(last) = self.cases.last() {
            if (last.mach, last.mu) >= (case.mach, case.mu) {
                return Err(Error::Pipeline(format!(
                    "snapshot (mu={}, Ma={}) is not ordered after (mu={}, Ma={})",
                    case.mu, case.mach, last.mu, last.mach
                )));
            }
        }
        self.cases.push(case);
        self.fields.push(fields);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Distinct Mach numbers, ascending.
    pub fn machs(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.cases {
            if out.last() != Some(&c.mach) {
                out.push(c.mach);
            }
        }
        out
    }

    /// Indices of the cases at one Mach number.
    pub fn indices_at(&self, mach: f64) -> Vec<usize> {
        (0..self.cases.len()).filter(|&i| same_mach(self.cases[i].mach, mach)).collect()
    }

    /// `(mu, field)` pairs of one variable at one Mach number.
    pub fn series(&self, mach: f64, variable: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let idx = self.indices_at(mach);
        let mus = idx.iter().map(|&i| self.cases[i].mu).collect();
        let fields = idx.iter().map(|&i| self.fields[i][variable].clone()).collect();
        (mus, fields)
    }

    fn header(&self) -> Value {
        json!({
            "kind": "snapshots",
            "mesh_hash": self.mesh_hash,
            "P": self.order,
            "n_y": self.n_y,
            "n_dofs": self.n_dofs,
            "variables": VARIABLES,
            "cases": self.cases,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut payload = Vec::with_capacity(self.cases.len() * 4 * self.n_dofs);
        for f in &self.fields {
            for v in f {
                payload.extend_from_slice(v);
            }
        }
        write_container(path, &self.header(), &payload)
    }

    /// Load a set; with `expected_mesh` the stored fingerprint must match.
    pub fn load(path: &Path, expected_mesh: Option<&str>) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        expect_kind(&header, "snapshots")?;
        let field = |key: &str| {
            header.get(key).cloned().ok_or_else(|| Error::Container {
                offset: 12,
                message: format!("snapshot header lacks `{key}`"),
            })
        };
        let mesh_hash: String = serde_json::from_value(field("mesh_hash")?)?;
        if let Some(exp) = expected_mesh {
            if exp != mesh_hash {
                return Err(Error::Fingerprint {
                    found: mesh_hash,
                    expected: exp.to_string(),
                });
            }
        }
        let variables: Vec<String> = serde_json::from_value(field("variables")?)?;
        if variables != VARIABLES {
            return Err(Error::Container {
                offset: 12,
                message: format!("unexpected variable list {variables:?}"),
            });
        }
        let mut set = SnapshotSet::new(
            mesh_hash,
            serde_json::from_value(field("P")?)?,
            serde_json::from_value(field("n_y")?)?,
            serde_json::from_value(field("n_dofs")?)?,
        );
        let cases: Vec<SnapshotCase> = serde_json::from_value(field("cases")?)?;
        let n = set.n_dofs;
        if payload.len() != cases.len() * 4 * n {
            return Err(Error::Container {
                offset: 12,
                message: format!("payload holds {} values, header implies {}", payload.len(), cases.len() * 4 * n),
            });
        }
        for (c, chunk) in cases.into_iter().zip(payload.chunks_exact((4 * n).max(1))) {
            let f: [Vec<f64>; 4] = std::array::from_fn(|v| chunk[v * n..(v + 1) * n].to_vec());
            set.push(c, f)?;
        }
        Ok(set)
    }

    /// Diagram of the stored probe values.
    pub fn diagram(&self) -> BifurcationDiagram {
        let mut d = BifurcationDiagram::new(DiagramSource::Fom);
        for c in &self.cases {
            d.insert(c.mach, c.mu, c.probe_uy);
        }
        d
    }
}

fn same_mach(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagramSource {
    Fom,
    RomRbf,
    RomAnn,
}

impl fmt::Display for DiagramSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagramSource::Fom => "FOM",
            DiagramSource::RomRbf => "ROM-RBF",
            DiagramSource::RomAnn => "ROM-ANN",
        })
    }
}

impl FromStr for DiagramSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FOM" => Ok(DiagramSource::Fom),
            "ROM-RBF" => Ok(DiagramSource::RomRbf),
            "ROM-ANN" => Ok(DiagramSource::RomAnn),
            _ => Err(Error::Pipeline(format!("unknown diagram source `{s}`"))),
        }
    }
}

/// Steady probe value against viscosity, one branch per Mach number.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationDiagram {
    pub source: DiagramSource,
    /// `(mach, [(mu, probe)])`, Mach ascending, `mu` ascending within a branch.
    pub branches: Vec<(f64, Vec<(f64, f64)>)>,
}

impl BifurcationDiagram {
    pub fn new(source: DiagramSource) -> Self {
        Self {
            source,
            branches: Vec::new(),
        }
    }

    /// Insert a point keeping both orderings; non-finite probes are dropped.
    pub fn insert(&mut self, mach: f64, mu: f64, probe: f64) {
        if !probe.is_finite() {
            return;
        }
        let b = match self.branches.iter().position(|(m, _)| same_mach(*m, mach)) {
            Some(i) => i,
            None => {
                let at = self.branches.partition_point(|(m, _)| *m < mach);
                self.branches.insert(at, (mach, Vec::new()));
                at
            }
        };
        let pts = &mut self.branches[b].1;
        let at = pts.partition_point(|(m, _)| *m < mu);
        if pts.get(at).is_some_and(|(m, _)| *m == mu) {
            pts[at].1 = probe;
        } else {
            pts.insert(at, (mu, probe));
        }
    }

    pub fn branch(&self, mach: f64) -> Option<&[(f64, f64)]> {
        self.branches.iter().find(|(m, _)| same_mach(*m, mach)).map(|(_, p)| p.as_slice())
    }

    /// CSV with header `mach,mu,probe_uy,source`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "mach,mu,probe_uy,source")?;
        for (mach, pts) in &self.branches {
            for (mu, p) in pts {
                writeln!(out, "{mach:?},{mu:?},{p:?},{}", self.source)?;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("mach,mu,probe_uy,source") {
            return Err(Error::Pipeline("diagram CSV must start with `mach,mu,probe_uy,source`".into()));
        }
        let mut d: Option<BifurcationDiagram> = None;
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Pipeline(format!("diagram CSV line {}: cannot parse `{line}`", i + 2));
            if cols.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            let source: DiagramSource = cols[3].trim().parse()?;
            let d = d.get_or_insert_with(|| BifurcationDiagram::new(source));
            d.insert(num(cols[0])?, num(cols[1])?, num(cols[2])?);
        }
        d.ok_or_else(|| Error::Pipeline("diagram CSV has no rows".into()))
    }
}

/// Consecutive viscosities between which the asymmetry indicator changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub mu_lo: f64,
    pub mu_hi: f64,
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu_lo + self.mu_hi)
    }

    pub fn contains(&self, mu: f64) -> bool {
        self.mu_lo <= mu && mu <= self.mu_hi
    }
}

/// Per-Mach tightest bracket of `|probe| = threshold`; `None` without a crossing.
pub fn critical_viscosity(diagram: &BifurcationDiagram, threshold: f64) -> Vec<(f64, Option<Bracket>)> {
    diagram
        .branches
        .iter()
        .map(|(mach, pts)| {
            let best = pts
                .windows(2)
                .filter(|w| (w[0].1.abs() > threshold) != (w[1].1.abs() > threshold))
                .map(|w| Bracket {
                    mu_lo: w[0].0,
                    mu_hi: w[1].0,
                })
                .min_by(|a, b| (a.mu_hi - a.mu_lo).total_cmp(&(b.mu_hi - b.mu_lo)));
            (*mach, best)
        })
        .collect()
}

/// How a sweep is executed.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; cases of one Mach run in sequence when continuing.
    pub jobs: usize,
    /// Start each case from the converged field of the next-smaller `mu`.
    pub continuation: bool,
    /// Per-case results are cached here and reused when fingerprints match.
    pub case_dir: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            continuation: true,
            case_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub snapshots: SnapshotSet,
    pub diagram: BifurcationDiagram,
    /// Every attempted case, ordered by `(mach, mu)`, failures included.
    pub records: Vec<CaseRecord>,
}

fn case_fingerprint(study: &Study, mesh_hash: &str, case: &CaseSpec, warm: Option<&str>) -> String {
    let doc = json!({
        "mesh": mesh_hash,
        "order": study.order,
        "gas": study.gas,
        "flow": study.flow,
        "solver": study.solver,
        "mu": case.mu,
        "mach": case.mach,
        "warm": warm,
    });
    hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("json")))
}

fn case_path(dir: &Path, case: &CaseSpec) -> PathBuf {
    dir.join(format!("case_ma{:?}_mu{:?}.nsrom", case.mach, case.mu))
}

/// Cached full-order result: record plus the conserved final field.
fn load_case(path: &Path, fingerprint: &str, n_elements: usize, n_nodes: usize) -> Option<(CaseRecord, DGField)> {
    let (header, payload) = read_container(path).ok()?;
    expect_kind(&header, "fom_case").ok()?;
    let record: CaseRecord = serde_json::from_value(header.get("record")?.clone()).ok()?;
    if record.fingerprint != fingerprint {
        return None;
    }
    let field = DGField::from_data(n_elements, 4, n_nodes, payload).ok()?;
    Some((record, field))
}

fn save_case(path: &Path, record: &CaseRecord, field: &DGField) -> Result<()> {
    write_container(path, &json!({"kind": "fom_case", "record": record}), field.data())
}

struct Solved {
    record: CaseRecord,
    field: Option<DGField>,
}

fn run_case(
    channel: &Channel<'_>,
    study: &Study,
    mesh_hash: &str,
    case: &CaseSpec,
    warm: Option<(&CaseRecord, &DGField)>,
    case_dir: Option<&Path>,
) -> Solved {
    let fingerprint = case_fingerprint(study, mesh_hash, case, warm.map(|(r, _)| r.fingerprint.as_str()));
    let path = case_dir.map(|d| case_path(d, case));
    if let Some(p) = &path {
        if let Some((mut record, field)) = load_case(p, &fingerprint, channel.mesh.n_elements(), channel.re.n_nodes()) {
            log::info!("reusing cached case mu={} Ma={}", case.mu, case.mach);
            // The stored field is authoritative for the probe value.
            if let Ok(v) = probe(&field, channel.mesh, channel.re, PROBE_POINT[0], PROBE_POINT[1], Quantity::U2, study.gas.gamma) {
                record.probe_uy = v;
            }
            return Solved {
                record,
                field: Some(field),
            };
        }
    }
    log::info!("running case mu={} Ma={} (warm: {:?})", case.mu, case.mach, warm.map(|(r, _)| r.mu));
    let start = warm.map(|(r, f)| WarmStart {
        field: f,
        reference_residual: r.reference_residual,
    });
    let base = CaseRecord {
        mu: case.mu,
        mach: case.mach,
        p_out: study.outlet_pressure(case.mach),
        probe_uy: f64::NAN,
        converged: false,
        status: CaseStatus::Failed,
        steps: 0,
        final_residual: f64::NAN,
        reference_residual: f64::NAN,
        wall_time: 0.0,
        warm_from: warm.map(|(r, _)| r.mu),
        fingerprint,
        message: None,
    };
    let solved = match channel.run_to_steady(case.flow_case(), &study.solver, start) {
        Ok(run) => {
            let status = CaseStatus::from(run.status);
            let record = CaseRecord {
                probe_uy: run.final_probe,
                converged: run.converged(),
                status,
                steps: run.steps,
                final_residual: run.final_residual,
                reference_residual: run.reference_residual,
                wall_time: run.wall_time,
                message: run.message.clone(),
                ..base
            };
            let field = (status != CaseStatus::Failed && run.final_field.all_finite()).then_some(run.final_field);
            Solved { record, field }
        }
        Err(e) => Solved {
            record: CaseRecord {
                message: Some(e.to_string()),
                ..base
            },
            field: None,
        },
    };
    log::info!(
        "case mu={} Ma={}: {:?} after {} steps, probe {:e}",
        case.mu,
        case.mach,
        solved.record.status,
        solved.record.steps,
        solved.record.probe_uy
    );
    if let (Some(p), Some(f)) = (&path, &solved.field) {
        if let Err(e) = save_case(p, &solved.record, f) {
            log::warn!("could not cache case: {e}");
        }
    }
    solved
}

/// Run every `(mach, mu)` case to steady state with the upper-branch seed.
///
/// Failed cases are recorded but only an empty result is an error.
pub fn sweep(study: &Study, machs: &[f64], mus: &[f64], opts: &SweepOptions) -> Result<SweepOutput> {
    let mut mus_sorted = mus.to_vec();
    mus_sorted.sort_by(f64::total_cmp);
    mus_sorted.dedup();
    let mut machs_sorted = machs.to_vec();
    machs_sorted.sort_by(f64::total_cmp);
    machs_sorted.dedup();
    let mut chains: Vec<Vec<CaseSpec>> = Vec::new();
    for &mach in &machs_sorted {
        let chain = mus_sorted.iter().map(|&mu| study.case(mu, mach)).collect::<Result<Vec<_>>>()?;
        if opts.continuation {
            chains.push(chain);
        } else {
            chains.extend(chain.into_iter().map(|c| vec![c]));
        }
    }
    if chains.is_empty() {
        return Err(Error::Pipeline("sweep needs at least one Mach number and one viscosity".into()));
    }
    study.solver.validate()?;
    let mesh = study.mesh()?;
    let re = study.element()?;
    let mesh_hash = mesh.fingerprint();
    if let Some(d) = &opts.case_dir {
        std::fs::create_dir_all(d)?;
    }
    let channel = Channel::new(&mesh, &re, study.geometry, study.gas, study.flow);

    let run_chain = |chain: &Vec<CaseSpec>| -> Vec<Solved> {
        let mut out: Vec<Solved> = Vec::with_capacity(chain.len());
        for case in chain {
            let warm = out.last().and_then(|s| s.field.as_ref().map(|f| (&s.record, f)));
            let solved = run_case(&channel, study, &mesh_hash, case, warm, opts.case_dir.as_deref());
            out.push(solved);
        }
        out
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Pipeline(format!("cannot start worker pool: {e}")))?;
    let mut solved: Vec<Solved> = pool.install(|| chains.par_iter().map(run_chain).flatten_iter().collect());
    solved.sort_by(|a, b| {
        let ka = (a.record.mach, a.record.mu);
        let kb = (b.record.mach, b.record.mu);
        ka.partial_cmp(&kb).expect("finite parameters")
    });

    let n_dofs = mesh.n_elements() * re.n_nodes();
    let mut snapshots = SnapshotSet::new(mesh_hash, study.order, study.n_y, n_dofs);
    let mut diagram = BifurcationDiagram::new(DiagramSource::Fom);
    for s in &solved {
        if let Some(f) = &s.field {
            let case = SnapshotCase {
                mu: s.record.mu,
                mach: s.record.mach,
                p_out: s.record.p_out,
                probe_uy: s.record.probe_uy,
                converged: s.record.converged,
            };
            snapshots.push(case, transformed_fields(f, study.gas.gamma))?;
            diagram.insert(case.mach, case.mu, case.probe_uy);
        }
    }
    if snapshots.is_empty() {
        return Err(Error::Pipeline("no sweep case produced a solution".into()));
    }
    Ok(SweepOutput {
        snapshots,
        diagram,
        records: solved.into_iter().map(|s| s.record).collect(),
    })
}

/// Probe `u2` from a transformed-variable DOF vector.
pub fn probe_u2(mesh: &QuadMesh, re: &ReferenceElement, u2: &[f64]) -> Result<f64> {
    Ok(PointEvaluator::new(mesh, re, PROBE_POINT[0], PROBE_POINT[1])?.eval_dofs(u2))
}

/// Records as CSV, one row per attempted case.
pub fn write_records_csv(records: &[CaseRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mach,mu,status,steps,probe_uy,final_residual,wall_time,warm_from")?;
    for r in records {
        let warm = r.warm_from.map_or(String::new(), |m| format!("{m:?}"));
        writeln!(
            out,
            "{:?},{:?},{:?},{},{:?},{:?},{:?},{}",
            r.mach, r.mu, r.status, r.steps, r.probe_uy, r.final_residual, r.wall_time, warm
        )?;
    }
    Ok(())
}
