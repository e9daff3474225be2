//! Multi-stage studies: grid convergence and the resumable end-to-end run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::container::write_atomic;
use crate::dg::{DGField, PointEvaluator, ReferenceElement};
use crate::error::{Error, Result};
use crate::mesh::QuadMesh;
use crate::regress::Method;
use crate::rom::{leave_one_out, mu_grid, reconstruct_diagram, LooReport, ProjectedSeries, RomPipeline};
use crate::snapshots::{
    critical_viscosity, sweep, write_records_csv, BifurcationDiagram, Bracket, CaseRecord, SnapshotSet, SweepOptions,
    PROBE_POINT,
};
use crate::solver::{derived_field, Channel, FlowCase, Quantity};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn sha(doc: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(doc).expect("json")))
}

/// Sample `quantity` of a conserved field along a polyline of points.
pub fn sample_line(
    field: &DGField,
    mesh: &QuadMesh,
    re: &ReferenceElement,
    points: &[[f64; 2]],
    quantity: Quantity,
    gamma: f64,
) -> Result<Vec<f64>> {
    let q = derived_field(field, gamma, quantity);
    points
        .iter()
        .map(|p| {
            let pe = PointEvaluator::new(mesh, re, p[0], p[1])?;
            Ok(pe.eval_dofs(q.data()))
        })
        .collect()
}

fn rms_difference(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Profiles of one mesh level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProfiles {
    pub n_y: usize,
    pub converged: bool,
    pub steps: usize,
    pub probe_uy: f64,
    /// Centreline `y = 0`.
    pub centerline_p: Vec<f64>,
    pub centerline_u2: Vec<f64>,
    /// Vertical line `x = 15`.
    pub section_u1: Vec<f64>,
    pub section_u2: Vec<f64>,
    pub section_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mu: f64,
    pub mach: f64,
    pub centerline_x: Vec<f64>,
    pub section_y: Vec<f64>,
    pub levels: Vec<LevelProfiles>,
}

impl ConvergenceReport {
    /// RMS differences `[p, u2, u1@15, u2@15, p@15]` between successive levels.
    pub fn successive_differences(&self) -> Vec<(usize, usize, [f64; 5])> {
        self.levels
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                (
                    a.n_y,
                    b.n_y,
                    [
                        rms_difference(&a.centerline_p, &b.centerline_p),
                        rms_difference(&a.centerline_u2, &b.centerline_u2),
                        rms_difference(&a.section_u1, &b.section_u1),
                        rms_difference(&a.section_u2, &b.section_u2),
                        rms_difference(&a.section_p, &b.section_p),
                    ],
                )
            })
            .collect()
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut s = String::from("n_y,x,p,u2\n");
        for l in &self.levels {
            for (i, x) in self.centerline_x.iter().enumerate() {
                writeln!(s, "{},{x:?},{:?},{:?}", l.n_y, l.centerline_p[i], l.centerline_u2[i]).unwrap();
            }
        }
        write_atomic(&dir.join("profiles_centerline.csv"), s.as_bytes())?;
        let mut s = String::from("n_y,y,u1,u2,p\n");
        for l in &self.levels {
            for (i, y) in self.section_y.iter().enumerate() {
                writeln!(s, "{},{y:?},{:?},{:?},{:?}", l.n_y, l.section_u1[i], l.section_u2[i], l.section_p[i]).unwrap();
            }
        }
        write_atomic(&dir.join("profiles_x15.csv"), s.as_bytes())?;
        let mut s = String::from("n_y_coarse,n_y_fine,centerline_p,centerline_u2,x15_u1,x15_u2,x15_p,probe_coarse,probe_fine\n");
        for (w, (a, b, d)) in self.levels.windows(2).zip(self.successive_differences()) {
            writeln!(
                s,
                "{a},{b},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                d[0], d[1], d[2], d[3], d[4], w[0].probe_uy, w[1].probe_uy
            )
            .unwrap();
        }
        write_atomic(&dir.join("convergence.csv"), s.as_bytes())?;
        Ok(())
    }
}

/// Run one case on every mesh level and compare sampled profiles.
pub fn convergence_study(cfg: &Config, mu: f64, mach: f64, levels: &[usize], jobs: usize) -> Result<ConvergenceReport> {
    let g = cfg.geometry;
    let centerline_x: Vec<f64> = (0..=200).map(|i| g.total_length() * i as f64 / 200.0).collect();
    let section_y: Vec<f64> = (0..=100)
        .map(|i| -g.expansion_half_width + 2.0 * g.expansion_half_width * i as f64 / 100.0)
        .collect();
    let gamma = cfg.gas.gamma;
    let run_level = |&n_y: &usize| -> Result<LevelProfiles> {
        let study = cfg.study_at(n_y);
        let mesh = study.mesh()?;
        let re = study.element()?;
        let channel = Channel::new(&mesh, &re, study.geometry, study.gas, study.flow);
        let run = channel.run_to_steady(FlowCase { mu, mach }, &study.solver, None)?;
        let f = &run.final_field;
        let cl: Vec<[f64; 2]> = centerline_x.iter().map(|&x| [x, 0.0]).collect();
        let sec: Vec<[f64; 2]> = section_y.iter().map(|&y| [15.0, y]).collect();
        Ok(LevelProfiles {
            n_y,
            converged: run.converged(),
            steps: run.steps,
            probe_uy: run.final_probe,
            centerline_p: sample_line(f, &mesh, &re, &cl, Quantity::Pressure, gamma)?,
            centerline_u2: sample_line(f, &mesh, &re, &cl, Quantity::U2, gamma)?,
            section_u1: sample_line(f, &mesh, &re, &sec, Quantity::U1, gamma)?,
            section_u2: sample_line(f, &mesh, &re, &sec, Quantity::U2, gamma)?,
            section_p: sample_line(f, &mesh, &re, &sec, Quantity::Pressure, gamma)?,
        })
    };
    let pool = pool(jobs)?;
    let levels = pool.install(|| levels.par_iter().map(run_level).collect::<Result<Vec<_>>>())?;
    Ok(ConvergenceReport {
        mu,
        mach,
        centerline_x,
        section_y,
        levels,
    })
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Pipeline(format!("cannot start worker pool: {e}")))
}

/// One emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
    pub fingerprint: String,
    /// False when a matching output from an earlier run was reused.
    pub recomputed: bool,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: Value,
    pub effective_config: Value,
    pub seeds: Value,
    pub cases: Vec<CaseRecord>,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
    pub wall_time: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

fn mach_tag(m: f64) -> String {
    format!("{m:?}")
}

/// Tracks reusable outputs of the previous run.
struct Stages<'a> {
    out: &'a Path,
    previous: Option<Manifest>,
    artifacts: Vec<Artifact>,
    failures: Vec<String>,
}

impl Stages<'_> {
    fn reusable(&self, rel: &str, fingerprint: &str) -> bool {
        self.out.join(rel).exists()
            && self
                .previous
                .as_ref()
                .and_then(|m| m.artifact(rel))
                .is_some_and(|a| a.fingerprint == fingerprint)
    }

    fn record(&mut self, rel: &str, stage: &str, fingerprint: String, recomputed: bool, clock: Instant) {
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            stage: stage.to_string(),
            fingerprint,
            recomputed,
            wall_time: clock.elapsed().as_secs_f64(),
        });
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

/// Diagram CSV for several diagrams of one source type, concatenated.
fn diagrams_csv(diagrams: &[BifurcationDiagram]) -> String {
    let mut s = String::from("mach,mu,probe_uy,source\n");
    for d in diagrams {
        s.extend(d.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    s
}

fn fmt_bracket(b: &Option<Bracket>) -> String {
    match b {
        Some(b) => format!("[{}, {}] (midpoint {})", b.mu_lo, b.mu_hi, b.midpoint()),
        None => "no crossing".into(),
    }
}

/// Sweep, POD, both ROMs, leave-one-out and ROM diagrams under `out`.
///
/// Outputs whose fingerprints match the previous manifest are reused.
pub fn end_to_end(cfg: &Config, raw_config: Option<&str>, out: &Path, jobs: usize) -> Result<Manifest> {
    let clock = Instant::now();
    fs::create_dir_all(out)?;
    let manifest_path = out.join("manifest.json");
    let mut st = Stages {
        out,
        previous: Manifest::load(&manifest_path).ok(),
        artifacts: Vec::new(),
        failures: Vec::new(),
    };
    let study = cfg.study();
    let mesh = study.mesh()?;
    let re = study.element()?;

    // Full-order sweep; cases are cached individually.
    let t = Instant::now();
    let opts = SweepOptions {
        jobs,
        continuation: cfg.sweep.continuation,
        case_dir: Some(out.join("cases")),
    };
    let result = sweep(&study, &cfg.sweep.mach, &cfg.sweep.mu, &opts)?;
    for r in result.records.iter().filter(|r| !r.converged) {
        st.failures.push(format!(
            "case mu={} Ma={} ended as {:?}{}",
            r.mu,
            r.mach,
            r.status,
            r.message.as_deref().map_or(String::new(), |m| format!(": {m}"))
        ));
    }
    let snap_fp = sha(&json!(result.records.iter().map(|r| (&r.fingerprint, r.probe_uy.to_bits())).collect::<Vec<_>>()));
    result.snapshots.save(&out.join("snapshots.nsrom"))?;
    st.record("snapshots.nsrom", "sweep", snap_fp.clone(), true, t);
    write_text(&out.join("diagram_fom.csv"), &result.diagram.to_csv())?;
    st.record("diagram_fom.csv", "sweep", snap_fp.clone(), true, t);
    let mut buf = Vec::new();
    write_records_csv(&result.records, &mut buf)?;
    write_atomic(&out.join("cases.csv"), &buf)?;
    st.record("cases.csv", "sweep", snap_fp.clone(), true, t);
    let set = &result.snapshots;
    let threshold = study.threshold();

    let pool = pool(jobs)?;
    let rom = &cfg.rom;
    let machs: Vec<f64> = set.machs().into_iter().filter(|m| set.indices_at(*m).len() >= 3).collect();

    // POD spectra.
    let mut spectrum = String::from("mach,field,k,singular_value,cumulative_energy\n");
    for &mach in &machs {
        for field in &rom.fields {
            let rel = format!("pod_ma{}_{field}.nsrom", mach_tag(mach));
            let fp = sha(&json!({"snap": snap_fp, "mach": mach, "field": field, "rank": rom.rank}));
            let t = Instant::now();
            let series = if st.reusable(&rel, &fp) {
                ProjectedSeries::load(&out.join(&rel)).map(|s| (s, false))
            } else {
                ProjectedSeries::from_snapshots(set, mach, field, rom.rank).and_then(|s| {
                    s.save(&out.join(&rel))?;
                    Ok((s, true))
                })
            };
            match series {
                Ok((s, fresh)) => {
                    for (k, (sv, e)) in s.basis.singular_values.iter().zip(s.basis.energy_spectrum()).enumerate() {
                        writeln!(spectrum, "{mach:?},{field},{},{sv:?},{e:?}", k + 1).unwrap();
                    }
                    st.record(&rel, "pod", fp, fresh, t);
                }
                Err(e) => st.failures.push(format!("POD of {field} at Ma={mach}: {e}")),
            }
        }
    }
    write_text(&out.join("pod_spectrum.csv"), &spectrum)?;

    // Reduced-order models.
    let mut pipelines: Vec<RomPipeline> = Vec::new();
    let rom_cfg_fp = serde_json::to_value(rom).expect("json");
    let jobs_list: Vec<(f64, Method)> = machs.iter().flat_map(|&m| rom.methods.iter().map(move |&k| (m, k))).collect();
    let trained: Vec<(String, String, Result<(RomPipeline, bool)>, f64)> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(mach, method)| {
                let t = Instant::now();
                let rel = format!("rom_ma{}_{}.nsrom", mach_tag(mach), method.as_str());
                let fp = sha(&json!({"snap": snap_fp, "mach": mach, "method": method, "rom": rom_cfg_fp}));
                let r = if st.reusable(&rel, &fp) {
                    RomPipeline::load(&out.join(&rel)).map(|p| (p, false))
                } else {
                    crate::rom::train_pipeline(set, mach, &rom.fields, method, rom).and_then(|p| {
                        p.save(&out.join(&rel))?;
                        Ok((p, true))
                    })
                };
                (rel, fp, r, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    for (rel, fp, r, secs) in trained {
        match r {
            Ok((p, fresh)) => {
                st.artifacts.push(Artifact {
                    path: rel,
                    stage: "train".into(),
                    fingerprint: fp,
                    recomputed: fresh,
                    wall_time: secs,
                });
                pipelines.push(p);
            }
            Err(e) => st.failures.push(format!("training {rel}: {e}")),
        }
    }

    // ROM diagrams, one CSV per method.
    let probe = PointEvaluator::new(&mesh, &re, PROBE_POINT[0], PROBE_POINT[1])?;
    let mut rom_diagrams: Vec<(Method, BifurcationDiagram)> = Vec::new();
    for &method in &rom.methods {
        let t = Instant::now();
        let mut ds = Vec::new();
        for p in pipelines.iter().filter(|p| p.method == method) {
            match reconstruct_diagram(p, &probe, &mu_grid(p, rom.diagram_points)) {
                Ok(d) => ds.push(d),
                Err(e) => st.failures.push(format!("ROM diagram {} at Ma={}: {e}", method.as_str(), p.mach)),
            }
        }
        let rel = format!("diagram_{}.csv", method.as_str());
        write_text(&out.join(&rel), &diagrams_csv(&ds))?;
        st.record(&rel, "rom-diagram", sha(&json!({"snap": snap_fp, "method": method, "rom": rom_cfg_fp})), true, t);
        for d in ds {
            rom_diagrams.push((method, d));
        }
    }

    // Leave-one-out.
    let folds: Vec<(f64, String, Method)> = machs
        .iter()
        .flat_map(|&m| rom.fields.iter().flat_map(move |f| rom.methods.iter().map(move |&k| (m, f.clone(), k))))
        .filter(|(m, _, _)| set.indices_at(*m).len() >= 4)
        .collect();
    let loo: Vec<(String, String, Result<(LooReport, bool)>, f64)> = pool.install(|| {
        folds
            .par_iter()
            .map(|(mach, field, method)| {
                let t = Instant::now();
                let rel = format!("loo_ma{}_{field}_{}.csv", mach_tag(*mach), method.as_str());
                let fp = sha(&json!({"snap": snap_fp, "mach": mach, "field": field, "method": method, "rom": rom_cfg_fp}));
                let r = if st.reusable(&rel, &fp) {
                    read_loo_csv(&out.join(&rel)).map(|rep| (rep, false))
                } else {
                    leave_one_out(set, *mach, field, *method, rom).and_then(|rep| {
                        let mut buf = Vec::new();
                        rep.write_csv(&mut buf, true)?;
                        write_atomic(&out.join(&rel), &buf)?;
                        Ok((rep, true))
                    })
                };
                (rel, fp, r, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut loo_reports = Vec::new();
    for (rel, fp, r, secs) in loo {
        match r {
            Ok((rep, fresh)) => {
                st.artifacts.push(Artifact {
                    path: rel,
                    stage: "loo".into(),
                    fingerprint: fp,
                    recomputed: fresh,
                    wall_time: secs,
                });
                loo_reports.push(rep);
            }
            Err(e) => st.failures.push(format!("leave-one-out {rel}: {e}")),
        }
    }

    // Plain-text summary.
    let mut report = String::new();
    writeln!(report, "asymmetry threshold |u_y(15, 0)| > {threshold}").unwrap();
    writeln!(report, "\nfull-order cases").unwrap();
    for r in &result.records {
        writeln!(
            report,
            "  Ma={:<5} mu={:<5} {:>10?} steps={:<8} probe={:+.6e}",
            r.mach, r.mu, r.status, r.steps, r.probe_uy
        )
        .unwrap();
    }
    writeln!(report, "\ncritical viscosity brackets").unwrap();
    for (mach, b) in critical_viscosity(&result.diagram, threshold) {
        writeln!(report, "  FOM     Ma={mach}: {}", fmt_bracket(&b)).unwrap();
    }
    for (method, d) in &rom_diagrams {
        for (mach, b) in critical_viscosity(d, threshold) {
            writeln!(report, "  ROM-{:<4}Ma={mach}: {}", method.as_str().to_uppercase(), fmt_bracket(&b)).unwrap();
        }
    }
    writeln!(report, "\nleave-one-out maximum relative error").unwrap();
    for rep in &loo_reports {
        if let Some((mu, e)) = rep.max() {
            writeln!(report, "  Ma={} {:<3} {}: {e:.3e} at mu={mu}", rep.mach, rep.field, rep.method.as_str()).unwrap();
        }
    }
    if !st.failures.is_empty() {
        writeln!(report, "\nproblems").unwrap();
        for f in &st.failures {
            writeln!(report, "  {f}").unwrap();
        }
    }
    write_text(&out.join("report.txt"), &report)?;
    st.record("report.txt", "report", sha(&json!(report)), true, clock);

    let raw = raw_config
        .and_then(|r| serde_json::from_str::<Value>(r).ok())
        .unwrap_or_else(|| serde_json::to_value(cfg).expect("json"));
    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        config: raw,
        effective_config: serde_json::to_value(cfg).expect("json"),
        seeds: json!({
            "ann": cfg.rom.training.seed,
            "perturbation_sign": cfg.solver.perturbation_sign,
            "perturbation_eps": cfg.solver.perturbation_eps,
        }),
        cases: result.records,
        artifacts: st.artifacts,
        failures: st.failures,
        wall_time: clock.elapsed().as_secs_f64(),
    };
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

/// Parse a leave-one-out CSV written by [`LooReport::write_csv`].
pub fn read_loo_csv(path: &Path) -> Result<LooReport> {
    let text = fs::read_to_string(path)?;
    let mut rep: Option<LooReport> = None;
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let c: Vec<&str> = line.split(',').collect();
        let bad = || Error::Pipeline(format!("{}: cannot parse `{line}`", path.display()));
        if c.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let method: Method = c[3].parse().map_err(|_| bad())?;
        let r = rep.get_or_insert_with(|| LooReport {
            mach: num(c[0]).unwrap_or(f64::NAN),
            field: c[2].to_string(),
            method,
            errors: Vec::new(),
        });
        r.errors.push((num(c[1])?, num(c[4])?));
    }
    rep.ok_or_else(|| Error::Pipeline(format!("{} has no rows", path.display())))
}

/// Output directory helper: `dir` or the configured default.
pub fn output_dir(cfg: &Config, dir: Option<&Path>) -> PathBuf {
    dir.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf)
}

/// Load the snapshot set stored by a sweep in `dir`.
pub fn load_snapshots(dir: &Path) -> Result<SnapshotSet> {
    let path = if dir.is_dir() { dir.join("snapshots.nsrom") } else { dir.to_path_buf() };
    SnapshotSet::load(&path, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loo_csv_round_trip() {
        let rep = LooReport {
            mach: 0.3,
            field: "u2".into(),
            method: Method::Ann,
            errors: vec![(0.5, 0.01), (0.6, 1.0 / 3.0)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loo.csv");
        let mut buf = Vec::new();
        rep.write_csv(&mut buf, true).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_loo_csv(&path).unwrap(), rep);
    }

    #[test]
    fn rms_difference_basic() {
        assert_eq!(rms_difference(&[1.0, 1.0], &[1.0, 1.0]), 0.0);
        assert!((rms_difference(&[0.0, 0.0], &[3.0, 4.0]) - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn combined_diagram_csv_has_one_header() {
        let mut a = BifurcationDiagram::new(crate::snapshots::DiagramSource::RomRbf);
        a.insert(0.3, 1.0, 0.5);
        let mut b = a.clone();
        b.branches[0].0 = 0.6;
        let s = diagrams_csv(&[a, b]);
        assert_eq!(s.matches("mach,mu").count(), 1);
        assert_eq!(s.lines().count(), 3);
    }
}
