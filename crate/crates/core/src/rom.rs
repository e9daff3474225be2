//! Non-intrusive reduced-order models: POD per field, then a regressor from
//! viscosity to POD coefficients. Nothing here touches the flow solver.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{expect_kind, read_container, write_container};
use crate::dg::PointEvaluator;
use crate::error::{Error, Result};
use crate::pod::{compute_pod, relative_error, PodBasis, RankRule};
use crate::regress::{ann_train, rbf_fit, Activation, AnnModel, Kernel, Method, RbfModel, RegressorModel, TrainingConfig};
use crate::snapshots::{variable_index, BifurcationDiagram, DiagramSource, SnapshotSet};

/// RBF settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfSettings {
    pub kernel: Kernel,
    /// `None` uses the inverse mean pairwise center distance.
    pub epsilon: Option<f64>,
    pub smoothing: f64,
}

impl Default for RbfSettings {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            epsilon: None,
            smoothing: 0.1,
        }
    }
}

/// Reduced-order model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    pub fields: Vec<String>,
    pub methods: Vec<Method>,
    pub rank: RankRule,
    pub rbf: RbfSettings,
    pub training: TrainingConfig,
    pub diagram_points: usize,
}

impl Default for RomConfig {
    fn default() -> Self {
        Self {
            fields: vec!["u2".into(), "p".into()],
            methods: vec![Method::Rbf, Method::Ann],
            rank: RankRule::default(),
            rbf: RbfSettings::default(),
            training: TrainingConfig::default(),
            diagram_points: 151,
        }
    }
}

impl RomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("rom.{path}"),
                message,
            })
        };
        if self.fields.is_empty() {
            return bad("fields", "at least one field is required".into());
        }
        for (i, f) in self.fields.iter().enumerate() {
            if variable_index(f).is_err() {
                return bad(&format!("fields[{i}]"), format!("unknown field `{f}`"));
            }
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required".into());
        }
        match self.rank {
            RankRule::Fixed(0) => return bad("rank", "fixed rank must be positive".into()),
            RankRule::Energy(f) if !(f > 0.0 && f <= 1.0) => {
                return bad("rank", format!("energy fraction must lie in (0, 1], got {f}"));
            }
            _ => {}
        }
        if !(self.rbf.smoothing >= 0.0) {
            return bad("rbf.smoothing", format!("must be >= 0, got {}", self.rbf.smoothing));
        }
        if let Some(e) = self.rbf.epsilon {
            if !(e > 0.0) {
                return bad("rbf.epsilon", format!("must be > 0, got {e}"));
            }
        }
        if self.diagram_points < 2 {
            return bad("diagram_points", "must be at least 2".into());
        }
        self.training.validate()
    }
}

/// Hidden activation bound to each field: SiLU for vertical velocity,
/// LogSigmoid for pressure, SiLU otherwise.
pub fn activation_for(field: &str) -> Activation {
    match field {
        "p" => Activation::LogSigmoid,
        _ => Activation::Silu,
    }
}

/// POD of one field at one Mach number with the projected training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSeries {
    pub mach: f64,
    pub mesh_hash: String,
    pub mus: Vec<f64>,
    pub basis: PodBasis,
    /// `coefficients[i]` belongs to `mus[i]`.
    pub coefficients: Vec<Vec<f64>>,
}

impl ProjectedSeries {
    pub fn from_fields(mach: f64, mesh_hash: &str, mus: Vec<f64>, fields: &[Vec<f64>], variable: &str, rule: RankRule) -> Result<Self> {
        let basis = compute_pod(fields, variable, rule)?;
        let coefficients = fields.iter().map(|f| basis.project(f)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mach,
            mesh_hash: mesh_hash.to_string(),
            mus,
            basis,
            coefficients,
        })
    }

    pub fn from_snapshots(set: &SnapshotSet, mach: f64, variable: &str, rule: RankRule) -> Result<Self> {
        let v = variable_index(variable)?;
        let (mus, fields) = set.series(mach, v);
        if mus.is_empty() {
            return Err(Error::Pipeline(format!("no snapshots at Mach {mach}")));
        }
        Self::from_fields(mach, &set.mesh_hash, mus, &fields, variable, rule)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let b = &self.basis;
        let header = json!({
            "kind": "pod",
            "variable": b.variable,
            "mach": self.mach,
            "mesh_hash": self.mesh_hash,
            "mus": self.mus,
            "singular_values": b.singular_values,
            "n_snapshots": b.n_snapshots,
            "rule": b.rule,
            "n_modes": b.n_modes(),
            "n_dofs": b.n_dofs(),
        });
        let mut payload: Vec<f64> = b.modes.iter().flatten().copied().collect();
        payload.extend(self.coefficients.iter().flatten());
        write_container(path, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        expect_kind(&header, "pod")?;
        let (basis, rest) = basis_from(&header, &payload)?;
        let mus: Vec<f64> = get(&header, "mus")?;
        let m = basis.n_modes();
        if rest.len() != mus.len() * m {
            return Err(payload_mismatch(rest.len(), mus.len() * m));
        }
        Ok(Self {
            mach: get(&header, "mach")?,
            mesh_hash: get(&header, "mesh_hash")?,
            coefficients: rest.chunks(m.max(1)).map(<[f64]>::to_vec).collect(),
            mus,
            basis,
        })
    }
}

fn get<T: serde::de::DeserializeOwned>(header: &Value, key: &str) -> Result<T> {
    let v = header.get(key).cloned().ok_or_else(|| Error::Container {
        offset: 12,
        message: format!("header lacks `{key}`"),
    })?;
    Ok(serde_json::from_value(v)?)
}

fn payload_mismatch(found: usize, expected: usize) -> Error {
    Error::Container {
        offset: 12,
        message: format!("payload holds {found} values where the header implies {expected}"),
    }
}

/// Rebuild a basis from header fields and the leading part of a payload.
fn basis_from<'a>(header: &Value, payload: &'a [f64]) -> Result<(PodBasis, &'a [f64])> {
    let n_modes: usize = get(header, "n_modes")?;
    let n_dofs: usize = get(header, "n_dofs")?;
    if payload.len() < n_modes * n_dofs {
        return Err(payload_mismatch(payload.len(), n_modes * n_dofs));
    }
    let (modes, rest) = payload.split_at(n_modes * n_dofs);
    Ok((
        PodBasis {
            variable: get(header, "variable")?,
            modes: modes.chunks(n_dofs.max(1)).map(<[f64]>::to_vec).collect(),
            singular_values: get(header, "singular_values")?,
            n_snapshots: get(header, "n_snapshots")?,
            rule: get(header, "rule")?,
        },
        rest,
    ))
}

/// Structure of a regressor as JSON plus its numeric parameters.
pub fn regressor_split(model: &RegressorModel) -> (Value, Vec<f64>) {
    match model {
        RegressorModel::Rbf(m) => (
            json!({
                "kind": "rbf",
                "kernel": m.kernel,
                "epsilon": m.epsilon,
                "smoothing": m.smoothing,
                "centers": m.centers,
                "input_min": m.input_min,
                "input_max": m.input_max,
                "n_outputs": m.n_outputs(),
            }),
            m.weights.iter().flatten().copied().collect(),
        ),
        RegressorModel::Ann(m) => (
            json!({
                "kind": "ann",
                "activation": m.activation,
                "sizes": m.sizes(),
                "input_min": m.input_min,
                "input_max": m.input_max,
                "output_scale": m.output_scale,
            }),
            m.params(),
        ),
    }
}

/// Inverse of [`regressor_split`]; returns the unused tail of `payload`.
pub fn regressor_join<'a>(header: &Value, payload: &'a [f64]) -> Result<(RegressorModel, &'a [f64])> {
    let kind: String = get(header, "kind")?;
    match kind.as_str() {
        "rbf" => {
            let centers: Vec<f64> = get(header, "centers")?;
            let m: usize = get(header, "n_outputs")?;
            let n = centers.len() * m;
            if payload.len() < n {
                return Err(payload_mismatch(payload.len(), n));
            }
            let (w, rest) = payload.split_at(n);
            let model = RbfModel {
                weights: w.chunks(m.max(1)).map(<[f64]>::to_vec).collect(),
                centers,
                input_min: get(header, "input_min")?,
                input_max: get(header, "input_max")?,
                kernel: get(header, "kernel")?,
                epsilon: get(header, "epsilon")?,
                smoothing: get(header, "smoothing")?,
            };
            Ok((RegressorModel::Rbf(model), rest))
        }
        "ann" => {
            let sizes: Vec<usize> = get(header, "sizes")?;
            if sizes.len() != 4 || sizes[1..3] != crate::regress::ann::HIDDEN {
                return Err(Error::Container {
                    offset: 12,
                    message: format!("unsupported network layout {sizes:?}"),
                });
            }
            let mut model = AnnModel::zeros(sizes[0], sizes[3], get(header, "activation")?);
            model.input_min = get(header, "input_min")?;
            model.input_max = get(header, "input_max")?;
            model.output_scale = get(header, "output_scale")?;
            let n = model.n_params();
            if payload.len() < n {
                return Err(payload_mismatch(payload.len(), n));
            }
            let (p, rest) = payload.split_at(n);
            model.set_params(p);
            Ok((RegressorModel::Ann(model), rest))
        }
        other => Err(Error::Container {
            offset: 12,
            message: format!("unknown regressor kind `{other}`"),
        }),
    }
}

/// Fit a regressor to projected coefficients.
pub fn fit_regressor(series: &ProjectedSeries, method: Method, cfg: &RomConfig) -> Result<RegressorModel> {
    match method {
        Method::Rbf => Ok(RegressorModel::Rbf(rbf_fit(
            &series.mus,
            &series.coefficients,
            cfg.rbf.kernel,
            cfg.rbf.epsilon,
            cfg.rbf.smoothing,
        )?)),
        Method::Ann => {
            let inputs: Vec<Vec<f64>> = series.mus.iter().map(|m| vec![*m]).collect();
            let activation = activation_for(&series.basis.variable);
            let (model, report) = ann_train(&inputs, &series.coefficients, activation, &cfg.training)?;
            log::debug!(
                "network for `{}` at Ma={}: loss {:e} after {} epochs",
                series.basis.variable,
                series.mach,
                report.final_loss,
                report.epochs
            );
            Ok(RegressorModel::Ann(model))
        }
    }
}

/// Basis and regressor of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub basis: PodBasis,
    pub regressor: RegressorModel,
}

/// Trained per-Mach reduced-order model.
#[derive(Debug, Clone, PartialEq)]
pub struct RomPipeline {
    pub mach: f64,
    pub method: Method,
    pub mesh_hash: String,
    pub mu_min: f64,
    pub mu_max: f64,
    pub fields: Vec<FieldModel>,
}

impl RomPipeline {
    /// Assemble from already projected series of a common Mach number.
    pub fn from_series(series: &[ProjectedSeries], method: Method, cfg: &RomConfig) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::Pipeline("no fields to train".into()))?;
        let mut fields = Vec::with_capacity(series.len());
        for s in series {
            if s.mach != first.mach || s.mus != first.mus {
                return Err(Error::Pipeline("field series disagree on Mach or viscosities".into()));
            }
            let regressor = fit_regressor(s, method, cfg)?;
            if regressor.n_outputs() != s.basis.n_modes() {
                return Err(Error::Dimension {
                    expected: s.basis.n_modes(),
                    found: regressor.n_outputs(),
                });
            }
            fields.push(FieldModel {
                basis: s.basis.clone(),
                regressor,
            });
        }
        Ok(Self {
            mach: first.mach,
            method,
            mesh_hash: first.mesh_hash.clone(),
            mu_min: first.mus.iter().copied().fold(f64::INFINITY, f64::min),
            mu_max: first.mus.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            fields,
        })
    }

    pub fn field(&self, name: &str) -> Result<&FieldModel> {
        self.fields
            .iter()
            .find(|f| f.basis.variable == name)
            .ok_or_else(|| Error::Pipeline(format!("model has no field `{name}`")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut payload = Vec::new();
        let mut fields = Vec::new();
        for f in &self.fields {
            let b = &f.basis;
            payload.extend(b.modes.iter().flatten());
            let (reg, params) = regressor_split(&f.regressor);
            payload.extend(params);
            fields.push(json!({
                "variable": b.variable,
                "singular_values": b.singular_values,
                "n_snapshots": b.n_snapshots,
                "rule": b.rule,
                "n_modes": b.n_modes(),
                "n_dofs": b.n_dofs(),
                "regressor": reg,
            }));
        }
        let header = json!({
            "kind": "rom",
            "mach": self.mach,
            "method": self.method,
            "mesh_hash": self.mesh_hash,
            "mu_min": self.mu_min,
            "mu_max": self.mu_max,
            "fields": fields,
        });
        write_container(path, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        expect_kind(&header, "rom")?;
        let descs: Vec<Value> = get(&header, "fields")?;
        let mut rest: &[f64] = &payload;
        let mut fields = Vec::new();
        for d in &descs {
            let (basis, r) = basis_from(d, rest)?;
            let (regressor, r) = regressor_join(&d["regressor"], r)?;
            rest = r;
            fields.push(FieldModel { basis, regressor });
        }
        if !rest.is_empty() {
            return Err(payload_mismatch(payload.len(), payload.len() - rest.len()));
        }
        Ok(Self {
            mach: get(&header, "mach")?,
            method: get(&header, "method")?,
            mesh_hash: get(&header, "mesh_hash")?,
            mu_min: get(&header, "mu_min")?,
            mu_max: get(&header, "mu_max")?,
            fields,
        })
    }
}

/// Train POD plus regressor for the given fields at one Mach number.
pub fn train_pipeline(set: &SnapshotSet, mach: f64, fields: &[String], method: Method, cfg: &RomConfig) -> Result<RomPipeline> {
    let n = set.indices_at(mach).len();
    if n < 3 {
        return Err(Error::Pipeline(format!("training needs at least 3 snapshots at Mach {mach}, found {n}")));
    }
    let series = fields
        .iter()
        .map(|f| ProjectedSeries::from_snapshots(set, mach, f, cfg.rank))
        .collect::<Result<Vec<_>>>()?;
    RomPipeline::from_series(&series, method, cfg)
}

/// Reconstructed field at viscosity `mu`.
pub fn predict_field(pipeline: &RomPipeline, mu: f64, field: &str) -> Result<Vec<f64>> {
    if mu < pipeline.mu_min || mu > pipeline.mu_max {
        log::warn!(
            "mu = {mu} lies outside the training range [{}, {}]",
            pipeline.mu_min,
            pipeline.mu_max
        );
    }
    let f = pipeline.field(field)?;
    f.basis.reconstruct(&f.regressor.predict(mu))
}

/// `n` equispaced viscosities covering the training range.
pub fn mu_grid(pipeline: &RomPipeline, n: usize) -> Vec<f64> {
    let (a, b) = (pipeline.mu_min, pipeline.mu_max);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Probe the predicted `u2` field over a viscosity grid.
pub fn reconstruct_diagram(pipeline: &RomPipeline, probe: &PointEvaluator, mus: &[f64]) -> Result<BifurcationDiagram> {
    let source = match pipeline.method {
        Method::Rbf => DiagramSource::RomRbf,
        Method::Ann => DiagramSource::RomAnn,
    };
    let mut d = BifurcationDiagram::new(source);
    for &mu in mus {
        let u2 = predict_field(pipeline, mu, "u2")?;
        d.insert(pipeline.mach, mu, probe.eval_dofs(&u2));
    }
    Ok(d)
}

/// Leave-one-out relative errors of one field and method at one Mach number.
#[derive(Debug, Clone, PartialEq)]
pub struct LooReport {
    pub mach: f64,
    pub field: String,
    pub method: Method,
    /// `(left-out mu, ||pred - truth|| / ||truth||)`.
    pub errors: Vec<(f64, f64)>,
}

impl LooReport {
    pub fn max(&self) -> Option<(f64, f64)> {
        self.errors.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn write_csv(&self, mut out: impl Write, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "mach,mu_left_out,field,method,rel_error")?;
        }
        for (mu, e) in &self.errors {
            writeln!(out, "{:?},{mu:?},{},{},{e:?}", self.mach, self.field, self.method.as_str())?;
        }
        Ok(())
    }
}

/// Withhold each snapshot in turn, retrain from scratch on the rest and
/// measure the error of the prediction. Folds run on the current rayon pool.
pub fn leave_one_out(set: &SnapshotSet, mach: f64, field: &str, method: Method, cfg: &RomConfig) -> Result<LooReport> {
    let v = variable_index(field)?;
    let (mus, fields) = set.series(mach, v);
    loo_series(mach, &set.mesh_hash, &mus, &fields, field, method, cfg)
}

/// Leave-one-out on explicit `(mu, field)` data.
pub fn loo_series(
    mach: f64,
    mesh_hash: &str,
    mus: &[f64],
    fields: &[Vec<f64>],
    field: &str,
    method: Method,
    cfg: &RomConfig,
) -> Result<LooReport> {
    if mus.len() < 4 {
        return Err(Error::Pipeline(format!(
            "leave-one-out needs at least 4 snapshots at Mach {mach}, found {}",
            mus.len()
        )));
    }
    let errors = (0..mus.len())
        .into_par_iter()
        .map(|k| {
            let keep: Vec<usize> = (0..mus.len()).filter(|&i| i != k).collect();
            let train_mus: Vec<f64> = keep.iter().map(|&i| mus[i]).collect();
            let train: Vec<Vec<f64>> = keep.iter().map(|&i| fields[i].clone()).collect();
            let series = ProjectedSeries::from_fields(mach, mesh_hash, train_mus, &train, field, cfg.rank)?;
            let reg = fit_regressor(&series, method, cfg)?;
            let pred = series.basis.reconstruct(&reg.predict(mus[k]))?;
            Ok((mus[k], relative_error(&pred, &fields[k])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LooReport {
        mach,
        field: field.to_string(),
        method,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::SnapshotCase;

    /// Smooth synthetic family: a few fixed shapes with mu-dependent weights.
    fn synthetic_set() -> SnapshotSet {
        let n = 40;
        let mut set = SnapshotSet::new("h".into(), 2, 4, n);
        for mach in [0.3, 0.6] {
            for i in 0..9 {
                let mu = 0.5 + 0.125 * i as f64;
                let field = |v: usize| -> Vec<f64> {
                    (0..n)
                        .map(|k| {
                            let x = k as f64 / n as f64;
                            1.0 + v as f64
                                + mu * (3.0 * x).sin()
                                + (mu * mu) * (1.0 + mach) * (5.0 * x).cos()
                                + (-mu).exp() * x
                        })
                        .collect()
                };
                let f = std::array::from_fn(field);
                set.push(
                    SnapshotCase {
                        mu,
                        mach,
                        p_out: 1.0,
                        probe_uy: 0.0,
                        converged: true,
                    },
                    f,
                )
                .unwrap();
            }
        }
        set
    }

    /// Interpolating RBF with every POD mode kept.
    fn exact_rbf() -> RomConfig {
        RomConfig {
            rank: RankRule::Energy(1.0),
            rbf: RbfSettings {
                smoothing: 0.0,
                ..RbfSettings::default()
            },
            ..RomConfig::default()
        }
    }

    #[test]
    fn rbf_without_smoothing_reproduces_training_fields() {
        let set = synthetic_set();
        let cfg = exact_rbf();
        let rom = train_pipeline(&set, 0.3, &cfg.fields, Method::Rbf, &cfg).unwrap();
        let (mus, truth) = set.series(0.3, 2);
        for (mu, t) in mus.iter().zip(&truth) {
            let p = predict_field(&rom, *mu, "u2").unwrap();
            assert!(relative_error(&p, t) <= 1e-8, "mu {mu}: {}", relative_error(&p, t));
        }
    }

    #[test]
    fn duplicated_point_has_zero_loo_error() {
        let set = synthetic_set();
        let (mut mus, mut fields) = set.series(0.3, 3);
        mus.insert(4, mus[4]);
        fields.insert(4, fields[4].clone());
        let r = loo_series(0.3, "h", &mus, &fields, "p", Method::Rbf, &exact_rbf()).unwrap();
        assert!(r.errors[4].1 <= 1e-8 && r.errors[5].1 <= 1e-8, "{:?}", r.errors);
        assert!(r.errors.iter().all(|(_, e)| e.is_finite() && *e >= 0.0));
    }

    #[test]
    fn loo_error_is_scale_invariant() {
        let set = synthetic_set();
        let (mus, fields) = set.series(0.6, 2);
        let scaled: Vec<Vec<f64>> = fields.iter().map(|f| f.iter().map(|x| 10.0 * x).collect()).collect();
        let cfg = exact_rbf();
        let a = loo_series(0.6, "h", &mus, &fields, "u2", Method::Rbf, &cfg).unwrap();
        let b = loo_series(0.6, "h", &mus, &scaled, "u2", Method::Rbf, &cfg).unwrap();
        for ((_, x), (_, y)) in a.errors.iter().zip(&b.errors) {
            assert!((x - y).abs() <= 1e-9 * x.max(1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn pipeline_round_trips_through_container() {
        let set = synthetic_set();
        let mut cfg = RomConfig::default();
        cfg.training.max_epochs = 200;
        let dir = tempfile::tempdir().unwrap();
        for method in [Method::Rbf, Method::Ann] {
            let rom = train_pipeline(&set, 0.6, &cfg.fields, method, &cfg).unwrap();
            let path = dir.path().join(format!("{}.nsrom", method.as_str()));
            rom.save(&path).unwrap();
            let back = RomPipeline::load(&path).unwrap();
            assert_eq!(back, rom);
            let a = predict_field(&rom, 0.77, "p").unwrap();
            let b = predict_field(&back, 0.77, "p").unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn projected_series_round_trip() {
        let set = synthetic_set();
        let s = ProjectedSeries::from_snapshots(&set, 0.3, "u1", RankRule::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pod.nsrom");
        s.save(&path).unwrap();
        assert_eq!(ProjectedSeries::load(&path).unwrap(), s);
    }

    #[test]
    fn activation_binding() {
        assert_eq!(activation_for("u2"), Activation::Silu);
        assert_eq!(activation_for("p"), Activation::LogSigmoid);
        assert_eq!(activation_for("inv_rho"), Activation::Silu);
    }

    #[test]
    fn too_few_snapshots_rejected() {
        let set = synthetic_set();
        let cfg = RomConfig::default();
        assert!(train_pipeline(&set, 0.9, &cfg.fields, Method::Rbf, &cfg).is_err());
        let (mus, fields) = set.series(0.3, 2);
        assert!(loo_series(0.3, "h", &mus[..3], &fields[..3], "u2", Method::Rbf, &cfg).is_err());
    }

    #[test]
    fn diagram_grid_and_determinism() {
        let set = synthetic_set();
        let cfg = RomConfig::default();
        let rom = train_pipeline(&set, 0.3, &cfg.fields, Method::Rbf, &cfg).unwrap();
        let grid = mu_grid(&rom, 151);
        assert_eq!(grid.len(), 151);
        assert_eq!(grid[0], 0.5);
        assert!((grid[150] - 1.5).abs() < 1e-15);
        // The synthetic fields have no geometry, so probe the first DOF through predict_field.
        let a: Vec<f64> = grid.iter().map(|m| predict_field(&rom, *m, "u2").unwrap()[7]).collect();
        let b: Vec<f64> = grid.iter().map(|m| predict_field(&rom, *m, "u2").unwrap()[7]).collect();
        assert_eq!(a, b);
    }
}
