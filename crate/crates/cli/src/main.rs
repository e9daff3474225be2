use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coanda::config::Config;
use coanda::container::{write_atomic, write_container};
use coanda::dg::PointEvaluator;
use coanda::regress::Method;
use coanda::rom::{leave_one_out, mu_grid, predict_field, reconstruct_diagram, ProjectedSeries, RomPipeline};
use coanda::snapshots::{critical_viscosity, sweep, write_records_csv, BifurcationDiagram, SweepOptions, PROBE_POINT};
use coanda::solver::{Channel, FlowCase};
use coanda::workflow::{convergence_study, end_to_end, load_snapshots, pool};

/// DG compressible channel-flow solver and POD reduced-order models.
#[derive(Parser)]
#[command(name = "coanda", version)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override discretization.n_y.
    #[arg(long)]
    n_y: Option<usize>,

    /// Override discretization.order.
    #[arg(long)]
    order: Option<usize>,

    /// Override solver.max_steps.
    #[arg(long)]
    max_steps: Option<usize>,
}

impl ConfigArgs {
    /// Effective configuration plus the verbatim file text.
    fn load(&self) -> Result<(Config, Option<String>)> {
        let raw = match &self.config {
            Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        let mut cfg = match &raw {
            Some(text) => Config::from_json(text)?,
            None => Config::default(),
        };
        if let Some(n) = self.n_y {
            cfg.discretization.n_y = n;
        }
        if let Some(p) = self.order {
            cfg.discretization.order = p;
        }
        if let Some(m) = self.max_steps {
            cfg.solver.max_steps = m;
        }
        cfg.validate()?;
        Ok((cfg, raw))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the channel mesh and write it as JSON.
    Mesh {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// March one (mu, Mach) case to steady state.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        mach: f64,
        /// Sign of the initial vertical-velocity seed (+1 or -1).
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        sign: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the configured (Mach, mu) sweep and store snapshots.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the full-order bifurcation diagram of a sweep as CSV.
    Diagram {
        /// Sweep directory or snapshot file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Asymmetry threshold (default 0.02 times the inlet velocity of 20).
        #[arg(long, default_value_t = 0.4)]
        threshold: f64,
    },
    /// Grid-convergence study of one case over several mesh levels.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        /// Mach number (default: the first configured one).
        #[arg(long)]
        mach: Option<f64>,
        /// Mesh levels (default: discretization.convergence_levels).
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// POD of one field at one Mach number.
    Pod {
        #[command(flatten)]
        config: ConfigArgs,
        /// Sweep directory or snapshot file.
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        mach: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a regressor on POD coefficients; the model file embeds the basis.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// POD files (one per field) of a common Mach number.
        #[arg(long, required = true)]
        pod: Vec<PathBuf>,
        #[arg(long)]
        method: Method,
        /// Refuse POD files of another Mach number.
        #[arg(long)]
        mach: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a field at a new viscosity.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value = "u2")]
        field: String,
        /// CSV `index,value` of the predicted DOF vector.
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out validation of one field and method.
    Loo {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        mach: f64,
        #[arg(long)]
        field: String,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bifurcation diagram reconstructed from trained models.
    RomDiagram {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        /// Grid size (default: rom.diagram_points).
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep, POD, both ROMs, leave-one-out and diagrams in one go.
    EndToEnd {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = run(cli.command, jobs) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command, jobs: usize) -> Result<()> {
    match command {
        Command::Mesh { config, out } => {
            let (cfg, _) = config.load()?;
            let mesh = cfg.study().mesh()?;
            write_file(&out, mesh.to_json().as_bytes())?;
            println!(
                "{} elements, h = {}, fingerprint {}",
                mesh.n_elements(),
                mesh.h(),
                mesh.fingerprint()
            );
        }
        Command::Run {
            config,
            mu,
            mach,
            sign,
            out_dir,
        } => {
            let (mut cfg, _) = config.load()?;
            cfg.solver.perturbation_sign = sign;
            let study = cfg.study();
            let case = study.case(mu, mach)?;
            let mesh = study.mesh()?;
            let re = study.element()?;
            let channel = Channel::new(&mesh, &re, study.geometry, study.gas, study.flow);
            let run = channel.run_to_steady(FlowCase { mu, mach }, &study.solver, None)?;
            fs::create_dir_all(&out_dir)?;
            let mut buf = Vec::new();
            run.write_history_csv(&mut buf)?;
            write_file(&out_dir.join("history.csv"), &buf)?;
            let summary = serde_json::json!({
                "kind": "fom_field",
                "mu": mu,
                "mach": mach,
                "reynolds": case.reynolds(),
                "p_out": study.outlet_pressure(mach),
                "mesh_hash": mesh.fingerprint(),
                "n_y": study.n_y,
                "P": study.order,
                "status": run.status,
                "steps": run.steps,
                "probe_uy": run.final_probe,
                "final_residual": run.final_residual,
                "wall_time": run.wall_time,
                "message": run.message,
            });
            write_container(&out_dir.join("field.nsrom"), &summary, run.final_field.data())?;
            write_file(&out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
            println!(
                "{:?} after {} steps: u_y(15, 0) = {:e}, residual {:e}",
                run.status, run.steps, run.final_probe, run.final_residual
            );
        }
        Command::Sweep { config, out_dir } => {
            let (cfg, _) = config.load()?;
            let out = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            let study = cfg.study();
            let opts = SweepOptions {
                jobs,
                continuation: cfg.sweep.continuation,
                case_dir: Some(out.join("cases")),
            };
            let res = sweep(&study, &cfg.sweep.mach, &cfg.sweep.mu, &opts)?;
            res.snapshots.save(&out.join("snapshots.nsrom"))?;
            write_file(&out.join("diagram_fom.csv"), res.diagram.to_csv().as_bytes())?;
            let mut buf = Vec::new();
            write_records_csv(&res.records, &mut buf)?;
            write_file(&out.join("cases.csv"), &buf)?;
            std::io::stdout().write_all(&buf)?;
            for (mach, b) in critical_viscosity(&res.diagram, study.threshold()) {
                println!("Ma={mach}: bracket {b:?}");
            }
        }
        Command::Diagram { input, out, threshold } => {
            let set = load_snapshots(&input)?;
            let d = set.diagram();
            write_file(&out, d.to_csv().as_bytes())?;
            for (mach, b) in critical_viscosity(&d, threshold) {
                println!("Ma={mach}: bracket {b:?}");
            }
        }
        Command::Convergence {
            config,
            mu,
            mach,
            levels,
            out_dir,
        } => {
            let (cfg, _) = config.load()?;
            let mach = mach.unwrap_or(cfg.sweep.mach[0]);
            let levels = if levels.is_empty() {
                cfg.discretization.convergence_levels.clone()
            } else {
                levels
            };
            let rep = convergence_study(&cfg, mu, mach, &levels, jobs)?;
            rep.write_csvs(&out_dir)?;
            for l in &rep.levels {
                println!("n_y={}: converged={} steps={} probe={:e}", l.n_y, l.converged, l.steps, l.probe_uy);
            }
            for (a, b, d) in rep.successive_differences() {
                println!("{a}->{b}: rms diff centreline p {:.3e}, u2 {:.3e}", d[0], d[1]);
            }
        }
        Command::Pod {
            config,
            snapshots,
            field,
            mach,
            out,
        } => {
            let (cfg, _) = config.load()?;
            let set = load_snapshots(&snapshots)?;
            let s = ProjectedSeries::from_snapshots(&set, mach, &field, cfg.rom.rank)?;
            s.save(&out)?;
            println!("k,singular_value,cumulative_energy");
            for (k, (sv, e)) in s.basis.singular_values.iter().zip(s.basis.energy_spectrum()).enumerate() {
                println!("{},{sv:?},{e:?}", k + 1);
            }
        }
        Command::Train {
            config,
            pod,
            method,
            mach,
            out,
        } => {
            let (cfg, _) = config.load()?;
            let series = pod.iter().map(|p| ProjectedSeries::load(p)).collect::<coanda::Result<Vec<_>>>()?;
            if let Some(m) = mach {
                if let Some(s) = series.iter().find(|s| s.mach != m) {
                    bail!("POD file for `{}` is at Mach {}, not {m}", s.basis.variable, s.mach);
                }
            }
            let p = RomPipeline::from_series(&series, method, &cfg.rom)?;
            p.save(&out)?;
            println!(
                "trained {} model at Ma={} for {:?}",
                method.as_str(),
                p.mach,
                p.fields.iter().map(|f| (&f.basis.variable, f.basis.n_modes())).collect::<Vec<_>>()
            );
        }
        Command::Predict { model, mu, field, out } => {
            let p = RomPipeline::load(&model)?;
            let v = predict_field(&p, mu, &field)?;
            let mut s = String::from("index,value\n");
            for (i, x) in v.iter().enumerate() {
                s.push_str(&format!("{i},{x:?}\n"));
            }
            write_file(&out, s.as_bytes())?;
        }
        Command::Loo {
            config,
            snapshots,
            mach,
            field,
            method,
            out,
        } => {
            let (cfg, _) = config.load()?;
            let set = load_snapshots(&snapshots)?;
            let rep = pool(jobs)?.install(|| leave_one_out(&set, mach, &field, method, &cfg.rom))?;
            let mut buf = Vec::new();
            rep.write_csv(&mut buf, true)?;
            write_file(&out, &buf)?;
            std::io::stdout().write_all(&buf)?;
        }
        Command::RomDiagram {
            config,
            model,
            points,
            out,
        } => {
            let (cfg, _) = config.load()?;
            let study = cfg.study();
            let mesh = study.mesh()?;
            let re = study.element()?;
            let probe = PointEvaluator::new(&mesh, &re, PROBE_POINT[0], PROBE_POINT[1])?;
            let mut all: Option<BifurcationDiagram> = None;
            for path in &model {
                let p = RomPipeline::load(path)?;
                if p.mesh_hash != mesh.fingerprint() {
                    bail!("{} was trained on another mesh than the configured one", path.display());
                }
                let d = reconstruct_diagram(&p, &probe, &mu_grid(&p, points.unwrap_or(cfg.rom.diagram_points)))?;
                match &mut all {
                    None => all = Some(d),
                    Some(a) if a.source == d.source => {
                        for (mach, pts) in d.branches {
                            for (mu, v) in pts {
                                a.insert(mach, mu, v);
                            }
                        }
                    }
                    Some(_) => bail!("models of different methods cannot share one diagram"),
                }
            }
            let d = all.expect("at least one model");
            write_file(&out, d.to_csv().as_bytes())?;
            for (mach, b) in critical_viscosity(&d, study.threshold()) {
                println!("Ma={mach}: bracket {b:?}");
            }
        }
        Command::EndToEnd { config, out_dir } => {
            let (cfg, raw) = config.load()?;
            let out = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            let m = end_to_end(&cfg, raw.as_deref(), &out, jobs)?;
            print!("{}", fs::read_to_string(out.join("report.txt"))?);
            println!(
                "{} artifacts ({} recomputed), manifest at {}",
                m.artifacts.len(),
                m.artifacts.iter().filter(|a| a.recomputed).count(),
                out.join("manifest.json").display()
            );
        }
    }
    Ok(())
}
