use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use torsion_sn::consts::TWO_PI;
use torsion_sn::loops::{log_grid_hz, Branch};
use torsion_sn::noise::{combined_q, optical_spring_shift, q_factor, QMechanism};
use torsion_sn::params::{Config, SnMode};
use torsion_sn::sim::{fit_ringup, frozen_sigma_theta, ringup_ensemble, simulate_ensemble, sn_detection, steady_state_stats, Experiment};
use torsion_sn::snpotential::{effective_sn_torque, fit_gaussian_potential, mutual_gravity_curve, self_gravity_curve, symmetric_grid};
use torsion_sn::{ConfigError, Error, Result};

use crate::bundled;
use crate::output::{config_hash, Cell, Manifest, OutDir, Table};
use crate::repro::{self, chain_neighbors, nonquadratic_experiment, quad_settings, Ctx};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "torsion-sn", version, about = "Torsion-pendulum SN model: spectra, budgets, simulation, reproduction targets")]
struct Cli {
    /// Config file, or `bundled:<name>`. Repeatable; later layers win per key.
    #[arg(long = "config", global = true, value_name = "PATH")]
    config: Vec<String>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trajectory and grid parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Self-gravity integral and the non-quadratic angle potential.
    SnPotential {
        /// Half-width of the x/σ grid.
        #[arg(long, default_value_t = 5.0)]
        half_width: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        /// Fit A exp(-x²/2b1) to the integral.
        #[arg(long)]
        fit: bool,
    },
    /// Per-atom SN energy and force along a chain, for several a/σ_x.
    MutualGravity {
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 1.0, 0.1])]
        ratios: Vec<f64>,
        /// Atoms on each side. Default: enough to reach 100 σ_x, at least 50.
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Closed-loop branch PSDs on the run frequency grid.
    Spectrum,
    /// Per-channel noise PSDs and branch uncertainties.
    NoiseBudget,
    /// Q factor per loss mechanism.
    QFactor {
        /// Mechanism name or `all`.
        #[arg(long, default_value = "all")]
        mechanism: String,
    },
    OpticalSpring,
    /// Time-domain trajectories, one CSV each.
    Simulate,
    /// Ensemble ring-up of the band amplitude and its time-constant fit.
    Ringup {
        #[arg(long)]
        n_traj: Option<usize>,
    },
    /// Single-window SNR of the quantum peak.
    Snr,
    /// Integration time to unit SNR for the non-quadratic SN torque.
    TimeToDetect,
    /// Run a reproduction target (`list` shows them, `all` runs every one).
    Repro { name: String },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::SnPotential { .. } => "sn-potential",
            Cmd::MutualGravity { .. } => "mutual-gravity",
            Cmd::Spectrum => "spectrum",
            Cmd::NoiseBudget => "noise-budget",
            Cmd::QFactor { .. } => "q-factor",
            Cmd::OpticalSpring => "optical-spring",
            Cmd::Simulate => "simulate",
            Cmd::Ringup { .. } => "ringup",
            Cmd::Snr => "snr",
            Cmd::TimeToDetect => "time-to-detect",
            Cmd::Repro { .. } => "repro",
        }
    }
}

/// Parse `argv` (program name first), run, return the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if argv.len() < 2 {
        let mut cmd = <Cli as clap::CommandFactory>::command();
        eprintln!("{}", cmd.render_usage());
        return EXIT_USAGE;
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let _ = e.print();
            return match e.kind() {
                DisplayHelp | DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::invalid("jobs", e.to_string())),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

struct Loaded {
    cfg: Config,
    sources: Vec<String>,
    base_dir: Option<PathBuf>,
}

fn load(specs: &[String], seed: Option<u64>) -> Result<Loaded> {
    let specs: Vec<String> = if specs.is_empty() { vec!["bundled:apparatus".into()] } else { specs.to_vec() };
    let mut texts = Vec::new();
    let mut base_dir = None;
    for s in &specs {
        if let Some(name) = s.strip_prefix("bundled:") {
            let t = bundled::text(name).ok_or_else(|| ConfigError::Read { path: s.clone(), reason: "no such bundled config".into() })?;
            texts.push(t.to_string());
        } else {
            let t = std::fs::read_to_string(s).map_err(|e| ConfigError::Read { path: s.clone(), reason: e.to_string() })?;
            base_dir = Path::new(s).parent().map(Path::to_path_buf);
            texts.push(t);
        }
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let mut cfg = Config::parse_layers(&refs)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    Ok(Loaded { cfg, sources: specs, base_dir })
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let Format::Csv = cli.format;
    if let Cmd::Repro { name } = &cli.cmd {
        return run_repro(cli, name);
    }
    let loaded = load(&cli.config, cli.seed)?;
    let tables = compute(&cli.cmd, &loaded)?;
    let mut out = OutDir::create(&cli.out)?;
    for t in &tables {
        out.write_table(t)?;
    }
    write_manifest(&mut out, &loaded.cfg, &loaded.sources, cli.cmd.name(), start)?;
    Ok(())
}

fn write_manifest(out: &mut OutDir, cfg: &Config, sources: &[String], sub: &str, start: Instant) -> Result<()> {
    let m = Manifest {
        config_hash: config_hash(cfg),
        seed: cfg.run.seed,
        version: env!("CARGO_PKG_VERSION"),
        subcommand: sub.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
        config_sources: sources.to_vec(),
    };
    out.write_text("manifest.json", &m.to_json())?;
    Ok(())
}

fn experiment(l: &Loaded) -> Result<Experiment> {
    Experiment::from_config(&l.cfg, l.base_dir.as_deref())
}

fn run_grid(cfg: &Config) -> Vec<f64> {
    log_grid_hz(cfg.run.freq_min_hz, cfg.run.freq_max_hz, cfg.run.n_freq)
}

fn compute(cmd: &Cmd, l: &Loaded) -> Result<Vec<Table>> {
    let cfg = &l.cfg;
    let mut tables = Vec::new();
    match cmd {
        Cmd::SnPotential { half_width, points, fit } => {
            let qs = quad_settings(&cfg.run);
            let x = symmetric_grid(*half_width, *points);
            let curve = self_gravity_curve(&x, cfg.sn.c1, cfg.sn.c2, &qs)?;
            let y: Vec<f64> = curve.iter().map(|v| v.value).collect();
            let err: Vec<f64> = curve.iter().map(|v| v.error).collect();
            let mut t = Table::from_columns("self_gravity.csv", &["x_tilde", "integral", "error"], &[&x, &y, &err])
                .comment(format!("c1 = {}, c2 = {}, nuisance {:?}", cfg.sn.c1, cfg.sn.c2, qs.nuisance));
            if *fit {
                let f = fit_gaussian_potential(&x, &y, *half_width)?;
                println!("A = {:.6}, b1 = {:.6}, max relative residual {:.3e}", f.a, f.b1, f.max_rel_residual);
                t.comments.push(format!("fit: A = {:.6e}, b1 = {:.6e}", f.a, f.b1));
            }
            tables.push(t);
            let sigma = match cfg.sn.sigma_theta {
                Some(s) => s,
                None => frozen_sigma_theta(&experiment(l)?.loop_model)?,
            };
            let theta: Vec<f64> = x.iter().map(|v| v * sigma).collect();
            let mut pt = Table::new("potential.csv", &["theta_rad", "energy_J", "torque_Nm"]).comment(format!("sigma_theta = {sigma:.6e} rad"));
            for th in theta {
                let (e, tq) = effective_sn_torque(th, sigma, &cfg.sn, &cfg.pendulum)?;
                pt.push(vec![th.into(), e.into(), tq.into()]);
            }
            tables.push(pt);
        }
        Cmd::MutualGravity { ratios, neighbors, points } => {
            let qs = quad_settings(&cfg.run);
            let a = cfg.sn.lattice_const;
            if !(a > 0.0) {
                return Err(Error::invalid("sn.lattice_const", "needed for mutual-gravity curves"));
            }
            let mut t = Table::new("mutual_gravity.csv", &["a_over_sigma", "neighbors", "x_m", "potential_J", "force_N"])
                .comment(format!("lattice constant {a:e} m"));
            for &ratio in ratios {
                if !(ratio > 0.0) {
                    return Err(Error::invalid("ratios", "must be positive"));
                }
                let mut model = cfg.sn;
                let sigma = a / ratio;
                model.sigma_x = Some(sigma);
                let grid = symmetric_grid(3.0 * sigma, *points);
                let n = neighbors.unwrap_or_else(|| chain_neighbors(ratio, 100.0, 50));
                let c = mutual_gravity_curve(&grid, &model, n, &qs)?;
                let amp = c.force.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                println!("a/sigma = {ratio}: {n} neighbours, force amplitude {amp:.4e} N");
                for i in 0..grid.len() {
                    t.push(vec![ratio.into(), (n as f64).into(), grid[i].into(), c.potential[i].into(), c.force[i].into()]);
                }
            }
            tables.push(t);
        }
        Cmd::Spectrum => {
            let exp = experiment(l)?;
            let s = exp.loop_model.spectrum(&run_grid(cfg), cfg.run.observable, cfg.run.include_dg)?;
            let f = s.freq_hz();
            let mut t = Table::from_columns(
                "spectrum.csv",
                &["freq_hz", "quantum", "classical", "dg", "total", "quantum_torque", "classical_torque", "dg_torque", "total_torque"],
                &[&f, &s.quantum, &s.classical, &s.dg, &s.total, &s.quantum_torque, &s.classical_torque, &s.dg_torque, &s.total_torque],
            )
            .comment(format!("observable {:?}, include_dg {}; angle PSDs rad^2/Hz, torque PSDs N^2 m^2/Hz", s.observable, s.include_dg));
            for r in &s.stability {
                t.comments.push(format!("{} branch stable = {}, max Re(pole) = {:.4e}", r.branch, r.stable, r.max_real_part));
                if !r.stable {
                    eprintln!("warning: {} branch is unstable", r.branch);
                }
            }
            tables.push(t);
        }
        Cmd::NoiseBudget => {
            let exp = experiment(l)?;
            let lm = &exp.loop_model;
            let grid = run_grid(cfg);
            let f: Vec<f64> = grid.iter().map(|w| w / TWO_PI).collect();
            let names: Vec<&str> = std::iter::once("freq_hz").chain(lm.noise.channels.iter().map(|c| c.channel.name())).collect();
            let mut t = Table::new("noise_budget.csv", &names).comment("torque channels N^2 m^2/Hz, sensor channels rad^2/Hz");
            for (i, w) in grid.iter().enumerate() {
                let mut row = vec![Cell::Num(f[i])];
                row.extend(lm.noise.channels.iter().map(|c| Cell::Num(c.model.eval(*w))));
                t.push(row);
            }
            tables.push(t);
            let wide = log_grid_hz(lm.omega_q() / TWO_PI * 1e-6, lm.omega_q() / TWO_PI * 1e6, 2000);
            let mut u = Table::new("uncertainty.csv", &["branch", "delta_theta_rad", "delta_x_m"]);
            for (b, name) in [(Branch::Quantum, "quantum"), (Branch::Classical, "classical"), (Branch::Total, "total")] {
                let r = lm.residual_uncertainty(b, &wide)?;
                println!("{name}: delta theta = {:.4e} rad, delta x = {:.4e} m", r.delta_theta, r.delta_x);
                u.push(vec![name.into(), r.delta_theta.into(), r.delta_x.into()]);
            }
            tables.push(u);
        }
        Cmd::QFactor { mechanism } => {
            let mechs: Vec<QMechanism> = if mechanism == "all" {
                QMechanism::ALL.to_vec()
            } else {
                vec![QMechanism::parse(mechanism).ok_or_else(|| Error::invalid("mechanism", format!("unknown {mechanism:?}")))?]
            };
            let mut t = Table::new("q_budget.csv", &["mechanism", "q", "loss_angle", "note"]);
            let mut qs = Vec::new();
            for m in mechs {
                let r = q_factor(m, &cfg.budget, &cfg.pendulum)?;
                println!("{}: Q = {:.4e}, loss angle = {:.4e}", m.name(), r.q, r.loss_angle);
                qs.push(r.q);
                t.push(vec![m.name().into(), r.q.into(), r.loss_angle.into(), r.note.unwrap_or("").into()]);
            }
            if qs.len() > 1 {
                let q = combined_q(&qs);
                println!("combined: Q = {q:.4e}");
                t.push(vec!["combined".into(), q.into(), (1.0 / q).into(), "".into()]);
            }
            tables.push(t);
        }
        Cmd::OpticalSpring => {
            let (rel, df) = optical_spring_shift(&cfg.optics, &cfg.pendulum);
            println!("relative omega^2 shift = {rel:.4e}, delta f = {df:.4e} Hz");
            tables.push(Table::from_columns("optical_spring.csv", &["rel_shift", "delta_f_hz"], &[&[rel], &[df]]));
        }
        Cmd::Simulate => {
            let mut exp = experiment(l)?;
            if exp.sim.sn_mode == SnMode::Nonquadratic && exp.sn.sigma_theta.is_none() {
                exp.sn.sigma_theta = Some(frozen_sigma_theta(&exp.loop_model)?);
            }
            let nonquad = exp.sim.sn_mode == SnMode::Nonquadratic;
            let mut cols = vec!["t_s", "theta_rad", "theta_mean_rad", "readout_rad", "control_Nm"];
            if nonquad {
                cols.push("sn_torque_Nm");
            }
            for (i, r) in simulate_ensemble(&exp)?.into_iter().enumerate() {
                let mut series: Vec<&[f64]> = vec![&r.time, &r.theta, &r.theta_mean, &r.readout, &r.control];
                if nonquad {
                    series.push(&r.sn_torque);
                }
                let t = Table::from_columns(format!("trajectory_{i:04}.csv"), &cols, &series)
                    .comment(format!("seed {}, trajectory {i}, shaping residual {:.3e}", exp.sim.seed, r.shaping_residual));
                tables.push(t);
            }
        }
        Cmd::Ringup { n_traj } => {
            let exp = experiment(l)?;
            let (fc, bw) = match (cfg.run.band_center_hz, cfg.run.band_width_hz) {
                (Some(c), Some(w)) => (c, w),
                _ => return Err(Error::invalid("run.band_center_hz", "ringup needs band_center_hz and band_width_hz")),
            };
            let res = ringup_ensemble(&exp, fc, bw, n_traj.unwrap_or(cfg.run.n_traj))?;
            let fit = fit_ringup(&res)?;
            let expected = 2.0 * cfg.pendulum.q_factor / cfg.pendulum.omega_m;
            println!("tau = {:.4e} s (2Q/omega_m = {expected:.4e} s), plateau {:.4e}", fit.tau, fit.plateau);
            let sn = cfg.run.s_noise_asd;
            let amp: Vec<f64> = res.mean_asd.iter().map(|v| v / sn).collect();
            let pow: Vec<f64> = amp.iter().map(|v| v * v).collect();
            tables.push(
                Table::from_columns(
                    "ringup.csv",
                    &["t_days", "mean_asd", "p16", "p84", "amplitude_norm", "power_norm"],
                    &[&res.t_days, &res.mean_asd, &res.p16, &res.p84, &amp, &pow],
                )
                .comment(format!("band {fc} Hz +/- {} Hz; normalised to s_noise_asd = {sn:e}", bw / 2.0))
                .comment(format!("fit: tau = {:.6e} s, plateau = {:.6e}, rms residual = {:.3e}", fit.tau, fit.plateau, fit.rms_residual)),
            );
        }
        Cmd::Snr => {
            let exp = experiment(l)?;
            let s = steady_state_stats(&cfg.pendulum, &cfg.optics, exp.loop_model.omega_q(), cfg.run.t_bw, cfg.run.s_noise_asd);
            println!("SNR = {:.4}", s.snr);
            tables.push(Table::from_columns(
                "snr.csv",
                &["s_ff", "s_thetatheta", "s_meas", "snr"],
                &[&[s.s_ff], &[s.s_thetatheta], &[s.s_meas], &[s.snr]],
            ));
        }
        Cmd::TimeToDetect => {
            let mut cfg = cfg.clone();
            cfg.run.sn_mode = SnMode::Nonquadratic;
            let exp = nonquadratic_experiment(&cfg)?;
            let d = sn_detection(&exp, cfg.run.observable, (cfg.run.freq_min_hz, cfg.run.freq_max_hz))?;
            println!("time to detect = {:.4e} yr ({:.4e} s), sigma_theta = {:.4e} rad", d.detection.years, d.detection.seconds, d.sigma_theta);
            let ratio: Vec<f64> = d.signal.iter().zip(&d.noise).map(|(s, n)| s / n).collect();
            tables.push(
                Table::from_columns("detect.csv", &["freq_hz", "sn_torque_psd", "noise_torque_psd", "ratio"], &[&d.freq_hz, &d.signal, &d.noise, &ratio])
                    .comment(format!("time to detect {:.6e} yr, observable {:?}", d.detection.years, cfg.run.observable)),
            );
        }
        Cmd::Repro { .. } => unreachable!("handled in run"),
    }
    Ok(tables)
}

fn run_repro(cli: &Cli, name: &str) -> Result<()> {
    let start = Instant::now();
    if name == "list" {
        for t in repro::TARGETS {
            println!("{:<18} {}", t.name, t.summary);
        }
        return Ok(());
    }
    let names: Vec<&str> = if name == "all" {
        repro::TARGETS.iter().map(|t| t.name).collect()
    } else {
        vec![repro::find(name).ok_or_else(|| Error::invalid("repro", format!("unknown target {name:?}; try `repro list`")))?.name]
    };
    let ctx = Ctx { seed: cli.seed };
    let cfg = ctx_config(&ctx)?;
    for n in names {
        let report = repro::run(n, &ctx)?;
        let dir = if name == "all" { cli.out.join(n) } else { cli.out.clone() };
        let mut out = OutDir::create(&dir)?;
        for c in &report.checks {
            println!("{}", c.line());
        }
        out.write_table(&report.summary_table())?;
        for t in &report.tables {
            out.write_table(t)?;
        }
        write_manifest(&mut out, &cfg, &[format!("repro:{n}")], "repro", start)?;
    }
    Ok(())
}

fn ctx_config(ctx: &Ctx) -> Result<Config> {
    let mut cfg = bundled::config("apparatus", &[])?;
    if let Some(s) = ctx.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}
