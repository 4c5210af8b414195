//! Command-line entry point: derived scales, band structure, effective
//! potentials, golden-rule rate maps, few-photon propagation, and time-tag
//! correlation analysis.
//!
//! All frequency flags and config keys are ν = ω/2π in MHz; lengths are µm.
//! Exit codes: 0 success, 2 usage/config error, 3 numerical failure (with a
//! diagnostic JSON in the output directory).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde_json::json;

use rydloss::correlator::{
    self, read_tags_binary, read_tags_csv, synth_tags, write_tags_binary, write_tags_csv,
    SynthConfig, SynthModel, TTAG_MAGIC,
};
use rydloss::error::Error;
use rydloss::fgr::{self, QGridSpec, RateMethod};
use rydloss::interactions::{
    blockade_radius, chi_bar, effective_potential, resonance_detunings, ResonanceMethod,
};
use rydloss::medium::{derive_scales, MediumConfig};
use rydloss::output::{
    atomic_write, config_echo, holes_json, json_bytes, map_csv, table_csv, with_metadata,
};
use rydloss::polaritons::{branch_spectrum, BranchLabel};
use rydloss::propagation::{
    axis_grid, correlation_map, g2_tau_profile, production_axis, solve_single, solve_three,
    solve_two, DensityProfile,
};
use rydloss::units::{angular_to_mhz, mhz_to_angular};
use rydloss::{MediumParams, Result};

#[derive(Parser)]
#[command(
    name = "rydloss",
    version,
    about = "Rydberg-EIT polariton interactions, three-body loss rates, and photon correlations",
    long_about = "Numerical toolkit for tunable three-body loss in a nonlinear Rydberg medium.\n\
                  All frequency flags and config keys are nu = omega/2pi in MHz; lengths in um.\n\
                  Defaults follow the simulation parameter set (OD 37, Omega_c 25 MHz, Gamma 7 MHz,\n\
                  gamma_s 0.3 MHz, sigma_z 40 um); see presets/simulation.toml and presets/experiment.toml."
)]
struct Cli {
    /// TOML medium config (keys g_MHz, omega_c_MHz, gamma_MHz, gamma_s_MHz,
    /// delta_MHz, delta_s_MHz, C6, OD, sigma_z_um, profile)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker thread count (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Random seed for synthetic data
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// off | error | warn | info | debug
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derived scales: phi, r_b, OD_b, resonance detunings
    Scales {
        /// JSON output file (default: scales.json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Polariton band structure over momentum (CSV: q_per_um, branch,
    /// re_omega_MHz, im_omega_MHz, abs_S2)
    Dispersion {
        /// Momentum window half-width, 1/um (default: 10 k_c)
        #[arg(long)]
        q_max: Option<f64>,
        /// Grid points across [-q_max, q_max]
        #[arg(long, default_value_t = 601)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturated effective potential V_e(omega, r) (CSV: r_um, re_Ve_MHz, im_Ve_MHz)
    Potential {
        /// Evaluation frequency omega/2pi, MHz
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        #[arg(long, default_value_t = 0.5)]
        r_min: f64,
        #[arg(long, default_value_t = 30.0)]
        r_max: f64,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resonance detunings delta_0 and delta_+ (JSON)
    Resonances {
        #[arg(long, value_enum, default_value_t = ResonanceMethodArg::Closed)]
        method: ResonanceMethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-body rate |beta| over a detuning grid (CSV + JSON metadata)
    BetaMap {
        /// Probe detuning range lo:hi:step, MHz
        #[arg(long, allow_hyphen_values = true)]
        delta: String,
        /// Two-photon detuning range lo:hi:step, MHz
        #[arg(long, allow_hyphen_values = true)]
        deltas: String,
        /// full | simplified | asymptotic
        #[arg(long, default_value = "simplified")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Max-|beta| locus delta*(delta_s) (JSON array)
    Locus {
        /// Two-photon detuning range lo:hi:step, MHz
        #[arg(long, default_value = "-3:3:0.5", allow_hyphen_values = true)]
        deltas: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady-state N-photon propagation: g2(0), g3(0,0), eta3(0,0)
    Simulate {
        /// Excitation number
        #[arg(long, default_value_t = 2)]
        n: u8,
        /// Probe detuning delta/2pi, MHz; scalar or lo:hi:step for map mode
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<String>,
        /// Two-photon detuning delta_s/2pi, MHz; scalar or lo:hi:step
        #[arg(long, allow_hyphen_values = true)]
        deltas: Option<String>,
        /// Points per spatial axis (default: production step for n = 2, 96 for n = 3)
        #[arg(long)]
        grid: Option<usize>,
        /// gaussian | homogeneous (overrides the config profile)
        #[arg(long)]
        profile: Option<String>,
        /// Delay profile lo:hi:step in us (n = 2 only; emits g2_tau.csv)
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// g2/g3/eta3 from a time-tag file (CSV or TTAG1 binary)
    Correlate {
        /// Input tag file
        #[arg(long)]
        input: PathBuf,
        /// Histogram bin, ns
        #[arg(long, default_value_t = correlator::DEFAULT_BIN_NS)]
        bin_ns: i64,
        /// g2 window half-width, ns (the g3 window is half of this)
        #[arg(long, default_value_t = 400)]
        window_ns: i64,
        /// Normalization block period, us
        #[arg(long, default_value_t = 100)]
        block_us: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic three-channel tag streams
    Synth {
        #[arg(long, value_enum, default_value_t = SynthModelArg::Poisson)]
        model: SynthModelArg,
        /// Event rate per us (pair/triplet rate for those models)
        #[arg(long, default_value_t = 3.0)]
        rate: f64,
        /// Jitter scale, ns (pairs/triplets)
        #[arg(long, default_value_t = 5.0)]
        jitter_ns: f64,
        /// Stream length, ms
        #[arg(long, default_value_t = 100)]
        duration_ms: i64,
        #[arg(long, value_enum, default_value_t = TagFormat::Csv)]
        format: TagFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ResonanceMethodArg {
    Closed,
    Numeric,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthModelArg {
    Poisson,
    BunchedPairs,
    Triplets,
}

#[derive(Clone, Copy, ValueEnum)]
enum TagFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
}

struct Logger {
    level: LogLevel,
}

impl Logger {
    fn parse(s: &str) -> Result<Logger> {
        let level = match s {
            "off" => LogLevel::Off,
            "error" => LogLevel::Error,
            "warn" => LogLevel::Warn,
            "info" => LogLevel::Info,
            "debug" => LogLevel::Debug,
            other => return Err(Error::Usage(format!("unknown log level `{other}`"))),
        };
        Ok(Logger { level })
    }

    fn info(&self, msg: impl AsRef<str>) {
        if self.level >= LogLevel::Info {
            eprintln!("[info] {}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.level >= LogLevel::Debug {
            eprintln!("[debug] {}", msg.as_ref());
        }
    }
}

/// Parse `lo:hi:step` (inclusive endpoints within half a step) into a grid.
fn parse_range(spec: &str, flag: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 1 {
        let v: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Usage(format!("--{flag}: cannot parse `{spec}`")))?;
        return Ok(vec![v]);
    }
    if parts.len() != 3 {
        return Err(Error::Usage(format!(
            "--{flag}: expected a number or lo:hi:step, got `{spec}`"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Usage(format!("--{flag}: cannot parse `{p}` in `{spec}`")))
        })
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || hi < lo {
        return Err(Error::Usage(format!("--{flag}: need hi >= lo and step > 0 in `{spec}`")));
    }
    let n = ((hi - lo) / step + 0.5).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

struct Context {
    params: MediumParams,
    profile_name: String,
    out_dir: PathBuf,
    seed: u64,
    log: Logger,
    started: Instant,
}

impl Context {
    fn echo(&self) -> serde_json::Value {
        config_echo(&self.params, &self.profile_name)
    }

    fn wall_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        match explicit {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.out_dir.join(p),
            None => self.out_dir.join(default_name),
        }
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        atomic_write(path, bytes)?;
        self.log.info(format!("wrote {}", path.display()));
        Ok(())
    }

    fn profile(&self) -> Result<DensityProfile> {
        match self.profile_name.as_str() {
            "gaussian" => DensityProfile::gaussian(&self.params),
            "homogeneous" => DensityProfile::homogeneous(&self.params),
            other => Err(Error::Usage(format!(
                "unknown profile `{other}` (expected gaussian or homogeneous)"
            ))),
        }
    }
}

fn build_context(cli: &Cli) -> Result<Context> {
    let log = Logger::parse(&cli.log_level)?;
    let (params, profile_name) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = MediumConfig::from_toml_str(&text)?;
            (cfg.to_params()?, cfg.profile.clone())
        }
        None => (MediumParams::simulation_preset(), "gaussian".to_string()),
    };
    params.validate()?;
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        // ignore the error if a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    Ok(Context {
        params,
        profile_name,
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        log,
        started: Instant::now(),
    })
}

fn run(cli: &Cli) -> Result<()> {
    let mut ctx = build_context(cli)?;
    match &cli.command {
        Command::Scales { out } => cmd_scales(&ctx, out),
        Command::Dispersion { q_max, points, out } => cmd_dispersion(&ctx, *q_max, *points, out),
        Command::Potential { omega, r_min, r_max, points, out } => {
            cmd_potential(&ctx, *omega, *r_min, *r_max, *points, out)
        }
        Command::Resonances { method, out } => cmd_resonances(&ctx, *method, out),
        Command::BetaMap { delta, deltas, method, out } => {
            cmd_beta_map(&ctx, delta, deltas, method, out)
        }
        Command::Locus { deltas, out } => cmd_locus(&ctx, deltas, out),
        Command::Simulate { n, delta, deltas, grid, profile, tau, out } => {
            if let Some(p) = profile {
                ctx.profile_name = p.clone();
            }
            cmd_simulate(&ctx, *n, delta, deltas, *grid, tau, out)
        }
        Command::Correlate { input, bin_ns, window_ns, block_us, out } => {
            cmd_correlate(&ctx, input, *bin_ns, *window_ns, *block_us, out)
        }
        Command::Synth { model, rate, jitter_ns, duration_ms, format, out } => {
            cmd_synth(&ctx, *model, *rate, *jitter_ns, *duration_ms, *format, out)
        }
    }
}

fn cmd_scales(ctx: &Context, out: &Option<PathBuf>) -> Result<()> {
    let chi0 = chi_bar(C64::new(0.0, 0.0), &ctx.params)?;
    let scales = derive_scales(&ctx.params, chi0)?;
    let res = resonance_detunings(&ctx.params, ResonanceMethod::ClosedForm)?;
    let payload = json!({
        "phi": scales.phi,
        "r_b_um": scales.r_b,
        "OD_b": scales.od_b,
        "delta0_MHz": angular_to_mhz(res.delta0),
        "deltaPlus_MHz": angular_to_mhz(res.delta_plus),
        "k_c_per_um": scales.k_c,
        "omega_c_scale_MHz": angular_to_mhz(scales.omega_c_scale),
    });
    let doc = with_metadata(payload, ctx.echo(), ctx.wall_ms());
    ctx.write(&ctx.out_path(out, "scales.json"), &json_bytes(&doc))
}

fn cmd_dispersion(
    ctx: &Context,
    q_max: Option<f64>,
    points: usize,
    out: &Option<PathBuf>,
) -> Result<()> {
    if points < 8 {
        return Err(Error::Usage("--points must be at least 8".into()));
    }
    let q_max = match q_max {
        Some(q) if q > 0.0 => q,
        Some(_) => return Err(Error::Usage("--q-max must be positive".into())),
        None => {
            let chi0 = chi_bar(C64::new(0.0, 0.0), &ctx.params)?;
            10.0 * derive_scales(&ctx.params, chi0)?.k_c
        }
    };
    let grid: Vec<f64> = (0..points)
        .map(|i| -q_max + 2.0 * q_max * i as f64 / (points - 1) as f64)
        .collect();
    let spectrum = branch_spectrum(&grid, &ctx.params)?;
    let mut csv = String::from("q_per_um,branch,re_omega_MHz,im_omega_MHz,abs_S2\n");
    for branch in BranchLabel::ALL {
        for (i, &q) in spectrum.q_grid.iter().enumerate() {
            let w = spectrum.omega_at(branch, i);
            let s2 = spectrum.rydberg_overlap[branch.index()][i].norm_sqr();
            csv.push_str(&format!(
                "{q:.9},{},{:.9},{:.9},{:.9}\n",
                branch.as_str(),
                angular_to_mhz(w.re),
                angular_to_mhz(w.im),
                s2
            ));
        }
    }
    ctx.write(&ctx.out_path(out, "dispersion.csv"), csv.as_bytes())?;
    let doc = with_metadata(
        json!({ "q_max_per_um": q_max, "points": points }),
        ctx.echo(),
        ctx.wall_ms(),
    );
    ctx.write(&ctx.out_path(&None, "dispersion.json"), &json_bytes(&doc))
}

fn cmd_potential(
    ctx: &Context,
    omega_mhz: f64,
    r_min: f64,
    r_max: f64,
    points: usize,
    out: &Option<PathBuf>,
) -> Result<()> {
    if !(r_min > 0.0 && r_max > r_min && points >= 2) {
        return Err(Error::Usage("need 0 < r_min < r_max and at least 2 points".into()));
    }
    let omega = C64::new(mhz_to_angular(omega_mhz), 0.0);
    let rows: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            let r = r_min + (r_max - r_min) * i as f64 / (points - 1) as f64;
            let sample = effective_potential(omega, r, &ctx.params)?;
            Ok(vec![r, angular_to_mhz(sample.value.re), angular_to_mhz(sample.value.im)])
        })
        .collect::<Result<_>>()?;
    let csv = table_csv("r_um,re_Ve_MHz,im_Ve_MHz", &rows);
    ctx.write(&ctx.out_path(out, "potential.csv"), csv.as_bytes())?;
    let rb = blockade_radius(omega, &ctx.params)?;
    let doc = with_metadata(
        json!({ "omega_MHz": omega_mhz, "r_b_um": rb }),
        ctx.echo(),
        ctx.wall_ms(),
    );
    ctx.write(&ctx.out_path(&None, "potential.json"), &json_bytes(&doc))
}

fn cmd_resonances(ctx: &Context, method: ResonanceMethodArg, out: &Option<PathBuf>) -> Result<()> {
    let (method, name) = match method {
        ResonanceMethodArg::Closed => (ResonanceMethod::ClosedForm, "closed_form"),
        ResonanceMethodArg::Numeric => (ResonanceMethod::NumericRoot, "numeric_root"),
    };
    let res = resonance_detunings(&ctx.params, method)?;
    let payload = json!({
        "delta0_MHz": angular_to_mhz(res.delta0),
        "deltaPlus_MHz": angular_to_mhz(res.delta_plus),
        "method": name,
    });
    let doc = with_metadata(payload, ctx.echo(), ctx.wall_ms());
    ctx.write(&ctx.out_path(out, "resonances.json"), &json_bytes(&doc))
}

fn cmd_beta_map(
    ctx: &Context,
    delta_spec: &str,
    deltas_spec: &str,
    method_str: &str,
    out: &Option<PathBuf>,
) -> Result<()> {
    let method = RateMethod::from_str(method_str)?;
    let delta_mhz = parse_range(delta_spec, "delta")?;
    let deltas_mhz = parse_range(deltas_spec, "deltas")?;
    if delta_mhz.is_empty() || deltas_mhz.is_empty() {
        return Err(Error::Usage("empty rate map requested".into()));
    }
    let points: Vec<(usize, usize)> = (0..delta_mhz.len())
        .flat_map(|i| (0..deltas_mhz.len()).map(move |j| (i, j)))
        .collect();
    ctx.log.debug(format!("{} map points, method {method}", points.len()));
    let results: Vec<((usize, usize), std::result::Result<(f64, C64), String>)> = points
        .par_iter()
        .map(|&(i, j)| {
            let p = ctx.params.with_detunings_mhz(delta_mhz[i], deltas_mhz[j]);
            let r = match method {
                RateMethod::Full => fgr::beta_full(&p, &QGridSpec::default()),
                RateMethod::Simplified => fgr::beta_simplified(&p),
                RateMethod::Asymptotic => fgr::beta_asymptotic(&p),
            };
            ((i, j), r.map(|v| (v.magnitude, v.beta)).map_err(|e| e.to_string()))
        })
        .collect();
    let mut csv = String::from("delta_MHz,deltas_MHz,abs_beta,re_beta,im_beta,method\n");
    let mut holes = Vec::new();
    for ((i, j), r) in results {
        match r {
            Ok((mag, beta)) => csv.push_str(&format!(
                "{:.6},{:.6},{:.12e},{:.12e},{:.12e},{method}\n",
                delta_mhz[i], deltas_mhz[j], mag, beta.re, beta.im
            )),
            Err(msg) => {
                csv.push_str(&format!(
                    "{:.6},{:.6},NaN,NaN,NaN,{method}\n",
                    delta_mhz[i], deltas_mhz[j]
                ));
                holes.push((i, j, msg));
            }
        }
    }
    ctx.write(&ctx.out_path(out, "beta_map.csv"), csv.as_bytes())?;
    let doc = with_metadata(
        json!({
            "method": method.to_string(),
            "delta_MHz": delta_mhz,
            "deltas_MHz": deltas_mhz,
            "holes": holes_json(&holes),
        }),
        ctx.echo(),
        ctx.wall_ms(),
    );
    ctx.write(&ctx.out_path(&None, "beta_map.json"), &json_bytes(&doc))
}

fn cmd_locus(ctx: &Context, deltas_spec: &str, out: &Option<PathBuf>) -> Result<()> {
    let deltas_mhz = parse_range(deltas_spec, "deltas")?;
    if deltas_mhz.is_empty() {
        return Err(Error::Usage("empty locus requested".into()));
    }
    let grid: Vec<f64> = deltas_mhz.iter().map(|&v| mhz_to_angular(v)).collect();
    let locus = fgr::beta_max_locus(&grid, &ctx.params)?;
    let entries: Vec<serde_json::Value> = locus
        .iter()
        .map(|p| {
            json!({
                "delta_s_MHz": angular_to_mhz(p.delta_s),
                "delta_star_MHz": angular_to_mhz(p.delta_star),
                "abs_beta": p.magnitude,
                "multimodal": p.multimodal,
                "all_maxima_MHz": p.all_maxima.iter().map(|&d| angular_to_mhz(d)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = with_metadata(json!(entries), ctx.echo(), ctx.wall_ms());
    ctx.write(&ctx.out_path(out, "locus.json"), &json_bytes(&doc))
}

fn cmd_simulate(
    ctx: &Context,
    n: u8,
    delta_spec: &Option<String>,
    deltas_spec: &Option<String>,
    grid: Option<usize>,
    tau_spec: &Option<String>,
    out: &Option<PathBuf>,
) -> Result<()> {
    if !(n == 2 || n == 3) {
        return Err(Error::Usage("--n must be 2 or 3".into()));
    }
    let delta_mhz = match delta_spec {
        Some(s) => parse_range(s, "delta")?,
        None => vec![angular_to_mhz(ctx.params.delta)],
    };
    let deltas_mhz = match deltas_spec {
        Some(s) => parse_range(s, "deltas")?,
        None => vec![angular_to_mhz(ctx.params.delta_s)],
    };
    if delta_mhz.is_empty() || deltas_mhz.is_empty() {
        return Err(Error::Usage("empty simulation grid requested".into()));
    }
    let profile = ctx.profile()?;
    let map_mode = delta_mhz.len() > 1 || deltas_mhz.len() > 1;

    if map_mode {
        if tau_spec.is_some() {
            return Err(Error::Usage("--tau is only available in single-point mode".into()));
        }
        let n_axis = grid.unwrap_or(96);
        let (dg, dsg): (Vec<f64>, Vec<f64>) = (
            delta_mhz.iter().map(|&v| mhz_to_angular(v)).collect(),
            deltas_mhz.iter().map(|&v| mhz_to_angular(v)).collect(),
        );
        let map = correlation_map(&dg, &dsg, &ctx.params, &profile, n_axis)?;
        for (name, values) in [("g2", &map.g2), ("g3", &map.g3), ("eta3", &map.eta3)] {
            let csv = map_csv(name, &delta_mhz, &deltas_mhz, values);
            ctx.write(&ctx.out_path(&None, &format!("simulate_{name}.csv")), csv.as_bytes())?;
        }
        let doc = with_metadata(
            json!({
                "delta_MHz": delta_mhz,
                "deltas_MHz": deltas_mhz,
                "grid_points": n_axis,
                "holes": holes_json(&map.holes),
            }),
            ctx.echo(),
            ctx.wall_ms(),
        );
        return ctx.write(&ctx.out_path(out, "simulate_map.json"), &json_bytes(&doc));
    }

    let params = ctx.params.with_detunings_mhz(delta_mhz[0], deltas_mhz[0]);
    let payload = if n == 2 {
        let z = match grid {
            Some(m) => axis_grid(&profile, m)?,
            None => production_axis(&params, &profile)?,
        };
        let two = solve_two(&params, &profile, &z)?;
        // convergence estimate from a half-resolution solve
        let coarse_z = axis_grid(&profile, z.len().div_ceil(2).max(8))?;
        let coarse = solve_two(&params, &profile, &coarse_z)?;
        if let Some(spec) = tau_spec {
            let taus = parse_range(spec, "tau")?;
            let profile_vals = g2_tau_profile(&two, &params, &profile, &taus)?;
            let rows: Vec<Vec<f64>> =
                profile_vals.iter().map(|&(t, g)| vec![t, g]).collect();
            let csv = table_csv("tau_us,g2", &rows);
            ctx.write(&ctx.out_path(&None, "g2_tau.csv"), csv.as_bytes())?;
        }
        json!({
            "g2_0": two.g2_0,
            "transmission": two.transmission.norm_sqr(),
            "grid_points": z.len(),
            "convergence": (two.g2_0 - coarse.g2_0).abs(),
            "symmetry_defect": two.symmetry_defect,
        })
    } else {
        let z = axis_grid(&profile, grid.unwrap_or(96))?;
        let single = solve_single(&params, &profile, &z)?;
        let result = solve_three(&params, &profile, &z)?;
        json!({
            "g2_0": result.g2_0,
            "g3_00": result.g3_00,
            "eta3_00": result.eta3_00,
            "transmission": single.transmission.norm_sqr(),
            "grid_points": result.grid_points,
            "convergence": result.convergence_estimate,
        })
    };
    let doc = with_metadata(payload, ctx.echo(), ctx.wall_ms());
    ctx.write(&ctx.out_path(out, "simulate.json"), &json_bytes(&doc))
}

fn cmd_correlate(
    ctx: &Context,
    input: &Path,
    bin_ns: i64,
    window_ns: i64,
    block_us: i64,
    out: &Option<PathBuf>,
) -> Result<()> {
    if window_ns <= 0 || bin_ns <= 0 || window_ns % (2 * bin_ns) != 0 {
        return Err(Error::Usage(
            "--window-ns must be a positive multiple of twice --bin-ns".into(),
        ));
    }
    let block_ns = block_us
        .checked_mul(1000)
        .filter(|&b| b > window_ns)
        .ok_or_else(|| Error::Usage("--block-us must exceed the window".into()))?;
    let bytes = fs::read(input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let streams = if bytes.starts_with(TTAG_MAGIC) {
        read_tags_binary(std::io::Cursor::new(&bytes))?
    } else {
        read_tags_csv(BufReader::new(std::io::Cursor::new(&bytes)))?
    };
    ctx.log.debug(format!(
        "loaded {} tags",
        streams.iter().map(|s| s.timestamps.len()).sum::<usize>()
    ));
    let g2 = correlator::g2_from_tags(&streams, bin_ns, window_ns, block_ns)?;
    let g3 = correlator::g3_from_tags(&streams, bin_ns, window_ns / 2, block_ns)?;
    let eta3 = correlator::eta3_matrix(&g2, &g3)?;

    let g2_rows: Vec<Vec<f64>> = g2
        .tau_ns
        .iter()
        .zip(&g2.g2)
        .map(|(&t, &v)| vec![t as f64, v])
        .collect();
    ctx.write(
        &ctx.out_path(&None, "correlate_g2.csv"),
        table_csv("tau_ns,g2", &g2_rows).as_bytes(),
    )?;
    let header: String = std::iter::once("tau1_ns".to_string())
        .chain(g3.tau_ns.iter().map(|t| format!("g3_tau2_{t}ns")))
        .collect::<Vec<_>>()
        .join(",");
    let g3_rows: Vec<Vec<f64>> = g3
        .tau_ns
        .iter()
        .zip(&g3.g3)
        .map(|(&t, row)| std::iter::once(t as f64).chain(row.iter().copied()).collect())
        .collect();
    ctx.write(&ctx.out_path(&None, "correlate_g3.csv"), table_csv(&header, &g3_rows).as_bytes())?;
    let eta_rows: Vec<Vec<f64>> = g3
        .tau_ns
        .iter()
        .zip(&eta3)
        .map(|(&t, row)| std::iter::once(t as f64).chain(row.iter().copied()).collect())
        .collect();
    let eta_header: String = std::iter::once("tau1_ns".to_string())
        .chain(g3.tau_ns.iter().map(|t| format!("eta3_tau2_{t}ns")))
        .collect::<Vec<_>>()
        .join(",");
    ctx.write(
        &ctx.out_path(&None, "correlate_eta3.csv"),
        table_csv(&eta_header, &eta_rows).as_bytes(),
    )?;

    let k2 = (g2.tau_max_ns / g2.bin_ns) as usize;
    let nbins3 = g3.tau_ns.len();
    let k3 = nbins3 / 2;
    let g2_counts = g2.numerator[k2] as f64;
    let g3_counts = g3.numerator[k3 * nbins3 + k3] as f64;
    let g2_stderr = if g2_counts > 0.0 { g2.at_zero() / g2_counts.sqrt() } else { f64::NAN };
    let g3_stderr = if g3_counts > 0.0 { g3.at_zero() / g3_counts.sqrt() } else { f64::NAN };
    let eta3_00 = correlator::eta3_scalar(g2.at_zero(), g2.at_zero(), g2.at_zero(), g3.at_zero());
    let payload = json!({
        "g2_0": g2.at_zero(),
        "g3_00": g3.at_zero(),
        "eta3_00": eta3_00,
        "g2_stderr": g2_stderr,
        "g3_stderr": g3_stderr,
        "flagged_g2_bins": g2.flagged.len(),
        "flagged_g3_bins": g3.flagged.len(),
        "analytic_denominator": g2.analytic_denominator,
    });
    let doc = with_metadata(payload, ctx.echo(), ctx.wall_ms());
    ctx.write(&ctx.out_path(out, "correlate.json"), &json_bytes(&doc))
}

fn cmd_synth(
    ctx: &Context,
    model: SynthModelArg,
    rate: f64,
    jitter_ns: f64,
    duration_ms: i64,
    format: TagFormat,
    out: &Option<PathBuf>,
) -> Result<()> {
    if duration_ms <= 0 {
        return Err(Error::Usage("--duration-ms must be positive".into()));
    }
    let model = match model {
        SynthModelArg::Poisson => SynthModel::Poisson { rate_per_us: rate },
        SynthModelArg::BunchedPairs => {
            SynthModel::BunchedPairs { pair_rate_per_us: rate, jitter_ns }
        }
        SynthModelArg::Triplets => SynthModel::Triplets { rate_per_us: rate, jitter_ns },
    };
    let config = SynthConfig { model, seed: ctx.seed };
    let streams = synth_tags(&config, duration_ms * 1_000_000)?;
    let (default_name, bytes) = match format {
        TagFormat::Csv => {
            let mut buf = Vec::new();
            write_tags_csv(&streams, &mut buf)?;
            ("tags.csv", buf)
        }
        TagFormat::Binary => {
            let mut buf = Vec::new();
            write_tags_binary(&streams, &mut buf)?;
            ("tags.ttag", buf)
        }
    };
    ctx.write(&ctx.out_path(out, default_name), &bytes)?;
    let doc = with_metadata(
        json!({
            "model": serde_json::to_value(&config).expect("serializable config"),
            "duration_ms": duration_ms,
            "counts": streams.iter().map(|s| s.timestamps.len()).collect::<Vec<_>>(),
        }),
        ctx.echo(),
        ctx.wall_ms(),
    );
    ctx.write(&ctx.out_path(&None, "synth.json"), &json_bytes(&doc))
}

/// Exit code classification: interface-contract problems are 2, numerical
/// failures 3.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Usage(_)
        | Error::Validation { .. }
        | Error::MissingKey(_)
        | Error::Config(_)
        | Error::Grid(_)
        | Error::ShapeMismatch(_) => 2,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        let code = exit_code_for(&err);
        eprintln!("error: {err}");
        if code == 3 {
            let diag = json!({ "error": err.to_string() });
            let path = cli.out_dir.join("error.json");
            if atomic_write(&path, &json_bytes(&diag)).is_ok() {
                eprintln!("diagnostic written to {}", path.display());
            }
        }
        std::process::exit(code);
    }
}
