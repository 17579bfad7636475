//! Command dispatch behind the `homsync` binary.
//!
//! Every command writes CSVs into `--out`, each starting with a
//! `# run=<id> manifest=<file>` line, plus a manifest carrying the config
//! hash, seed and crate version. Same config, seed and version give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{parse_config_unvalidated, ConfigError, ScenarioConfig, LINK_PRESETS, BUNDLED_20KM_CFG};
use crate::detection::{
    coincidence_histogram, estimate_offset, fit_gaussian, simulate_timestamps, ArrivalDensity, DetectionError,
    FitOptions,
};
use crate::fiber_model::{drift_segmented, drift_single, path_delay_difference};
use crate::hom::{dip_metrics, sample_dip_counts};
use crate::planner::{evaluate_plan, plan_segments};
use crate::rng::child_seed;
use crate::scenario::{Scenario, ScenarioError};
use crate::sync_loop::run_sync;
use crate::timing_stats::{default_m_ladder, tdev, OffsetSeries, StatsError, TdevResult};

#[derive(Debug, Parser)]
#[command(name = "homsync", version, about = "Seeded HOM clock-synchronization simulator")]
pub struct Cli {
    /// Scenario file; the bundled 20 km scenario when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Comma-separated presets applied in order.
    #[arg(long, global = true, value_name = "NAME[,NAME]")]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Drift versus fiber length and segmentation.
    DriftMap,
    /// HOM dips for the 200 m, 10 km and 20 km links.
    DipScan,
    /// Timestamp-level offset measurement against a no-fiber calibration.
    Coincidence,
    /// Locked long run with in-loop residual and out-of-loop offsets.
    SyncRun {
        /// Simulated seconds; `run.duration_s` when omitted.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// TDEV of an offset or residual CSV.
    Tdev { input: PathBuf },
    /// Smallest segment count meeting the drift and loss limits.
    PlanSegments,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::DriftMap => "drift-map",
            Command::DipScan => "dip-scan",
            Command::Coincidence => "coincidence",
            Command::SyncRun { .. } => "sync-run",
            Command::Tdev { .. } => "tdev",
            Command::PlanSegments => "plan-segments",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Input(_) => "input",
            CliError::Model(_) => "model",
            CliError::Resource(_) => "resource",
        }
    }

    /// 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Model(_) => 5,
            CliError::Resource(_) => 6,
            CliError::Input(_) => 7,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => CliError::Config(c),
            ScenarioError::Detection(DetectionError::Resource { .. }) => CliError::Resource(e.to_string()),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        ScenarioError::from(e).into()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Files written by one command, all tagged with the same run id.
struct Outputs {
    dir: PathBuf,
    run_id: String,
    manifest: String,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path, command: &str, run_id: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), run_id, manifest: format!("{command}.manifest.toml"), files: Vec::new() })
    }

    /// Opens `name` and writes the tag line.
    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "# run={} manifest={}", self.run_id, self.manifest).map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(w)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        let path = self.dir.join(name);
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))
    }

    fn finish(self, fields: &[(&str, String)]) -> Result<PathBuf, CliError> {
        let mut m = String::new();
        writeln!(m, "run_id = \"{}\"", self.run_id).unwrap();
        for (k, v) in fields {
            writeln!(m, "{k} = {v}").unwrap();
        }
        writeln!(m, "outputs = [{}]", self.files.iter().map(|f| format!("\"{f}\"")).collect::<Vec<_>>().join(", "))
            .unwrap();
        let path = self.dir.join(&self.manifest);
        std::fs::write(&path, m).map_err(io_err(&path))?;
        Ok(path)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `5000+4000+1000`, with fractional meters to 0.1 m.
fn join_lengths(lengths: &[f64]) -> String {
    let one = |l: &f64| if l.fract() == 0.0 { format!("{l}") } else { format!("{l:.1}") };
    lengths.iter().map(one).collect::<Vec<_>>().join("+")
}

fn e11(v: f64) -> String {
    format!("{v:.11e}")
}

/// Config with presets and seed applied, validated.
pub fn effective_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(io_err(p))?,
        None => BUNDLED_20KM_CFG.to_string(),
    };
    let mut cfg = parse_config_unvalidated(&text)?;
    if let Some(p) = &cli.preset {
        cfg.apply_presets(p)?;
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = Some(s);
    }
    Ok(crate::config::finish(cfg)?)
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

/// Run one command; returns the manifest path.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let command = cli.command.name();
    if let Command::Tdev { input } = &cli.command {
        return run_tdev(cli, input, out);
    }
    let cfg = effective_config(cli)?;
    let toml = cfg.to_toml_string();
    let config_hash = sha256_hex(toml.as_bytes());
    let run_id =
        sha256_hex(format!("{command}\n{}\n{config_hash}", env!("CARGO_PKG_VERSION")).as_bytes())[..16].to_string();
    let mut files = Outputs::new(&cli.out, command, run_id)?;
    files.text("config.toml", &toml)?;
    let seed = cfg.seed();
    let scenario = Scenario::build(cfg)?;
    match &cli.command {
        Command::DriftMap => drift_map(&scenario, &mut files, out),
        Command::DipScan => dip_scan(&scenario, &mut files, out),
        Command::Coincidence => coincidence(&scenario, &mut files, out),
        Command::SyncRun { duration } => {
            sync_run(&scenario, duration.unwrap_or(scenario.config.run.duration_s), &mut files, out)
        }
        Command::PlanSegments => plan(&scenario, &mut files, out),
        Command::Tdev { .. } => unreachable!("handled above"),
    }?;
    let manifest = files.finish(&[
        ("command", format!("\"{command}\"")),
        ("version", format!("\"{}\"", env!("CARGO_PKG_VERSION"))),
        ("config_sha256", format!("\"{config_hash}\"")),
        ("seed", seed.to_string()),
        ("presets", format!("\"{}\"", cli.preset.clone().unwrap_or_default())),
    ])?;
    say(out, format!("manifest: {}", manifest.display()))?;
    Ok(manifest)
}

/// Summary line on stdout; a closed pipe is not an error.
fn say(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    match writeln!(out, "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "stdout".into(), source: e }),
        _ => Ok(()),
    }
}

fn drift_map(sc: &Scenario, files: &mut Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let b = sc.sensitivity_b()?;
    let dt = sc.config.planner.delta_t_c;
    let model = |e: crate::fiber_model::FiberError| CliError::Model(e.to_string());

    let mut single = String::from("length_m,drift_ps\n");
    for k in 1..=40 {
        let l = 250.0 * k as f64;
        writeln!(single, "{},{}", e11(l), e11(drift_single(b, l, dt) * 1e12)).unwrap();
    }
    files.text("drift_single.csv", &single)?;

    let mut family = String::from("m,segment_length_m,total_length_m,drift_ps\n");
    for m in 1..=10usize {
        for k in 1..=20 {
            let l = 500.0 * k as f64;
            let d = drift_segmented(b, &vec![l; m], dt).map_err(model)?;
            writeln!(family, "{m},{},{},{}", e11(l), e11(l * m as f64), e11(d * 1e12)).unwrap();
        }
    }
    files.text("drift_family.csv", &family)?;

    let configured = sc.link_signal.lengths();
    let total: f64 = configured.iter().sum();
    let points: [(&str, Vec<f64>); 3] =
        [("configured", configured.clone()), ("single", vec![total]), ("equal_thirds", vec![total / 3.0; 3])];
    let mut pts = String::from("label,lengths_m,drift_ps\n");
    for (label, lengths) in &points {
        let d = drift_segmented(b, lengths, dt).map_err(model)?;
        let ls = join_lengths(lengths);
        writeln!(pts, "{label},{ls},{}", e11(d * 1e12)).unwrap();
        say(out, format!("{label:>13} {ls:>16} m  drift {:.3} ps", d * 1e12))?;
    }
    files.text("drift_points.csv", &pts)?;
    say(out, format!("B = {:.4e} s/(m·°C), ΔT = {dt} °C", b))?;
    files.text(
        "drift-map.gp",
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'segment length (m)'\nset ylabel 'drift (ps)'\n\
         plot for [m=1:10] 'drift_family.csv' using ($1==m ? $2 : 1/0):4 with lines title sprintf('m=%d', m)\n",
    )
}

fn dip_scan(sc: &Scenario, files: &mut Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let h = &sc.config.hom_scan;
    let mut summary = String::from("preset,length_per_arm_m,visibility,width_ps,minimum_delay_ps\n");
    for (name, lengths) in LINK_PRESETS {
        let link = sc.links_from_lengths(lengths)?;
        let profile = sc.dip_profile(Some(&link), Some(&link))?;
        let m = dip_metrics(&profile).map_err(|e| CliError::Model(format!("{name}: {e}")))?;
        let counts =
            sample_dip_counts(&profile, h.rate_cps, h.dwell_s, child_seed(sc.seed(), &format!("dip-scan/{name}")));
        let mut csv = String::from("delay_ps,probability,sampled_counts\n");
        for ((d, p), c) in profile.delays.iter().zip(&profile.coincidence_probability).zip(&counts) {
            writeln!(csv, "{},{},{c}", e11(d * 1e12), e11(*p)).unwrap();
        }
        files.text(&format!("dip_{name}.csv"), &csv)?;
        let total = link.total_length();
        writeln!(
            summary,
            "{name},{},{},{},{}",
            e11(total),
            e11(m.visibility),
            e11(m.width_fwhm * 1e12),
            e11(m.minimum_delay * 1e12)
        )
        .unwrap();
        say(out, format!("{name:>10}: visibility {:.4}, width {:.4} ps", m.visibility, m.width_fwhm * 1e12))?;
    }
    files.text("dip_summary.csv", &summary)?;
    files.text(
        "dip-scan.gp",
        "set datafile separator ','\nset xlabel 'delay (ps)'\nset ylabel 'coincidence probability'\n\
         plot 'dip_link-200m.csv' using 1:2 with lines title '200 m', \
         'dip_link-10km.csv' using 1:2 with lines title '10 km', \
         'dip_link-20km.csv' using 1:2 with lines title '20 km'\n",
    )
}

fn density_csv(d: &ArrivalDensity) -> String {
    let peak = d.density.iter().cloned().fold(0.0, f64::max);
    let mut s = String::from("signal_minus_idler_ps,density_per_ps\n");
    for (t, p) in d.times.iter().zip(&d.density) {
        if *p > 1e-9 * peak {
            writeln!(s, "{},{}", e11(t * 1e12), e11(p * 1e-12)).unwrap();
        }
    }
    s
}

fn coincidence(sc: &Scenario, files: &mut Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let acq = &sc.config.acquisition;
    let duration = acq.timestamp_duration_s;
    let (bw, window) = (acq.bin_width_ps * 1e-12, acq.window_ps * 1e-12);
    let cal = sc.arrival_density(false)?;
    let link = sc.arrival_density(true)?;
    files.text("density_calibration.csv", &density_csv(&cal))?;
    files.text("density_link.csv", &density_csv(&link))?;
    let sim = sc.timestamp_simulation(duration);
    let opts = FitOptions::default();
    let mut fits = Vec::new();
    let mut report = String::from("run,center_ps,center_stderr_ps,sigma_ps,fwhm_ps,background_per_bin,coincidences\n");
    for (name, density) in [("calibration", &cal), ("link", &link)] {
        let (a, b) = simulate_timestamps(&sim, density, child_seed(sc.seed(), &format!("coincidence.{name}")))?;
        if acq.write_timestamps {
            let mut w = files.open(&format!("timestamps_{name}.csv"))?;
            let path = PathBuf::from(format!("timestamps_{name}.csv"));
            writeln!(w, "detector_id,time_ps").map_err(io_err(&path))?;
            a.write_csv(&mut w, false)?;
            b.write_csv(&mut w, false)?;
            w.flush().map_err(io_err(&path))?;
        }
        let hist = coincidence_histogram(&a, &b, bw, window)?;
        let hname = format!("histogram_{name}.csv");
        let mut w = files.open(&hname)?;
        hist.write_csv(&mut w)?;
        w.flush().map_err(io_err(Path::new(&hname)))?;
        let fit = fit_gaussian(&hist, &opts).map_err(|e| CliError::Model(format!("{name} histogram: {e}")))?;
        writeln!(
            report,
            "{name},{},{},{},{},{},{}",
            e11(fit.center * 1e12),
            e11(fit.center_stderr * 1e12),
            e11(fit.sigma * 1e12),
            e11(fit.fwhm() * 1e12),
            e11(fit.background),
            hist.total_coincidences
        )
        .unwrap();
        say(
            out,
            format!(
                "{name:>11}: {} coincidences, center {:.3} ± {:.3} ps, FWHM {:.2} ps",
                hist.total_coincidences,
                fit.center * 1e12,
                fit.center_stderr * 1e12,
                fit.fwhm() * 1e12
            ),
        )?;
        fits.push(fit);
    }
    files.text("coincidence_fit.csv", &report)?;

    let est = estimate_offset(&fits[1], fits[0].center, Some(fits[0].center_stderr));
    let pd = path_delay_difference(&sc.link_signal, &sc.link_idler, &sc.source, sc.config.temperature.mean_c)
        .map_err(|e| CliError::Model(e.to_string()))?;
    // The arrival-time shift is the group-delay term; the two-term sum is
    // reported alongside it.
    let predicted = pd.group_delay_term;
    let dev = (est.offset - predicted) / est.uncertainty;
    let mut s = String::from("offset_ps,uncertainty_ps,predicted_ps,gvd_term_ps,two_term_total_ps,deviation_sigmas\n");
    writeln!(
        s,
        "{},{},{},{},{},{}",
        e11(est.offset * 1e12),
        e11(est.uncertainty * 1e12),
        e11(predicted * 1e12),
        e11(pd.gvd_term * 1e12),
        e11(pd.total() * 1e12),
        e11(dev)
    )
    .unwrap();
    files.text("offset.csv", &s)?;
    say(
        out,
        format!(
        "offset {:.3} ± {:.3} ps; predicted {:.3} ps (deviation {:.2} σ); gvd term {:.3} ps, two-term total {:.3} ps",
        est.offset * 1e12,
        est.uncertainty * 1e12,
        predicted * 1e12,
        dev,
        pd.gvd_term * 1e12,
        pd.total() * 1e12,
    ),
    )?;
    files.text(
        "coincidence.gp",
        "set datafile separator ','\nset xlabel 't_a - t_b (ps)'\nset ylabel 'counts'\n\
         plot 'histogram_calibration.csv' using 1:2 with steps title 'no fiber', \
         'histogram_link.csv' using 1:2 with steps title 'link'\n",
    )
}

fn tdev_csv(r: &TdevResult) -> String {
    let mut s = String::from("tau_s,tdev_s,n_samples\n");
    for i in 0..r.taus.len() {
        writeln!(s, "{},{},{}", e11(r.taus[i]), e11(r.tdev[i]), r.sample_counts[i]).unwrap();
    }
    s
}

/// TDEV on the doubling ladder plus the spot values at `extra_taus`.
fn tdev_with(series: &OffsetSeries, extra_taus: &[f64]) -> TdevResult {
    let mut ms = default_m_ladder(series.len());
    for tau in extra_taus {
        let m = (tau / series.tau0()).round() as usize;
        if m >= 1 {
            ms.push(m);
        }
    }
    tdev(series, &ms)
}

fn sync_run(sc: &Scenario, duration: f64, files: &mut Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let cal = sc.arrival_density(false)?;
    let link = Arc::new(sc.arrival_density(true)?);
    let det = sc.detection_setup(link, &cal);
    let ss = sc.sync_scenario(Some(det))?;
    let run = run_sync(&ss, duration, sc.seed()).map_err(|e| CliError::Model(e.to_string()))?;

    let res = &run.in_loop_residual;
    let mut s = String::from("t_s,residual_fs\n");
    for (t, x) in res.epoch_times().iter().zip(res.offsets()) {
        writeln!(s, "{},{}", e11(*t), e11(x * 1e15)).unwrap();
    }
    files.text("residual.csv", &s)?;

    let mut s = String::from("t_s,path_drift_ps,imbalance_before_fs\n");
    for ((t, d), x) in res.epoch_times().iter().zip(&run.path_drift).zip(&run.imbalance_before) {
        writeln!(s, "{},{},{}", e11(*t), e11(d * 1e12), e11(x * 1e15)).unwrap();
    }
    files.text("drift.csv", &s)?;

    let mut s = String::from("t_s,setting_ps\n");
    for e in &run.actuator_log {
        writeln!(s, "{},{}", e11(e.t), e11(e.steps as f64 * ss.actuator_resolution * 1e12)).unwrap();
    }
    files.text("actuator.csv", &s)?;

    let mut s = String::new();
    for e in &run.events {
        writeln!(s, "{}", e.describe()).unwrap();
    }
    files.text("events.log", &s)?;

    let t_in = tdev_with(res, &[]);
    files.text("tdev_in_loop.csv", &tdev_csv(&t_in))?;
    say(out, format!("{duration} s simulated: {} lock losses, {} events", run.lock_losses(), run.events.len()))?;
    if let Some((tau, v)) = t_in.taus.last().zip(t_in.tdev.last()) {
        say(out, format!("in-loop TDEV at {tau} s: {:.2} fs", v * 1e15))?;
    }
    if let Some(off) = &run.out_of_loop_offsets {
        let mut s = String::from("t_s,offset_ps,uncertainty_ps\n");
        let unc = off.uncertainties().unwrap_or(&[]);
        for (i, (t, x)) in off.epoch_times().iter().zip(off.offsets()).enumerate() {
            writeln!(s, "{},{},{}", e11(*t), e11(x * 1e12), e11(unc.get(i).copied().unwrap_or(f64::NAN) * 1e12))
                .unwrap();
        }
        files.text("offsets.csv", &s)?;
        let t_out = tdev_with(off, &[4.8e4]);
        files.text("tdev_out_of_loop.csv", &tdev_csv(&t_out))?;
        if let Some((tau, v)) = t_out.at(4.8e4) {
            say(out, format!("out-of-loop TDEV at {tau} s: {:.1} fs", v * 1e15))?;
        }
    }
    files.text(
        "sync-run.gp",
        "set datafile separator ','\nset logscale xy\nset xlabel 'tau (s)'\nset ylabel 'TDEV (s)'\n\
         plot 'tdev_out_of_loop.csv' using 1:2 with linespoints title 'out of loop', \
         'tdev_in_loop.csv' using 1:2 with linespoints title 'in loop'\n",
    )
}

fn plan(sc: &Scenario, files: &mut Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = sc.plan_constraints()?;
    let planner = |e: crate::planner::PlannerError| CliError::Model(e.to_string());
    let plan = plan_segments(&c).map_err(planner)?;
    let mut s = String::from("m,drift_ps,loss_dB,feasible\n");
    say(out, format!("drift limit {:.4} ps, loss budget {} dB", c.drift_limit() * 1e12, c.loss_budget))?;
    say(out, format!("{:>3} {:>12} {:>10} {:>9}", "m", "drift_ps", "loss_dB", "feasible"))?;
    for r in &plan.table {
        writeln!(s, "{},{},{},{}", r.m, e11(r.drift * 1e12), e11(r.loss), r.feasible).unwrap();
        say(out, format!("{:>3} {:>12.4} {:>10.3} {:>9}", r.m, r.drift * 1e12, r.loss, r.feasible))?;
    }
    files.text("plan.csv", &s)?;
    let configured = sc.link_signal.lengths();
    let e = evaluate_plan(&configured, &c).map_err(planner)?;
    let ok = e.drift <= c.drift_limit() && e.loss <= c.loss_budget;
    let ls = join_lengths(&configured);
    let mut s = String::from("label,lengths_m,drift_ps,loss_dB,feasible\n");
    writeln!(s, "configured,{ls},{},{},{ok}", e11(e.drift * 1e12), e11(e.loss)).unwrap();
    let chosen = join_lengths(&plan.lengths);
    writeln!(s, "recommended,{chosen},{},{},{}", e11(plan.drift * 1e12), e11(plan.loss), plan.feasible).unwrap();
    files.text("plan_reference.csv", &s)?;
    if plan.feasible {
        say(out, format!("recommended: m = {} ({chosen} m)", plan.lengths.len()))?;
    } else {
        say(out, "no segment count meets both limits".to_string())?;
    }
    say(out, format!("configured {ls} m: drift {:.4} ps, loss {:.3} dB, feasible {ok}", e.drift * 1e12, e.loss))
}

fn run_tdev(cli: &Cli, input: &Path, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let bytes = std::fs::read(input).map_err(io_err(input))?;
    let series = OffsetSeries::read_csv(bytes.as_slice()).map_err(|e| match e {
        StatsError::Io(m) => CliError::Io { path: input.display().to_string(), source: std::io::Error::other(m) },
        other => CliError::Input(format!("{}: {other}", input.display())),
    })?;
    let input_hash = sha256_hex(&bytes);
    let run_id = sha256_hex(format!("tdev\n{}\n{input_hash}", env!("CARGO_PKG_VERSION")).as_bytes())[..16].to_string();
    let mut files = Outputs::new(&cli.out, "tdev", run_id)?;
    let r = tdev_with(&series, &[]);
    files.text("tdev.csv", &tdev_csv(&r))?;
    for i in 0..r.taus.len() {
        say(out, format!("{:>12.4e} s  {:.4e} s  ({} terms)", r.taus[i], r.tdev[i], r.sample_counts[i]))?;
    }
    let manifest = files.finish(&[
        ("command", "\"tdev\"".into()),
        ("version", format!("\"{}\"", env!("CARGO_PKG_VERSION"))),
        ("input_sha256", format!("\"{input_hash}\"")),
        ("samples", series.len().to_string()),
    ])?;
    say(out, format!("manifest: {}", manifest.display()))?;
    Ok(manifest)
}
