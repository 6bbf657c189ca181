//! Command-line front end: single-point key-rate evaluation, parameter
//! sweeps, Monte Carlo runs, and attack validation / soundness campaigns,
//! with CSV and JSON emission.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no accepted rounds, 4
//! statistical or soundness failure.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use msqkd::attack::{random_attack, soundness_report, validate_attack, AttackSpec};
use msqkd::channel::ChannelParams;
use msqkd::keyrate::{keyrate_from_channel, BoundMode, KeyRateReport, OverlapBoundVariant};
use msqkd::sim::{compare_to_analytic, counts_csv, run_simulation, text_report, SimConfig, ZScore};
use output::{emit, sig12, sig12_opt};

#[derive(Parser)]
#[command(
    name = "msqkd",
    about = "Key-rate analysis and protocol simulation for an extended mediated semi-quantum key distribution protocol",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the key rate at a single channel point.
    Rate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        bound: BoundArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a channel parameter and emit one row per grid point.
    Sweep {
        /// Which parameter varies.
        #[arg(long, value_enum)]
        var: SweepVar,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        stop: f64,
        #[arg(long)]
        step: f64,
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        bound: BoundArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the event-level Monte Carlo under an honest server.
    Simulate {
        #[arg(long)]
        rounds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Also z-test every empirical statistic against the closed forms
        /// (exit 4 when any |z| > 4).
        #[arg(long)]
        compare: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attack-spec tooling.
    Attack {
        #[command(subcommand)]
        command: AttackCommand,
    },
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Check the structural invariants of an attack-spec file.
    Validate {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Generate a seeded random attack spec.
    Random {
        /// Ancilla dimension.
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seed: u64,
        /// Mix toward the honest attack (1.0 reproduces it exactly).
        #[arg(long)]
        bias: Option<f64>,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the entropy bounds against the exact conditional entropy,
    /// for one spec file or for a random campaign plus a phase sweep.
    Check {
        /// Spec to check; without it a campaign runs.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Campaign size.
        #[arg(long, default_value_t = 200)]
        count: u64,
        /// Largest ancilla dimension in the campaign (cycled 1..=max_d).
        #[arg(long, default_value_t = 4)]
        max_d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Points in the phase-noisy honest sweep.
        #[arg(long, default_value_t = 50)]
        theta_points: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ChannelArgs {
    /// Phase error rate.
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    /// One-directional loss probability.
    #[arg(long, default_value_t = 0.0)]
    pl: f64,
    /// Server dark-count rate.
    #[arg(long, default_value_t = 0.0)]
    pd: f64,
}

impl ChannelArgs {
    fn params(&self) -> Result<ChannelParams, CliError> {
        Ok(ChannelParams::new(self.phi, self.pl, self.pd)?)
    }
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::ThreeTerm)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Printed)]
    bound_variant: VariantArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "3term")]
    ThreeTerm,
    #[value(name = "6term")]
    SixTerm,
}

impl From<ModeArg> for BoundMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ThreeTerm => BoundMode::ThreeTerm,
            ModeArg::SixTerm => BoundMode::SixTerm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Printed,
    IndexConsistent,
}

impl From<VariantArg> for OverlapBoundVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Printed => OverlapBoundVariant::Printed,
            VariantArg::IndexConsistent => OverlapBoundVariant::IndexConsistent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepVar {
    Phi,
    Pl,
}

impl SweepVar {
    fn column(self) -> &'static str {
        match self {
            SweepVar::Phi => "phi",
            SweepVar::Pl => "p_l",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

enum CliError {
    Invalid(String),
    NoAcceptedRounds,
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::NoAcceptedRounds => 3,
            CliError::CheckFailed(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Invalid(m) => m.clone(),
            CliError::NoAcceptedRounds => "no accepted rounds".to_string(),
            CliError::CheckFailed(m) => m.clone(),
        }
    }
}

impl From<msqkd::Error> for CliError {
    fn from(e: msqkd::Error) -> Self {
        match e {
            msqkd::Error::NoAcceptedRounds | msqkd::Error::InvalidNormalization(_) => {
                CliError::NoAcceptedRounds
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Invalid(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rate { channel, bound, format, out } => {
            let params = channel.params()?;
            let report =
                keyrate_from_channel(&params, bound.mode.into(), bound.bound_variant.into())?;
            let rendered = match format {
                Format::Json => to_json(&report)?,
                Format::Text => render_rate(&params, &bound, &report),
                Format::Csv => {
                    return Err(CliError::Invalid("rate supports text or json output".into()))
                }
            };
            emit(out.as_deref(), &rendered)?;
            Ok(())
        }
        Command::Sweep { var, start, stop, step, channel, bound, format, out } => {
            let rows = sweep_rows(var, start, stop, step, &channel, &bound)?;
            let rendered = match format {
                Format::Csv => render_sweep_csv(var, &rows),
                Format::Json => to_json(&rows)?,
                Format::Text => {
                    return Err(CliError::Invalid("sweep supports csv or json output".into()))
                }
            };
            emit(out.as_deref(), &rendered)?;
            Ok(())
        }
        Command::Simulate { rounds, seed, channel, compare, format, out } => {
            let cfg = SimConfig { rounds, seed, channel: channel.params()? };
            let stats = run_simulation(&cfg)?;
            let scores =
                if compare { Some(compare_to_analytic(&stats, &cfg.channel)?) } else { None };
            let rendered = match format {
                Format::Text => {
                    let mut text = text_report(&stats);
                    if let Some(scores) = &scores {
                        text.push_str(&render_zscores(scores));
                    }
                    text
                }
                Format::Csv => counts_csv(&stats),
                Format::Json => {
                    #[derive(Serialize)]
                    struct SimOutput<'a> {
                        stats: &'a msqkd::sim::SimStats,
                        zscores: &'a Option<Vec<ZScore>>,
                    }
                    to_json(&SimOutput { stats: &stats, zscores: &scores })?
                }
            };
            emit(out.as_deref(), &rendered)?;
            if let Some(scores) = &scores {
                let flagged: Vec<&ZScore> = scores.iter().filter(|s| s.flagged).collect();
                if !flagged.is_empty() {
                    let names: Vec<&str> = flagged.iter().map(|s| s.name.as_str()).collect();
                    return Err(CliError::CheckFailed(format!(
                        "|z| > 4 for: {}",
                        names.join(", ")
                    )));
                }
            }
            Ok(())
        }
        Command::Attack { command } => run_attack(command),
    }
}

fn run_attack(command: AttackCommand) -> Result<(), CliError> {
    match command {
        AttackCommand::Validate { file, format } => {
            let spec = load_spec(&file)?;
            let violations = validate_attack(&spec);
            let rendered = match format {
                Format::Json => to_json(&violations)?,
                _ => {
                    if violations.is_empty() {
                        "attack spec is valid\n".to_string()
                    } else {
                        let mut text = String::new();
                        for v in &violations {
                            text.push_str(&format!(
                                "violation: {} (residual {:.3e})\n",
                                v.constraint, v.residual
                            ));
                        }
                        text
                    }
                }
            };
            emit(None, &rendered)?;
            if violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!("{} constraint(s) violated", violations.len())))
            }
        }
        AttackCommand::Random { d, seed, bias, out } => {
            let spec = random_attack(d, seed, bias)?;
            let json = spec.to_json() + "\n";
            emit(out.as_deref(), &json)?;
            if let Some(path) = &out {
                eprintln!("wrote attack spec (d = {d}, seed = {seed}) to {}", path.display());
            }
            Ok(())
        }
        AttackCommand::Check { file, count, max_d, seed, theta_points, format, out } => {
            match file {
                Some(path) => {
                    let spec = load_spec(&path)?;
                    let violations = validate_attack(&spec);
                    if !violations.is_empty() {
                        return Err(CliError::Invalid(format!(
                            "spec violates {} constraint(s); run `attack validate` for details",
                            violations.len()
                        )));
                    }
                    let report = soundness_report(&spec)?;
                    let rendered = match format {
                        Format::Json => to_json(&report)?,
                        _ => render_soundness(&report),
                    };
                    emit(out.as_deref(), &rendered)?;
                    if report.sound_6term_exact && report.sound_3term_exact {
                        Ok(())
                    } else {
                        Err(CliError::CheckFailed("entropy bound exceeds exact value".into()))
                    }
                }
                None => run_campaign(count, max_d, seed, theta_points, format, out),
            }
        }
    }
}

#[derive(Serialize)]
struct CampaignSummary {
    evaluated: u64,
    skipped_no_accepted_rounds: u64,
    unsound_exact_overlap_bounds: u64,
    printed_overlap_violations: u64,
    theta_points: u32,
    unsound_estimated_theta_family: u32,
}

fn run_campaign(
    count: u64,
    max_d: usize,
    seed: u64,
    theta_points: u32,
    format: Format,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if max_d == 0 {
        return Err(CliError::Invalid("max-d must be >= 1".into()));
    }
    let mut summary = CampaignSummary {
        evaluated: 0,
        skipped_no_accepted_rounds: 0,
        unsound_exact_overlap_bounds: 0,
        printed_overlap_violations: 0,
        theta_points,
        unsound_estimated_theta_family: 0,
    };
    for i in 0..count {
        let d = 1 + (i as usize % max_d);
        let spec = random_attack(d, seed.wrapping_add(i), None)?;
        match soundness_report(&spec) {
            Ok(report) => {
                summary.evaluated += 1;
                if !(report.sound_6term_exact
                    && report.sound_3term_exact
                    && report.bound_3term_exact <= report.bound_6term_exact + 1e-12)
                {
                    summary.unsound_exact_overlap_bounds += 1;
                }
                if !report.printed_overlap_bounds_valid {
                    summary.printed_overlap_violations += 1;
                }
            }
            Err(msqkd::Error::NoAcceptedRounds) => summary.skipped_no_accepted_rounds += 1,
            Err(e) => return Err(e.into()),
        }
    }
    for k in 1..=theta_points {
        let theta = k as f64 / theta_points as f64 * std::f64::consts::FRAC_PI_2;
        let report = soundness_report(&msqkd::attack::phase_noisy_attack(theta))?;
        if !report.sound_3term_estimated {
            summary.unsound_estimated_theta_family += 1;
        }
    }

    let rendered = match format {
        Format::Json => to_json(&summary)?,
        _ => format!(
            "soundness campaign: {} random attacks evaluated ({} skipped with no accepted rounds)\n\
             exact-overlap bound violations: {}\n\
             printed-overlap-bound violations (evidence only): {}\n\
             phase sweep: {} points, estimated-bound violations: {}\n",
            summary.evaluated,
            summary.skipped_no_accepted_rounds,
            summary.unsound_exact_overlap_bounds,
            summary.printed_overlap_violations,
            summary.theta_points,
            summary.unsound_estimated_theta_family,
        ),
    };
    emit(out.as_deref(), &rendered)?;

    if summary.unsound_exact_overlap_bounds > 0 || summary.unsound_estimated_theta_family > 0 {
        Err(CliError::CheckFailed(format!(
            "{} exact-overlap and {} phase-sweep soundness failures",
            summary.unsound_exact_overlap_bounds, summary.unsound_estimated_theta_family
        )))
    } else {
        Ok(())
    }
}

#[derive(Serialize)]
struct SweepRow {
    variable: &'static str,
    value: f64,
    r_raw: Option<f64>,
    r_clamped: Option<f64>,
    r_eff_raw: Option<f64>,
    r_eff_clamped: Option<f64>,
    r_old: Option<f64>,
    r_eff_old: Option<f64>,
    bb84: Option<f64>,
    improvement_percent: Option<f64>,
}

fn sweep_rows(
    var: SweepVar,
    start: f64,
    stop: f64,
    step: f64,
    channel: &ChannelArgs,
    bound: &BoundArgs,
) -> Result<Vec<SweepRow>, CliError> {
    if step <= 0.0 || !step.is_finite() {
        return Err(CliError::Invalid(format!("step = {step} must be positive")));
    }
    if start > stop {
        return Err(CliError::Invalid(format!("start = {start} exceeds stop = {stop}")));
    }
    let count = ((stop - start) / step).round() as u64;
    let grid: Vec<f64> = (0..=count).map(|i| start + i as f64 * step).collect();

    // Validate the whole grid before evaluating anything.
    let params: Vec<ChannelParams> = grid
        .iter()
        .map(|&v| match var {
            SweepVar::Phi => ChannelParams::new(v, channel.pl, channel.pd),
            SweepVar::Pl => ChannelParams::new(channel.phi, v, channel.pd),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Invalid(e.to_string()))?;

    let mut rows = Vec::with_capacity(params.len());
    for (value, p) in grid.iter().zip(&params) {
        let row = match keyrate_from_channel(p, bound.mode.into(), bound.bound_variant.into()) {
            Ok(report) => {
                let improvement = report
                    .baselines
                    .r_eff_old
                    .filter(|&old| old > 0.0)
                    .map(|old| 100.0 * (report.r_eff - old) / old);
                SweepRow {
                    variable: var.column(),
                    value: *value,
                    r_raw: Some(report.r),
                    r_clamped: Some(report.r.max(0.0)),
                    r_eff_raw: Some(report.r_eff),
                    r_eff_clamped: Some(report.r_eff.max(0.0)),
                    r_old: report.baselines.r_old,
                    r_eff_old: report.baselines.r_eff_old,
                    bb84: report.baselines.bb84,
                    improvement_percent: improvement,
                }
            }
            // Grid points with no accepted rounds (e.g. total loss) keep
            // their row with empty value cells.
            Err(msqkd::Error::NoAcceptedRounds) => SweepRow {
                variable: var.column(),
                value: *value,
                r_raw: None,
                r_clamped: None,
                r_eff_raw: None,
                r_eff_clamped: None,
                r_old: None,
                r_eff_old: None,
                bb84: None,
                improvement_percent: None,
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn render_sweep_csv(var: SweepVar, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{},r_raw,r_clamped,r_eff_raw,r_eff_clamped,r_old,r_eff_old,bb84,improvement_percent\n",
        var.column()
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            sig12(row.value),
            sig12_opt(row.r_raw),
            sig12_opt(row.r_clamped),
            sig12_opt(row.r_eff_raw),
            sig12_opt(row.r_eff_clamped),
            sig12_opt(row.r_old),
            sig12_opt(row.r_eff_old),
            sig12_opt(row.bb84),
            sig12_opt(row.improvement_percent),
        ));
    }
    out
}

fn render_rate(params: &ChannelParams, bound: &BoundArgs, report: &KeyRateReport) -> String {
    let mode = match bound.mode {
        ModeArg::ThreeTerm => "3term",
        ModeArg::SixTerm => "6term",
    };
    let variant = match bound.bound_variant {
        VariantArg::Printed => "printed",
        VariantArg::IndexConsistent => "index-consistent",
    };
    let mut out = format!(
        "key-rate report  phi={} p_l={} p_d={}  (mode={mode}, bound-variant={variant})\n",
        params.phi, params.p_l, params.p_d
    );
    out.push_str(&format!("  N        = {}\n", sig12(report.n)));
    out.push_str(&format!("  p_acc    = {}\n", sig12(report.p_acc)));
    out.push_str(&format!("  p0       = {}\n", sig12(report.p0)));
    out.push_str(&format!("  H(A|E)  >= {}\n", sig12(report.h_ae_lower)));
    out.push_str(&format!("  H(A|B)   = {}\n", sig12(report.h_ab)));
    out.push_str(&format!(
        "  r        = {}  ({:.4} secret bits per raw-key bit)\n",
        sig12(report.r),
        report.r
    ));
    out.push_str(&format!(
        "  r_eff    = {}  ({:.4} secret bits per photon)\n",
        sig12(report.r_eff),
        report.r_eff
    ));
    out.push_str("  terms:\n");
    for term in &report.term_breakdown {
        out.push_str(&format!(
            "    {:<16} weight = {:<16} contribution = {}\n",
            term.label,
            sig12(term.weight),
            sig12(term.contribution)
        ));
    }
    out.push_str(&format!(
        "  baselines: r_old = {}, r_eff_old = {}, bb84 = {}\n",
        sig12_opt(report.baselines.r_old),
        sig12_opt(report.baselines.r_eff_old),
        sig12_opt(report.baselines.bb84),
    ));
    out
}

fn render_zscores(scores: &[ZScore]) -> String {
    let mut out = String::from("z-scores vs closed forms (flag at |z| > 4):\n");
    for s in scores {
        out.push_str(&format!(
            "  {:<7} empirical = {:<12.9} expected = {:<12.9} z = {:>8.3}{}\n",
            s.name,
            s.empirical,
            s.expected,
            s.z,
            if s.flagged { "  FLAGGED" } else { "" }
        ));
    }
    out
}

fn render_soundness(report: &msqkd::attack::SoundnessReport) -> String {
    format!(
        "attack soundness check\n\
         \x20 exact H(A|E)                   = {}\n\
         \x20 6-term bound (exact overlaps)  = {}\n\
         \x20 3-term bound (exact overlaps)  = {}\n\
         \x20 3-term bound (estimated)       = {}\n\
         \x20 sound: 6-term = {}, 3-term = {}, estimated = {}\n\
         \x20 printed overlap bounds valid: {}\n",
        sig12(report.exact),
        sig12(report.bound_6term_exact),
        sig12(report.bound_3term_exact),
        sig12(report.bound_3term_estimated),
        report.sound_6term_exact,
        report.sound_3term_exact,
        report.sound_3term_estimated,
        report.printed_overlap_bounds_valid,
    )
}

fn load_spec(path: &std::path::Path) -> Result<AttackSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(AttackSpec::from_json(&text)?)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Invalid(format!("serialization failed: {e}")))
}
