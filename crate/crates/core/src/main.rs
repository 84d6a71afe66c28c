use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use filtered_observer::harness::config::{M0Spec, NamedM0};
use filtered_observer::harness::scenarios::overshoot_table_csv;
use filtered_observer::harness::{
    diagnose_trace, figure1_scenario, figure2_scenario, run_scenario, DiagnoseOptions, HarnessError, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "filtered-observer", version, about = "Filtered-transformation state and parameter estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Three-estimator comparison on the example system.
    Fig1 {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Matrix estimator for gamma in {1, 100, 10000}.
    Fig2 {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Excitation diagnostics for a CSV with `t` and `phi_i` or `M_i_j` columns.
    Diagnose {
        csv: PathBuf,
        /// PE window length in seconds.
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        window: f64,
        /// Only windows starting at or after this time.
        #[arg(long)]
        pe_start: Option<f64>,
        /// Growth-fit window for the determinant integral, as `lo,hi`.
        #[arg(long, value_parser = parse_range)]
        fit_range: Option<(f64, f64)>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b1: Option<f64>,
    #[arg(long)]
    b2: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Initial filter matrix: `zero` or `identity`.
    #[arg(long, value_parser = ["zero", "identity"])]
    m0: Option<String>,
    #[arg(long)]
    no_svg: bool,
    #[arg(long)]
    log_det_axis: bool,
    /// Integrate the closed-form error dynamics alongside.
    #[arg(long)]
    error_oracle: bool,
}

impl Overrides {
    fn apply(&self, mut c: ScenarioConfig) -> ScenarioConfig {
        if let Some(d) = &self.output_dir {
            c.output_dir = Some(d.clone());
        }
        c.gamma = self.gamma.unwrap_or(c.gamma);
        c.a = self.a.unwrap_or(c.a);
        c.b1 = self.b1.unwrap_or(c.b1);
        c.b2 = self.b2.unwrap_or(c.b2);
        c.dt = self.dt.unwrap_or(c.dt);
        c.t_final = self.t_final.unwrap_or(c.t_final);
        c.record_every = self.record_every.unwrap_or(c.record_every);
        match self.m0.as_deref() {
            Some("identity") => c.initial_conditions.m0 = M0Spec::Named(NamedM0::Identity),
            Some("zero") => c.initial_conditions.m0 = M0Spec::Named(NamedM0::Zero),
            _ => {}
        }
        c.emit_svg &= !self.no_svg;
        c.log_det_axis |= self.log_det_axis;
        c.error_oracle |= self.error_oracle;
        c
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn load(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ScenarioConfig::from_json(&text)
}

fn print_summary(art: &filtered_observer::harness::RunArtifacts) {
    for k in art.estimators() {
        let name = k.name();
        let x = art.final_value(&format!("{name}_x_err")).unwrap_or(f64::NAN);
        let th = art.final_value(&format!("{name}_theta_err_norm")).unwrap_or(f64::NAN);
        let lyap = art.lyapunov_of(k).map_or(0, |l| l.violations);
        println!("{name}: |x_err(T)| = {:.3e}, |theta_err(T)| = {th:.4e}, lyapunov violations = {lyap}", x.abs());
    }
    if let Some(fit) = art.excitation.divergence_fit {
        println!("int det(M)^2 ~ {:.4e} ln(1+T) (relative residual {:.3e})", fit.slope, fit.relative_residual);
    }
    println!(
        "steps = {}, records = {}, stiffness = {:.3}, wall time = {:.2} s",
        art.metadata.steps, art.metadata.records, art.metadata.stiffness, art.metadata.wall_time_s
    );
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = overrides.apply(load(&config)?);
            print_summary(&run_scenario(&cfg)?);
        }
        Command::Fig1 { overrides } => {
            let mut cfg = overrides.apply(ScenarioConfig::default());
            cfg.output_dir.get_or_insert_with(|| PathBuf::from("out"));
            let out = figure1_scenario(&cfg, cfg.output_dir.as_deref())?;
            print_summary(&out.artifacts);
            for p in out.svg_paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Fig2 { overrides } => {
            let mut cfg = overrides.apply(ScenarioConfig::default());
            cfg.output_dir.get_or_insert_with(|| PathBuf::from("out"));
            let out = figure2_scenario(&cfg, cfg.output_dir.as_deref())?;
            print!("{}", overshoot_table_csv(&out.table));
        }
        Command::Diagnose { csv, window, pe_start, fit_range } => {
            let opts = DiagnoseOptions { pe_window: window, pe_start: pe_start.unwrap_or(f64::NEG_INFINITY), fit_range };
            let rep = diagnose_trace(&csv, &opts)?;
            if let Some(pe) = rep.pe_margin {
                println!("pe_margin = {:.6e} (window {:.4} s, worst start {:.4} s)", pe.margin, pe.window, pe.argmin_start);
            }
            if let Some(fit) = rep.divergence_fit {
                println!(
                    "int det(M)^2: slope {:.6e}, intercept {:.6e}, relative residual {:.3e}, growth {:?}",
                    fit.slope,
                    fit.intercept,
                    fit.relative_residual,
                    rep.growth.expect("set with fit")
                );
            }
        }
        Command::Validate { config } => {
            let stiffness = load(&config)?.validate()?;
            println!("ok (stiffness estimate {stiffness:.3})");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
