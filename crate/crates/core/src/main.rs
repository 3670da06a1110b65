use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use rkhs_pe::experiment::{pe_section, project_truth, run_scenario, write_pe_curve};
use rkhs_pe::io::{fmt_f64, read_centers, read_trajectory, write_centers, write_csv};
use rkhs_pe::kernel::Matern;
use rkhs_pe::pe::analyze;
use rkhs_pe::{CenterSet, Error, Gramian, ScenarioConfig};

#[derive(Parser)]
#[command(name = "rkhs-pe", version, about = "RKHS adaptive estimation and persistence-of-excitation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override such as `ode.h=0.002`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled directions; overrides `pe.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> rkhs_pe::Result<ScenarioConfig> {
        let mut sets = self.set.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("pe.seed={seed}"));
        }
        if let Some(out) = &self.out {
            sets.push(format!("output.dir={}", toml_string(&out.to_string_lossy())));
        }
        match &self.config {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("config file not found: {}", p.display())));
                }
                ScenarioConfig::load(p, &sets)
            }
            None => ScenarioConfig::from_overrides(&sets),
        }
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write all artifacts.
    Simulate(Common),
    /// Evaluate PE levels of a recorded trajectory.
    PeAnalyze {
        /// Trajectory CSV with columns t, x1..xd.
        #[arg(long)]
        trajectory: PathBuf,
        /// Centers CSV with columns z1..zd.
        #[arg(long)]
        centers: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Project the oscillator nonlinearity onto the configured centers.
    Project(Common),
    /// Print kernel values and the embedding constant.
    KernelCheck(Common),
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    PathBuf::from(&cfg.output.dir)
}

fn simulate(common: &Common) -> rkhs_pe::Result<()> {
    let cfg = common.load()?;
    let run = run_scenario(&cfg)?;
    let dir = out_dir(&cfg);
    run.write(&dir)?;
    println!("wrote artifacts to {}", dir.display());
    println!("gamma_pe2 = {}", fmt_f64(run.pe.gamma_pe2));
    println!("final_state_error = {}", fmt_f64(run.final_state_error));
    println!("median_error_on_cycle = {}", fmt_f64(run.median_on_cycle));
    println!("median_error_annulus = {}", fmt_f64(run.median_annulus));
    Ok(())
}

fn pe_analyze(trajectory: &Path, centers: &Path, common: &Common) -> rkhs_pe::Result<()> {
    let cfg = common.load()?;
    let traj = read_trajectory(trajectory)?;
    let basis = Arc::new(CenterSet::new(read_centers(centers)?, cfg.kernel)?);
    let gram = Gramian::assemble(basis, cfg.gramian.jitter)?;
    let report = analyze(&traj, &gram, &cfg.pe)?;
    let dir = out_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let text = format!("# pe-analyze of {}\n\n{}", trajectory.display(), pe_section(&report, gram.jitter()));
    std::fs::write(dir.join("report.txt"), &text).map_err(|e| Error::Io { path: dir.join("report.txt"), source: e })?;
    write_pe_curve(&dir.join("pe_curve.csv"), &report)?;
    println!("gamma_pe1 = {}", fmt_f64(report.gamma_pe1));
    println!("gamma_pe2 = {}", fmt_f64(report.gamma_pe2));
    println!("gamma_classical = {}", fmt_f64(report.gamma_classical));
    Ok(())
}

fn project(common: &Common) -> rkhs_pe::Result<()> {
    let cfg = common.load()?;
    let (basis, gram, f) = project_truth(&cfg)?;
    let dir = out_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    write_centers(&dir.join("centers.csv"), basis.centers())?;
    let header = vec!["j".to_string(), "alpha".to_string()];
    write_csv(
        &dir.join("projection.csv"),
        &header,
        f.coeffs().iter().enumerate().map(|(j, a)| vec![(j + 1) as f64, *a]),
    )?;
    let (lo, hi) = gram.spectral_bounds();
    println!("n_centers = {}", basis.len());
    println!("jitter = {}", fmt_f64(gram.jitter()));
    println!("gram_lambda_min = {}", fmt_f64(lo));
    println!("gram_lambda_max = {}", fmt_f64(hi));
    println!("wrote {} and {}", dir.join("centers.csv").display(), dir.join("projection.csv").display());
    Ok(())
}

fn kernel_check(common: &Common) -> rkhs_pe::Result<()> {
    let cfg = common.load()?;
    let k = Matern::new(cfg.kernel)?;
    println!("order_r = {}", fmt_f64(cfg.kernel.order_r));
    println!("dim_d = {}", cfg.kernel.dim_d);
    println!("nu = {}", fmt_f64(k.nu()));
    println!("length_scale = {}", fmt_f64(cfg.kernel.length_scale));
    println!("embedding_constant = {}", fmt_f64(k.embedding_constant()));
    println!("xi,k");
    for i in 0..=20 {
        let xi = 0.5 * i as f64;
        println!("{},{}", fmt_f64(xi), fmt_f64(k.radial(xi)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::PeAnalyze { trajectory, centers, common } => pe_analyze(trajectory, centers, common),
        Command::Project(c) => project(c),
        Command::KernelCheck(c) => kernel_check(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
