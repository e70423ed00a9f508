use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use atom_mirror::runner::config::{Format, RunConfig};
use atom_mirror::runner::{bandwidth_warnings, output, run, RunOutput};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Monte Carlo spectra of an atom-array mirror and its switch.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named base parameter set (fig1, fig3-empty, fig3-photon, fig4-empty, fig4-photon).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict output to one format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn load(cli: &Cli) -> atom_mirror::Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut config = RunConfig::from_toml_str(&text, cli.preset.as_deref())?;
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
    }
    if let Some(m) = cli.trajectories {
        config.mc.trajectories = m;
    }
    if let Some(t) = cli.threads {
        config.mc.threads = t;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(f) = cli.format {
        config.output.formats = vec![match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }];
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> atom_mirror::Result<()> {
    let config = load(cli)?;
    let warnings = bandwidth_warnings(&config)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{} atoms, {}, {} trajectories, config {}",
        config.array.nx * config.array.ny,
        config.scheme_label(),
        config.mc.trajectories,
        config.hash()
    );
    let start = Instant::now();
    let result = run(&config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let files = output::write_outputs(&config, &result, elapsed, &warnings)?;
    match &result {
        RunOutput::Spectrum(s) => {
            if let Some(i) = s.reflection_peak() {
                let p = &s.points[i];
                println!(
                    "peak reflection {:.4} ± {:.4} at Δ_p = {:.3} Γ_e",
                    p.p_r.mean,
                    p.p_r.stderr,
                    p.detuning / s.metadata.gamma_e
                );
            }
        }
        RunOutput::Disorder(d) => println!("{} disorder widths", d.points.len()),
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("done in {elapsed:.1} s");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
