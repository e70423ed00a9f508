//! Result files of a run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Format, RunConfig};
use super::{ordered_array, RunOutput};
use crate::error::Result;
use crate::kernel::build_coupling;

/// Provenance record written next to the results.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta<'a> {
    pub version: &'a str,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub warnings: &'a [String],
    pub config: &'a RunConfig,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the results in the configured formats plus `run-meta.json`.
/// Returns the paths written.
pub fn write_outputs(
    config: &RunConfig,
    result: &RunOutput,
    wall_time_s: f64,
    warnings: &[String],
) -> Result<Vec<PathBuf>> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in &config.output.formats {
        let name = match (result, format) {
            (RunOutput::Spectrum(s), Format::Csv) => {
                s.write_csv(create(dir, "spectrum.csv")?)?;
                "spectrum.csv"
            }
            (RunOutput::Spectrum(s), Format::Json) => {
                s.write_json(create(dir, "spectrum.json")?)?;
                "spectrum.json"
            }
            (RunOutput::Disorder(d), Format::Csv) => {
                d.write_csv(create(dir, "disorder.csv")?)?;
                "disorder.csv"
            }
            (RunOutput::Disorder(d), Format::Json) => {
                serde_json::to_writer_pretty(create(dir, "disorder.json")?, d)?;
                "disorder.json"
            }
        };
        written.push(dir.join(name));
    }

    if config.output.diagnostics {
        let array = ordered_array(config)?;
        array.write_csv(create(dir, "positions.csv")?)?;
        written.push(dir.join("positions.csv"));
        build_coupling(&array)?.write_channels_csv(create(dir, "channels.csv")?)?;
        written.push(dir.join("channels.csv"));
    }

    let threads = if config.mc.threads == 0 { rayon::current_num_threads() } else { config.mc.threads };
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config.hash(),
        wall_time_s,
        threads,
        warnings,
        config,
    };
    serde_json::to_writer_pretty(create(dir, "run-meta.json")?, &meta)?;
    written.push(dir.join("run-meta.json"));
    Ok(written)
}
