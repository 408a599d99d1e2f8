use std::path::Path;

use dysaug::signal::{read_wav, speed_perturb, tempo_perturb, write_wav};

use super::create_parent;
use crate::{Logger, Method, PipelineConfig, Result};

/// Tempo output lasts `factor` times the input; speed output lasts `1 / factor` times it.
pub fn run(cfg: &PipelineConfig, method: Method, factor: f64, input: &Path, output: &Path, log: &Logger) -> Result<()> {
    let wave = read_wav::<f64>(input)?;
    let out = match method {
        Method::Tempo => tempo_perturb(&wave, factor, &cfg.wsola_config())?,
        Method::Speed => speed_perturb(&wave, factor)?,
    };
    create_parent(output)?;
    write_wav(output, &out)?;
    log.info("perturbed", &[("in_samples", wave.len().into()), ("out_samples", out.len().into())]);
    println!("in_samples\t{}\nout_samples\t{}\noutput\t{}", wave.len(), out.len(), output.display());
    Ok(())
}
