//! Experiment orchestration: runs the engines on a record schedule and writes the CSV table,
//! the manifest and checkpoints.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use thiserror::Error;

use crate::chain::{
    self, chain_quality, coherent_bargmann, estimate_with_batches, initial_chain, read_checkpoint,
    write_checkpoint, ChainError, ChainState, Checkpoint, CheckpointError, Observable, SimRng,
};
use crate::config::{validate_config, ConfigErrors, Overrides, ReformatPolicy, RunConfig};
use crate::model::ModelSpec;
use crate::oracle::{self, antinormal_expectation, FockCompositeState, OracleError};

pub const CSV_HEADER: &str = "t,observable,estimate_re,estimate_im,stderr,oracle_re,oracle_im";
pub const CSV_FILE: &str = "timeseries.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("chain engine failed at t = {t}: {source}")]
    Chain { t: f64, source: ChainError },
    #[error("oracle failed at t = {t}: {source}")]
    Oracle { t: f64, source: OracleError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error("checkpoint {path} has an unreadable run section: {reason}")]
    Resume { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub records: u64,
    pub reformats: u64,
    pub final_time: f64,
}

struct Session {
    config: RunConfig,
    spec: ModelSpec,
    observables: Vec<(String, Observable)>,
    gate: Vec<(String, Observable)>,
    chain: Option<ChainState>,
    reference: Option<FockCompositeState>,
    rng: SimRng,
    records_done: u64,
}

/// Reads, validates and runs a configuration file.
pub fn run_file(
    path: &Path,
    overrides: &Overrides,
    stop_after: Option<u64>,
) -> Result<RunSummary, RunError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let config = validate_config(&raw, overrides)?;
    run(&config, stop_after)
}

/// Runs a validated configuration from t = 0. With `stop_after`, the run checkpoints and
/// returns once that many records past t = 0 are written.
pub fn run(config: &RunConfig, stop_after: Option<u64>) -> Result<RunSummary, RunError> {
    let out_dir = config.output.dir.clone();
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    write_manifest(config, "run")?;
    let spec = config.model_spec();
    let mut rng = SimRng::seed_from_u64(config.seed);
    if config.engine.uses_chain() && spec.n_modes() > 1 {
        log::warn!("chain derivatives for more than one mode are directional approximations; treat results as experimental");
    }
    let chain = if config.engine.uses_chain() {
        let atomic = config.atomic();
        let alpha0 = config.alpha0();
        log::info!("sampling {} chain points", config.chain.n);
        let mut ch = initial_chain(
            coherent_bargmann(&atomic, &alpha0),
            spec.n_modes(),
            config.chain.n,
            &config.sampler_params(),
            &mut rng,
        )
        .map_err(|source| RunError::Chain { t: 0.0, source })?;
        ch.meta.seed = config.seed;
        Some(ch)
    } else {
        None
    };
    let reference = if config.engine.uses_oracle() {
        Some(
            oracle::build_initial(
                &spec,
                &config.atomic(),
                &config.alpha0(),
                &config.oracle.cutoffs,
                config.oracle.tail_threshold,
            )
            .map_err(|source| RunError::Oracle { t: 0.0, source })?,
        )
    } else {
        None
    };
    let session = Session::new(config.clone(), spec, chain, reference, rng, 0);
    let csv_path = out_dir.join(CSV_FILE);
    let mut csv = File::create(&csv_path).map_err(io_err(&csv_path))?;
    writeln!(csv, "{CSV_HEADER}").map_err(io_err(&csv_path))?;
    session.write_record(&mut csv, &csv_path)?;
    session.run_to_end(csv, &csv_path, stop_after)
}

/// Continues a run from its checkpoint. The CSV table is truncated to the state the checkpoint
/// saw, so the finished table matches an uninterrupted run.
pub fn resume(
    checkpoint: &Path,
    out_dir: Option<PathBuf>,
    stop_after: Option<u64>,
) -> Result<RunSummary, RunError> {
    let file = File::open(checkpoint).map_err(io_err(checkpoint))?;
    let ckpt =
        read_checkpoint(std::io::BufReader::new(file)).map_err(|source| RunError::Checkpoint {
            path: checkpoint.to_path_buf(),
            source,
        })?;
    let bad = |reason: String| RunError::Resume {
        path: checkpoint.to_path_buf(),
        reason,
    };
    let state = RunSection::decode(&ckpt.extra).map_err(bad)?;
    let dir = out_dir.unwrap_or_else(|| {
        checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let overrides = Overrides {
        seed: None,
        out_dir: Some(dir.clone()),
    };
    let config = validate_config(&state.config, &overrides)?;
    let spec = config.model_spec();
    let reference = match state.reference {
        Some((time, amplitudes)) => Some(
            FockCompositeState::from_amplitudes(
                spec.dim(),
                config.oracle.cutoffs.clone(),
                time,
                config.oracle.tail_threshold,
                amplitudes,
            )
            .map_err(|e| bad(e.to_string()))?,
        ),
        None => None,
    };
    if config.engine.uses_chain() != ckpt.chain.is_some()
        || config.engine.uses_oracle() != reference.is_some()
    {
        return Err(bad("engine sections do not match the configuration".into()));
    }
    let rng = ckpt
        .rng
        .ok_or_else(|| bad("generator state missing".into()))?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_manifest(&config, "resume")?;
    let csv_path = dir.join(CSV_FILE);
    let csv = OpenOptions::new()
        .write(true)
        .open(&csv_path)
        .map_err(io_err(&csv_path))?;
    csv.set_len(state.csv_bytes).map_err(io_err(&csv_path))?;
    let csv = OpenOptions::new()
        .append(true)
        .open(&csv_path)
        .map_err(io_err(&csv_path))?;
    log::info!(
        "resuming after record {} of {}",
        state.records_done,
        config.record_count()
    );
    let session = Session::new(config, spec, ckpt.chain, reference, rng, state.records_done);
    session.run_to_end(csv, &csv_path, stop_after)
}

fn write_manifest(config: &RunConfig, command: &str) -> Result<(), RunError> {
    #[derive(serde::Serialize)]
    struct Provenance<'a> {
        package: &'a str,
        code_version: &'a str,
        command: &'a str,
    }
    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        run: Provenance<'a>,
        config: &'a RunConfig,
    }
    let manifest = Manifest {
        run: Provenance {
            package: env!("CARGO_PKG_NAME"),
            code_version: env!("CARGO_PKG_VERSION"),
            command,
        },
        config,
    };
    let path = config.output.dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

fn fmt_time(t: f64) -> String {
    format!("{}", (t * 1e9).round() / 1e9)
}

impl Session {
    fn new(
        config: RunConfig,
        spec: ModelSpec,
        chain: Option<ChainState>,
        reference: Option<FockCompositeState>,
        rng: SimRng,
        records_done: u64,
    ) -> Self {
        spec.warm_cache();
        let observables = config.observables();
        let gate = chain::standard_observables(spec.dim(), spec.n_modes());
        Self {
            config,
            spec,
            observables,
            gate,
            chain,
            reference,
            rng,
            records_done,
        }
    }

    /// Nominal time of record `i`.
    fn record_time(&self, i: u64) -> f64 {
        if self.config.engine.uses_chain() {
            (i * self.config.steps_per_record()) as f64 * self.config.chain.eps
        } else {
            i as f64 * self.config.schedule.record_every
        }
    }

    fn run_to_end(
        mut self,
        csv: File,
        csv_path: &Path,
        stop_after: Option<u64>,
    ) -> Result<RunSummary, RunError> {
        let mut csv = csv;
        let total = self.config.record_count();
        let per_checkpoint = self.config.records_per_checkpoint();
        let stop = stop_after.map_or(total, |n| total.min(n));
        while self.records_done < stop {
            let target = self.record_time(self.records_done + 1);
            self.advance_chain(target)?;
            if let Some(reference) = &self.reference {
                let next = oracle::evolve_to(reference, &self.spec, target, self.config.oracle.dt)
                    .map_err(|source| RunError::Oracle { t: target, source })?;
                self.reference = Some(next);
            }
            self.records_done += 1;
            self.write_record(&mut csv, csv_path)?;
            if self.records_done.is_multiple_of(per_checkpoint) || self.records_done == stop {
                self.write_checkpoint(csv_path)?;
            }
        }
        Ok(RunSummary {
            out_dir: self.config.output.dir.clone(),
            records: self.records_done,
            reformats: self.chain.as_ref().map_or(0, |c| c.meta.reformats),
            final_time: self.record_time(self.records_done),
        })
    }

    fn advance_chain(&mut self, target: f64) -> Result<(), RunError> {
        let Some(mut chain) = self.chain.take() else {
            return Ok(());
        };
        let params = self.config.step_params();
        let auto = self.config.chain.reformat == ReformatPolicy::Auto;
        let spacing = self.config.sampler_params().recorded_cap();
        for _ in 0..self.config.steps_per_record() {
            let t = chain.time();
            chain = match chain::step(&chain, &self.spec, &params) {
                Ok(next) => next,
                Err(
                    e @ (ChainError::ZeroNormConditionalState { .. }
                    | ChainError::DegenerateIncrement { .. }),
                ) if auto => {
                    log::warn!("t = {}: {e}; reformatting", fmt_time(t));
                    let fresh = self.reformat(&chain)?;
                    chain::step(&fresh, &self.spec, &params)
                        .map_err(|source| RunError::Chain { t, source })?
                }
                Err(source) => return Err(RunError::Chain { t, source }),
            };
            if auto {
                let quality = chain_quality(&chain, params.delta_min);
                if quality.needs_reformat(spacing) {
                    log::info!(
                        "t = {}: max increment {:.3}, collapsed fraction {:.2e}; reformatting",
                        fmt_time(chain.time()),
                        quality.max_increment(),
                        quality.fraction_below_delta_min
                    );
                    chain = self.reformat(&chain)?;
                }
            }
        }
        log::info!(
            "t = {}: {} steps, {} reformats",
            fmt_time(target),
            chain.meta.steps,
            chain.meta.reformats
        );
        self.chain = Some(chain);
        Ok(())
    }

    fn reformat(&mut self, chain: &ChainState) -> Result<ChainState, RunError> {
        chain::reformat(
            chain,
            &self.config.reformat_params(),
            &self.gate,
            &mut self.rng,
        )
        .map_err(|source| RunError::Chain {
            t: chain.time(),
            source,
        })
    }

    fn write_record(&self, csv: &mut File, csv_path: &Path) -> Result<(), RunError> {
        let t = self.record_time(self.records_done);
        let mut out = BufWriter::new(csv);
        for (name, obs) in &self.observables {
            let (est, err) = match &self.chain {
                Some(chain) => {
                    let e = estimate_with_batches(chain, obs, self.config.chain.batches)
                        .map_err(|source| RunError::Chain { t, source })?;
                    (
                        format!("{},{}", e.value.re, e.value.im),
                        e.stderr.to_string(),
                    )
                }
                None => (",".to_string(), String::new()),
            };
            let exact = match &self.reference {
                Some(r) => {
                    let v: Complex64 = antinormal_expectation(r, obs)
                        .map_err(|source| RunError::Oracle { t, source })?;
                    format!("{},{}", v.re, v.im)
                }
                None => ",".to_string(),
            };
            writeln!(out, "{},{name},{est},{err},{exact}", fmt_time(t))
                .map_err(io_err(csv_path))?;
        }
        out.flush().map_err(io_err(csv_path))?;
        Ok(())
    }

    fn write_checkpoint(&self, csv_path: &Path) -> Result<(), RunError> {
        let csv_bytes = fs::metadata(csv_path).map_err(io_err(csv_path))?.len();
        let section = RunSection {
            config: self.config.to_toml(),
            records_done: self.records_done,
            csv_bytes,
            reference: self
                .reference
                .as_ref()
                .map(|r| (r.time(), r.amplitudes().to_vec())),
        };
        let ckpt = Checkpoint {
            chain: self.chain.clone(),
            rng: Some(self.rng.clone()),
            extra: section.encode(),
        };
        let dir = &self.config.output.dir;
        let path = dir.join(CHECKPOINT_FILE);
        let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        write_checkpoint(BufWriter::new(file), &ckpt).map_err(|source| RunError::Checkpoint {
            path: tmp.clone(),
            source,
        })?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        log::debug!("checkpoint written after record {}", self.records_done);
        Ok(())
    }
}

/// Run bookkeeping stored in the checkpoint's extra section:
///
/// ```text
/// config length u64, resolved configuration as TOML
/// records done  u64
/// CSV length    u64      bytes of the table written so far
/// reference     u8 flag; if 1: time f64, count u64, count × (re f64, im f64)
/// ```
struct RunSection {
    config: String,
    records_done: u64,
    csv_bytes: u64,
    reference: Option<(f64, Vec<Complex64>)>,
}

impl RunSection {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&self.records_done.to_le_bytes());
        out.extend_from_slice(&self.csv_bytes.to_le_bytes());
        match &self.reference {
            None => out.push(0),
            Some((time, amps)) => {
                out.push(1);
                out.extend_from_slice(&time.to_le_bytes());
                out.extend_from_slice(&(amps.len() as u64).to_le_bytes());
                for z in amps {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], String> {
            let s = bytes.get(pos..pos + n).ok_or("section truncated")?;
            pos += n;
            Ok(s)
        };
        let word = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
        let len = word(take(8)?) as usize;
        let config = String::from_utf8(take(len)?.to_vec()).map_err(|e| e.to_string())?;
        let records_done = word(take(8)?);
        let csv_bytes = word(take(8)?);
        let reference = match take(1)?[0] {
            0 => None,
            1 => {
                let time = f64::from_bits(word(take(8)?));
                let count = word(take(8)?) as usize;
                if count > bytes.len() / 16 {
                    return Err("reference length exceeds section".into());
                }
                let mut amps = Vec::with_capacity(count);
                for _ in 0..count {
                    let re = f64::from_bits(word(take(8)?));
                    let im = f64::from_bits(word(take(8)?));
                    amps.push(Complex64::new(re, im));
                }
                Some((time, amps))
            }
            flag => return Err(format!("unknown reference flag {flag}")),
        };
        if pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            config,
            records_done,
            csv_bytes,
            reference,
        })
    }
}
