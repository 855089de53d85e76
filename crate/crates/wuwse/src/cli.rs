//! Subcommands: synth, augment, train, enhance, eval, report.

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{parse_buckets, parse_snr_range, RunConfig};
use crate::error::CliError;
use crate::manifest::{load_windows, DatasetManifest, ManifestRow, Split};
use crate::noise::load_noise_pool;
use crate::report::{
    read_report_csv, render_comparison_text, render_report_text, write_comparison_csv, write_metrics_csv,
    write_report_csv,
};
use crate::wav::{read_wav, write_wav};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use wuwse_core::augment::{augment_batch, AugmentOptions, AugmentedSample, NoiseType};
use wuwse_core::eval::{bucketed_report, compare_reports, youden_point, EvalReport, ScoredSample, SnrBucket};
use wuwse_core::models::LeNetConfig;
use wuwse_core::synth::{synth_noise, synth_window};
use wuwse_core::train::{Trainer, WuwSystem};

#[derive(Debug, Parser)]
#[command(name = "wuwse", version, about = "Waveform speech enhancement for wake-word detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic keyword corpus, manifest and noise pools.
    Synth(SynthArgs),
    /// Mix manifest windows with noise at random SNRs and write WAVs plus metadata.
    Augment(AugmentArgs),
    /// Train a model in one of the four modes.
    Train(TrainArgs),
    /// Run the enhancement model of a checkpoint over a WAV file.
    Enhance(EnhanceArgs),
    /// Score test windows and write bucketed macro-F1 reports.
    Eval(EvalArgs),
    /// Compare two report CSVs cell by cell.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 50)]
    pub dev: usize,
    #[arg(long, default_value_t = 50)]
    pub test: usize,
    /// Noise clips per type and split.
    #[arg(long, default_value_t = 2)]
    pub noise_clips: usize,
    #[arg(long, default_value_t = 3.0)]
    pub noise_secs: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub noise_pool: PathBuf,
    #[arg(long, value_parser = parse_snr_range, default_value = "-10,50", allow_hyphen_values = true)]
    pub snr_range: (f64, f64),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Only augment rows of this split.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub no_reverb: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub noise_pool: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Classifier checkpoint for frozen-classifier training.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Enhancement front end taken from another checkpoint.
    #[arg(long)]
    pub se_checkpoint: Option<PathBuf>,
    /// Second system to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub compare_se: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub noise_pool: PathBuf,
    /// Noise for the threshold-selection windows; defaults to the test pool.
    #[arg(long)]
    pub dev_noise_pool: Option<PathBuf>,
    #[arg(long, value_parser = parse_snr_range, default_value = "-10,20", allow_hyphen_values = true)]
    pub snr_range: (f64, f64),
    #[arg(long, value_parser = parse_buckets, allow_hyphen_values = true)]
    pub buckets: Option<Vec<SnrBucket>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split whose scores pick the Youden threshold.
    #[arg(long, default_value = "dev")]
    pub threshold_split: Split,
    /// Score the raw input even when the checkpoint has an enhancement model.
    #[arg(long)]
    pub no_se: bool,
    #[arg(long)]
    pub no_reverb: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Augment(a) => cmd_augment(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Enhance(a) => cmd_enhance(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn mkdir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    fs::write(p, text).map_err(|e| CliError::io(p, e))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let audio = a.out.join("audio");
    mkdir(&audio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut manifest = DatasetManifest::default();
    let noise_len = (a.noise_secs * 16_000.0).round() as usize;
    if noise_len == 0 {
        return Err(CliError::Config("noise clips must be longer than zero".into()));
    }
    for (split, n) in [(Split::Train, a.train), (Split::Dev, a.dev), (Split::Test, a.test)] {
        let n_pos = n / 2;
        for i in 0..n {
            let item = synth_window(i < n_pos, wuwse_core::audio::DEFAULT_WINDOW, &mut rng);
            let path = audio.join(format!("{split}_{i:04}.wav"));
            write_wav(&item.waveform, &path)?;
            manifest.rows.push(ManifestRow {
                path,
                label: item.label,
                onset: Some(item.onset),
                offset: Some(item.offset),
                split,
            });
        }
        for t in NoiseType::ALL {
            let dir = a.out.join("noise").join(split.as_str()).join(t.as_str());
            mkdir(&dir)?;
            for k in 0..a.noise_clips {
                write_wav(&synth_noise(t, noise_len, &mut rng), dir.join(format!("clip_{k:02}.wav")))?;
            }
        }
    }
    manifest.save(a.out.join("manifest.csv"), Some(&a.out))?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_augment(a: &AugmentArgs) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let pool = load_noise_pool(&a.noise_pool)?;
    let rows: Vec<&ManifestRow> = manifest
        .rows
        .iter()
        .filter(|r| a.split.is_none_or(|s| r.split == s))
        .collect();
    let windows = load_windows(rows.iter().copied())?;
    let opts = AugmentOptions {
        snr_range: a.snr_range,
        reverb_noise: !a.no_reverb,
        reverb_speech: false,
    };
    let mixed = augment_batch(&windows, &pool, &opts, a.seed)?;
    let audio = a.out.join("audio");
    mkdir(&audio)?;
    let meta_path = a.out.join("metadata.csv");
    let mut meta = csv::Writer::from_path(&meta_path).map_err(|e| CliError::Data(e.to_string()))?;
    let werr = |e: csv::Error| CliError::Data(format!("{}: {e}", meta_path.display()));
    meta.write_record(["file", "source", "noise", "noise_type", "snr", "lambda", "label"])
        .map_err(werr)?;
    for (i, (row, m)) in rows.iter().zip(&mixed).enumerate() {
        let name = format!("{i:05}.wav");
        write_wav(&m.noisy, audio.join(&name))?;
        meta.write_record([
            format!("audio/{name}"),
            file_name(&row.path),
            pool.clips[m.noise_index].source.clone(),
            m.noise_type.to_string(),
            format!("{:.6}", m.snr),
            format!("{:.9}", m.lambda),
            (m.label as u8).to_string(),
        ])
        .map_err(werr)?;
    }
    meta.flush().map_err(|e| CliError::io(&meta_path, e))
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&a.overrides)?;
    if let Some(m) = &a.mode {
        cfg.set("mode", m)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    for (field, v) in [
        (&mut cfg.manifest, &a.manifest),
        (&mut cfg.noise_pool, &a.noise_pool),
        (&mut cfg.out_dir, &a.out),
        (&mut cfg.pretrained, &a.pretrained),
    ] {
        if v.is_some() {
            field.clone_from(v);
        }
    }
    let mode = cfg.mode.ok_or_else(|| CliError::Config("missing required setting mode".into()))?;
    let train_cfg = cfg.train_config()?;
    let manifest_path = cfg.manifest.clone().ok_or_else(|| CliError::Config("missing manifest".into()))?;
    let pool_path = cfg.noise_pool.clone().ok_or_else(|| CliError::Config("missing noise_pool".into()))?;
    let out = cfg.out_dir.clone().ok_or_else(|| CliError::Config("missing out_dir".into()))?;
    if mode.freezes_classifier() && cfg.pretrained.is_none() {
        return Err(CliError::Config(format!("mode {mode} needs --pretrained")));
    }

    let manifest = DatasetManifest::load(&manifest_path)?;
    let pool = load_noise_pool(&pool_path)?;
    let train = load_windows(manifest.split(Split::Train))?;
    let dev = load_windows(manifest.split(Split::Dev))?;
    let mut system = WuwSystem::for_mode(mode, cfg.se_config(), LeNetConfig::default(), train_cfg.seed)?;
    if let Some(p) = &cfg.pretrained {
        let pre = load_checkpoint(p)?;
        system.load_pretrained_classifier(&pre.system.store)?;
    }
    let mut trainer = Trainer::new(mode, train_cfg.clone(), system, &train, &dev, &pool)?;
    while !trainer.should_stop() {
        let r = trainer.run_epoch()?;
        if !a.quiet {
            eprintln!(
                "epoch {:>3}  train {:.5}  val {:.5}",
                r.epoch, r.train.total, r.val.total
            );
        }
    }
    let outcome = trainer.outcome();
    if !a.quiet {
        eprintln!("best epoch {} (val {:.5})", outcome.best_epoch, outcome.best_val_loss);
    }
    mkdir(&out)?;
    write_metrics_csv(&outcome.history, out.join("metrics.csv"))?;
    save_checkpoint(
        &Checkpoint {
            mode,
            config: train_cfg,
            system: trainer.into_system(),
        },
        out.join("checkpoint.wuwse"),
    )?;
    Ok(())
}

pub fn cmd_enhance(a: &EnhanceArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let input = read_wav(&a.input)?;
    let out = ckpt.system.enhance(&input)?;
    write_wav(&out, &a.output)?;
    Ok(())
}

/// Loads a checkpoint, optionally replacing its front end with another's.
fn load_system(ckpt: &Path, se: Option<&Path>) -> Result<WuwSystem, CliError> {
    let main = load_checkpoint(ckpt)?.system;
    match se {
        None => Ok(main),
        Some(p) => Ok(WuwSystem::compose(&load_checkpoint(p)?.system, &main)?),
    }
}

pub fn score_samples(
    system: &WuwSystem,
    samples: &[AugmentedSample],
    use_se: bool,
) -> Result<Vec<ScoredSample>, CliError> {
    samples
        .iter()
        .map(|s| {
            Ok(ScoredSample {
                score: system.score(&s.noisy, use_se)?,
                label: s.label,
                snr: Some(s.snr),
                noise_type: s.noise_type.into(),
            })
        })
        .collect()
}

fn evaluate(
    system: &WuwSystem,
    use_se: bool,
    threshold_set: &[AugmentedSample],
    test: &[AugmentedSample],
    buckets: &[SnrBucket],
) -> Result<(EvalReport, Vec<ScoredSample>), CliError> {
    let pick = score_samples(system, threshold_set, use_se)?;
    let op = youden_point(&pick)?;
    let scored = score_samples(system, test, use_se)?;
    Ok((bucketed_report(&scored, buckets, op.threshold)?, scored))
}

fn write_scores(path: &Path, rows: &[&ManifestRow], scored: &[ScoredSample]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    let werr = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(["source", "label", "snr", "noise_type", "score"]).map_err(werr)?;
    for (r, s) in rows.iter().zip(scored) {
        w.write_record([
            file_name(&r.path),
            (s.label as u8).to_string(),
            s.snr.map(|v| format!("{v:.6}")).unwrap_or_default(),
            s.noise_type.to_string(),
            format!("{:.9}", s.score),
        ])
        .map_err(werr)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let buckets = a.buckets.clone().unwrap_or_else(|| wuwse_core::eval::DEFAULT_BUCKETS.to_vec());
    wuwse_core::eval::validate_buckets(&buckets)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let pool = load_noise_pool(&a.noise_pool)?;
    let dev_pool = match &a.dev_noise_pool {
        Some(p) => load_noise_pool(p)?,
        None => pool.clone(),
    };
    let primary = load_system(&a.checkpoint, a.se_checkpoint.as_deref())?;
    let secondary = a
        .compare
        .as_deref()
        .map(|c| load_system(c, a.compare_se.as_deref()))
        .transpose()?;

    let test_rows: Vec<&ManifestRow> = manifest.split(Split::Test).collect();
    if test_rows.is_empty() {
        return Err(CliError::Data("manifest has no test rows".into()));
    }
    let test_windows = load_windows(test_rows.iter().copied())?;
    let opts = AugmentOptions {
        snr_range: a.snr_range,
        reverb_noise: !a.no_reverb,
        reverb_speech: false,
    };
    let test = augment_batch(&test_windows, &pool, &opts, a.seed)?;
    let threshold_set = match a.threshold_split {
        Split::Test => test.clone(),
        split => {
            let windows = load_windows(manifest.split(split))?;
            augment_batch(&windows, &dev_pool, &opts, a.seed.wrapping_add(1))?
        }
    };

    mkdir(&a.out)?;
    let use_se = |s: &WuwSystem| s.se.is_some() && !a.no_se;
    let (report, scored) = evaluate(&primary, use_se(&primary), &threshold_set, &test, &buckets)?;
    write_report_csv(&report, a.out.join("report.csv"))?;
    write_text(&a.out.join("report.txt"), &render_report_text(&report))?;
    write_scores(&a.out.join("scores.csv"), &test_rows, &scored)?;
    if let Some(other) = &secondary {
        let (report_b, scored_b) = evaluate(other, use_se(other), &threshold_set, &test, &buckets)?;
        write_report_csv(&report_b, a.out.join("report_b.csv"))?;
        write_text(&a.out.join("report_b.txt"), &render_report_text(&report_b))?;
        write_scores(&a.out.join("scores_b.csv"), &test_rows, &scored_b)?;
        let cmp = compare_reports(&report, &report_b)?;
        write_comparison_csv(&cmp, a.out.join("comparison.csv"))?;
        write_text(&a.out.join("comparison.txt"), &render_comparison_text(&cmp))?;
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let ra = read_report_csv(&a.a)?;
    let rb = read_report_csv(&a.b)?;
    let cmp = compare_reports(&ra, &rb)?;
    let text = render_comparison_text(&cmp);
    match &a.out {
        Some(dir) => {
            mkdir(dir)?;
            write_comparison_csv(&cmp, dir.join("comparison.csv"))?;
            write_text(&dir.join("comparison.txt"), &text)?;
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    Ok(())
}
