//! The `facedim` command line.
//!
//! Exit codes: 0 success (or every probe accepted), 1 at least one probe
//! rejected by `verify`, 2 any error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::augment::{apply_transform, sample_params, AugmentConfig, AugmentationParams, Range};
use crate::detector::{select_face, DetectorClient, DetectorConfig};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::eval::{evaluate, export_report, score_matrix, summary_path};
use crate::fsutil;
use crate::gallery::{load_gallery, save_gallery, Gallery};
use crate::ingest::{decode_png, read_embeddings, read_embeddings_csv, write_image};
use crate::template::DEFAULT_EPSILON;

/// Environment variable holding the detector bearer token.
pub const DETECTOR_TOKEN_ENV: &str = "FACEDIM_DETECTOR_TOKEN";

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str =
    "source,output,scale,angle_deg,tx_frac,ty_frac,color_shift_0,color_shift_1,color_shift_2,contrast";

#[derive(Debug, Parser)]
#[command(name = "facedim", version, about = "Few-shot verification with Gaussian embedding templates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand per-identity PNG shots into N augmented images each.
    Augment(AugmentArgs),
    /// Fit one template per label and write a gallery.
    Enroll(EnrollArgs),
    /// Check probes against one identity at a threshold.
    Verify(VerifyArgs),
    /// Rank all enrolled identities for each probe.
    Identify(IdentifyArgs),
    /// Score labeled probes and report FAR/FRR/EER.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory with one subdirectory of PNGs per identity.
    #[arg(long)]
    pub images: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_augment: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "0.9:1.1", allow_hyphen_values = true)]
    pub scale_range: Range,
    #[arg(long, default_value = "-15:15", allow_hyphen_values = true)]
    pub angle_range: Range,
    #[arg(long, default_value = "-0.1:0.1", allow_hyphen_values = true)]
    pub translate_range: Range,
    #[arg(long, default_value = "-0.1:0.1", allow_hyphen_values = true)]
    pub color_range: Range,
    #[arg(long, default_value = "0.8:1.2", allow_hyphen_values = true)]
    pub contrast_range: Range,
    /// Crop each shot to its most confident detected face first.
    #[arg(long)]
    pub detector_url: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub min_confidence: f64,
    #[arg(long, default_value_t = 10_000)]
    pub detector_timeout_ms: u64,
}

impl AugmentArgs {
    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            scale_range: self.scale_range,
            angle_range_deg: self.angle_range,
            translate_frac_range: self.translate_range,
            color_shift_range: self.color_range,
            contrast_range: self.contrast_range,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    /// Labeled embeddings: FEDM1 (labels in `<file>.labels`) or CSV with a
    /// `label` column.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Model id for CSV input (FEDM1 files carry their own).
    #[arg(long, default_value = "")]
    pub model_id: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub identity: String,
    #[arg(long)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    /// Only print the best `top` identities per probe.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    /// Probes labeled with enrolled identities.
    #[arg(long)]
    pub probes: PathBuf,
    /// Curve CSV path; the summary goes to `<stem>.summary.json`.
    #[arg(long)]
    pub report: PathBuf,
}

/// What a successful command wants the process to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Rejected,
}

/// Runs a parsed command, printing to stdout and mapping errors to exit 2.
pub fn run(cli: Cli) -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(1),
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<Outcome> {
    match command {
        Command::Augment(a) => cmd_augment(&a, out),
        Command::Enroll(a) => cmd_enroll(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Identify(a) => cmd_identify(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Sorted `(identity, [png paths])` under `dir`.
fn collect_shots(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut groups = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let identity = entry.file_name().to_string_lossy().into_owned();
        let mut pngs: Vec<PathBuf> = std::fs::read_dir(&path)
            .map_err(|e| Error::io(&path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|x| x.eq_ignore_ascii_case("png"))
            })
            .collect();
        pngs.sort();
        if !pngs.is_empty() {
            groups.push((identity, pngs));
        }
    }
    groups.sort();
    if groups.is_empty() {
        return Err(Error::Usage(format!(
            "{} has no identity subdirectories containing PNG files",
            dir.display()
        )));
    }
    Ok(groups)
}

fn manifest_row(source: &str, output: &str, p: &AugmentationParams) -> String {
    format!(
        "{source},{output},{},{},{},{},{},{},{},{}\n",
        p.scale,
        p.angle_deg,
        p.tx_frac,
        p.ty_frac,
        p.color_shift[0],
        p.color_shift[1],
        p.color_shift[2],
        p.contrast
    )
}

pub fn cmd_augment(args: &AugmentArgs, out: &mut dyn Write) -> Result<Outcome> {
    if args.n_augment == 0 {
        return Err(Error::Usage("--n-augment must be at least 1".into()));
    }
    let config = args.augment_config();
    config.validate()?;
    let groups = collect_shots(&args.images)?;
    let detector = match &args.detector_url {
        Some(url) => Some(DetectorClient::new(DetectorConfig {
            endpoint_url: url.clone(),
            timeout_ms: args.detector_timeout_ms,
            min_confidence: args.min_confidence,
            auth_token: std::env::var(DETECTOR_TOKEN_ENV).ok(),
        })?),
        None => None,
    };

    let total: usize = groups.iter().map(|(_, p)| p.len()).sum();
    // one stream for the whole run, sampled before any image work
    let params = sample_params(&config, total * args.n_augment)?;
    let mut chunks = params.chunks_exact(args.n_augment);

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    let mut written = 0usize;
    for (identity, shots) in &groups {
        let id_dir = args.out.join(identity);
        std::fs::create_dir_all(&id_dir).map_err(|e| Error::io(&id_dir, e))?;
        for shot in shots {
            let bytes = fsutil::read(shot)?;
            let mut image = decode_png(&bytes)?;
            if let Some(client) = &detector {
                let boxes = client.detect_faces(&bytes)?;
                image = select_face(&image, &boxes)?;
            }
            let stem = shot.file_stem().unwrap_or_default().to_string_lossy();
            let file_name = shot.file_name().unwrap_or_default().to_string_lossy();
            let shot_params = chunks.next().expect("one chunk per shot");
            for (j, p) in shot_params.iter().enumerate() {
                let name = format!("{stem}_{j:03}.png");
                write_image(&apply_transform(&image, p), id_dir.join(&name))?;
                manifest.push_str(&manifest_row(
                    &format!("{identity}/{file_name}"),
                    &format!("{identity}/{name}"),
                    p,
                ));
                written += 1;
            }
        }
        info!("augmented {} shots of {identity}", shots.len());
    }
    fsutil::atomic_write(&args.out.join(MANIFEST_FILE), manifest.as_bytes())?;
    writeln!(out, "wrote {written} images from {total} shots").map_err(stdout_err)?;
    Ok(Outcome::Success)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv"))
}

fn load_probes(path: &Path, model_id: &str) -> Result<EmbeddingSet> {
    if is_csv(path) {
        read_embeddings_csv(path, model_id)
    } else {
        read_embeddings(path)
    }
}

pub fn cmd_enroll(args: &EnrollArgs, out: &mut dyn Write) -> Result<Outcome> {
    let set = load_probes(&args.embeddings, &args.model_id)?;
    let groups = set.split_by_label().ok_or_else(|| {
        Error::Usage(format!(
            "{} has no identity labels (expected a .labels sidecar or a label column)",
            args.embeddings.display()
        ))
    })?;
    let mut gallery = Gallery::new(set.model_id());
    for (identity, samples) in &groups {
        gallery.enroll(identity, samples, args.epsilon, false)?;
        writeln!(out, "{identity},{}", samples.count()).map_err(stdout_err)?;
    }
    save_gallery(&gallery, &args.gallery)?;
    Ok(Outcome::Success)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<Outcome> {
    let gallery = load_gallery(&args.gallery)?;
    if gallery.template(&args.identity).is_none() {
        return Err(Error::UnknownIdentity(args.identity.clone()));
    }
    let probes = load_probes(&args.probes, gallery.model_id())?;
    let mut all_accepted = true;
    for i in 0..probes.count() {
        let r = gallery.verify(&args.identity, &probes.embedding(i), args.threshold)?;
        all_accepted &= r.accepted;
        writeln!(out, "{},{},{}", r.identity_id, r.distance, r.accepted).map_err(stdout_err)?;
    }
    Ok(if all_accepted {
        Outcome::Success
    } else {
        Outcome::Rejected
    })
}

pub fn cmd_identify(args: &IdentifyArgs, out: &mut dyn Write) -> Result<Outcome> {
    let gallery = load_gallery(&args.gallery)?;
    let probes = load_probes(&args.probes, gallery.model_id())?;
    for i in 0..probes.count() {
        let ranked = gallery.identify(&probes.embedding(i))?;
        let keep = args.top.unwrap_or(ranked.len());
        for (identity, distance) in ranked.into_iter().take(keep) {
            writeln!(out, "{i},{identity},{distance}").map_err(stdout_err)?;
        }
    }
    Ok(Outcome::Success)
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<Outcome> {
    let gallery = load_gallery(&args.gallery)?;
    let probes = load_probes(&args.probes, gallery.model_id())?;
    if probes.source_labels().is_none() {
        return Err(Error::Usage(format!(
            "{} has no identity labels",
            args.probes.display()
        )));
    }
    let scores = score_matrix(&gallery, &probes)?;
    let report = evaluate(&scores)?;
    export_report(&report, &args.report)?;
    info!("summary written to {}", summary_path(&args.report).display());
    writeln!(
        out,
        "EER={} at threshold={}",
        report.eer, report.threshold_at_eer
    )
    .map_err(stdout_err)?;
    Ok(Outcome::Success)
}
