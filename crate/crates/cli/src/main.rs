//! `bme`: synthetic data, label preparation, NMS, evaluation and greedy
//! ensembling of per-frame event detectors, driven by a dataset manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use bme_core::io::{
    self, CandidateEntry, ClipScoresFile, ClipsFile, EnsembleFile, Fingerprint, LabelsFile, LoadedManifest, Manifest,
    VideoEntry,
};
use bme_core::{
    aggregate_clips, dilate_labels, map_at_tolerance, predict_video, run_bme, sample_clips, temporal_nms, GroundTruth,
    NmsConfig, PipelineOrder, SamplingConfig, SearchConfig, SpotPrediction, SynthConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bme", version, about = "Boosted model ensembling for temporal event spotting")]
struct Cli {
    /// Dataset manifest (classes, videos, splits, candidate score files).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic manifest, ground truth and candidate scores.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dilate point events into per-frame labels.
    Labels {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample fixed-length strided clips from a labels file.
    Clips {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge overlapping clip predictions into one score CSV.
    Aggregate {
        #[arg(long)]
        clips: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate spots against ground truth and print the report as JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tolerance_sec: f64,
        /// Only score ground-truth videos of this manifest split.
        #[arg(long)]
        split: Option<String>,
    },
    /// Temporal NMS over score CSVs, or over one candidate on a split.
    Nms {
        /// Score CSV; repeatable. The video id is the file stem.
        #[arg(long)]
        scores: Vec<PathBuf>,
        /// Take scores of this manifest candidate instead.
        #[arg(long, requires = "split")]
        candidate: Option<String>,
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        nms: NmsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the greedy ensemble search on a validation split.
    Ensemble {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "valid")]
        split: String,
        /// `start:end:step` or a comma-separated list.
        #[arg(long, default_value = "0.1:1.0:0.1")]
        weight_grid: String,
        #[arg(long, default_value_t = 20)]
        max_iters: usize,
        #[arg(long, default_value_t = 1.0)]
        tolerance_sec: f64,
        #[arg(long, default_value_t = 0.0)]
        min_improvement: f64,
        /// Never select the same candidate twice.
        #[arg(long)]
        no_reselect: bool,
        /// Evaluation threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[command(flatten)]
        nms: NmsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a fitted ensemble to a split and write spots.
    Predict {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_enum, default_value_t = Order::EnsembleFirst)]
        order: Order,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct NmsArgs {
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 25.0)]
    frame_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
}

impl NmsArgs {
    fn config(&self) -> Result<NmsConfig> {
        let cfg = NmsConfig {
            window: self.window,
            frame_rate: self.frame_rate,
            threshold: self.threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    EnsembleFirst,
    NmsFirst,
}

impl From<Order> for PipelineOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::EnsembleFirst => PipelineOrder::EnsembleFirst,
            Order::NmsFirst => PipelineOrder::NmsFirst,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn manifest(cli_manifest: &Option<PathBuf>) -> Result<LoadedManifest> {
    let path = cli_manifest.as_deref().context("this command needs --manifest")?;
    LoadedManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out_dir, seed } => synth(&config, &out_dir, seed),
        Command::Labels { gt, delta, out } => {
            let m = manifest(&cli.manifest)?;
            let gt = io::read_gt(&gt, &m.manifest.classes)?;
            let videos = gt.videos.iter().map(|g| dilate_labels(g, delta)).collect::<Vec<_>>();
            let collisions: usize = videos.iter().map(|v| v.collisions).sum();
            if collisions > 0 {
                log::warn!("{collisions} frames fall inside more than one event window");
            }
            io::write_json(
                &out,
                &LabelsFile {
                    classes: m.manifest.classes.clone(),
                    videos,
                },
            )?;
            Ok(())
        }
        Command::Clips {
            labels,
            n,
            length,
            stride,
            seed,
            out,
        } => {
            let labels: LabelsFile = io::read_json(&labels)?;
            let delta = labels.videos.first().map_or(0, |v| v.delta);
            let cfg = SamplingConfig {
                num_clips: n,
                length,
                stride,
                delta,
                seed,
            };
            let mut clips = Vec::new();
            for (i, video) in labels.videos.iter().enumerate() {
                let per_video = SamplingConfig {
                    seed: seed.wrapping_add(i as u64),
                    ..cfg.clone()
                };
                clips.extend(sample_clips(video, &per_video)?);
            }
            io::write_json(
                &out,
                &ClipsFile {
                    classes: labels.classes,
                    config: cfg,
                    clips,
                },
            )?;
            Ok(())
        }
        Command::Aggregate { clips, out } => {
            let m = manifest(&cli.manifest)?;
            let file: ClipScoresFile = io::read_json(&clips)?;
            let k = m.manifest.classes.len();
            let matrix = aggregate_clips(&file.to_clip_scores(), file.num_frames, k)?;
            io::write_scores(&out, &matrix, &m.manifest.classes)?;
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            tolerance_sec,
            split,
        } => {
            let m = manifest(&cli.manifest)?;
            let preds = io::read_spots(&pred, &m.manifest.classes)?;
            let mut gt = io::read_gt(&gt, &m.manifest.classes)?.videos;
            if let Some(split) = split {
                let ids = m.manifest.split(&split)?;
                gt.retain(|g| ids.iter().any(|id| id == g.video_id()));
            }
            let report = map_at_tolerance(&preds, &gt, tolerance_sec)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Nms {
            scores,
            candidate,
            split,
            nms,
            out,
        } => {
            let cfg = nms.config()?;
            let m = manifest(&cli.manifest)?;
            let classes = &m.manifest.classes;
            let mut preds = Vec::new();
            if let Some(candidate) = candidate {
                ensure!(scores.is_empty(), "use either --scores or --candidate");
                let split = split.expect("clap enforces --split");
                let ids = m.manifest.split(&split)?.to_vec();
                let pool = m.load_pool(&ids)?;
                let cand = pool
                    .iter()
                    .find(|c| c.id == candidate)
                    .with_context(|| format!("manifest has no candidate {candidate}"))?;
                for id in &ids {
                    preds.push(temporal_nms(cand.scores_for(id)?, &cfg));
                }
            } else {
                ensure!(!scores.is_empty(), "give --scores or --candidate");
                for path in &scores {
                    let video_id = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .with_context(|| format!("cannot derive a video id from {}", path.display()))?;
                    let table = io::read_scores(path, video_id, Some(classes))?;
                    preds.push(temporal_nms(&table.matrix, &cfg));
                }
            }
            io::write_spots(&out, &preds, classes)?;
            Ok(())
        }
        Command::Ensemble {
            gt,
            split,
            weight_grid,
            max_iters,
            tolerance_sec,
            min_improvement,
            no_reselect,
            threads,
            nms,
            out,
        } => {
            let m = manifest(&cli.manifest)?;
            let cfg = SearchConfig {
                weight_grid: parse_grid(&weight_grid)?,
                max_iters,
                tolerance_sec,
                nms: nms.config()?,
                allow_reselection: !no_reselect,
                min_improvement,
                threads,
            };
            let ids = m.manifest.split(&split)?.to_vec();
            let gt = split_gt(&io::read_gt(&gt, &m.manifest.classes)?.videos, &ids)?;
            let pool = m.load_pool(&ids)?;
            let (spec, trace) = run_bme(&pool, &gt, &cfg)?;
            let file = EnsembleFile::new(spec, trace, Fingerprint::new(&split, &cfg, m.pool_hash()?))?;
            file.save(&out)?;
            print_trace(&file, &m.manifest);
            Ok(())
        }
        Command::Predict {
            ensemble,
            split,
            order,
            out,
        } => {
            let m = manifest(&cli.manifest)?;
            let file = EnsembleFile::load(&ensemble)?;
            file.check_pool(&m.pool_hash()?)?;
            if split == file.fingerprint.split {
                log::warn!("predicting on the split the ensemble was fitted on ({split})");
            }
            let ids = m.manifest.split(&split)?.to_vec();
            let pool = m.load_pool(&ids)?;
            let preds = ids
                .iter()
                .map(|id| predict_video(&file.spec, &pool, id, &file.fingerprint.nms, order.into()))
                .collect::<bme_core::Result<Vec<SpotPrediction>>>()?;
            io::write_spots(&out, &preds, &m.manifest.classes)?;
            Ok(())
        }
    }
}

fn split_gt(all: &[GroundTruth], ids: &[String]) -> Result<Vec<GroundTruth>> {
    ids.iter()
        .map(|id| {
            all.iter()
                .find(|g| g.video_id() == id)
                .cloned()
                .with_context(|| format!("ground truth has no video {id}"))
        })
        .collect()
}

/// `start:end:step` (inclusive) or `a,b,c`.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let tidy = |v: f64| -> f64 { format!("{v:.12}").parse().unwrap_or(v) };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step): (f64, f64, f64) = (start.trim().parse()?, end.trim().parse()?, step.trim().parse()?);
            ensure!(step > 0.0 && end >= start, "invalid weight range {text}");
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| tidy(start + i as f64 * step)).collect()
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(Into::into))
            .collect::<Result<Vec<_>>>()?,
        _ => bail!("weight grid must be `start:end:step` or a comma-separated list, got {text}"),
    };
    Ok(grid)
}

fn print_trace(file: &EnsembleFile, manifest: &Manifest) {
    println!("{:>4}  {:<24} {:>6}  {:>8}  {:>9}", "iter", "member", "w_t", "mAP", "obj");
    for r in &file.trace.iterations {
        println!(
            "{:>4}  {:<24} {:>6.3}  {:>8.4}  {:>+9.4}",
            r.iteration, r.candidate_id, r.weight, r.map, r.objective
        );
    }
    println!("stopped: {:?}", file.trace.terminal_reason);
    println!("effective weights:");
    for w in &file.effective_weights {
        let tags = manifest
            .candidates
            .iter()
            .find(|c| c.id == w.candidate_id)
            .map(|c| format!("{} {}", c.arch_tag, c.optimizer_tag))
            .unwrap_or_default();
        println!("  {:<24} {:.3}  {}", w.candidate_id, w.weight, tags.trim());
    }
}

fn synth(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: SynthConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let data = bme_core::generate(&cfg)?;
    let classes: Vec<String> = (0..cfg.num_classes).map(|c| format!("class_{c}")).collect();

    let mut candidates = Vec::with_capacity(data.candidates.len());
    for cand in &data.candidates {
        let mut scores = BTreeMap::new();
        for (video_id, matrix) in &cand.scores {
            let rel = PathBuf::from("scores").join(&cand.id).join(format!("{video_id}.csv"));
            io::write_scores(&out_dir.join(&rel), matrix, &classes)?;
            scores.insert(video_id.clone(), rel);
        }
        candidates.push(CandidateEntry {
            id: cand.id.clone(),
            arch_tag: cand.arch_tag.clone(),
            optimizer_tag: cand.optimizer_tag.clone(),
            stride_s: cand.stride_s,
            delta: cand.delta,
            scores,
        });
    }
    let mut splits = BTreeMap::new();
    splits.insert("valid".to_owned(), cfg.valid_ids());
    splits.insert("test".to_owned(), cfg.test_ids());
    let manifest = Manifest {
        classes: classes.clone(),
        videos: data
            .ground_truth
            .iter()
            .map(|g| VideoEntry {
                video_id: g.video_id().to_owned(),
                fps: g.fps(),
                num_frames: g.num_frames(),
            })
            .collect(),
        splits,
        candidates,
    };
    manifest.validate()?;
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    io::write_gt(&out_dir.join("gt.json"), &data.ground_truth, &classes)?;
    io::write_gt(&out_dir.join("gt_valid.json"), &data.split(&cfg.valid_ids()), &classes)?;
    io::write_gt(&out_dir.join("gt_test.json"), &data.split(&cfg.test_ids()), &classes)?;
    log::info!("wrote {} videos and {} candidates to {}", cfg.num_videos, data.candidates.len(), out_dir.display());
    Ok(())
}
