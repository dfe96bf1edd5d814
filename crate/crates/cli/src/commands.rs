use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use circle_fusion::dataio::{self, DetectionSet};
use circle_fusion::fusion::{
    circle_nms, circle_soft_nms, wcf, Detection, FusedCircle, SoftNmsConfig, WcfConfig,
};
use circle_fusion::synth::{self, SynthConfig, SynthScenario};
use circle_fusion::evaluate;
use rayon::prelude::*;
use serde_json::json;

use crate::args::{
    Command, EvalArgs, FuseArgs, NmsArgs, RotcheckArgs, SoftNmsArgs, SynthArgs, WcfFlags,
    WorkerFlags,
};
use crate::manifest::{manifest_path, RunManifest};
use crate::rotcheck;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The command ran but its check did not pass (rotcheck).
    CheckFailed,
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Fuse(args) => cmd_fuse(&args).map(|_| Outcome::Success),
        Command::Nms(args) => cmd_nms(&args).map(|_| Outcome::Success),
        Command::Softnms(args) => cmd_softnms(&args).map(|_| Outcome::Success),
        Command::Eval(args) => cmd_eval(&args).map(|_| Outcome::Success),
        Command::Rotcheck(args) => cmd_rotcheck(&args).map(|r| {
            if r.pass {
                Outcome::Success
            } else {
                Outcome::CheckFailed
            }
        }),
        Command::Synth(args) => cmd_synth(&args).map(|_| Outcome::Success),
    }
}

impl WcfFlags {
    pub fn config(&self) -> Result<WcfConfig> {
        let cfg = WcfConfig {
            ciou_threshold: self.ciou_thresh,
            t_score: self.t_score,
            t_count: self.t_count,
            rule: self.rule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "ciou_thresh": self.ciou_thresh,
            "t_score": self.t_score,
            "t_count": self.t_count,
            "rule": self.rule.to_string(),
        })
    }
}

impl WorkerFlags {
    /// Runs `f` on every item on a pool of the requested size, keeping
    /// input order in the result.
    fn map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .context("starting worker pool")?;
        pool.install(|| items.par_iter().map(&f).collect())
    }
}

/// Detection files loaded side by side. Model sets are keyed by
/// (file position, model id), so repeating a file adds a second model.
struct Inputs {
    files: Vec<DetectionSet>,
    image_ids: Vec<String>,
}

impl Inputs {
    fn load(paths: &[impl AsRef<Path>], manifest: &mut RunManifest) -> Result<Self> {
        if paths.is_empty() {
            bail!("at least one detection file is required");
        }
        let mut files = Vec::with_capacity(paths.len());
        for path in paths {
            let path = path.as_ref();
            files.push(dataio::load_detections(path)?);
            manifest.input(path)?;
        }
        let mut image_ids: Vec<String> = files
            .iter()
            .flat_map(|f| f.image_ids().map(str::to_string))
            .collect();
        image_ids.sort();
        image_ids.dedup();

        for (path, file) in paths.iter().zip(&files) {
            for model in file.model_order() {
                manifest.model_order.push(json!({
                    "file": path.as_ref().display().to_string(),
                    "model_id": model,
                }));
            }
        }
        Ok(Inputs { files, image_ids })
    }

    fn model_sets(&self, image_id: &str) -> Vec<Vec<Detection>> {
        self.files.iter().flat_map(|f| f.model_sets(image_id)).collect()
    }
}

fn finish(manifest: &mut RunManifest, out: &Path) -> Result<()> {
    manifest.output(out)?;
    manifest.write(&manifest_path(out))
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<Vec<FusedCircle>> {
    let cfg = args.wcf.config()?;
    let mut manifest = RunManifest::new("fuse", args.wcf.to_json());
    let inputs = Inputs::load(&args.inputs, &mut manifest)?;

    let per_image = args
        .workers
        .map(&inputs.image_ids, |id| Ok(wcf(&inputs.model_sets(id), &cfg)?))?;
    let fused: Vec<FusedCircle> = per_image.into_iter().flatten().collect();

    dataio::write_fused(&args.out, &fused)?;
    finish(&mut manifest, &args.out)?;
    eprintln!(
        "fused {} images from {} model sets into {} circles",
        inputs.image_ids.len(),
        manifest.model_order.len(),
        fused.len()
    );
    Ok(fused)
}

fn suppress(
    command: &str,
    input: &Path,
    out: &Path,
    workers: &WorkerFlags,
    config: serde_json::Value,
    f: impl Fn(&[Detection]) -> Result<Vec<Detection>> + Sync + Send,
) -> Result<Vec<Detection>> {
    let mut manifest = RunManifest::new(command, config);
    let inputs = Inputs::load(&[input], &mut manifest)?;
    let per_image = workers.map(&inputs.image_ids, |id| {
        let pooled: Vec<Detection> = inputs.model_sets(id).into_iter().flatten().collect();
        f(&pooled)
    })?;
    let kept: Vec<Detection> = per_image.into_iter().flatten().collect();
    dataio::write_detections(out, &kept)?;
    finish(&mut manifest, out)?;
    Ok(kept)
}

pub fn cmd_nms(args: &NmsArgs) -> Result<Vec<Detection>> {
    let t = args.ciou_thresh;
    if !(0.0..=1.0).contains(&t) {
        bail!("ciou threshold {t} outside [0, 1]");
    }
    suppress(
        "nms",
        &args.input,
        &args.out,
        &args.workers,
        json!({ "ciou_thresh": t }),
        |dets| Ok(circle_nms(dets, t)),
    )
}

pub fn cmd_softnms(args: &SoftNmsArgs) -> Result<Vec<Detection>> {
    let cfg = SoftNmsConfig {
        ciou_threshold: args.ciou_thresh,
        mode: args.mode,
        sigma: args.sigma,
        final_score_cut: args.score_cut,
    };
    cfg.validate()?;
    suppress(
        "softnms",
        &args.input,
        &args.out,
        &args.workers,
        json!({
            "ciou_thresh": cfg.ciou_threshold,
            "mode": cfg.mode.to_string(),
            "sigma": cfg.sigma,
            "score_cut": cfg.final_score_cut,
        }),
        |dets| Ok(circle_soft_nms(dets, &cfg)?),
    )
}

pub fn cmd_eval(args: &EvalArgs) -> Result<circle_fusion::EvalReport> {
    let mut manifest = RunManifest::new("eval", json!({ "max_dets": circle_fusion::evaluation::MAX_DETS }));
    let dets = dataio::load_scored(&args.dets)?;
    manifest.input(&args.dets)?;
    let gts = dataio::load_ground_truth(&args.gt)?;
    manifest.input(&args.gt)?;

    let report = evaluate(&dets, &gts);
    dataio::write_report(&args.out, &report)?;
    finish(&mut manifest, &args.out)?;
    println!(
        "mAP(0.5:0.95) {:.4}  mAP@0.5 {:.4}  mAP@0.75 {:.4}  AR(0.5:0.95) {:.4}  TP {} FP {} FN {}",
        report.map_50_95,
        report.map_50,
        report.map_75,
        report.ar_50_95,
        report.matched_counts.tp,
        report.matched_counts.fp,
        report.matched_counts.fn_
    );
    Ok(report)
}

pub fn cmd_rotcheck(args: &RotcheckArgs) -> Result<rotcheck::RotationReport> {
    let cfg = args.wcf.config()?;
    let mut config = args.wcf.to_json();
    config["frame"] = json!({ "width": args.frame.width(), "height": args.frame.height() });
    let mut manifest = RunManifest::new("rotcheck", config);
    let inputs = Inputs::load(&args.inputs, &mut manifest)?;

    let images: Vec<Vec<Vec<Detection>>> = inputs.image_ids.iter().map(|id| inputs.model_sets(id)).collect();
    let report = rotcheck::check(images.iter().map(Vec::as_slice), &args.frame, &cfg)?;

    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    finish(&mut manifest, &args.out)?;
    println!(
        "{}: {} images, {} fused circles, max discrepancy center {:e} px, radius {:e} px, score {:e}",
        if report.pass { "PASS" } else { "FAIL" },
        report.images,
        report.fused_entries,
        report.max_center_discrepancy,
        report.max_radius_discrepancy,
        report.max_score_discrepancy
    );
    Ok(report)
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            n_images: self.images,
            gt_per_image: self.gt_per_image,
            n_models: self.models,
            pos_jitter_sigma: self.jitter,
            radius_jitter_frac: self.radius_jitter,
            detect_prob: self.detect_prob,
            fp_per_image_rate: self.fp_rate,
            fp_score_range: self.fp_score,
            tp_score_range: self.tp_score,
            radius_range: self.radius,
            seed: self.seed,
            frame: self.frame,
        }
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SynthScenario> {
    let cfg = args.config();
    let scenario = synth::generate(&cfg)?;
    let dir = &args.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut manifest = RunManifest::new("synth", serde_json::to_value(&cfg)?);
    let gt_path = dir.join("gt.jsonl");
    dataio::write_ground_truth(&gt_path, &scenario.ground_truth)?;
    manifest.output(&gt_path)?;
    for (m, dets) in scenario.detections.iter().enumerate() {
        let path = dir.join(format!("{}.jsonl", SynthScenario::model_id(m)));
        dataio::write_detections(&path, dets)?;
        manifest.output(&path)?;
        manifest.model_order.push(json!(SynthScenario::model_id(m)));
    }
    let meta_path = dir.join("metadata.json");
    let mut meta = serde_json::to_string_pretty(&scenario.metadata)?;
    meta.push('\n');
    fs::write(&meta_path, meta).with_context(|| format!("writing {}", meta_path.display()))?;
    manifest.output(&meta_path)?;
    manifest.write(&dir.join("manifest.json"))?;
    eprintln!(
        "wrote {} images x {} models to {}",
        cfg.n_images,
        cfg.n_models,
        dir.display()
    );
    Ok(scenario)
}
