use std::path::PathBuf;

use circle_fusion::fusion::{SoftNmsMode, ThresholdRule};
use circle_fusion::geometry::Frame;
use clap::{Args, Parser, Subcommand};

/// Ensemble circle detections with Weighted Circle Fusion, suppress them
/// with circle NMS baselines, and evaluate with cIoU-based COCO metrics.
///
/// Every flag can also be set through a `WCF_`-prefixed environment
/// variable (`--t-score` -> `WCF_T_SCORE`).
#[derive(Debug, Parser)]
#[command(name = "wcf", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse detection files with Weighted Circle Fusion; file order is model order.
    Fuse(FuseArgs),
    /// Greedy circle NMS over all models' detections pooled per image.
    Nms(NmsArgs),
    /// Circle Soft-NMS over all models' detections pooled per image.
    Softnms(SoftNmsArgs),
    /// Evaluate detections (or fused results) against ground truth.
    Eval(EvalArgs),
    /// Check that fusion commutes with a quarter-turn rotation of the inputs.
    Rotcheck(RotcheckArgs),
    /// Generate a seeded synthetic ground truth and model ensemble.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct WcfFlags {
    /// cIoU above which a detection joins a fused circle.
    #[arg(long, default_value_t = 0.5, env = "WCF_CIOU_THRESH")]
    pub ciou_thresh: f64,
    /// Minimum mean score for a fused circle to survive.
    #[arg(long, default_value_t = 0.9, env = "WCF_T_SCORE")]
    pub t_score: f64,
    /// Minimum number of merged detections for a fused circle to survive.
    #[arg(long, default_value_t = 2, env = "WCF_T_COUNT")]
    pub t_count: usize,
    /// How the two thresholds combine: `or` keeps a circle passing either.
    #[arg(long, default_value_t = ThresholdRule::Or, env = "WCF_RULE")]
    pub rule: ThresholdRule,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerFlags {
    /// Worker threads for per-image processing (0 = all cores).
    #[arg(long, default_value_t = 1, env = "WCF_WORKERS")]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Detection files, one or more, in model order.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub wcf: WcfFlags,
    #[command(flatten)]
    pub workers: WorkerFlags,
    /// Fused output file (a manifest is written next to it).
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5, env = "WCF_CIOU_THRESH")]
    pub ciou_thresh: f64,
    #[command(flatten)]
    pub workers: WorkerFlags,
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SoftNmsArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.3, env = "WCF_CIOU_THRESH")]
    pub ciou_thresh: f64,
    /// Score decay: `linear` (s * (1 - o)) or `gaussian` (s * exp(-o^2 / sigma)).
    #[arg(long, default_value_t = SoftNmsMode::Linear, env = "WCF_MODE")]
    pub mode: SoftNmsMode,
    #[arg(long, default_value_t = 0.5, env = "WCF_SIGMA")]
    pub sigma: f64,
    /// Decayed detections scoring below this are dropped.
    #[arg(long, default_value_t = 0.001, env = "WCF_SCORE_CUT")]
    pub score_cut: f64,
    #[command(flatten)]
    pub workers: WorkerFlags,
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detection or fused-result file.
    pub dets: PathBuf,
    /// Ground-truth file.
    #[arg(long, env = "WCF_GT")]
    pub gt: PathBuf,
    /// Report file.
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RotcheckArgs {
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Frame covering every circle center, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_frame, env = "WCF_FRAME")]
    pub frame: Frame,
    #[command(flatten)]
    pub wcf: WcfFlags,
    /// Report file.
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0, env = "WCF_SEED")]
    pub seed: u64,
    #[arg(long, value_parser = parse_frame, default_value = "512x512", env = "WCF_FRAME")]
    pub frame: Frame,
    #[arg(long, default_value_t = 20, env = "WCF_IMAGES")]
    pub images: usize,
    #[arg(long, default_value_t = 10, env = "WCF_GT_PER_IMAGE")]
    pub gt_per_image: usize,
    #[arg(long, default_value_t = 5, env = "WCF_MODELS")]
    pub models: usize,
    /// Center jitter standard deviation, pixels.
    #[arg(long, default_value_t = 1.0, env = "WCF_JITTER")]
    pub jitter: f64,
    /// Relative radius jitter half-width.
    #[arg(long, default_value_t = 0.05, env = "WCF_RADIUS_JITTER")]
    pub radius_jitter: f64,
    #[arg(long, default_value_t = 0.9, env = "WCF_DETECT_PROB")]
    pub detect_prob: f64,
    /// Mean false positives per image per model.
    #[arg(long, default_value_t = 2.0, env = "WCF_FP_RATE")]
    pub fp_rate: f64,
    /// False-positive score range LO:HI.
    #[arg(long, value_parser = parse_range, default_value = "0.3:0.8", env = "WCF_FP_SCORE")]
    pub fp_score: (f64, f64),
    /// True-positive score range LO:HI.
    #[arg(long, value_parser = parse_range, default_value = "0.6:1", env = "WCF_TP_SCORE")]
    pub tp_score: (f64, f64),
    /// Radius range LO:HI, pixels.
    #[arg(long, value_parser = parse_range, default_value = "15:30", env = "WCF_RADIUS")]
    pub radius: (f64, f64),
    /// Output directory.
    #[arg(long, env = "WCF_OUT")]
    pub out: PathBuf,
}

pub fn parse_frame(s: &str) -> Result<Frame, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w: f64 = w.trim().parse().map_err(|_| format!("bad width `{w}`"))?;
    let h: f64 = h.trim().parse().map_err(|_| format!("bad height `{h}`"))?;
    Frame::new(w, h).map_err(|e| e.to_string())
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn frame_and_range_parsing() {
        assert_eq!(parse_frame("640x480").unwrap(), Frame::new(640.0, 480.0).unwrap());
        assert!(parse_frame("640").is_err());
        assert!(parse_frame("0x10").is_err());
        assert_eq!(parse_range("0.3:0.8").unwrap(), (0.3, 0.8));
        assert!(parse_range("0,3:0,8").is_err());
    }

    #[test]
    fn fuse_defaults() {
        let cli = Cli::try_parse_from(["wcf", "fuse", "a.jsonl", "--out", "o.jsonl"]).unwrap();
        let Command::Fuse(args) = cli.command else { panic!() };
        assert_eq!(args.wcf.ciou_thresh, 0.5);
        assert_eq!(args.wcf.t_score, 0.9);
        assert_eq!(args.wcf.t_count, 2);
        assert_eq!(args.wcf.rule, ThresholdRule::Or);
    }

    #[test]
    fn fuse_requires_inputs_and_rejects_unknown_flags() {
        assert!(Cli::try_parse_from(["wcf", "fuse", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from(["wcf", "fuse", "a", "--out", "o", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["wcf", "fuse", "a", "--out", "o", "--rule", "xor"]).is_err());
    }
}
