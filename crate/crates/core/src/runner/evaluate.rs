use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::datagen::SyntheticVideo;
use crate::error::{Error, Result};
use crate::localization::{localize, write_proposals_csv, Proposal};
use crate::metrics::{kl_guidance, Detection, DetectionSet, EvalReport, GroundTruth};
use crate::motiongraph::build_graph;
use crate::network::{base_forward, guidance_forward, ModelParams, NetworkConfig};
use crate::objective::LossKind;

/// Per-video inference output.
#[derive(Debug, Clone)]
pub struct VideoPrediction {
    pub video_id: String,
    pub proposals: Vec<Proposal>,
    pub motionness: Vec<f64>,
}

pub fn predict_video(
    video: &SyntheticVideo,
    params: &ModelParams,
    net: &NetworkConfig,
    cfg: &ExperimentConfig,
) -> Result<VideoPrediction> {
    let tcas = base_forward(&video.appearance, &video.motion, params, net.kernel)?;
    let proposals = localize(&tcas, cfg.loss.ratio, &cfg.inference);
    let guide = net.guidance.select(video)?;
    let graph = build_graph(&guide, &params.projections, &cfg.graph)?;
    let motionness = guidance_forward(&guide, &graph, params, net)?;
    Ok(VideoPrediction {
        video_id: video.id.clone(),
        proposals,
        motionness,
    })
}

/// Report plus the raw per-video predictions.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<VideoPrediction>,
}

/// Localizes every video and scores the proposals against the intervals.
///
/// KL of the guidance sequence is reported only when the model was trained
/// with the motion-guided loss; otherwise that branch received no signal.
pub fn evaluate(
    params: &ModelParams,
    net: &NetworkConfig,
    videos: &[SyntheticVideo],
    cfg: &ExperimentConfig,
) -> Result<Evaluation> {
    params.check_shapes(net)?;
    cfg.inference.validate()?;
    let predictions: Vec<VideoPrediction> = videos
        .par_iter()
        .map(|v| predict_video(v, params, net, cfg))
        .collect::<Result<_>>()?;

    let mut set = DetectionSet::default();
    for (i, (video, pred)) in videos.iter().zip(&predictions).enumerate() {
        for iv in &video.intervals {
            set.add_ground_truth(
                iv.class,
                GroundTruth {
                    video: i,
                    start: iv.start,
                    end: iv.end,
                },
            );
        }
        for p in &pred.proposals {
            set.add_detection(p.class, Detection::from_proposal(i, p));
        }
    }
    let mut report = set.report(&cfg.eval_iou);

    if cfg.loss.kind == LossKind::MotionGuided && !videos.is_empty() {
        let mut total = 0.0;
        for (video, pred) in videos.iter().zip(&predictions) {
            total += kl_guidance(&pred.motionness, &video.action_mask())?;
        }
        report.kl.insert(guidance_name(net), total / videos.len() as f64);
    }
    Ok(Evaluation { report, predictions })
}

pub fn guidance_name(net: &NetworkConfig) -> String {
    serde_json::to_value(net.guidance)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{:?}", net.guidance))
}

/// Writes `report.json`, `report.csv` and `proposals.csv` under `out`.
pub fn save_evaluation(out: impl AsRef<Path>, eval: &Evaluation) -> Result<()> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    eval.report.write_json(out.join("report.json"))?;
    eval.report.write_csv(out.join("report.csv"))?;
    let rows: Vec<(String, Proposal)> = eval
        .predictions
        .iter()
        .flat_map(|p| p.proposals.iter().map(move |q| (p.video_id.clone(), *q)))
        .collect();
    write_proposals_csv(out.join("proposals.csv"), &rows)
}
