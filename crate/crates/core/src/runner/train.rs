use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::datagen::{Corpus, SyntheticVideo};
use crate::error::{Error, Result};
use crate::motiongraph::{build_graph, MotionGraph};
use crate::network::{full_forward, save_checkpoint, ModelParams, NetworkConfig};
use crate::numcore::{AdamConfig, AdamState, Tensor2};
use crate::objective::{video_loss, LossConfig};
use crate::rng::SeedTree;

/// Loss and trainable-parameter gradients for one set of stream features.
pub fn loss_and_gradients(
    appearance: &Tensor2,
    motion: &Tensor2,
    label: &[bool],
    graph: &MotionGraph,
    params: &ModelParams,
    net: &NetworkConfig,
    loss_cfg: &LossConfig,
) -> Result<(f64, Vec<Tensor2>)> {
    let mut out = full_forward(appearance, motion, graph, params, net)?;
    let loss = video_loss(&mut out.tape, out.tcas, out.motionness, label, loss_cfg)?;
    let value = out.tape.scalar_value(loss);
    let mut grads = out.tape.backward(loss)?;
    let tensors = out
        .params
        .iter()
        .zip(params.trainable())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor2::zeros(p.rows(), p.cols())))
        .collect();
    Ok((value, tensors))
}

/// [`loss_and_gradients`] for a corpus video; a non-finite loss or gradient
/// names the video.
pub fn video_gradients(
    video: &SyntheticVideo,
    graph: &MotionGraph,
    params: &ModelParams,
    cfg: &ExperimentConfig,
) -> Result<(f64, Vec<Tensor2>)> {
    let (value, grads) = loss_and_gradients(
        &video.appearance,
        &video.motion,
        &video.label,
        graph,
        params,
        &cfg.network(),
        &cfg.loss,
    )?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value} on video {}", video.id)));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter {i} on video {}", video.id)));
    }
    Ok((value, grads))
}

/// Builds the guidance graph of every video once.
pub fn build_graphs(videos: &[SyntheticVideo], params: &ModelParams, cfg: &ExperimentConfig) -> Result<Vec<MotionGraph>> {
    videos
        .par_iter()
        .map(|v| {
            let features = cfg.guidance.select(v)?;
            build_graph(&features, &params.projections, &cfg.graph)
        })
        .collect()
}

/// Mini-batch training state over a fixed training split.
pub struct Trainer<'a> {
    cfg: ExperimentConfig,
    videos: &'a [SyntheticVideo],
    graphs: Vec<MotionGraph>,
    params: ModelParams,
    adam: AdamState,
    seeds: SeedTree,
    epoch: usize,
    curve: Vec<(usize, f64)>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &ExperimentConfig, corpus: &'a Corpus) -> Result<Self> {
        cfg.validate_components()?;
        let net = cfg.network();
        check_corpus(&net, corpus)?;
        if corpus.train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let seeds = SeedTree::new(cfg.training.seed);
        let params = ModelParams::init(&net, &seeds.child("model", 0))?;
        let graphs = build_graphs(&corpus.train, &params, cfg)?;
        let adam = AdamState::new(AdamConfig::with_lr(cfg.training.learning_rate), &params.trainable());
        Ok(Self {
            cfg: cfg.clone(),
            videos: &corpus.train,
            graphs,
            params,
            adam,
            seeds,
            epoch: 0,
            curve: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// `(epoch, mean per-video loss)` for every finished epoch.
    pub fn loss_curve(&self) -> &[(usize, f64)] {
        &self.curve
    }

    pub fn steps(&self) -> u64 {
        self.adam.step_count()
    }

    /// One pass over the shuffled training split; returns the mean loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.videos.len()).collect();
        order.shuffle(&mut self.seeds.stream("shuffle", self.epoch as u64));

        let mut total = 0.0;
        for batch in order.chunks(self.cfg.training.batch_size) {
            let params = &self.params;
            let results: Vec<Result<(f64, Vec<Tensor2>)>> = batch
                .par_iter()
                .map(|&i| video_gradients(&self.videos[i], &self.graphs[i], params, &self.cfg))
                .collect();
            // Merge in batch order so the sum does not depend on scheduling.
            let mut acc: Option<Vec<Tensor2>> = None;
            for r in results {
                let (loss, grads) = r?;
                total += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.axpy(1.0, g)),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale(scale));
            self.adam.step(&mut self.params.trainable_mut(), &mut grads)?;
        }
        self.epoch += 1;
        let mean = total / self.videos.len() as f64;
        self.curve.push((self.epoch, mean));
        Ok(mean)
    }

    pub fn run_epochs(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            self.run_epoch()?;
        }
        Ok(())
    }
}

fn check_corpus(net: &NetworkConfig, corpus: &Corpus) -> Result<()> {
    for v in corpus.videos() {
        if v.feature_dim() != net.feature_dim || v.num_classes() != net.num_classes {
            return Err(Error::dim(
                "train",
                format!(
                    "video {} has d={}, C={}; model expects d={}, C={}",
                    v.id,
                    v.feature_dim(),
                    v.num_classes(),
                    net.feature_dim,
                    net.num_classes
                ),
            ));
        }
    }
    Ok(())
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_curve: Vec<(usize, f64)>,
}

/// Trains for `cfg.training.epochs` epochs.
pub fn train(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut trainer = Trainer::new(cfg, corpus)?;
    trainer.run_epochs(cfg.training.epochs)?;
    let loss_curve = trainer.loss_curve().to_vec();
    Ok(TrainOutcome {
        params: trainer.into_params(),
        loss_curve,
    })
}

pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[(usize, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (epoch, loss) in curve {
        w.write_record([epoch.to_string(), loss.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `checkpoint/`, `loss_curve.csv` and `config.json` under `out`.
pub fn save_training(out: impl AsRef<Path>, cfg: &ExperimentConfig, outcome: &TrainOutcome) -> Result<()> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_checkpoint(out.join("checkpoint"), &outcome.params, &cfg.network())?;
    write_loss_curve(out.join("loss_curve.csv"), &outcome.loss_curve)?;
    let path = out.join("config.json");
    fs::write(&path, cfg.to_json()?).map_err(|e| Error::io(&path, e))
}
