//! Two-branch model.
//!
//! The base branch embeds the concatenated streams with a temporal
//! convolution and classifies every snippet, giving the temporal class
//! activation sequence (TCAS, `T×C`). The guidance branch runs `K` graph
//! convolutions over the guidance stream, concatenates the input back on, and
//! maps each snippet to a motionness score in `(ε, 1−ε)`.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticVideo;
use crate::error::{Error, Result};
use crate::motiongraph::{GraphMode, MotionGraph, Projections};
use crate::numcore::{Tape, Tensor2, Var};
use crate::rng::SeedTree;

pub use checkpoint::{load_checkpoint, save_checkpoint};

/// Motionness is clamped to `(MOTIONNESS_EPS, 1 − MOTIONNESS_EPS)`.
pub const MOTIONNESS_EPS: f64 = 1e-6;

/// Which stream feeds the guidance branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceInput {
    Motion,
    Appearance,
    Both,
}

impl GuidanceInput {
    pub fn width(self, d: usize) -> usize {
        match self {
            GuidanceInput::Both => 2 * d,
            _ => d,
        }
    }

    pub fn select(self, video: &SyntheticVideo) -> Result<Tensor2> {
        self.select_streams(&video.appearance, &video.motion)
    }

    pub fn select_streams(self, appearance: &Tensor2, motion: &Tensor2) -> Result<Tensor2> {
        match self {
            GuidanceInput::Motion => Ok(motion.clone()),
            GuidanceInput::Appearance => Ok(appearance.clone()),
            GuidanceInput::Both => appearance.hcat(motion),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Feature dimension `d` of each stream.
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Embedding width; 0 means `2·d`.
    pub hidden: usize,
    pub gcn_layers: usize,
    /// Temporal convolution kernel (odd).
    pub kernel: usize,
    pub guidance: GuidanceInput,
    /// ReLU between graph-convolution layers.
    pub gcn_relu: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            num_classes: 5,
            hidden: 0,
            gcn_layers: 2,
            kernel: 3,
            guidance: GuidanceInput::Motion,
            gcn_relu: true,
        }
    }
}

impl NetworkConfig {
    pub fn hidden_width(&self) -> usize {
        if self.hidden == 0 {
            2 * self.feature_dim
        } else {
            self.hidden
        }
    }

    pub fn guidance_width(&self) -> usize {
        self.guidance.width(self.feature_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("feature_dim and num_classes must be >= 1".into()));
        }
        if self.gcn_layers == 0 {
            return Err(Error::Config("gcn_layers must be >= 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

/// Every learnable tensor of the model plus the fixed graph projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_w: Tensor2,
    pub embed_b: Tensor2,
    pub cls_w: Tensor2,
    pub cls_b: Tensor2,
    pub gcn: Vec<Tensor2>,
    pub mot_w: Tensor2,
    pub mot_b: Tensor2,
    pub projections: Projections,
}

impl ModelParams {
    /// Gaussian weights with std `1/√fan_in`, zero biases, projections at
    /// identity plus small noise.
    pub fn init(cfg: &NetworkConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.feature_dim;
        let h = cfg.hidden_width();
        let g = cfg.guidance_width();
        let k = cfg.kernel;
        let mut rng = seeds.stream("params", 0);
        let mut gauss = |rows: usize, cols: usize| Tensor2::randn(rows, cols, 1.0 / (rows as f64).sqrt(), &mut rng);

        let embed_w = gauss(k * 2 * d, h);
        let cls_w = gauss(k * h, cfg.num_classes);
        let gcn = (0..cfg.gcn_layers).map(|_| gauss(g, g)).collect();
        let mot_w = gauss(k * 2 * g, 1);
        let projections = Projections::perturbed_identity(g, 0.01, &mut seeds.stream("projections", 0));
        Ok(Self {
            embed_w,
            embed_b: Tensor2::zeros(1, h),
            cls_w,
            cls_b: Tensor2::zeros(1, cfg.num_classes),
            gcn,
            mot_w,
            mot_b: Tensor2::zeros(1, 1),
            projections,
        })
    }

    /// Parameter names in [`ModelParams::trainable`] order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = vec!["embed.weight".to_string(), "embed.bias".into(), "cls.weight".into(), "cls.bias".into()];
        names.extend((0..self.gcn.len()).map(|i| format!("gcn.{i}.weight")));
        names.push("mot.weight".into());
        names.push("mot.bias".into());
        names
    }

    /// Tensors updated by the optimizer. Projections are excluded: edge
    /// selection is a hard threshold, so no gradient reaches them.
    pub fn trainable(&self) -> Vec<&Tensor2> {
        let mut v = vec![&self.embed_w, &self.embed_b, &self.cls_w, &self.cls_b];
        v.extend(self.gcn.iter());
        v.push(&self.mot_w);
        v.push(&self.mot_b);
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v = vec![&mut self.embed_w, &mut self.embed_b, &mut self.cls_w, &mut self.cls_b];
        v.extend(self.gcn.iter_mut());
        v.push(&mut self.mot_w);
        v.push(&mut self.mot_b);
        v
    }

    /// Replaces the trainable tensors, in [`ModelParams::trainable`] order.
    pub fn set_trainable(&mut self, values: &[Tensor2]) -> Result<()> {
        let slots = self.trainable_mut();
        if slots.len() != values.len() {
            return Err(Error::dim("set_trainable", format!("{} tensors for {} slots", values.len(), slots.len())));
        }
        for (i, (slot, v)) in slots.into_iter().zip(values).enumerate() {
            if !slot.same_shape(v) {
                return Err(Error::dim("set_trainable", format!("tensor {i}: {:?} vs {:?}", v.shape(), slot.shape())));
            }
            *slot = v.clone();
        }
        Ok(())
    }

    /// All named tensors, including projections, for checkpointing.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor2)> {
        let mut out: Vec<(String, &Tensor2)> = self.trainable_names().into_iter().zip(self.trainable()).collect();
        out.push(("proj.w1".into(), &self.projections.w1));
        out.push(("proj.w2".into(), &self.projections.w2));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Shapes implied by `cfg`, for validating a loaded checkpoint.
    pub fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        let d = cfg.feature_dim;
        let h = cfg.hidden_width();
        let g = cfg.guidance_width();
        let k = cfg.kernel;
        let mut expected = vec![(k * 2 * d, h), (1, h), (k * h, cfg.num_classes), (1, cfg.num_classes)];
        expected.extend(std::iter::repeat((g, g)).take(cfg.gcn_layers));
        expected.push((k * 2 * g, 1));
        expected.push((1, 1));
        expected.push((g, g));
        expected.push((g, g));
        let actual: Vec<(usize, usize)> = self.named_tensors().iter().map(|(_, t)| t.shape()).collect();
        if actual != expected {
            return Err(Error::dim(
                "checkpoint",
                format!("parameter shapes {actual:?} do not match configuration {expected:?}"),
            ));
        }
        Ok(())
    }
}

/// Tape plus the handles a loss or readout needs.
pub struct ForwardOutput {
    pub tape: Tape,
    /// `T×C`, non-negative.
    pub tcas: Var,
    /// `T×1`, inside `(ε, 1−ε)`.
    pub motionness: Var,
    /// Guidance features after the shortcut, before the motionness head.
    pub guidance_features: Var,
    /// Leaves for [`ModelParams::trainable`], same order.
    pub params: Vec<Var>,
}

impl ForwardOutput {
    pub fn tcas(&self) -> &Tensor2 {
        self.tape.value(self.tcas)
    }

    pub fn motionness(&self) -> Vec<f64> {
        self.tape.value(self.motionness).data().to_vec()
    }
}

struct ParamVars {
    embed_w: Var,
    embed_b: Var,
    cls_w: Var,
    cls_b: Var,
    gcn: Vec<Var>,
    mot_w: Var,
    mot_b: Var,
}

impl ParamVars {
    fn register(tape: &mut Tape, p: &ModelParams) -> Self {
        Self {
            embed_w: tape.leaf(p.embed_w.clone()),
            embed_b: tape.leaf(p.embed_b.clone()),
            cls_w: tape.leaf(p.cls_w.clone()),
            cls_b: tape.leaf(p.cls_b.clone()),
            gcn: p.gcn.iter().map(|w| tape.leaf(w.clone())).collect(),
            mot_w: tape.leaf(p.mot_w.clone()),
            mot_b: tape.leaf(p.mot_b.clone()),
        }
    }

    fn ordered(&self) -> Vec<Var> {
        let mut v = vec![self.embed_w, self.embed_b, self.cls_w, self.cls_b];
        v.extend(self.gcn.iter().copied());
        v.push(self.mot_w);
        v.push(self.mot_b);
        v
    }
}

fn temporal_conv(tape: &mut Tape, x: Var, w: Var, b: Var, kernel: usize) -> Result<Var> {
    let unfolded = tape.unfold(x, kernel)?;
    let y = tape.matmul(unfolded, w)?;
    tape.add_row(y, b)
}

fn base_branch(tape: &mut Tape, appearance: Var, motion: Var, pv: &ParamVars, kernel: usize) -> Result<Var> {
    let x = tape.concat_cols(appearance, motion)?;
    let e = temporal_conv(tape, x, pv.embed_w, pv.embed_b, kernel)?;
    let e = tape.relu(e);
    let a = temporal_conv(tape, e, pv.cls_w, pv.cls_b, kernel)?;
    Ok(tape.relu(a))
}

/// Returns `(motionness, pre-head features)`.
fn guidance_branch(
    tape: &mut Tape,
    input: Var,
    graph: &MotionGraph,
    pv: &ParamVars,
    cfg: &NetworkConfig,
) -> Result<(Var, Var)> {
    let t = tape.value(input).rows();
    if graph.nodes != t || graph.adjacency.shape() != (t, t) {
        return Err(Error::dim(
            "guidance_forward",
            format!("graph over {} nodes, adjacency {:?}, input T={t}", graph.nodes, graph.adjacency.shape()),
        ));
    }
    let adj = match graph.mode {
        GraphMode::Mlp => None,
        _ => Some(tape.leaf(graph.adjacency.clone())),
    };
    let mut x = input;
    for (layer, &w) in pv.gcn.iter().enumerate() {
        let mixed = match adj {
            Some(g) => tape.matmul(g, x)?,
            None => x,
        };
        x = tape.matmul(mixed, w)?;
        let last = layer + 1 == pv.gcn.len();
        if cfg.gcn_relu && !last {
            x = tape.relu(x);
        }
    }
    let features = tape.concat_cols(x, input)?;
    let logits = temporal_conv(tape, features, pv.mot_w, pv.mot_b, cfg.kernel)?;
    let s = tape.sigmoid(logits);
    Ok((tape.clamp(s, MOTIONNESS_EPS, 1.0 - MOTIONNESS_EPS), features))
}

/// Runs both branches on one tape.
pub fn full_forward(
    appearance: &Tensor2,
    motion: &Tensor2,
    graph: &MotionGraph,
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<ForwardOutput> {
    let t = motion.rows();
    if t == 0 {
        return Err(Error::dim("full_forward", "video has no snippets"));
    }
    if appearance.shape() != motion.shape() || motion.cols() != cfg.feature_dim {
        return Err(Error::dim(
            "full_forward",
            format!(
                "appearance {:?}, motion {:?}, configured d={}",
                appearance.shape(),
                motion.shape(),
                cfg.feature_dim
            ),
        ));
    }
    let guide_input = cfg.guidance.select_streams(appearance, motion)?;

    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let app = tape.leaf(appearance.clone());
    let mot = tape.leaf(motion.clone());
    let tcas = base_branch(&mut tape, app, mot, &pv, cfg.kernel)?;
    let guide = tape.leaf(guide_input);
    let (motionness, guidance_features) = guidance_branch(&mut tape, guide, graph, &pv, cfg)?;
    Ok(ForwardOutput {
        params: pv.ordered(),
        tape,
        tcas,
        motionness,
        guidance_features,
    })
}

/// Convenience wrapper over [`full_forward`] for a corpus video.
pub fn forward_video(
    video: &SyntheticVideo,
    graph: &MotionGraph,
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<ForwardOutput> {
    full_forward(&video.appearance, &video.motion, graph, params, cfg)
}

/// TCAS only, on a fresh tape.
pub fn base_forward(appearance: &Tensor2, motion: &Tensor2, params: &ModelParams, kernel: usize) -> Result<Tensor2> {
    if appearance.shape() != motion.shape() || motion.rows() == 0 {
        return Err(Error::dim("base_forward", format!("{:?} vs {:?}", appearance.shape(), motion.shape())));
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let app = tape.leaf(appearance.clone());
    let mot = tape.leaf(motion.clone());
    let tcas = base_branch(&mut tape, app, mot, &pv, kernel)?;
    Ok(tape.value(tcas).clone())
}

/// Motionness only, on a fresh tape.
pub fn guidance_forward(
    input: &Tensor2,
    graph: &MotionGraph,
    params: &ModelParams,
    cfg: &NetworkConfig,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let x = tape.leaf(input.clone());
    let (m, _) = guidance_branch(&mut tape, x, graph, &pv, cfg)?;
    Ok(tape.value(m).data().to_vec())
}

/// Draws a random parameter set, for tests and probes.
pub fn random_params<R: Rng>(cfg: &NetworkConfig, rng: &mut R) -> Result<ModelParams> {
    let seed: u64 = rng.gen();
    ModelParams::init(cfg, &SeedTree::new(seed))
}
