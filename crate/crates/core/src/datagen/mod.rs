//! Synthetic two-stream corpus with known ground truth.
//!
//! Inside an action interval of class `c` both streams sit near that class's
//! prototypes. Background snippets carry near-zero motion and a shared
//! background appearance, except for confounder snippets: they borrow the
//! appearance prototype of one of the video's classes while their motion
//! stays at background level.

mod io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor2;
use crate::rng::SeedTree;

pub use io::{load_corpus, save_corpus, RECORD_MAGIC};

/// Norm every prototype is scaled to.
pub const PROTOTYPE_NORM: f64 = 3.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 100;

/// Action interval with an inclusive snippet range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub id: String,
    pub appearance: Tensor2,
    pub motion: Tensor2,
    pub intervals: Vec<Interval>,
    /// Multi-hot class label.
    pub label: Vec<bool>,
    /// Background snippets whose appearance mimics an action class.
    pub confounders: Vec<usize>,
}

impl SyntheticVideo {
    pub fn len(&self) -> usize {
        self.motion.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.motion.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.label.len()
    }

    pub fn label_f64(&self) -> Vec<f64> {
        self.label.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Snippets covered by any interval.
    pub fn action_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for iv in &self.intervals {
            mask[iv.start..=iv.end].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn is_background(&self, t: usize) -> bool {
        !self.intervals.iter().any(|iv| iv.contains(t))
    }

    /// Checks the structural invariants of a video.
    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if self.appearance.shape() != self.motion.shape() {
            return Err(Error::Generation(format!("{}: stream shapes differ", self.id)));
        }
        if self.intervals.is_empty() {
            return Err(Error::Generation(format!("{}: no intervals", self.id)));
        }
        let mut expect = vec![false; self.label.len()];
        for iv in &self.intervals {
            if iv.start > iv.end || iv.end >= t || iv.class >= self.label.len() {
                return Err(Error::Generation(format!("{}: bad interval {iv:?}", self.id)));
            }
            expect[iv.class] = true;
        }
        if expect != self.label {
            return Err(Error::Generation(format!("{}: label disagrees with intervals", self.id)));
        }
        if !self.appearance.is_finite() || !self.motion.is_finite() {
            return Err(Error::Generation(format!("{}: non-finite features", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_train: usize,
    pub n_test: usize,
    #[serde(rename = "T")]
    pub snippets: usize,
    #[serde(rename = "d")]
    pub feature_dim: usize,
    #[serde(rename = "C")]
    pub num_classes: usize,
    pub confounder_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 50,
            snippets: 64,
            feature_dim: 16,
            num_classes: 5,
            confounder_rate: 0.3,
            noise_sigma: 0.3,
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be at least 1".into()));
        }
        if self.snippets == 0 || self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("T, d and C must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confounder_rate) {
            return Err(Error::Config(format!(
                "confounder_rate {} outside [0, 1]",
                self.confounder_rate
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Class prototypes shared by every video of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    /// `C×d`, one motion prototype per class.
    pub motion: Tensor2,
    /// `C×d`, one appearance prototype per class.
    pub appearance: Tensor2,
    /// `1×d` appearance of non-action snippets.
    pub background: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub prototypes: Prototypes,
    pub train: Vec<SyntheticVideo>,
    pub test: Vec<SyntheticVideo>,
}

impl Corpus {
    pub fn videos(&self) -> impl Iterator<Item = &SyntheticVideo> {
        self.train.iter().chain(self.test.iter())
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let seeds = SeedTree::new(spec.seed);
    let prototypes = draw_prototypes(spec, &mut seeds.stream("prototypes", 0));

    let make = |split: &str, offset: usize, count: usize| -> Result<Vec<SyntheticVideo>> {
        (0..count)
            .map(|i| {
                let mut rng = seeds.stream("video", (offset + i) as u64);
                generate_video(format!("{split}-{i:04}"), spec, &prototypes, &mut rng)
            })
            .collect()
    };
    let train = make("train", 0, spec.n_train)?;
    let test = make("test", spec.n_train, spec.n_test)?;
    Ok(Corpus {
        spec: *spec,
        prototypes,
        train,
        test,
    })
}

fn draw_prototypes<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> Prototypes {
    let d = spec.feature_dim;
    let mut scaled = |rows: usize| {
        let mut t = Tensor2::randn(rows, d, 1.0, rng);
        for r in 0..rows {
            let row = t.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            row.iter_mut().for_each(|v| *v = quantize(*v * PROTOTYPE_NORM / norm));
        }
        t
    };
    let motion = scaled(spec.num_classes);
    let appearance = scaled(spec.num_classes);
    let background = scaled(1);
    Prototypes {
        motion,
        appearance,
        background,
    }
}

/// Features are stored as f32 on disk; generating them already rounded keeps
/// save/load lossless.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn generate_video<R: Rng>(
    id: String,
    spec: &CorpusSpec,
    protos: &Prototypes,
    rng: &mut R,
) -> Result<SyntheticVideo> {
    let t = spec.snippets;
    let c = spec.num_classes;

    let n_classes = if c >= 2 { rng.gen_range(1..=2) } else { 1 };
    let mut classes: Vec<usize> = (0..c).collect();
    classes.shuffle(rng);
    classes.truncate(n_classes);

    let n_intervals = rng.gen_range(n_classes..=3.max(n_classes));
    let mut interval_classes: Vec<usize> = classes.clone();
    while interval_classes.len() < n_intervals {
        interval_classes.push(classes[rng.gen_range(0..classes.len())]);
    }
    interval_classes.shuffle(rng);

    let intervals = place_intervals(t, &interval_classes, rng)
        .ok_or_else(|| Error::Generation(format!("{id}: {n_intervals} intervals do not fit in T={t}")))?;

    let mut label = vec![false; c];
    for iv in &intervals {
        label[iv.class] = true;
    }

    // Confounders: runs of background snippets given a label class's look.
    let background: Vec<usize> = (0..t)
        .filter(|&s| !intervals.iter().any(|iv| iv.contains(s)))
        .collect();
    let target = (spec.confounder_rate * background.len() as f64).round() as usize;
    let mut confounder_class: Vec<Option<usize>> = vec![None; t];
    let mut marked = 0;
    while marked < target {
        let start = background[rng.gen_range(0..background.len())];
        let run = rng.gen_range(1..=4usize);
        let cls = classes[rng.gen_range(0..classes.len())];
        let mut s = start;
        for _ in 0..run {
            if s >= t || marked >= target || background.binary_search(&s).is_err() {
                break;
            }
            if confounder_class[s].is_none() {
                confounder_class[s] = Some(cls);
                marked += 1;
            }
            s += 1;
        }
    }

    let d = spec.feature_dim;
    let sigma = spec.noise_sigma;
    let mut appearance = Tensor2::zeros(t, d);
    let mut motion = Tensor2::zeros(t, d);
    for s in 0..t {
        let in_class = intervals.iter().find(|iv| iv.contains(s)).map(|iv| iv.class);
        let (app_base, mot_base): (&[f64], Option<&[f64]>) = match (in_class, confounder_class[s]) {
            (Some(k), _) => (protos.appearance.row(k), Some(protos.motion.row(k))),
            (None, Some(k)) => (protos.appearance.row(k), None),
            (None, None) => (protos.background.row(0), None),
        };
        for j in 0..d {
            let na: f64 = rng.sample(StandardNormal);
            let nm: f64 = rng.sample(StandardNormal);
            appearance.set(s, j, quantize(app_base[j] + sigma * na));
            let base = mot_base.map_or(0.0, |m| m[j]);
            motion.set(s, j, quantize(base + sigma * nm));
        }
    }

    let confounders = (0..t).filter(|&s| confounder_class[s].is_some()).collect();
    let video = SyntheticVideo {
        id,
        appearance,
        motion,
        intervals,
        label,
        confounders,
    };
    video.validate()?;
    Ok(video)
}

/// Places non-overlapping intervals separated by at least one snippet.
fn place_intervals<R: Rng>(t: usize, classes: &[usize], rng: &mut R) -> Option<Vec<Interval>> {
    let min_len = (t / 16).max(1);
    let max_len = (t / 5).max(min_len);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut placed: Vec<Interval> = Vec::with_capacity(classes.len());
        let mut ok = true;
        for &class in classes {
            let len = rng.gen_range(min_len..=max_len).min(t);
            let start = rng.gen_range(0..=t - len);
            let cand = Interval {
                start,
                end: start + len - 1,
                class,
            };
            // Require a gap so neighbouring instances stay distinct.
            let clash = placed
                .iter()
                .any(|iv| cand.start <= iv.end + 1 && iv.start <= cand.end + 1);
            if clash {
                ok = false;
                break;
            }
            placed.push(cand);
        }
        if ok {
            placed.sort_by_key(|iv| iv.start);
            return Some(placed);
        }
    }
    None
}
