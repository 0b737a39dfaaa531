use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ExperimentConfig;
use super::evaluate::{evaluate, guidance_name, save_evaluation};
use super::train::{train, write_loss_curve};
use crate::datagen::{generate_corpus, Corpus, CorpusSpec};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

/// IoU thresholds reported per ablation cell.
pub const ABLATION_IOU: [f64; 4] = [0.3, 0.4, 0.5, 0.7];

/// A named JSON merge patch over the base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    #[serde(default)]
    pub delta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub name: String,
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    #[serde(default)]
    pub base: ExperimentConfig,
    pub tables: Vec<AblationTable>,
}

impl AblationMatrix {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            detail: e.to_string(),
        })
    }

    /// The loss-function table and the motion-graph table.
    pub fn standard(base: ExperimentConfig) -> Self {
        let cell = |name: &str, delta: serde_json::Value| AblationCell {
            name: name.into(),
            delta,
        };
        let guided = json!({"loss": {"kind": "motion_guided"}});
        let losses = AblationTable {
            name: "loss_ablation".into(),
            cells: vec![
                cell("guided_motion", json!({"loss": guided["loss"], "guidance": "motion"})),
                cell("guided_appearance", json!({"loss": guided["loss"], "guidance": "appearance"})),
                cell("guided_both", json!({"loss": guided["loss"], "guidance": "both"})),
                cell("xe", json!({"loss": {"kind": "xe"}})),
                cell(
                    "guided_motion_no_regularizer",
                    json!({"loss": {"kind": "motion_guided", "regularizer": "off"}, "guidance": "motion"}),
                ),
            ],
        };
        let graphs = AblationTable {
            name: "graph_ablation".into(),
            cells: vec![
                cell("mlp", json!({"graph": {"mode": "mlp"}})),
                cell("dense", json!({"graph": {"mode": "dense"}})),
                cell("sparse_all_edges", json!({"graph": {"mode": "sparse"}})),
                cell(
                    "sparse_without_positional",
                    json!({"graph": {"mode": "sparse", "positional_edges": false}}),
                ),
                cell(
                    "sparse_without_semantic",
                    json!({"graph": {"mode": "sparse", "semantic_edges": false}}),
                ),
            ],
        };
        Self {
            base,
            tables: vec![losses, graphs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub table: String,
    pub cell: String,
    pub outcome: std::result::Result<EvalReport, String>,
}

impl CellResult {
    pub fn map_at(&self, t: f64) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|r| r.map_at(t))
    }

    /// KL of whichever guidance stream the cell used.
    pub fn kl(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|r| r.kl.values().next().copied())
    }
}

fn run_cell(cfg: &ExperimentConfig, corpus: &Corpus, dir: Option<&Path>) -> Result<EvalReport> {
    let outcome = train(cfg, corpus)?;
    let eval = evaluate(&outcome.params, &cfg.network(), &corpus.test, cfg)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_loss_curve(dir.join("loss_curve.csv"), &outcome.loss_curve)?;
        save_evaluation(dir, &eval)?;
    }
    Ok(eval.report)
}

/// Trains and evaluates every cell. Cells share the base corpus (and any
/// cell that patches the corpus spec gets its own); a failing cell is
/// recorded and the matrix continues.
pub fn ablate(matrix: &AblationMatrix, out: Option<&Path>) -> Result<Vec<CellResult>> {
    let mut corpora: Vec<(CorpusSpec, Corpus)> = Vec::new();
    let mut results = Vec::new();
    for table in &matrix.tables {
        for cell in &table.cells {
            let dir: Option<PathBuf> = out.map(|o| o.join(&table.name).join(&cell.name));
            let outcome = matrix
                .base
                .with_patch(&cell.delta)
                .and_then(|cfg| {
                    cfg.validate()?;
                    let corpus = match corpora.iter().position(|(s, _)| *s == cfg.corpus) {
                        Some(i) => &corpora[i].1,
                        None => {
                            let c = generate_corpus(&cfg.corpus)?;
                            corpora.push((cfg.corpus, c));
                            &corpora.last().expect("pushed").1
                        }
                    };
                    let run = catch_unwind(AssertUnwindSafe(|| run_cell(&cfg, corpus, dir.as_deref())));
                    run.unwrap_or_else(|_| Err(Error::Config(format!("cell {} panicked", cell.name))))
                })
                .map_err(|e| e.to_string());
            results.push(CellResult {
                table: table.name.clone(),
                cell: cell.name.clone(),
                outcome,
            });
        }
    }
    if let Some(out) = out {
        write_tables(out, matrix, &results)?;
    }
    Ok(results)
}

/// One CSV per table: `cell,status,map@0.3,map@0.4,map@0.5,map@0.7,avg_map,kl_guidance,kl`.
pub fn write_tables(out: &Path, matrix: &AblationMatrix, results: &[CellResult]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for table in &matrix.tables {
        let path = out.join(format!("{}.csv", table.name));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["cell".to_string(), "status".to_string()];
        header.extend(ABLATION_IOU.iter().map(|t| format!("map@{t}")));
        header.extend(["avg_map".into(), "kl_guidance".into(), "kl".into()]);
        w.write_record(&header)?;
        for r in results.iter().filter(|r| r.table == table.name) {
            let mut row = vec![r.cell.clone()];
            match &r.outcome {
                Ok(report) => {
                    row.push("ok".into());
                    row.extend(ABLATION_IOU.iter().map(|&t| fmt_opt(report.map_at(t))));
                    row.push(report.avg_map.to_string());
                    let (name, kl) = report
                        .kl
                        .iter()
                        .next()
                        .map(|(k, v)| (k.clone(), v.to_string()))
                        .unwrap_or_default();
                    row.push(name);
                    row.push(kl);
                }
                Err(msg) => {
                    row.push(format!("failed: {msg}"));
                    row.extend(std::iter::repeat(String::new()).take(ABLATION_IOU.len() + 3));
                }
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Name of the guidance stream a config feeds the guidance branch.
pub fn cell_guidance(cfg: &ExperimentConfig) -> String {
    guidance_name(&cfg.network())
}
