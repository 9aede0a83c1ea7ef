//! Interpolation-parameter sweeps over the full pipeline.
//!
//! The lambda axis trains one adapter and re-decodes the test split per
//! grid value, in both schedule modes. The kappa axis shares the corpus,
//! model, memory, and phase-1 head, then retrains the joint phase per
//! cell; cells are seeded independently (base seed + cell index).

use crate::adapter::{train_phase1, train_phase2};
use crate::corpus::{select_split, Split};
use crate::decoding::{AdapterPredictor, DecodeConfig, LambdaMode};
use crate::error::{Error, Result};
use crate::eval::pipeline::{
    build_artifacts, build_base, decode_corpus, score_bleu, score_ppl, PipelineConfig,
};
use crate::eval::report::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    LambdaMax,
    Kappa,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<SweepAxis> {
        match name {
            "lambda-max" | "lambda_max" | "lambda" => Ok(SweepAxis::LambdaMax),
            "kappa" => Ok(SweepAxis::Kappa),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected lambda-max or kappa)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::LambdaMax => "lambda-max",
            SweepAxis::Kappa => "kappa",
        }
    }
}

/// One grid cell's metrics, as (name, value) columns.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub task: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_table(&self) -> Table {
        let mut headers = vec![
            "axis".to_string(),
            "value".to_string(),
            "task".to_string(),
            "seed".to_string(),
        ];
        if let Some(first) = self.rows.first() {
            headers.extend(first.metrics.iter().map(|(n, _)| n.clone()));
        }
        let mut table = Table::new(headers);
        for row in &self.rows {
            let mut cells = vec![
                self.axis.name().to_string(),
                format!("{}", row.value),
                self.task.clone(),
                format!("{}", self.seed),
            ];
            cells.extend(row.metrics.iter().map(|(_, v)| format!("{v:.4}")));
            table.push_row(cells);
        }
        table
    }
}

fn validate_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    for &v in grid {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::Config(format!("grid value {v} outside [0,1]")));
        }
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

/// Run a sweep over the given axis. Deterministic for a fixed base config.
pub fn run_sweep(axis: SweepAxis, grid: &[f64], base: &PipelineConfig) -> Result<SweepReport> {
    let grid = validate_grid(grid)?;
    let rows = match axis {
        SweepAxis::LambdaMax => sweep_lambda(&grid, base)?,
        SweepAxis::Kappa => sweep_kappa(&grid, base)?,
    };
    Ok(SweepReport {
        axis,
        task: base.task.name().to_string(),
        seed: base.seed,
        rows,
    })
}

/// One adapter, decoded under both schedule modes per lambda value.
fn sweep_lambda(grid: &[f64], base: &PipelineConfig) -> Result<Vec<SweepRow>> {
    let artifacts = build_artifacts(base)?;
    let test = artifacts.test_pairs();
    let predictor = AdapterPredictor {
        weights: &artifacts.adapter,
        head: artifacts.plm.head(),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &lambda_max in grid {
        let mut metrics = Vec::new();
        for (label, mode) in [("gu", LambdaMode::GradualUnrolling), ("const", LambdaMode::Constant)]
        {
            let config = DecodeConfig {
                mode,
                lambda_max,
                ..base.decode.clone()
            };
            let outputs = decode_corpus(
                &artifacts.plm,
                &predictor,
                &artifacts.template,
                &test,
                &artifacts.vocab,
                &config,
            )?;
            metrics.push((format!("bleu_{label}"), score_bleu(&outputs, &test)?));
            metrics.push((format!("ppl_{label}"), score_ppl(&artifacts.plm, &outputs)?));
        }
        rows.push(SweepRow {
            value: lambda_max,
            metrics,
        });
    }
    Ok(rows)
}

/// Shared base and phase-1 head; the joint phase retrains per cell.
fn sweep_kappa(grid: &[f64], base: &PipelineConfig) -> Result<Vec<SweepRow>> {
    let base_artifacts = build_base(base)?;
    let test = select_split(&base_artifacts.pairs, Split::Test);

    let mut phase1_config = base.train.clone();
    phase1_config.seed = base.train_seed();
    let (b_rct, _) = train_phase1(&base_artifacts.memory, &phase1_config)?;

    let mut rows = Vec::with_capacity(grid.len());
    for (cell, &kappa) in grid.iter().enumerate() {
        let mut cell_config = base.train.clone();
        cell_config.kappa = kappa;
        cell_config.seed = base.train_seed().wrapping_add(cell as u64);
        let (adapter, _) = train_phase2(
            &base_artifacts.memory,
            b_rct.clone(),
            base_artifacts.plm.head(),
            &cell_config,
        )?;
        let predictor = AdapterPredictor {
            weights: &adapter,
            head: base_artifacts.plm.head(),
        };
        let outputs = decode_corpus(
            &base_artifacts.plm,
            &predictor,
            &base_artifacts.template,
            &test,
            &base_artifacts.vocab,
            &base.decode,
        )?;
        rows.push(SweepRow {
            value: kappa,
            metrics: vec![
                ("bleu".to_string(), score_bleu(&outputs, &test)?),
                ("ppl".to_string(), score_ppl(&base_artifacts.plm, &outputs)?),
            ],
        });
    }
    Ok(rows)
}
