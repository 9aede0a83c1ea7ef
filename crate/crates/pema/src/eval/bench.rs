//! Wall-clock latency benchmarks: per-step training time and per-token
//! decode time for the three methods, reported as mean and variance over a
//! number of trials. Only ordinal comparisons are meaningful; absolute
//! milliseconds are hardware noise.

use std::time::Instant;

use crate::adapter::adapter_grads;
use crate::corpus::EOS;
use crate::decoding::{AdapterPredictor, DecodeConfig, LambdaMode};
use crate::error::{Error, Result};
use crate::eval::flops::{flops_per_token, FlopsDims, FlopsMethod};
use crate::eval::pipeline::{decode_corpus, decode_corpus_naive, Artifacts};
use crate::eval::report::Table;
use crate::knn::KnnPredictor;
use crate::numerics::AdamState;
use crate::plm::{pretraining_sequences, training_positions, PlmConfig, PlmTrainer};

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: String,
    pub mean_ms: f64,
    pub variance_ms2: f64,
    /// Analytic per-token forward FLOPs for decode rows; per-step trained
    /// parameter count for train rows.
    pub analytic: u64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub trials: usize,
    pub batch_tokens: usize,
    pub train: Vec<BenchRow>,
    pub decode: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(vec!["kind", "method", "mean_ms", "variance_ms2", "analytic"]);
        for (kind, rows) in [("train-step", &self.train), ("decode-token", &self.decode)] {
            for row in rows {
                table.push_row(vec![
                    kind.to_string(),
                    row.method.clone(),
                    format!("{:.4}", row.mean_ms),
                    format!("{:.6}", row.variance_ms2),
                    format!("{}", row.analytic),
                ]);
            }
        }
        table
    }

    pub fn train_mean(&self, method: &str) -> Option<f64> {
        self.train
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.mean_ms)
    }
}

fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Time adapter training steps against full-model fine-tuning steps on the
/// same number of tokens, and per-token decode latency for the naive,
/// adapter, and kNN paths.
pub fn bench_latency(artifacts: &Artifacts, trials: usize) -> Result<BenchReport> {
    if trials < 2 {
        return Err(Error::Input(format!(
            "need at least 2 trials, got {trials}"
        )));
    }
    let plm = &artifacts.plm;
    let memory = &artifacts.memory;

    // one batch of records; full fine-tuning gets the same token count
    let batch_tokens = memory.len().min(512);
    let batch = &memory.records[..batch_tokens];
    let train_pairs = artifacts.train_pairs();
    let sequences = pretraining_sequences(&train_pairs);
    let positions: Vec<(Vec<u32>, u32)> = training_positions(&sequences, plm.k())
        .into_iter()
        .take(batch_tokens)
        .collect();

    let adapter_params = 3 * artifacts.adapter.r() * artifacts.adapter.d();
    let plm_params = plm.v() * plm.d() * 2
        + plm.k() * plm.d()
        + plm.hidden() * plm.k() * plm.d()
        + plm.hidden()
        + plm.d() * plm.hidden()
        + plm.d();

    // adapter train step: gradients plus Adam updates on the three blocks
    let mut adapter_samples = Vec::with_capacity(trials);
    let mut w = artifacts.adapter.clone();
    let (d, r) = (w.d(), w.r());
    let mut opt_a = AdamState::with_defaults(r * d);
    let mut opt_brct = AdamState::with_defaults(d * r);
    let mut opt_bpd = AdamState::with_defaults(d * r);
    for _ in 0..trials {
        let start = Instant::now();
        let (grads, _) = adapter_grads(&w, batch, plm.head(), 0.3)?;
        opt_a.update(w.a.as_mut_slice(), grads.a.as_slice())?;
        opt_brct.update(w.b_rct.as_mut_slice(), grads.b_rct.as_slice())?;
        opt_bpd.update(w.b_pd.as_mut_slice(), grads.b_pd.as_slice())?;
        adapter_samples.push(start.elapsed().as_secs_f64() * 1e3);
    }

    // full fine-tuning step on the same token count
    let mut plm_samples = Vec::with_capacity(trials);
    let mut trainer = PlmTrainer::new(&PlmConfig {
        d: plm.d(),
        v: plm.v(),
        k: plm.k(),
        hidden: plm.hidden(),
        seed: 1,
        ..PlmConfig::default()
    })?;
    for _ in 0..trials {
        let start = Instant::now();
        trainer.step(&positions)?;
        plm_samples.push(start.elapsed().as_secs_f64() * 1e3);
    }

    let (am, av) = mean_variance(&adapter_samples);
    let (pm, pv) = mean_variance(&plm_samples);
    let train = vec![
        BenchRow {
            method: "adapter".into(),
            mean_ms: am,
            variance_ms2: av,
            analytic: adapter_params as u64,
        },
        BenchRow {
            method: "full-ft".into(),
            mean_ms: pm,
            variance_ms2: pv,
            analytic: plm_params as u64,
        },
    ];

    // decode latency per emitted token over a small pair set
    let test = artifacts.test_pairs();
    let subset = &test[..test.len().min(24)];
    let decode_config = DecodeConfig {
        mode: LambdaMode::GradualUnrolling,
        lambda_max: 0.8,
        max_len: 16,
        eos: EOS,
    };
    let dims = FlopsDims {
        d: plm.d() as u64,
        v: plm.v() as u64,
        k: plm.k() as u64,
        hidden: plm.hidden() as u64,
        r: artifacts.adapter.r() as u64,
        memory_len: memory.len() as u64,
    };
    let mut decode_rows = Vec::new();
    for method in [FlopsMethod::Naive, FlopsMethod::Adapter, FlopsMethod::Knn] {
        let mut samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let start = Instant::now();
            let outputs = match method {
                FlopsMethod::Naive => decode_corpus_naive(
                    plm,
                    &artifacts.template,
                    subset,
                    &artifacts.vocab,
                    &decode_config,
                )?,
                FlopsMethod::Adapter => {
                    let predictor = AdapterPredictor {
                        weights: &artifacts.adapter,
                        head: plm.head(),
                    };
                    decode_corpus(
                        plm,
                        &predictor,
                        &artifacts.template,
                        subset,
                        &artifacts.vocab,
                        &decode_config,
                    )?
                }
                FlopsMethod::Knn => {
                    let predictor = KnnPredictor {
                        memory,
                        config: artifacts_knn_default(),
                    };
                    decode_corpus(
                        plm,
                        &predictor,
                        &artifacts.template,
                        subset,
                        &artifacts.vocab,
                        &decode_config,
                    )?
                }
            };
            let tokens: usize = outputs.iter().map(|o| o.len()).sum();
            samples.push(start.elapsed().as_secs_f64() * 1e3 / tokens.max(1) as f64);
        }
        let (mean, var) = mean_variance(&samples);
        decode_rows.push(BenchRow {
            method: method.name().into(),
            mean_ms: mean,
            variance_ms2: var,
            analytic: flops_per_token(dims, method).total(),
        });
    }

    Ok(BenchReport {
        trials,
        batch_tokens,
        train,
        decode: decode_rows,
    })
}

fn artifacts_knn_default() -> crate::knn::KnnConfig {
    crate::knn::KnnConfig::default()
}
