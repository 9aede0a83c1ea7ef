//! The low-rank adapter: forward paths, losses, hand-derived gradients, and
//! two-phase training over an external memory.
//!
//! Three matrices are trained: a shared down-projection `A` (r x d), a
//! reconstruction head `B_rct` (d x r) whose output should approximate the
//! input representation, and a prediction head `B_pd` (d x r) whose output
//! is pushed through the frozen LM head to give the adapted next-token
//! distribution. Inference uses only `A` and `B_pd`.
//!
//! Training runs in two phases: reconstruction-only training of a throwaway
//! `A` together with `B_rct` (only `B_rct` survives), then joint training of
//! a re-initialized `A`, a zero `B_pd`, and the pretrained `B_rct` under the
//! mixed objective `kappa * L_rct + (1 - kappa) * L_pd`. Both losses are
//! sums over token positions, averaged over sentences, so batches always
//! hold whole sentences.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{Reader, Writer};
use crate::checksum::checksum_f32;
use crate::error::{Error, Result};
use crate::memory::{ContextRecord, ExternalMemory};
use crate::numerics::{cross_entropy, softmax, sum_squared_error, AdamState, Matrix};

pub const ADAPTER_MAGIC: &[u8; 4] = b"PADP";
pub const ADAPTER_VERSION: u16 = 1;

/// The trainable state: A (r x d), B_rct (d x r), B_pd (d x r).
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterWeights {
    pub a: Matrix,
    pub b_rct: Matrix,
    pub b_pd: Matrix,
    d: usize,
    r: usize,
}

impl AdapterWeights {
    /// Assemble from matrices, enforcing the rank invariant r < d.
    pub fn new(a: Matrix, b_rct: Matrix, b_pd: Matrix) -> Result<Self> {
        let w = Self::new_unchecked(a, b_rct, b_pd)?;
        if w.r >= w.d {
            return Err(Error::Config(format!(
                "rank {} must be smaller than the representation width {}",
                w.r, w.d
            )));
        }
        Ok(w)
    }

    /// Shape-checked construction without the r < d restriction. Intended
    /// for tests that exercise identity compositions (r = d).
    #[doc(hidden)]
    pub fn new_unchecked(a: Matrix, b_rct: Matrix, b_pd: Matrix) -> Result<Self> {
        let r = a.rows();
        let d = a.cols();
        for (name, m) in [("B_rct", &b_rct), ("B_pd", &b_pd)] {
            if m.rows() != d || m.cols() != r {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {d}x{r}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(AdapterWeights { a, b_rct, b_pd, d, r })
    }

    /// Fresh weights: A ~ Gaussian(0, 1/d), both B matrices zero.
    pub fn init(d: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if r == 0 || r >= d {
            return Err(Error::Config(format!(
                "rank must satisfy 0 < r < d (got r={r}, d={d})"
            )));
        }
        let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("valid std");
        let a_data: Vec<f64> = (0..r * d).map(|_| normal.sample(rng)).collect();
        Ok(AdapterWeights {
            a: Matrix::from_vec(r, d, a_data)?,
            b_rct: Matrix::zeros(d, r),
            b_pd: Matrix::zeros(d, r),
            d,
            r,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Both head outputs for one representation. The bottleneck projection
    /// z = A f is computed once and shared.
    pub fn forward(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.a.matvec(f)?;
        let h_rct = self.b_rct.matvec(&z)?;
        let h_pd = self.b_pd.matvec(&z)?;
        Ok((h_rct, h_pd))
    }

    /// The adapted next-token distribution softmax(W_hd · B_pd A f).
    /// B_rct plays no part here.
    pub fn dist(&self, f: &[f64], head: &Matrix) -> Result<Vec<f64>> {
        let z = self.a.matvec(f)?;
        let h_pd = self.b_pd.matvec(&z)?;
        softmax(&head.matvec(&h_pd)?)
    }

    /// Hex checksums of (A, B_rct, B_pd) over their f32 storage form.
    pub fn checksums(&self) -> (String, String, String) {
        (
            checksum_f32(self.a.as_slice()),
            checksum_f32(self.b_rct.as_slice()),
            checksum_f32(self.b_pd.as_slice()),
        )
    }
}

/// Training hyperparameters for both phases.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub rank: usize,
    /// Mixing weight: kappa * L_rct + (1 - kappa) * L_pd.
    pub kappa: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Target batch size in tokens; batches always hold whole sentences.
    pub batch_tokens: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub seed: u64,
    /// Hold B_rct fixed during the joint phase.
    pub freeze_brct_in_phase2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 16,
            kappa: 0.3,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_tokens: 4096,
            epochs_phase1: 30,
            epochs_phase2: 60,
            seed: 0,
            freeze_brct_in_phase2: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Config(format!(
                "kappa must lie in [0,1], got {}",
                self.kappa
            )));
        }
        if self.rank == 0 {
            return Err(Error::Config("rank must be positive".into()));
        }
        Ok(())
    }
}

/// Loss values of one batch or epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTriple {
    pub rct: f64,
    pub pd: f64,
    pub total: f64,
}

/// Per-epoch losses, final parameter checksums, and wall time.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub phase: u8,
    pub epochs: Vec<LossTriple>,
    pub checksum_a: String,
    pub checksum_b_rct: String,
    pub checksum_b_pd: String,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<LossTriple> {
        self.epochs.last().copied()
    }
}

/// Record indices grouped into whole sentences, in order of first
/// appearance of each sentence id.
fn group_sentences(records: &[ContextRecord]) -> Vec<Vec<usize>> {
    let mut order: Vec<u32> = Vec::new();
    let mut by_id: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        let entry = by_id.entry(rec.sentence_id).or_default();
        if entry.is_empty() {
            order.push(rec.sentence_id);
        }
        entry.push(i);
    }
    order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect()
}

/// Losses of a batch of records: sums over token positions (and vector
/// components for the reconstruction term), averaged over the batch's
/// sentences.
pub fn adapter_losses(
    w: &AdapterWeights,
    batch: &[ContextRecord],
    head: &Matrix,
    kappa: f64,
) -> Result<LossTriple> {
    let (_, losses) = adapter_grads(w, batch, head, kappa)?;
    Ok(losses)
}

/// Gradients of the total loss with respect to (A, B_rct, B_pd).
#[derive(Debug, Clone)]
pub struct AdapterGrads {
    pub a: Matrix,
    pub b_rct: Matrix,
    pub b_pd: Matrix,
}

impl AdapterGrads {
    fn zeros(d: usize, r: usize) -> Self {
        AdapterGrads {
            a: Matrix::zeros(r, d),
            b_rct: Matrix::zeros(d, r),
            b_pd: Matrix::zeros(d, r),
        }
    }
}

/// Analytic gradients of `kappa * L_rct + (1 - kappa) * L_pd` over a batch,
/// with the LM head frozen. The batch losses fall out of the same forward
/// pass and are returned alongside.
///
/// The cross-entropy path propagates (softmax - onehot) through the head,
/// then B_pd, then A; the reconstruction path propagates 2(h_rct - f)
/// through B_rct then A. A receives the kappa-weighted sum of both.
pub fn adapter_grads(
    w: &AdapterWeights,
    batch: &[ContextRecord],
    head: &Matrix,
    kappa: f64,
) -> Result<(AdapterGrads, LossTriple)> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Config(format!("kappa must lie in [0,1], got {kappa}")));
    }
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let sentences = group_sentences(batch);
    let s = sentences.len() as f64;
    let mut grads = AdapterGrads::zeros(w.d, w.r);
    let mut rct_sum = 0.0;
    let mut pd_sum = 0.0;
    for sentence in &sentences {
        for &idx in sentence {
            accumulate_record(
                w,
                &batch[idx],
                Some(head),
                kappa / s,
                (1.0 - kappa) / s,
                &mut grads,
                &mut rct_sum,
                &mut pd_sum,
            )?;
        }
    }
    let rct = rct_sum / s;
    let pd = pd_sum / s;
    let losses = LossTriple {
        rct,
        pd,
        total: kappa * rct + (1.0 - kappa) * pd,
    };
    Ok((grads, losses))
}

/// Forward + backward for one record. With `head` None the prediction path
/// is skipped entirely (reconstruction-only training); `pd_scale` must be 0
/// in that case and the caller is responsible for the L_pd bookkeeping.
#[allow(clippy::too_many_arguments)]
fn accumulate_record(
    w: &AdapterWeights,
    rec: &ContextRecord,
    head: Option<&Matrix>,
    rct_scale: f64,
    pd_scale: f64,
    grads: &mut AdapterGrads,
    rct_sum: &mut f64,
    pd_sum: &mut f64,
) -> Result<()> {
    let f: Vec<f64> = rec.representation.iter().map(|&x| x as f64).collect();
    let z = w.a.matvec(&f)?;
    let mut dz = vec![0.0; w.r];

    let h_rct = w.b_rct.matvec(&z)?;
    *rct_sum += sum_squared_error(&f, &h_rct)?;
    if rct_scale != 0.0 {
        let g: Vec<f64> = h_rct.iter().zip(&f).map(|(&h, &fv)| 2.0 * (h - fv)).collect();
        grads.b_rct.add_outer(&g, &z, rct_scale)?;
        let dz_r = w.b_rct.matvec_transposed(&g)?;
        for (acc, v) in dz.iter_mut().zip(&dz_r) {
            *acc += rct_scale * v;
        }
    }

    if let Some(head) = head {
        let h_pd = w.b_pd.matvec(&z)?;
        let dist = softmax(&head.matvec(&h_pd)?)?;
        *pd_sum += cross_entropy(&dist, rec.target)?;
        if pd_scale != 0.0 {
            let mut e = dist;
            e[rec.target as usize] -= 1.0;
            let dh_pd = head.matvec_transposed(&e)?;
            grads.b_pd.add_outer(&dh_pd, &z, pd_scale)?;
            let dz_p = w.b_pd.matvec_transposed(&dh_pd)?;
            for (acc, v) in dz.iter_mut().zip(&dz_p) {
                *acc += pd_scale * v;
            }
        }
    }

    grads.a.add_outer(&dz, &f, 1.0)?;
    Ok(())
}

/// Which heads a phase updates.
struct PhasePlan<'a> {
    kappa: f64,
    epochs: usize,
    head: Option<&'a Matrix>,
    train_b_rct: bool,
    train_b_pd: bool,
    phase: u8,
}

fn run_phase(
    w: &mut AdapterWeights,
    memory: &ExternalMemory,
    config: &TrainConfig,
    plan: PhasePlan<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    let start = Instant::now();
    let sentences = group_sentences(&memory.records);
    let mut opt_a = AdamState::new(config.lr, config.beta1, config.beta2, config.eps, w.r * w.d)?;
    let mut opt_brct =
        AdamState::new(config.lr, config.beta1, config.beta2, config.eps, w.d * w.r)?;
    let mut opt_bpd =
        AdamState::new(config.lr, config.beta1, config.beta2, config.eps, w.d * w.r)?;

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut epochs_out = Vec::with_capacity(plan.epochs);

    for _epoch in 0..plan.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(rng);

        let mut epoch_rct = 0.0;
        let mut epoch_pd = 0.0;
        let mut epoch_tokens = 0usize;
        let total_sentences = sentences.len() as f64;

        let mut cursor = 0;
        while cursor < order.len() {
            // whole sentences until the token budget is reached
            let batch_start = cursor;
            let mut token_count = 0usize;
            while cursor < order.len() && (cursor == batch_start || token_count < config.batch_tokens)
            {
                token_count += sentences[order[cursor]].len();
                cursor += 1;
            }
            let batch_sentences = &order[batch_start..cursor];
            let s = batch_sentences.len() as f64;

            let mut grads = AdapterGrads::zeros(w.d, w.r);
            let mut rct_sum = 0.0;
            let mut pd_sum = 0.0;
            for &sent in batch_sentences {
                for &idx in &sentences[sent] {
                    accumulate_record(
                        w,
                        &memory.records[idx],
                        plan.head,
                        plan.kappa / s,
                        (1.0 - plan.kappa) / s,
                        &mut grads,
                        &mut rct_sum,
                        &mut pd_sum,
                    )?;
                }
            }
            epoch_rct += rct_sum;
            epoch_pd += pd_sum;
            epoch_tokens += token_count;

            opt_a.update(w.a.as_mut_slice(), grads.a.as_slice())?;
            if plan.train_b_rct {
                opt_brct.update(w.b_rct.as_mut_slice(), grads.b_rct.as_slice())?;
            }
            if plan.train_b_pd {
                opt_bpd.update(w.b_pd.as_mut_slice(), grads.b_pd.as_slice())?;
            }
        }

        let rct = epoch_rct / total_sentences;
        // When the prediction path is skipped, B_pd is identically zero, so
        // every record's distribution is uniform and its CE is exactly ln v.
        let pd = if plan.head.is_some() {
            epoch_pd / total_sentences
        } else {
            (epoch_tokens as f64 / total_sentences) * (memory.v as f64).ln()
        };
        epochs_out.push(LossTriple {
            rct,
            pd,
            total: plan.kappa * rct + (1.0 - plan.kappa) * pd,
        });
    }

    let (ca, cb_rct, cb_pd) = w.checksums();
    Ok(TrainReport {
        phase: plan.phase,
        epochs: epochs_out,
        checksum_a: ca,
        checksum_b_rct: cb_rct,
        checksum_b_pd: cb_pd,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Phase 1: train a throwaway A together with B_rct on the reconstruction
/// loss alone. Only B_rct is returned; the joint phase re-initializes A.
pub fn train_phase1(
    memory: &ExternalMemory,
    config: &TrainConfig,
) -> Result<(Matrix, TrainReport)> {
    config.validate()?;
    if memory.is_empty() {
        return Err(Error::Input("cannot train on an empty memory".into()));
    }
    let d = memory.d as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = AdapterWeights::init(d, config.rank, &mut rng)?;
    let report = run_phase(
        &mut w,
        memory,
        config,
        PhasePlan {
            kappa: 1.0,
            epochs: config.epochs_phase1,
            head: None,
            train_b_rct: true,
            train_b_pd: false,
            phase: 1,
        },
        &mut rng,
    )?;
    Ok((w.b_rct, report))
}

/// Phase 2: joint training of a fresh A, a zero B_pd, and the pretrained
/// B_rct (held fixed when the config says so) under the mixed objective.
pub fn train_phase2(
    memory: &ExternalMemory,
    b_rct: Matrix,
    head: &Matrix,
    config: &TrainConfig,
) -> Result<(AdapterWeights, TrainReport)> {
    config.validate()?;
    if memory.is_empty() {
        return Err(Error::Input("cannot train on an empty memory".into()));
    }
    let d = memory.d as usize;
    if b_rct.rows() != d || b_rct.cols() != config.rank {
        return Err(Error::Dimension(format!(
            "B_rct is {}x{}, expected {d}x{}",
            b_rct.rows(),
            b_rct.cols(),
            config.rank
        )));
    }
    if head.cols() != d || head.rows() != memory.v as usize {
        return Err(Error::Dimension(format!(
            "LM head is {}x{}, expected {}x{d}",
            head.rows(),
            head.cols(),
            memory.v
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b9));
    let mut w = AdapterWeights::init(d, config.rank, &mut rng)?;
    w.b_rct = b_rct;
    let train_b_rct = !config.freeze_brct_in_phase2;
    let report = run_phase(
        &mut w,
        memory,
        config,
        PhasePlan {
            kappa: config.kappa,
            epochs: config.epochs_phase2,
            head: Some(head),
            train_b_rct,
            train_b_pd: true,
            phase: 2,
        },
        &mut rng,
    )?;
    Ok((w, report))
}

/// Both phases back to back with one config.
pub fn train_two_phase(
    memory: &ExternalMemory,
    head: &Matrix,
    config: &TrainConfig,
) -> Result<(AdapterWeights, TrainReport, TrainReport)> {
    let (b_rct, report1) = train_phase1(memory, config)?;
    let (weights, report2) = train_phase2(memory, b_rct, head, config)?;
    Ok((weights, report1, report2))
}

/// Write adapter weights: magic, version u16, (d, r, v) u32, then A, B_rct,
/// B_pd as little-endian f32 blocks. `v` records the vocabulary the adapter
/// was trained against.
pub fn save_adapter(w: &AdapterWeights, v: u32, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = Writer::new(BufWriter::new(file));
    out.bytes(ADAPTER_MAGIC)?;
    out.u16(ADAPTER_VERSION)?;
    out.u32(w.d as u32)?;
    out.u32(w.r as u32)?;
    out.u32(v)?;
    out.f32_block(w.a.as_slice())?;
    out.f32_block(w.b_rct.as_slice())?;
    out.f32_block(w.b_pd.as_slice())?;
    out.flush()
}

/// Load adapter weights; returns the weights and the recorded vocabulary
/// size. Rejects files whose header violates r < d.
pub fn load_adapter(path: &Path) -> Result<(AdapterWeights, u32)> {
    let file = File::open(path)?;
    let mut r = Reader::new(BufReader::new(file));
    r.magic(ADAPTER_MAGIC)?;
    let version_at = r.offset();
    let version = r.u16("version")?;
    if version != ADAPTER_VERSION {
        return Err(Error::Format {
            offset: version_at,
            message: format!("unsupported version {version}, expected {ADAPTER_VERSION}"),
        });
    }
    let d = r.u32("d")? as usize;
    let rank_at = r.offset();
    let rank = r.u32("r")? as usize;
    if rank >= d {
        return Err(Error::Format {
            offset: rank_at,
            message: format!("rank {rank} must be smaller than d={d}"),
        });
    }
    let v = r.u32("v")?;
    let a = r.f32_block(rank * d, "A")?;
    let b_rct = r.f32_block(d * rank, "B_rct")?;
    let b_pd = r.f32_block(d * rank, "B_pd")?;
    r.expect_eof()?;
    let w = AdapterWeights::new(
        Matrix::from_vec(rank, d, a)?,
        Matrix::from_vec(d, rank, b_rct)?,
        Matrix::from_vec(d, rank, b_pd)?,
    )?;
    Ok((w, v))
}
