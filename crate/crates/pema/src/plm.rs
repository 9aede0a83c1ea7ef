//! The frozen toy causal language model.
//!
//! A fixed-window MLP stands in for the model owner's network: the last K
//! token embeddings are position-weighted, concatenated, pushed through one
//! tanh layer, and projected to a d-dimensional context representation
//! `f(c)`. Next-token probabilities are `softmax(W_hd · f(c))` with a
//! separate head matrix `W_hd` — the only weight block that is ever shared.
//!
//! The model pretrains as a plain language model over the source side of a
//! corpus ([BOS] source [EOS] sequences). It never sees the parallel targets;
//! downstream task knowledge enters through the adapter, not here.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{Reader, Writer};
use crate::corpus::{ParallelPair, Vocab, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{argmax, softmax, AdamState, Matrix};

pub const PLM_MAGIC: &[u8; 4] = b"TPLM";
pub const PLM_VERSION: u16 = 1;

/// Model shape and pretraining hyperparameters.
#[derive(Debug, Clone)]
pub struct PlmConfig {
    /// Context representation width.
    pub d: usize,
    /// Vocabulary size.
    pub v: usize,
    /// Context window length.
    pub k: usize,
    /// Hidden layer width.
    pub hidden: usize,
    pub seed: u64,
    /// Pretraining epochs over the source-side positions.
    pub epochs: usize,
    /// Adam learning rate for pretraining.
    pub lr: f64,
    /// Positions per pretraining batch.
    pub batch: usize,
}

impl Default for PlmConfig {
    fn default() -> Self {
        PlmConfig {
            d: 64,
            v: 68,
            k: 8,
            hidden: 128,
            seed: 0,
            epochs: 12,
            lr: 1e-3,
            batch: 256,
        }
    }
}

impl PlmConfig {
    fn validate(&self) -> Result<()> {
        if self.d < 4 {
            return Err(Error::Config(format!("d must be at least 4, got {}", self.d)));
        }
        if self.k < 1 {
            return Err(Error::Config("context window K must be at least 1".into()));
        }
        if self.v < 5 || self.hidden < 1 {
            return Err(Error::Config(format!(
                "degenerate model shape v={}, hidden={}",
                self.v, self.hidden
            )));
        }
        Ok(())
    }
}

/// Output of one encode call: the context representation, the next-token
/// distribution, and the predicted token.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub repr: Vec<f64>,
    pub dist: Vec<f64>,
    pub predicted: u32,
}

/// All model parameters. Frozen after training; mutation afterwards is a
/// contract error.
#[derive(Debug, Clone)]
pub struct PlmWeights {
    d: usize,
    v: usize,
    k: usize,
    hidden: usize,
    embeddings: Matrix,  // v x d
    pos_weights: Matrix, // k x d
    w1: Matrix,          // hidden x (k*d)
    b1: Vec<f64>,
    w2: Matrix, // d x hidden
    b2: Vec<f64>,
    head: Matrix, // v x d
    frozen: bool,
}

impl PlmWeights {
    /// Seeded random initialization (unfrozen). Position weights start at
    /// 1.0; matrices use small Gaussians scaled by fan-in.
    pub fn init(config: &PlmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, v, k, hidden) = (config.d, config.v, config.k, config.hidden);
        let emb = gaussian_matrix(&mut rng, v, d, 0.3);
        let w1 = gaussian_matrix(&mut rng, hidden, k * d, 1.0 / ((k * d) as f64).sqrt());
        // Small projection, large head: keeps representations modest in
        // scale (training sharpens logits by growing the head instead).
        let w2 = gaussian_matrix(&mut rng, d, hidden, 0.5 / (hidden as f64).sqrt());
        let head = gaussian_matrix(&mut rng, v, d, 4.0 / (d as f64).sqrt());
        let mut pos = Matrix::zeros(k, d);
        pos.as_mut_slice().fill(1.0);
        Ok(PlmWeights {
            d,
            v,
            k,
            hidden,
            embeddings: emb,
            pos_weights: pos,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d],
            head,
            frozen: false,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// The LM head W_hd (v x d). Read access is unrestricted — sharing the
    /// head is part of the design.
    pub fn head(&self) -> &Matrix {
        &self.head
    }

    /// Mutable head access; rejected once frozen.
    pub fn head_mut(&mut self) -> Result<&mut Matrix> {
        self.check_unfrozen()?;
        Ok(&mut self.head)
    }

    fn check_unfrozen(&self) -> Result<()> {
        if self.frozen {
            Err(Error::Contract(
                "weights are frozen; mutation is not allowed".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// The last `k` tokens of `context`, left-padded with PAD.
    fn window(&self, context: &[u32]) -> Vec<u32> {
        let mut win = vec![PAD; self.k];
        let take = context.len().min(self.k);
        let src = &context[context.len() - take..];
        win[self.k - take..].copy_from_slice(src);
        win
    }

    /// Forward pass over a window; also returns the intermediate activations
    /// needed by the backward pass.
    fn forward(&self, window: &[u32]) -> Result<ForwardCache> {
        let (d, k) = (self.d, self.k);
        let mut x = vec![0.0; k * d];
        for (j, &tok) in window.iter().enumerate() {
            let t = tok as usize;
            if t >= self.v {
                return Err(Error::Index(format!(
                    "token id {tok} outside vocabulary of size {}",
                    self.v
                )));
            }
            let emb = self.embeddings.row(t);
            let pw = self.pos_weights.row(j);
            let slot = &mut x[j * d..(j + 1) * d];
            for c in 0..d {
                slot[c] = pw[c] * emb[c];
            }
        }
        let mut h_pre = self.w1.matvec(&x)?;
        for (hp, b) in h_pre.iter_mut().zip(&self.b1) {
            *hp += b;
        }
        let h: Vec<f64> = h_pre.iter().map(|&z| z.tanh()).collect();
        let mut f = self.w2.matvec(&h)?;
        for (fv, b) in f.iter_mut().zip(&self.b2) {
            *fv += b;
        }
        let logits = self.head.matvec(&f)?;
        let dist = softmax(&logits)?;
        Ok(ForwardCache { x, h, f, dist })
    }

    /// Encode a context: final-layer representation, next-token
    /// distribution, and argmax prediction (lowest-id tie-break).
    ///
    /// Requires frozen weights — encoding is an inference-time operation.
    pub fn encode(&self, context: &[u32]) -> Result<Encoded> {
        if !self.frozen {
            return Err(Error::Contract("encode requires frozen weights".into()));
        }
        if context.is_empty() {
            return Err(Error::Input("cannot encode an empty context".into()));
        }
        let cache = self.forward(&self.window(context))?;
        let predicted = argmax(&cache.dist) as u32;
        Ok(Encoded {
            repr: cache.f,
            dist: cache.dist,
            predicted,
        })
    }

    /// Mean next-token cross-entropy of this model over (window, target)
    /// pairs drawn from the given sequences.
    pub fn mean_ce(&self, sequences: &[Vec<u32>]) -> Result<f64> {
        let positions = collect_positions(sequences, self.k);
        if positions.is_empty() {
            return Err(Error::Input("no scoring positions".into()));
        }
        let mut total = 0.0;
        for (window, target) in &positions {
            let cache = self.forward(window)?;
            total += crate::numerics::cross_entropy(&cache.dist, *target)?;
        }
        Ok(total / positions.len() as f64)
    }
}

struct ForwardCache {
    x: Vec<f64>,
    h: Vec<f64>,
    f: Vec<f64>,
    dist: Vec<f64>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let normal = Normal::new(0.0, std).expect("valid std");
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite init")
}

/// Pretraining documents built from both sides of the corpus without ever
/// aligning a source with its own target:
///
/// - [BOS source_i target_j EOS] with j shifted by one pair — mixed-side
///   documents whose mid-text boundary teaches the model that a sentence
///   seam continues rather than ends;
/// - [BOS target_i EOS] — plain monolingual samples of the target side.
///
/// This is the desk analog of generic document-level pretraining: the
/// model knows both "languages" and how text flows across sentence
/// boundaries, but has never seen a translation pair.
pub fn pretraining_sequences(pairs: &[ParallelPair]) -> Vec<Vec<u32>> {
    let n = pairs.len();
    let mut out = Vec::with_capacity(n * 2);
    for (i, pair) in pairs.iter().enumerate() {
        let unrelated = &pairs[(i + 1) % n].target;
        let mut doc = Vec::with_capacity(pair.source.len() + unrelated.len() + 2);
        doc.push(BOS);
        doc.extend_from_slice(&pair.source);
        doc.extend_from_slice(unrelated);
        doc.push(EOS);
        out.push(doc);

        let mut mono = Vec::with_capacity(pair.target.len() + 2);
        mono.push(BOS);
        mono.extend_from_slice(&pair.target);
        mono.push(EOS);
        out.push(mono);
    }
    out
}

/// All (window, next-token) training positions of the given sequences.
fn collect_positions(sequences: &[Vec<u32>], k: usize) -> Vec<(Vec<u32>, u32)> {
    let mut out = Vec::new();
    for seq in sequences {
        for t in 0..seq.len().saturating_sub(1) {
            let ctx = &seq[..=t];
            let mut win = vec![PAD; k];
            let take = ctx.len().min(k);
            win[k - take..].copy_from_slice(&ctx[ctx.len() - take..]);
            out.push((win, seq[t + 1]));
        }
    }
    out
}

/// Gradient accumulator mirroring the parameter blocks.
struct Grads {
    emb: Matrix,
    pos: Matrix,
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    head: Matrix,
}

impl Grads {
    fn zeros(w: &PlmWeights) -> Self {
        Grads {
            emb: Matrix::zeros(w.v, w.d),
            pos: Matrix::zeros(w.k, w.d),
            w1: Matrix::zeros(w.hidden, w.k * w.d),
            b1: vec![0.0; w.hidden],
            w2: Matrix::zeros(w.d, w.hidden),
            b2: vec![0.0; w.d],
            head: Matrix::zeros(w.v, w.d),
        }
    }
}

/// Train the toy model as a next-token predictor over the source side of
/// the corpus. Deterministic for a fixed config; returns frozen weights.
pub fn train_plm(pairs: &[ParallelPair], vocab: &Vocab, config: &PlmConfig) -> Result<PlmWeights> {
    if pairs.is_empty() {
        return Err(Error::Input("cannot train on an empty corpus".into()));
    }
    if vocab.size() as usize != config.v {
        return Err(Error::Config(format!(
            "config v={} does not match vocabulary size {}",
            config.v,
            vocab.size()
        )));
    }
    let mut w = PlmWeights::init(config)?;
    let sequences = pretraining_sequences(pairs);
    let positions = collect_positions(&sequences, config.k);

    let mut opt = PlmOptimizer::new(&w, config.lr);
    let mut order: Vec<usize> = (0..positions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    for _epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch.max(1)) {
            let mut grads = Grads::zeros(&w);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let (window, target) = &positions[idx];
                backward_position(&w, window, *target, scale, &mut grads)?;
            }
            opt.apply(&mut w, &grads)?;
        }
    }
    w.freeze();
    Ok(w)
}

/// Accumulate gradients for one position. `scale` is the batch-mean factor.
fn backward_position(
    w: &PlmWeights,
    window: &[u32],
    target: u32,
    scale: f64,
    grads: &mut Grads,
) -> Result<()> {
    let cache = w.forward(window)?;
    let d = w.d;

    // d(logits) = p - onehot(target), times the batch scale
    let mut dlogits = cache.dist.clone();
    dlogits[target as usize] -= 1.0;
    for g in dlogits.iter_mut() {
        *g *= scale;
    }

    grads.head.add_outer(&dlogits, &cache.f, 1.0)?;
    let df = w.head.matvec_transposed(&dlogits)?;

    grads.w2.add_outer(&df, &cache.h, 1.0)?;
    for (g, v) in grads.b2.iter_mut().zip(&df) {
        *g += v;
    }
    let dh = w.w2.matvec_transposed(&df)?;
    let dh_pre: Vec<f64> = dh
        .iter()
        .zip(&cache.h)
        .map(|(&g, &hv)| g * (1.0 - hv * hv))
        .collect();

    grads.w1.add_outer(&dh_pre, &cache.x, 1.0)?;
    for (g, v) in grads.b1.iter_mut().zip(&dh_pre) {
        *g += v;
    }
    let dx = w.w1.matvec_transposed(&dh_pre)?;

    for (j, &tok) in window.iter().enumerate() {
        let t = tok as usize;
        let emb = w.embeddings.row(t);
        let pw = w.pos_weights.row(j);
        let dslot = &dx[j * d..(j + 1) * d];
        for c in 0..d {
            let flat_emb = t * d + c;
            grads.emb.as_mut_slice()[flat_emb] += dslot[c] * pw[c];
            let flat_pos = j * d + c;
            grads.pos.as_mut_slice()[flat_pos] += dslot[c] * emb[c];
        }
    }
    Ok(())
}

/// One Adam state per parameter block.
struct PlmOptimizer {
    emb: AdamState,
    pos: AdamState,
    w1: AdamState,
    b1: AdamState,
    w2: AdamState,
    b2: AdamState,
    head: AdamState,
}

impl PlmOptimizer {
    fn new(w: &PlmWeights, lr: f64) -> Self {
        let mk = |len: usize| AdamState::new(lr, 0.9, 0.999, 1e-8, len).expect("valid Adam config");
        PlmOptimizer {
            emb: mk(w.v * w.d),
            pos: mk(w.k * w.d),
            w1: mk(w.hidden * w.k * w.d),
            b1: mk(w.hidden),
            w2: mk(w.d * w.hidden),
            b2: mk(w.d),
            head: mk(w.v * w.d),
        }
    }

    fn apply(&mut self, w: &mut PlmWeights, grads: &Grads) -> Result<()> {
        w.check_unfrozen()?;
        self.emb
            .update(w.embeddings.as_mut_slice(), grads.emb.as_slice())?;
        self.pos
            .update(w.pos_weights.as_mut_slice(), grads.pos.as_slice())?;
        self.w1.update(w.w1.as_mut_slice(), grads.w1.as_slice())?;
        self.b1.update(&mut w.b1, &grads.b1)?;
        self.w2.update(w.w2.as_mut_slice(), grads.w2.as_slice())?;
        self.b2.update(&mut w.b2, &grads.b2)?;
        self.head.update(w.head.as_mut_slice(), grads.head.as_slice())?;
        Ok(())
    }
}

/// An unfrozen model with optimizer state, stepping one batch at a time.
/// This is the full-fine-tuning path the benchmarks time against; the
/// normal training entry point is [`train_plm`].
pub struct PlmTrainer {
    weights: PlmWeights,
    optimizer: PlmOptimizer,
}

impl PlmTrainer {
    pub fn new(config: &PlmConfig) -> Result<Self> {
        let weights = PlmWeights::init(config)?;
        let optimizer = PlmOptimizer::new(&weights, config.lr);
        Ok(PlmTrainer { weights, optimizer })
    }

    /// One full-parameter update over the given (window, target) positions.
    pub fn step(&mut self, positions: &[(Vec<u32>, u32)]) -> Result<()> {
        if positions.is_empty() {
            return Err(Error::Input("empty training batch".into()));
        }
        let mut grads = Grads::zeros(&self.weights);
        let scale = 1.0 / positions.len() as f64;
        for (window, target) in positions {
            backward_position(&self.weights, window, *target, scale, &mut grads)?;
        }
        self.optimizer.apply(&mut self.weights, &grads)
    }
}

/// (window, target) pairs for the given sequences — the unit of work one
/// training step consumes.
pub fn training_positions(sequences: &[Vec<u32>], k: usize) -> Vec<(Vec<u32>, u32)> {
    collect_positions(sequences, k)
}

/// Write weights: magic, version, (d, v, K, hidden) as u32, then all
/// parameter blocks as little-endian f32 in declared order.
pub fn save_plm(w: &PlmWeights, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = Writer::new(BufWriter::new(file));
    out.bytes(PLM_MAGIC)?;
    out.u16(PLM_VERSION)?;
    out.u32(w.d as u32)?;
    out.u32(w.v as u32)?;
    out.u32(w.k as u32)?;
    out.u32(w.hidden as u32)?;
    out.f32_block(w.embeddings.as_slice())?;
    out.f32_block(w.pos_weights.as_slice())?;
    out.f32_block(w.w1.as_slice())?;
    out.f32_block(&w.b1)?;
    out.f32_block(w.w2.as_slice())?;
    out.f32_block(&w.b2)?;
    out.f32_block(w.head.as_slice())?;
    out.flush()
}

/// Load weights saved by [`save_plm`]; the result is frozen. When `vocab`
/// is given, its size must match the header.
pub fn load_plm(path: &Path, vocab: Option<&Vocab>) -> Result<PlmWeights> {
    let file = File::open(path)?;
    let mut r = Reader::new(BufReader::new(file));
    r.magic(PLM_MAGIC)?;
    let version_at = r.offset();
    let version = r.u16("version")?;
    if version != PLM_VERSION {
        return Err(Error::Format {
            offset: version_at,
            message: format!("unsupported version {version}, expected {PLM_VERSION}"),
        });
    }
    let d = r.u32("d")? as usize;
    let v_at = r.offset();
    let v = r.u32("v")? as usize;
    let k = r.u32("K")? as usize;
    let hidden = r.u32("hidden")? as usize;
    if let Some(vocab) = vocab {
        if vocab.size() as usize != v {
            return Err(Error::Format {
                offset: v_at,
                message: format!(
                    "file vocabulary size {v} does not match the supplied vocabulary ({})",
                    vocab.size()
                ),
            });
        }
    }
    let emb = r.f32_block(v * d, "embeddings")?;
    let pos = r.f32_block(k * d, "position weights")?;
    let w1 = r.f32_block(hidden * k * d, "W1")?;
    let b1 = r.f32_block(hidden, "b1")?;
    let w2 = r.f32_block(d * hidden, "W2")?;
    let b2 = r.f32_block(d, "b2")?;
    let head = r.f32_block(v * d, "head")?;
    r.expect_eof()?;
    Ok(PlmWeights {
        d,
        v,
        k,
        hidden,
        embeddings: Matrix::from_vec(v, d, emb)?,
        pos_weights: Matrix::from_vec(k, d, pos)?,
        w1: Matrix::from_vec(hidden, k * d, w1)?,
        b1,
        w2: Matrix::from_vec(d, hidden, w2)?,
        b2,
        head: Matrix::from_vec(v, d, head)?,
        frozen: true,
    })
}
