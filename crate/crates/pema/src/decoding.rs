//! Next-token interpolation and greedy sentence generation.
//!
//! At every step the frozen model's distribution is blended with an adapted
//! distribution (from the trained adapter or the kNN baseline) using a
//! weight `lambda`: either constant, or following the gradual-unrolling
//! schedule, which starts at `lambda_max^2` and decays to zero over the
//! source sentence length so the model takes over as the sentence
//! progresses.
//!
//! Emission rule: PAD, BOS, and UNK are never candidates. The highest-
//! probability content token wins (lowest id on ties); generation stops
//! when EOS strictly exceeds the best content token, or at the length cap.
//! A flat distribution therefore emits the first content token rather than
//! terminating, which keeps the degenerate all-uniform case well-defined.

use crate::corpus::{assemble_prompt, PromptTemplate, Vocab, EOS, RESERVED};
use crate::error::{Error, Result};
use crate::plm::PlmWeights;

/// Schedule state: the emitted weight is `CS^2`, and `CS` starts at
/// `lambda_max` and drops by `lambda_max / SL` per emitted token, clamping
/// at zero once the source length is exhausted.
#[derive(Debug, Clone)]
pub struct GuSchedule {
    pub lambda_max: f64,
    pub sl: usize,
    pub ss: f64,
    /// CS value consumed by the most recent emission.
    pub cs: f64,
    emitted: u64,
}

impl GuSchedule {
    pub fn new(lambda_max: f64, sl: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_max) {
            return Err(Error::Config(format!(
                "lambda_max must lie in [0,1], got {lambda_max}"
            )));
        }
        if sl == 0 {
            return Err(Error::Config(
                "gradual unrolling needs a positive source length".into(),
            ));
        }
        Ok(GuSchedule {
            lambda_max,
            sl,
            ss: lambda_max / sl as f64,
            cs: lambda_max,
            emitted: 0,
        })
    }

    /// Weight for the current token, then advance. The first emitted token
    /// sees `lambda_max^2`; after `SL` tokens the weight is exactly zero.
    pub fn next_lambda(&mut self) -> f64 {
        let t = self.emitted;
        self.emitted += 1;
        let cs = if t >= self.sl as u64 {
            0.0
        } else {
            (self.lambda_max - t as f64 * self.ss).max(0.0)
        };
        self.cs = cs;
        cs * cs
    }

    /// Variant that decrements before emitting, so the first token sees
    /// `(lambda_max - SS)^2`. Kept for sensitivity analysis only.
    #[doc(hidden)]
    pub fn next_lambda_decrement_first(&mut self) -> f64 {
        self.emitted += 1;
        let t = self.emitted;
        let cs = if t >= self.sl as u64 {
            0.0
        } else {
            (self.lambda_max - t as f64 * self.ss).max(0.0)
        };
        self.cs = cs;
        cs * cs
    }
}

/// Convex combination `lambda * p_adapt + (1 - lambda) * p_lm`. The
/// endpoints reproduce the inputs bit-for-bit.
pub fn interpolate(p_adapt: &[f64], p_lm: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!(
            "interpolation weight must lie in [0,1], got {lambda}"
        )));
    }
    if p_adapt.len() != p_lm.len() {
        return Err(Error::Dimension(format!(
            "cannot interpolate distributions of size {} and {}",
            p_adapt.len(),
            p_lm.len()
        )));
    }
    Ok(p_adapt
        .iter()
        .zip(p_lm)
        .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
        .collect())
}

/// How the interpolation weight evolves over a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    /// `lambda = lambda_max` for every token.
    Constant,
    /// Gradual unrolling.
    GradualUnrolling,
}

impl LambdaMode {
    pub fn parse(name: &str) -> Result<LambdaMode> {
        match name {
            "const" | "constant" => Ok(LambdaMode::Constant),
            "gu" | "gradual-unrolling" => Ok(LambdaMode::GradualUnrolling),
            other => Err(Error::Config(format!(
                "unknown lambda mode {other:?} (expected const or gu)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LambdaMode::Constant => "const",
            LambdaMode::GradualUnrolling => "gu",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub mode: LambdaMode,
    pub lambda_max: f64,
    /// Hard cap on emitted tokens.
    pub max_len: usize,
    /// Token id that terminates generation.
    pub eos: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: LambdaMode::GradualUnrolling,
            lambda_max: 0.8,
            max_len: 16,
            eos: EOS,
        }
    }
}

impl DecodeConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_max) {
            return Err(Error::Config(format!(
                "lambda_max must lie in [0,1], got {}",
                self.lambda_max
            )));
        }
        Ok(())
    }
}

/// Source of the adapted next-token distribution given a context
/// representation.
pub trait AdaptedDist {
    fn adapted_dist(&self, repr: &[f64]) -> Result<Vec<f64>>;
}

/// The trained adapter together with the shared LM head.
pub struct AdapterPredictor<'a> {
    pub weights: &'a crate::adapter::AdapterWeights,
    pub head: &'a crate::numerics::Matrix,
}

impl AdaptedDist for AdapterPredictor<'_> {
    fn adapted_dist(&self, repr: &[f64]) -> Result<Vec<f64>> {
        self.weights.dist(repr, self.head)
    }
}

enum Selection {
    Stop,
    Emit(u32),
}

/// Shared emission rule; see the module docs.
fn select_token(dist: &[f64], eos: u32) -> Result<Selection> {
    if dist.len() <= RESERVED as usize {
        return Err(Error::Dimension(format!(
            "distribution of size {} has no content tokens",
            dist.len()
        )));
    }
    let mut best = RESERVED as usize;
    for i in best + 1..dist.len() {
        if dist[i] > dist[best] {
            best = i;
        }
    }
    if dist[eos as usize] > dist[best] {
        Ok(Selection::Stop)
    } else {
        Ok(Selection::Emit(best as u32))
    }
}

/// Greedy generation under the interpolated distribution.
pub fn decode<S: AdaptedDist>(
    plm: &PlmWeights,
    adapted: &S,
    template: &PromptTemplate,
    source: &[u32],
    vocab: &Vocab,
    config: &DecodeConfig,
) -> Result<Vec<u32>> {
    config.validate()?;
    let prompt = assemble_prompt(template, source, vocab)?;
    let mut schedule = match config.mode {
        LambdaMode::GradualUnrolling => Some(GuSchedule::new(config.lambda_max, prompt.source_len)?),
        LambdaMode::Constant => None,
    };
    let mut context = prompt.tokens;
    let mut output = Vec::new();
    while output.len() < config.max_len {
        let enc = plm.encode(&context)?;
        let lambda = match schedule.as_mut() {
            Some(s) => s.next_lambda(),
            None => config.lambda_max,
        };
        let p_adapt = adapted.adapted_dist(&enc.repr)?;
        let blended = interpolate(&p_adapt, &enc.dist, lambda)?;
        match select_token(&blended, config.eos)? {
            Selection::Stop => break,
            Selection::Emit(w) => {
                output.push(w);
                context.push(w);
            }
        }
    }
    Ok(output)
}

/// Greedy generation under the bare model (the naive baseline). Uses the
/// same emission rule as [`decode`]; identical to decoding with a constant
/// weight of zero.
pub fn greedy_decode(
    plm: &PlmWeights,
    template: &PromptTemplate,
    source: &[u32],
    vocab: &Vocab,
    max_len: usize,
    eos: u32,
) -> Result<Vec<u32>> {
    let prompt = assemble_prompt(template, source, vocab)?;
    let mut context = prompt.tokens;
    let mut output = Vec::new();
    while output.len() < max_len {
        let enc = plm.encode(&context)?;
        match select_token(&enc.dist, eos)? {
            Selection::Stop => break,
            Selection::Emit(w) => {
                output.push(w);
                context.push(w);
            }
        }
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::AdapterWeights;
    use crate::corpus::{gen_parallel, Task, Vocab};
    use crate::plm::{train_plm, PlmConfig, PlmWeights};

    #[test]
    fn gu_hand_evaluated_sequences() {
        let mut s = GuSchedule::new(0.9, 3).unwrap();
        let seq: Vec<f64> = (0..6).map(|_| s.next_lambda()).collect();
        assert!((seq[0] - 0.81).abs() < 1e-12);
        assert!((seq[1] - 0.36).abs() < 1e-12);
        assert!((seq[2] - 0.09).abs() < 1e-12);
        assert_eq!(seq[3], 0.0);
        assert_eq!(seq[4], 0.0);

        let mut s = GuSchedule::new(0.7, 7).unwrap();
        for _ in 0..3 {
            s.next_lambda();
        }
        let fourth = s.next_lambda();
        assert!((fourth - 0.16).abs() < 1e-12, "fourth token weight {fourth}");
    }

    #[test]
    fn gu_zero_lambda_max() {
        let mut s = GuSchedule::new(0.0, 5).unwrap();
        for _ in 0..10 {
            assert_eq!(s.next_lambda(), 0.0);
        }
    }

    #[test]
    fn gu_rejects_zero_source_length() {
        assert!(GuSchedule::new(0.5, 0).is_err());
    }

    #[test]
    fn gu_is_non_increasing_and_hits_zero() {
        for &(lm, sl) in &[(0.9, 3usize), (0.7, 7), (0.35, 11), (1.0, 1)] {
            let mut s = GuSchedule::new(lm, sl).unwrap();
            let mut prev = f64::INFINITY;
            for t in 0..2 * sl + 2 {
                let l = s.next_lambda();
                if t == 0 {
                    assert!((l - lm * lm).abs() < 1e-15);
                }
                assert!(l <= prev + 1e-15);
                if t >= sl {
                    assert_eq!(l, 0.0, "t={t} sl={sl}");
                }
                prev = l;
            }
        }
    }

    #[test]
    fn decrement_first_variant_starts_lower() {
        let mut s = GuSchedule::new(0.9, 3).unwrap();
        let first = s.next_lambda_decrement_first();
        assert!((first - 0.36).abs() < 1e-12);
    }

    #[test]
    fn interpolate_endpoints_exact() {
        let a = vec![0.7, 0.2, 0.1];
        let b = vec![0.1, 0.3, 0.6];
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), b);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), a);
        let mid = interpolate(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(mid, vec![0.5, 0.5]);
    }

    #[test]
    fn interpolate_bounds_and_sum() {
        let a = vec![0.7, 0.2, 0.1];
        let b = vec![0.1, 0.3, 0.6];
        let p = interpolate(&a, &b, 0.37).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        for i in 0..3 {
            assert!(p[i] >= a[i].min(b[i]) - 1e-15);
            assert!(p[i] <= a[i].max(b[i]) + 1e-15);
        }
        assert!(interpolate(&a, &b, 1.1).is_err());
        assert!(interpolate(&a, &b[..2], 0.5).is_err());
    }

    fn trained() -> (PlmWeights, Vocab) {
        let vocab = Vocab::toy();
        let pairs = gen_parallel(Task::Cipher, 80, 5, &vocab).unwrap();
        let config = PlmConfig {
            d: 16,
            k: 4,
            hidden: 24,
            epochs: 3,
            seed: 4,
            ..PlmConfig::default()
        };
        (train_plm(&pairs, &vocab, &config).unwrap(), vocab)
    }

    /// Adapted source with a fixed distribution, for tests.
    struct FixedDist(Vec<f64>);

    impl AdaptedDist for FixedDist {
        fn adapted_dist(&self, _repr: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn lambda_zero_reproduces_naive_greedy() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let source = vocab.tokenize("go home and eat food");
        let uniform = FixedDist(vec![1.0 / 68.0; 68]);
        let config = DecodeConfig {
            mode: LambdaMode::Constant,
            lambda_max: 0.0,
            max_len: 10,
            eos: EOS,
        };
        let via_decode = decode(&plm, &uniform, &template, &source, &vocab, &config).unwrap();
        let naive = greedy_decode(&plm, &template, &source, &vocab, 10, EOS).unwrap();
        assert_eq!(via_decode, naive);
    }

    #[test]
    fn zero_bpd_full_lambda_repeats_first_content_token() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let source = vocab.tokenize("go home");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let adapter = AdapterWeights::init(16, 4, &mut rng).unwrap();
        let head = plm.head().clone();
        let predictor = AdapterPredictor {
            weights: &adapter,
            head: &head,
        };
        let config = DecodeConfig {
            mode: LambdaMode::Constant,
            lambda_max: 1.0,
            max_len: 5,
            eos: EOS,
        };
        let out = decode(&plm, &predictor, &template, &source, &vocab, &config).unwrap();
        assert_eq!(out, vec![RESERVED; 5]);
    }

    #[test]
    fn gu_decode_matches_manual_trace() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let source = vocab.tokenize("go home now"); // SL = 3
        let adapt = FixedDist({
            let mut d = vec![0.0; 68];
            d[10] = 1.0;
            d
        });
        let config = DecodeConfig {
            mode: LambdaMode::GradualUnrolling,
            lambda_max: 0.9,
            max_len: 6,
            eos: EOS,
        };
        let got = decode(&plm, &adapt, &template, &source, &vocab, &config).unwrap();

        // Manual replay using the schedule directly.
        let mut schedule = GuSchedule::new(0.9, 3).unwrap();
        let mut ctx = assemble_prompt(&template, &source, &vocab).unwrap().tokens;
        let mut expected = Vec::new();
        for _ in 0..6 {
            let enc = plm.encode(&ctx).unwrap();
            let lambda = schedule.next_lambda();
            let p_adapt = adapt.adapted_dist(&enc.repr).unwrap();
            let blended = interpolate(&p_adapt, &enc.dist, lambda).unwrap();
            match select_token(&blended, EOS).unwrap() {
                Selection::Stop => break,
                Selection::Emit(w) => {
                    expected.push(w);
                    ctx.push(w);
                }
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn decode_is_deterministic() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let source = vocab.tokenize("we play games");
        let adapt = FixedDist(vec![1.0 / 68.0; 68]);
        let config = DecodeConfig::default();
        let a = decode(&plm, &adapt, &template, &source, &vocab, &config).unwrap();
        let b = decode(&plm, &adapt, &template, &source, &vocab, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decode_rejects_empty_source() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let adapt = FixedDist(vec![1.0 / 68.0; 68]);
        assert!(decode(&plm, &adapt, &template, &[], &vocab, &DecodeConfig::default()).is_err());
    }

    #[test]
    fn eos_peak_stops_generation() {
        let (plm, vocab) = trained();
        let template = crate::corpus::PromptTemplate::default_for(Task::Cipher);
        let source = vocab.tokenize("go home");
        let mut d = vec![0.0; 68];
        d[EOS as usize] = 1.0;
        let adapt = FixedDist(d);
        let config = DecodeConfig {
            mode: LambdaMode::Constant,
            lambda_max: 1.0,
            max_len: 8,
            eos: EOS,
        };
        let out = decode(&plm, &adapt, &template, &source, &vocab, &config).unwrap();
        assert!(out.is_empty());
    }
}
