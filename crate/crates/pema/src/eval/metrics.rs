//! Corpus BLEU and perplexity.

use std::collections::HashMap;
use std::hash::Hash;

use crate::corpus::BOS;
use crate::error::{Error, Result};
use crate::numerics::cross_entropy;
use crate::plm::PlmWeights;

/// Smoothing value substituted for an n-gram precision whose match count
/// is zero.
pub const BLEU_EPSILON: f64 = 1e-9;

const MAX_ORDER: usize = 4;

/// Corpus-level BLEU in [0, 100]: 4-gram clipped precisions combined by
/// geometric mean (zero match counts smoothed to [`BLEU_EPSILON`]) and the
/// standard brevity penalty against closest-length references.
pub fn bleu<T: Eq + Hash + Clone>(hypotheses: &[Vec<T>], references: &[Vec<Vec<T>>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses against {} reference lists",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Input("empty corpus".into()));
    }
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];

    for (hyp, refs) in hypotheses.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Input("hypothesis without references".into()));
        }
        hyp_len += hyp.len();
        // closest reference length; ties toward the shorter one
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| {
                let diff = (l as i64 - hyp.len() as i64).abs();
                (diff, l)
            })
            .unwrap();
        ref_len += closest;

        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                continue;
            }
            totals[n - 1] += (hyp.len() - n + 1) as u64;
            // clipped counts against the maximum reference count per n-gram
            let mut max_ref: HashMap<&[T], u64> = HashMap::new();
            for r in refs {
                if r.len() < n {
                    continue;
                }
                let mut counts: HashMap<&[T], u64> = HashMap::new();
                for gram in r.windows(n) {
                    *counts.entry(gram).or_insert(0) += 1;
                }
                for (gram, c) in counts {
                    let e = max_ref.entry(gram).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            let mut hyp_counts: HashMap<&[T], u64> = HashMap::new();
            for gram in hyp.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            for (gram, c) in hyp_counts {
                let allowed = max_ref.get(gram).copied().unwrap_or(0);
                matches[n - 1] += c.min(allowed);
            }
        }
    }

    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let p = if matches[n] == 0 {
            BLEU_EPSILON
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / MAX_ORDER as f64).exp())
}

/// Perplexity of token sequences under the frozen scoring model:
/// exp of the mean per-token negative log-likelihood, with contexts grown
/// from BOS. Empty sequences are skipped; an input with no tokens at all is
/// an error.
pub fn perplexity(plm: &PlmWeights, sequences: &[Vec<u32>]) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::Input("no sequences to score".into()));
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    for seq in sequences {
        let mut context = vec![BOS];
        for &tok in seq {
            let enc = plm.encode(&context)?;
            nll += cross_entropy(&enc.dist, tok)?;
            context.push(tok);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Input("all sequences are empty".into()));
    }
    Ok((nll / count as f64).exp())
}
