//! Scratch experiment: measure the task lift on the cipher pipeline with
//! the acceptance hyperparameters. Not part of the test suite.
//!
//! Usage: scratch_lift [rank] [epochs1] [epochs2] [batch_tokens] [lr] [mode]

use std::time::Instant;

use pema::decoding::{DecodeConfig, LambdaMode};
use pema::eval::pipeline::{build_artifacts, eval_adapter, eval_knn, eval_naive, PipelineConfig};
use pema::memory::MemoryMode;
use pema::numerics::argmax;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |i: usize, d: f64| -> f64 { args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d) };

    let mut config = PipelineConfig::default();
    config.n_pairs = 2000;
    config.seed = 7;
    config.train.rank = get(1, 16.0) as usize;
    config.train.epochs_phase1 = get(2, 30.0) as usize;
    config.train.epochs_phase2 = get(3, 60.0) as usize;
    config.train.batch_tokens = get(4, 4096.0) as usize;
    config.train.lr = get(5, 1e-3);
    config.memory_mode = if args.get(6).map(|s| s == "teacher").unwrap_or(false) {
        MemoryMode::Teacher
    } else {
        MemoryMode::Predicted
    };
    config.train.kappa = get(7, 0.3);
    config.plm.epochs = get(8, 12.0) as usize;
    if args.get(9).map(|s| s == "nocue").unwrap_or(false) {
        let mut t = pema::corpus::PromptTemplate::default_for(config.task);
        t.target_cue = String::new();
        config.template = Some(t);
    }
    config.decode = DecodeConfig {
        mode: LambdaMode::GradualUnrolling,
        lambda_max: 0.8,
        max_len: 16,
        eos: pema::corpus::EOS,
    };
    println!(
        "rank {} epochs {}/{} batch {} lr {} mode {:?} kappa {}",
        config.train.rank,
        config.train.epochs_phase1,
        config.train.epochs_phase2,
        config.train.batch_tokens,
        config.train.lr,
        config.memory_mode,
        config.train.kappa
    );

    let t0 = Instant::now();
    let artifacts = build_artifacts(&config).expect("pipeline");
    println!("build: {:.1}s  memory len {}", t0.elapsed().as_secs_f64(), artifacts.memory.len());
    for (i, e) in artifacts.report_phase1.epochs.iter().enumerate() {
        if i % 10 == 0 || i + 1 == artifacts.report_phase1.epochs.len() {
            println!("  p1 epoch {i}: rct {:.4}", e.rct);
        }
    }
    for (i, e) in artifacts.report_phase2.epochs.iter().enumerate() {
        if i % 20 == 0 || i + 1 == artifacts.report_phase2.epochs.len() {
            println!("  p2 epoch {i}: rct {:.4} pd {:.4} (per-token {:.3})", e.rct, e.pd, e.pd / 5.5);
        }
    }

    // training-set argmax accuracy of the adapter, per position, plus mean
    // gold probability (sharpness)
    let mem = &artifacts.memory;
    let head = artifacts.plm.head();
    let mut correct_by_pos = [0usize; 12];
    let mut total_by_pos = [0usize; 12];
    let mut goldp_by_pos = [0f64; 12];
    for i in 0..mem.len() {
        let rec = &mem.records[i];
        let dist = artifacts.adapter.dist(&mem.repr_f64(i), head).unwrap();
        let pos = (rec.position as usize).min(11);
        total_by_pos[pos] += 1;
        goldp_by_pos[pos] += dist[rec.target as usize];
        if argmax(&dist) as u32 == rec.target {
            correct_by_pos[pos] += 1;
        }
    }
    let tot: usize = total_by_pos.iter().sum();
    let cor: usize = correct_by_pos.iter().sum();
    println!("train argmax acc: {:.3}", cor as f64 / tot as f64);
    for p in 1..9 {
        if total_by_pos[p] > 0 {
            println!(
                "  pos {p}: acc {:.3} goldp {:.3} (n={})",
                correct_by_pos[p] as f64 / total_by_pos[p] as f64,
                goldp_by_pos[p] / total_by_pos[p] as f64,
                total_by_pos[p]
            );
        }
    }

    let test = artifacts.test_pairs();
    let naive = eval_naive(&artifacts, &config.decode, &test).expect("naive");
    let adapted = eval_adapter(&artifacts, &config.decode, &test).expect("adapter");
    let knn = eval_knn(&artifacts, config.knn, &config.decode, &test).expect("knn");
    println!("naive   BLEU {:.2}  PPL {:.2}", naive.bleu, naive.ppl);
    println!("adapter BLEU {:.2}  PPL {:.2}", adapted.bleu, adapted.ppl);
    println!("knn     BLEU {:.2}  PPL {:.2}", knn.bleu, knn.ppl);
    println!("lift: {:.2}", adapted.bleu - naive.bleu);

    // decode-time per-position accuracy against references
    use pema::decoding::AdapterPredictor;
    use pema::eval::pipeline::decode_corpus;
    let predictor = AdapterPredictor {
        weights: &artifacts.adapter,
        head: artifacts.plm.head(),
    };
    let outs = decode_corpus(
        &artifacts.plm,
        &predictor,
        &artifacts.template,
        &test,
        &artifacts.vocab,
        &config.decode,
    )
    .unwrap();
    let mut match_by_pos = [0usize; 13];
    let mut tot_by_pos = [0usize; 13];
    let mut len_sum = 0;
    let mut ref_sum = 0;
    for (out, pair) in outs.iter().zip(&test) {
        len_sum += out.len();
        ref_sum += pair.target.len();
        for (i, &r) in pair.target.iter().enumerate().take(12) {
            tot_by_pos[i + 1] += 1;
            if out.get(i) == Some(&r) {
                match_by_pos[i + 1] += 1;
            }
        }
    }
    println!(
        "decode: avg hyp len {:.2} vs ref len {:.2}",
        len_sum as f64 / outs.len() as f64,
        ref_sum as f64 / test.len() as f64
    );
    for p in 1..9 {
        if tot_by_pos[p] > 0 {
            println!(
                "  decode pos {p}: match {:.3} (n={})",
                match_by_pos[p] as f64 / tot_by_pos[p] as f64,
                tot_by_pos[p]
            );
        }
    }
    for i in 0..3 {
        println!(
            "  ex: src {:?}\n      hyp {:?}\n      ref {:?}",
            artifacts.vocab.detokenize(&test[i].source),
            artifacts.vocab.detokenize(&outs[i]),
            artifacts.vocab.detokenize(&test[i].target)
        );
    }

    // step-by-step trace of one decode
    let pair = &test[1];
    let prompt = pema::corpus::assemble_prompt(&artifacts.template, &pair.source, &artifacts.vocab).unwrap();
    let mut ctx = prompt.tokens.clone();
    let mut sched = pema::decoding::GuSchedule::new(config.decode.lambda_max, prompt.source_len).unwrap();
    println!("trace for src {:?} -> ref {:?}", artifacts.vocab.detokenize(&pair.source), artifacts.vocab.detokenize(&pair.target));
    for step in 0..6 {
        let enc = artifacts.plm.encode(&ctx).unwrap();
        let lambda = sched.next_lambda();
        let pa = artifacts.adapter.dist(&enc.repr, artifacts.plm.head()).unwrap();
        let blend = pema::decoding::interpolate(&pa, &enc.dist, lambda).unwrap();
        let top = |d: &[f64]| {
            let mut idx: Vec<usize> = (0..d.len()).collect();
            idx.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
            idx[..3]
                .iter()
                .map(|&i| format!("{}={:.2}", artifacts.vocab.token(i as u32).unwrap(), d[i]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "  step {step} lam {lambda:.2}\n    pa   : {}\n    plm  : {}\n    blend: {}",
            top(&pa),
            top(&enc.dist),
            top(&blend)
        );
        let w = argmax(&blend);
        if w as u32 == pema::corpus::EOS || blend[pema::corpus::EOS as usize] > blend[w] {
            println!("    -> stop");
            break;
        }
        ctx.push(w as u32);
        println!("    -> emit {}", artifacts.vocab.token(w as u32).unwrap());
    }
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
