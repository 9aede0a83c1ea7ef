//! Scratch: BLEU across kappa cells (criterion direction: best of
//! 0.2..0.5 should be at least the kappa = 0 value).

use pema::eval::pipeline::{build_artifacts, eval_adapter, PipelineConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs2: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let epochs1: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let freeze = args.get(4).map(|s| s == "freeze").unwrap_or(false);
    let n_pairs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2000);
    for seed in [7u64, 8, 9] {
        let mut results = Vec::new();
        for kappa in [0.0, 0.2, 0.3, 0.4, 0.5] {
            let mut config = PipelineConfig::default();
            config.seed = seed;
            config.train.kappa = kappa;
            config.train.epochs_phase2 = epochs2;
            config.train.epochs_phase1 = epochs1;
            config.train.freeze_brct_in_phase2 = freeze;
            config.train.batch_tokens = 256;
            config.train.lr = lr;
            config.n_pairs = n_pairs;
            if args.get(6).map(|s| s == "formalize").unwrap_or(false) { config.task = pema::corpus::Task::Formalize; }
            let artifacts = build_artifacts(&config).unwrap();
            let test = artifacts.test_pairs();
            let scores = eval_adapter(&artifacts, &config.decode, &test).unwrap();
            results.push((kappa, scores.bleu));
            println!("seed {seed} kappa {kappa}: bleu {:.2}", scores.bleu);
        }
        let at_zero = results[0].1;
        let best = results[1..].iter().map(|r| r.1).fold(f64::MIN, f64::max);
        println!("seed {seed}: best(0.2..0.5) {best:.2} vs kappa0 {at_zero:.2} -> {}", best >= at_zero);
    }
}
