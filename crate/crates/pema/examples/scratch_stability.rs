//! Scratch: stability of the acceptance-gated quantities across seeds.

use pema::decoding::{DecodeConfig, LambdaMode};
use pema::eval::pipeline::{
    build_artifacts, eval_adapter, eval_naive, PipelineConfig,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs2: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for seed in [7u64, 8, 9] {
        let mut config = PipelineConfig::default();
        config.seed = seed;
        config.train.epochs_phase2 = epochs2;
        config.train.batch_tokens = 256;
        config.train.lr = 3e-3;
        let t = std::time::Instant::now();
        let artifacts = build_artifacts(&config).unwrap();
        let test = artifacts.test_pairs();

        let gu = |lm: f64| DecodeConfig {
            mode: LambdaMode::GradualUnrolling,
            lambda_max: lm,
            ..DecodeConfig::default()
        };
        let ct = |lm: f64| DecodeConfig {
            mode: LambdaMode::Constant,
            lambda_max: lm,
            ..DecodeConfig::default()
        };

        let naive = eval_naive(&artifacts, &gu(0.8), &test).unwrap();
        let pema = eval_adapter(&artifacts, &gu(0.8), &test).unwrap();
        println!(
            "seed {seed}: naive {:.2} pema {:.2} lift {:.2}  ({:.0}s)",
            naive.bleu,
            pema.bleu,
            pema.bleu - naive.bleu,
            t.elapsed().as_secs_f64()
        );
        for lm in [0.7, 0.8, 0.9] {
            let g = eval_adapter(&artifacts, &gu(lm), &test).unwrap();
            let c = eval_adapter(&artifacts, &ct(lm), &test).unwrap();
            println!(
                "  lm {lm}: GU ppl {:.2} bleu {:.2} | const ppl {:.2} bleu {:.2} | gu_ppl<=const {}",
                g.ppl,
                g.bleu,
                c.ppl,
                c.bleu,
                g.ppl <= c.ppl
            );
        }
    }
}
