//! Scratch: measure the pretrained model's end-of-sentence hazard
//! calibration per context length.

use pema::corpus::{gen_parallel, select_split, Split, Task, Vocab, BOS, EOS};
use pema::plm::{pretraining_sequences, train_plm, PlmConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let vocab = Vocab::toy();
    let pairs = gen_parallel(Task::Cipher, 2000, 7, &vocab).unwrap();
    let train = select_split(&pairs, Split::Train);
    let config = PlmConfig {
        epochs,
        seed: 8,
        ..PlmConfig::default()
    };
    let plm = train_plm(&train, &vocab, &config).unwrap();

    // empirical length distribution
    let mut len_counts = [0usize; 16];
    for p in &train {
        len_counts[p.source.len().min(15)] += 1;
    }
    println!("length histogram: {:?}", &len_counts[3..13]);

    // model hazard vs empirical hazard per position, averaged over many
    // real source prefixes
    let seqs = pretraining_sequences(&train);
    let mut model_hazard = vec![(0.0f64, 0usize); 14];
    let mut true_end = vec![(0usize, 0usize); 14];
    for seq in seqs.iter().take(2000) {
        // seq = [BOS, w.., EOS]; at context [BOS..w_t] the next is w_{t+1} or EOS
        let content = seq.len() - 2;
        for t in 1..=content {
            let ctx = &seq[..=t];
            let enc = plm.encode(ctx).unwrap();
            let h = &mut model_hazard[t.min(13)];
            h.0 += enc.dist[EOS as usize];
            h.1 += 1;
            let e = &mut true_end[t.min(13)];
            if t == content {
                e.0 += 1;
            }
            e.1 += 1;
        }
    }
    println!("pos | model P(EOS) | empirical P(end)");
    for t in 1..14 {
        if model_hazard[t].1 > 0 {
            println!(
                "{t:3} | {:.3} | {:.3}  (n={})",
                model_hazard[t].0 / model_hazard[t].1 as f64,
                true_end[t].0 as f64 / true_end[t].1 as f64,
                model_hazard[t].1
            );
        }
    }
    let _ = BOS;
}
