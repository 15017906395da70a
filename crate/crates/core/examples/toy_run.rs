//! Trains the desk-profile encoder on the synthetic corpus and prints
//! validation scores. `TOY_STEPS` and `TOY_LR` override the defaults.

use std::time::Instant;

use sentimark::corpus::{build_sgts_benchmark, sample_quadruples};
use sentimark::evaluation::{fewshot_eval, sgts_score, FewShotConfig};
use sentimark::objectives::HyperParams;
use sentimark::{synthetic, Encoder, EncoderConfig, Model, TokenizerMode, Tokenizer, TrainConfig};

fn env<T: std::str::FromStr>(key: &str) -> Option<T> {
    std::env::var(key).ok().and_then(|v| v.parse().ok())
}

fn main() -> sentimark::Result<()> {
    let corpus = synthetic::generate(2000, 400, 1)?;
    let texts: Vec<&str> = corpus.train.iter().map(|e| e.text.as_str()).collect();
    let tok = Tokenizer::build(&texts, TokenizerMode::Word, 128, 1);
    let enc = Encoder::new(EncoderConfig::desk(tok.vocab().len()))?;
    let model = Model::new(tok, enc)?;
    let quads = sample_quadruples(&corpus.train, 1)?;
    let bench = build_sgts_benchmark(&corpus.valid, 2)?;
    println!("vocab {} quads {} pairs {}", model.tokenizer.vocab().len(), quads.len(), bench.len());
    println!("random-init sgts {:.4}", sgts_score(&model, &bench)?.spearman_rho);

    let mut cfg = TrainConfig::desk();
    if let Some(s) = env("TOY_STEPS") {
        cfg.max_steps = s;
    }
    if let Some(lr) = env("TOY_LR") {
        cfg.learning_rate = lr;
    }
    let t = Instant::now();
    let (best, log) = sentimark::trainer::pretrain(model.clone(), &quads, &bench, &corpus.lexicon, &HyperParams::default(), &cfg)?;
    println!("trained {} steps in {:.1}s", cfg.max_steps, t.elapsed().as_secs_f64());
    for e in &log.evals {
        let l = log.steps.get(e.step.saturating_sub(1)).map(|s| s.losses);
        println!("step {:5} sgts {:.4} {:?}", e.step, e.sgts, l.map(|l| (l.l_w, l.l_s)));
    }
    println!("best step {} sgts {:.4}", log.best_step, log.best_sgts);
    if env::<u8>("TOY_FEWSHOT") == Some(1) {
        let fcfg = FewShotConfig { k: 5, learning_rate: cfg.learning_rate, ..Default::default() };
        for (name, m) in [("trained", &best), ("random", &model)] {
            let t = Instant::now();
            let r = fewshot_eval(m, &corpus.train, &corpus.valid, &fcfg)?;
            println!("{name} 5-shot mean {:.4} std {:.4} {:?} ({:.1}s)", r.mean, r.std, r.accuracies, t.elapsed().as_secs_f64());
        }
    }
    Ok(())
}
