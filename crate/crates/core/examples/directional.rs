//! Runs the synthetic directional experiment and prints mean precision.
//!
//! `cargo run --release -p bgm-core --example directional [classifier] [seed]`

use std::time::Instant;

use bgm_core::eval::{fit_bgm, generate_synthetic, run_benchmark, BenchmarkConfig, Method, SynthConfig};
use bgm_core::training::ClassifierKind;

fn main() {
    let mut args = std::env::args().skip(1);
    let classifier = match args.next().as_deref() {
        Some("naive_bayes") => ClassifierKind::NaiveBayes,
        _ => ClassifierKind::Logistic,
    };
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let start = Instant::now();
    let synth = generate_synthetic(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
    let d = &synth.data;
    eprintln!("ratings: source {}, target {}", d.source.len(), d.target.len());
    let mut cfg = BenchmarkConfig { seed, n_values: vec![5, 10, 15, 20], ..BenchmarkConfig::default() };
    cfg.bgm.train.classifier = classifier;
    let fitted = fit_bgm(&d.source, &d.target, &d.source_content, &d.target_content, &cfg.bgm).unwrap();
    eprintln!(
        "full fit: {} source trees, {} target trees, {} bridges ({:.1?})",
        fitted.source_trees,
        fitted.target_trees,
        fitted.bridges,
        start.elapsed()
    );
    let report = run_benchmark(d, &cfg).unwrap();
    for n in [5, 10, 15, 20] {
        let m = |x| report.mean(x, n).unwrap();
        let t = report.t_test(Method::Bgm, Method::Popularity, n).unwrap();
        println!(
            "N={n:>3} bgm {:.4} popularity {:.4} knn {:.4} t={:?} p={:?}",
            m(Method::Bgm),
            m(Method::Popularity),
            m(Method::Knn),
            t.t,
            t.p
        );
    }
    eprintln!("users {} elapsed {:.1?}", report.users.len(), start.elapsed());
}
