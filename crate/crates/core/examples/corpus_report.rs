//! Separates a synthetic corpus with every method and prints mean scores.
//!
//! `cargo run --release -p phasecnmf --example corpus_report -- [count] [seed] [sigma_u] [sigma_r] [sigma_s]`

use phasecnmf::dataset::{synth_corpus, SynthConfig};
use phasecnmf::eval::aggregate;
use phasecnmf::pipeline::evaluate_ground_truth;
use phasecnmf::{Method, SeparationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1);

    let synth = SynthConfig::default();
    let corpus = synth_corpus(seed, count, &synth)?;
    let mut config = SeparationConfig::default();
    if let Some(v) = args.next() {
        config.sigma_u = v.parse()?;
    }
    if let Some(v) = args.next() {
        config.sigma_r = v.parse()?;
    }
    config.sigma_s = args.next().map(|a| a.parse()).transpose()?;
    for method in Method::ALL {
        let mut scores = Vec::new();
        let mut worst_rise = 0.0f64;
        for truth in &corpus {
            let (s, out) = evaluate_ground_truth(truth, &synth.stft, method, &config)?;
            for pair in out.cost_trace.windows(2) {
                worst_rise = worst_rise.max((pair[1] - pair[0]) / pair[0]);
            }
            scores.push(s);
        }
        let agg = aggregate(&scores)?;
        println!(
            "{:<9} SDR {:6.2}  SIR {:6.2}  SAR {:6.2}  worst relative cost rise {:.3e}",
            method.label(),
            agg.mean.sdr_db,
            agg.mean.sir_db,
            agg.mean.sar_db,
            worst_rise
        );
    }
    Ok(())
}
