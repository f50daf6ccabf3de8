// Random Evo and Evo-Devo robots side by side: how many barely move, and
// whether development spreads the fitness distribution.

use softbot_devo::analysis::{fraction_near_zero, mann_whitney_u, median, random_search, Histogram};
use softbot_devo::{Mode, SimConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let sim = SimConfig { eval_duration: 1.0, ..SimConfig::default() };
    let mut samples = Vec::new();
    for mode in [Mode::Evo, Mode::EvoDevo] {
        let f: Vec<f64> = random_search(n, mode, &sim, 11)?.iter().map(|r| r.fitness).collect();
        println!("{mode}: median {:+.4}, |F| < 0.01: {:.2}", median(&f), fraction_near_zero(&f, 0.01));
        samples.push(f);
    }
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let mw = mann_whitney_u(&abs(&samples[1]), &abs(&samples[0]))?;
    println!("|F| evo-devo vs evo: U={} p={:.3}", mw.u, mw.p);

    let hist = Histogram::pooled(&[&samples[0], &samples[1]], 10)?;
    for (i, w) in hist.edges.windows(2).enumerate() {
        println!("[{:+.3}, {:+.3}) {:>3} {:>3}", w[0], w[1], hist.counts[0][i], hist.counts[1][i]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
