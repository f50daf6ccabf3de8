// Champion fitness as a function of the per-voxel mutation rate.

use softbot_devo::analysis::{median, sweep};
use softbot_devo::evolution::EvolutionParams;
use softbot_devo::{Mode, MutationConfig, SimConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let base = EvolutionParams { mode: Mode::Evo, population_size: 4, generations: 3, mutation: MutationConfig::default() };
    let sim = SimConfig { eval_duration: 0.5, ..SimConfig::default() };
    let rates = [0.1, 0.5, 1.0];
    let modes = [Mode::Evo, Mode::EvoDevo];
    let cells = sweep(&rates, 2, &modes, &base, &sim, 9)?;
    for rate in rates {
        for mode in modes {
            let f: Vec<f64> =
                cells.iter().filter(|c| c.rate == rate && c.mode == mode).map(|c| c.champion_fitness).collect();
            println!("rate {rate:<4} {mode:<8} median champion {:.5}", median(&f));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
