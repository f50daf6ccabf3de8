// How one developing voxel changes over a lifetime: rest length, the
// damped actuation on top of it, and the robot volume that normalises fitness.

use softbot_devo::fitness::total_volume;
use softbot_devo::genome::{current_length, damping_factor, rest_length};
use softbot_devo::{ActuationParams, Gene, Genome, Mode};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = ActuationParams::default();
    let tau = 4.0;
    let gene = Gene::new(0.4, 1.6)?;
    let body = Genome::uniform(gene, Mode::EvoDevo)?;
    println!("gene s0={} s1={} window={}", gene.s0, gene.s1, gene.window());
    println!("{:>6} {:>8} {:>6} {:>8} {:>9}", "t", "rest", "d", "length", "volume");
    for i in 0..=16 {
        let t = tau * i as f64 / 16.0 + p.period / 4.0;
        let t = t.min(tau);
        let r = rest_length(gene, t, tau)?;
        println!(
            "{t:6.3} {r:8.4} {:6.3} {:8.4} {:9.3}",
            damping_factor(r),
            current_length(gene, t, tau, p)?,
            total_volume(&body, t, tau, p)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
