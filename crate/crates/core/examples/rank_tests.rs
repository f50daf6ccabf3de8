// Mann-Whitney U and Spearman rank correlation on small hand-made samples.

use softbot_devo::analysis::{mann_whitney_normal, mann_whitney_u, spearman};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let a = [1.8, 2.4, 2.4, 3.1, 4.0, 5.2];
    let b = [0.9, 1.1, 1.8, 2.0, 2.2];
    let exact = mann_whitney_u(&a, &b)?;
    let normal = mann_whitney_normal(&a, &b)?;
    println!("U={} U'={} exact p={:.4} normal p={:.4}", exact.u, exact.u_other, exact.p, normal.p);

    let big: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
    let shifted: Vec<f64> = big.iter().map(|v| v + 3.0).collect();
    let r = mann_whitney_u(&shifted, &big)?;
    println!("n=40+40: U={} z={:.3} p={:.4} ({:?})", r.u, r.z, r.p, r.method);

    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
    let s = spearman(&x, &y)?;
    println!("spearman rho={:.4} p={:.4}", s.rho, s.p);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
