//! Lifetime simulation of one genome and its volume-normalised displacement.
//!
//! The centre-of-mass y and total body volume are sampled at a fixed rate.
//! Fitness sums each interval's displacement divided by the mean volume over
//! that interval, so a body of volume 48 moving 48 voxel lengths scores 1.
//! Volume is the analytic sum of cubed actuated lengths, not a measurement of
//! the deformed lattice.

use std::io::Write;

use crate::genome::{self, ActuationParams, Genome, NUM_GENES};
use crate::physics::{build_lattice, center_of_mass_y, PhysicsError, PhysicsState, SimConfig};
use crate::Error;

/// Lifetime fraction at which development is frozen for midlife reevaluation.
pub const MIDLIFE: f64 = 0.5;
/// Length of a frozen-development reevaluation (s).
pub const FROZEN_DURATION: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Develop over the configured lifetime.
    Full,
    /// Rest lengths fixed at their midlife values, evaluated for two seconds.
    FrozenMidlife,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessSample {
    pub t: f64,
    pub y: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitnessTrace {
    pub samples: Vec<FitnessSample>,
    pub terminated_rollover: bool,
    /// Set when the physics blew up; fitness is then 0.
    pub blowup: Option<String>,
    pub fitness: f64,
}

/// Total body volume: twice the sum of cubed actuated gene lengths.
pub fn total_volume(genome: &Genome, t: f64, tau: f64, params: ActuationParams) -> Result<f64, Error> {
    let mut sum = 0.0;
    for &g in genome.genes() {
        let l = genome::current_length(g, t, tau, params)?;
        sum += l * l * l;
    }
    Ok(2.0 * sum)
}

fn total_volume_at(genome: &Genome, frac: f64, signal: f64) -> f64 {
    let mut sum = 0.0;
    for &g in genome.genes().iter().take(NUM_GENES) {
        let l = genome::actuated(genome::rest_length_unchecked(g, frac), signal);
        sum += l * l * l;
    }
    2.0 * sum
}

/// Volume-normalised displacement over consecutive `(y, Q)` samples.
pub fn fitness_from_samples<I>(samples: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut iter = samples.into_iter();
    let Some((mut y_prev, mut q_prev)) = iter.next() else {
        return 0.0;
    };
    let mut f = 0.0;
    for (y, q) in iter {
        f += (y - y_prev) / (q + q_prev);
        y_prev = y;
        q_prev = q;
    }
    2.0 * f
}

impl FitnessTrace {
    /// Recompute fitness from the stored samples (0 if rolled over or blown up).
    pub fn recompute(&self) -> f64 {
        if self.terminated_rollover || self.blowup.is_some() {
            0.0
        } else {
            fitness_from_samples(self.samples.iter().map(|s| (s.y, s.q)))
        }
    }

    /// CSV with `t,y,Q` rows and a trailing `fitness,<F>,<terminated>` row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,y,Q")?;
        for s in &self.samples {
            writeln!(out, "{:?},{:?},{:?}", s.t, s.y, s.q)?;
        }
        let status = if self.terminated_rollover {
            "rollover"
        } else if self.blowup.is_some() {
            "blowup"
        } else {
            "complete"
        };
        writeln!(out, "fitness,{:?},{status}", self.fitness)
    }
}

/// Simulate `genome` and compute its fitness.
pub fn evaluate(genome: &Genome, config: &SimConfig, mode: EvalMode) -> Result<FitnessTrace, Error> {
    simulate(genome, config, mode, |_| {})
}

/// Like [`evaluate`], calling `observer` with the state at every sampling instant (including t = 0).
pub fn simulate<F>(genome: &Genome, config: &SimConfig, mode: EvalMode, mut observer: F) -> Result<FitnessTrace, Error>
where
    F: FnMut(&PhysicsState),
{
    let (genome, config) = match mode {
        EvalMode::Full => (genome.clone(), config.clone()),
        EvalMode::FrozenMidlife => (
            genome.frozen_at(MIDLIFE),
            SimConfig { eval_duration: FROZEN_DURATION, ..config.clone() },
        ),
    };
    config.validate()?;
    let tau = config.eval_duration;
    let rate = config.sample_rate;
    let steps_per_sample = config.steps_per_sample()?;
    let n_samples = (tau * rate).round() as u64;
    let params = config.actuation();
    let develops = !genome.genes().iter().all(|g| g.is_inert());

    let mut state = build_lattice(&genome.rest_lengths_at(0.0), &config)?;
    let mut samples = Vec::with_capacity(n_samples as usize + 1);
    samples.push(FitnessSample { t: 0.0, y: center_of_mass_y(&state), q: total_volume_at(&genome, 0.0, 0.0) });
    observer(&state);

    let mut lengths = genome.rest_lengths_at(0.0);
    let mut blowup = None;
    'outer: for i in 1..=n_samples {
        for _ in 0..steps_per_sample {
            if develops {
                lengths = genome.rest_lengths_at((state.time() / tau).min(1.0));
            }
            match state.step(&lengths, &config) {
                Ok(()) => {}
                Err(PhysicsError::Input(e)) => return Err(e),
                Err(e) => {
                    log::warn!("evaluation aborted: {e}");
                    blowup = Some(e.to_string());
                    break 'outer;
                }
            }
        }
        let t = i as f64 / rate;
        let frac = (t / tau).min(1.0);
        let signal = genome::actuation(t, params);
        if state.update_rollover(&config) {
            observer(&state);
            break;
        }
        samples.push(FitnessSample { t, y: center_of_mass_y(&state), q: total_volume_at(&genome, frac, signal) });
        observer(&state);
    }

    let mut trace = FitnessTrace { samples, terminated_rollover: state.terminated_rollover(), blowup, fitness: 0.0 };
    trace.fitness = trace.recompute();
    Ok(trace)
}

/// Node trajectory dump for external viewers: a header line with node count
/// and lattice dimensions, then one line per sampled frame with the time
/// followed by x y z of every node.
pub fn dump_trajectory<W: Write>(
    genome: &Genome,
    config: &SimConfig,
    mode: EvalMode,
    mut out: W,
) -> Result<FitnessTrace, Error> {
    let mut io_err: Option<std::io::Error> = None;
    let header = format!(
        "nodes {} lattice {} {} {}\n",
        crate::physics::NUM_NODES,
        genome::GRID_X,
        genome::GRID_Y,
        genome::GRID_Z
    );
    if let Err(e) = out.write_all(header.as_bytes()) {
        return Err(Error::io("<trajectory>", e));
    }
    let trace = simulate(genome, config, mode, |state| {
        if io_err.is_some() {
            return;
        }
        let mut line = format!("{:.4}", state.time());
        for n in state.nodes() {
            for c in n.position {
                line.push_str(&format!(" {c:.6}"));
            }
        }
        line.push('\n');
        if let Err(e) = out.write_all(line.as_bytes()) {
            io_err = Some(e);
        }
    })?;
    match io_err {
        Some(e) => Err(Error::io("<trajectory>", e)),
        None => Ok(trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{Gene, Mode};

    #[test]
    fn total_volume_cases() {
        let p = ActuationParams::default();
        let unit = Genome::uniform(Gene::UNIT, Mode::Evo).unwrap();
        assert_eq!(total_volume(&unit, 0.0, 8.0, p).unwrap(), 48.0);
        let half = Genome::uniform(Gene::fixed(0.5).unwrap(), Mode::Evo).unwrap();
        assert_eq!(total_volume(&half, 0.0, 8.0, p).unwrap(), 6.0);
        let v = total_volume(&unit, p.period / 4.0, 8.0, p).unwrap();
        assert!((v - 82.944).abs() < 1e-12 * 82.944);
    }

    #[test]
    fn constant_volume_reduces_to_displacement_over_volume() {
        let f = fitness_from_samples([(0.0, 10.0), (1.0, 10.0), (2.0, 10.0)]);
        assert!((f - 0.2).abs() < 1e-15);
        let f = fitness_from_samples((0..=800).map(|i| (48.0 * i as f64 / 800.0, 48.0)));
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_single_sample_traces_score_zero() {
        assert_eq!(fitness_from_samples(std::iter::empty()), 0.0);
        assert_eq!(fitness_from_samples([(3.0, 5.0)]), 0.0);
    }

    #[test]
    fn trace_csv_has_footer() {
        let trace = FitnessTrace {
            samples: vec![FitnessSample { t: 0.0, y: 0.0, q: 48.0 }, FitnessSample { t: 0.01, y: 0.5, q: 48.0 }],
            terminated_rollover: false,
            blowup: None,
            fitness: 0.5 / 48.0,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y,Q");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("fitness,") && lines[3].ends_with(",complete"));
    }

    #[test]
    fn rollover_zeroes_fitness() {
        let trace = FitnessTrace {
            samples: vec![FitnessSample { t: 0.0, y: 0.0, q: 48.0 }, FitnessSample { t: 0.01, y: 9.0, q: 48.0 }],
            terminated_rollover: true,
            blowup: None,
            fitness: 0.0,
        };
        assert_eq!(trace.recompute(), 0.0);
    }
}
