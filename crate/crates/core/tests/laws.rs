use proptest::prelude::*;
use softbot_devo::analysis::total_window;
use softbot_devo::fitness::{fitness_from_samples, total_volume};
use softbot_devo::genome::{
    self, actuation, current_length, damping_factor, rest_length, ActuationParams, Gene, Genome, Mode, NUM_GENES,
};

fn length() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.25), Just(1.0), Just(1.75), 0.25f64..=1.75]
}

fn gene() -> impl Strategy<Value = Gene> {
    (length(), length()).prop_map(|(a, b)| Gene::new(a, b).unwrap())
}

fn genome(mode: Mode) -> impl Strategy<Value = Genome> {
    prop::collection::vec(length(), 2 * NUM_GENES).prop_map(move |v| {
        let genes: Vec<Gene> = (0..NUM_GENES)
            .map(|k| match mode {
                Mode::Evo => Gene::fixed(v[k]).unwrap(),
                Mode::EvoDevo => Gene::new(v[k], v[NUM_GENES + k]).unwrap(),
            })
            .collect();
        Genome::from_vec(genes, mode).unwrap()
    })
}

/// Independent restatement of the length law.
fn oracle_length(s0: f64, s1: f64, t: f64, tau: f64, u: f64, w: f64) -> f64 {
    let r = s0 + (t / tau) * (s1 - s0);
    let d = if r >= 1.0 { 1.0 } else { (4.0 * r - 1.0) / 3.0 };
    r + u * (2.0 * std::f64::consts::PI * t / w).sin() * d
}

#[test]
fn closed_form_examples() {
    let p = ActuationParams::default();
    assert_eq!(damping_factor(1.0), 1.0);
    assert_eq!(damping_factor(0.25), 0.0);
    assert_eq!(damping_factor(0.625), 0.5);
    assert_eq!(actuation(0.0, p), 0.0);
    assert!((actuation(0.0625, p) - 0.2).abs() <= 1e-12 * 0.2);
    assert!(actuation(0.125, p).abs() < 1e-12);
    assert_eq!(rest_length(Gene::UNIT, 3.3, 8.0).unwrap(), 1.0);
    assert_eq!(rest_length(Gene::new(0.5, 1.5).unwrap(), 4.0, 8.0).unwrap(), 1.0);
    assert_eq!(rest_length(Gene::new(1.5, 0.5).unwrap(), 8.0, 8.0).unwrap(), 0.5);
    assert!(rest_length(Gene::UNIT, 8.1, 8.0).is_err());
    assert!(rest_length(Gene::UNIT, -0.1, 8.0).is_err());
    assert_eq!(current_length(Gene::UNIT, 0.0, 8.0, p).unwrap(), 1.0);
    assert_eq!(current_length(Gene::fixed(0.25).unwrap(), 1.37, 8.0, p).unwrap(), 0.25);
    assert!((current_length(Gene::UNIT, 0.0625, 8.0, p).unwrap() - 1.2).abs() <= 1e-12 * 1.2);
}

#[test]
fn volume_examples() {
    let p = ActuationParams::default();
    let unit = Genome::uniform(Gene::UNIT, Mode::Evo).unwrap();
    assert_eq!(total_volume(&unit, 0.0, 8.0, p).unwrap(), 48.0);
    let half = Genome::uniform(Gene::fixed(0.5).unwrap(), Mode::Evo).unwrap();
    assert_eq!(total_volume(&half, 0.0, 8.0, p).unwrap(), 6.0);
    let v = total_volume(&unit, 0.0625, 8.0, p).unwrap();
    assert!((v - 82.944).abs() <= 1e-12 * 82.944);
}

#[test]
fn window_examples() {
    let mut genes = [Gene::UNIT; NUM_GENES];
    genes[3] = Gene::new(0.5, 1.5).unwrap();
    assert_eq!(total_window(&Genome::new(genes, Mode::EvoDevo).unwrap()), 2.0);
    let wide = Genome::uniform(Gene::new(0.25, 1.75).unwrap(), Mode::EvoDevo).unwrap();
    assert_eq!(total_window(&wide), 72.0);
}

#[test]
fn single_mirror_pair() {
    let mut genes = [Gene::UNIT; NUM_GENES];
    genes[7] = Gene::fixed(1.5).unwrap();
    let g = Genome::new(genes, Mode::Evo).unwrap();
    let n = g.expand_symmetric().iter().filter(|v| v.s0 == 1.5).count();
    assert_eq!(n, 2);
}

#[test]
fn volume_normalised_displacement() {
    // A volume-48 body moving 48 voxel lengths scores exactly 1.
    let trace: Vec<(f64, f64)> = (0..=800).map(|i| (0.06 * i as f64, 48.0)).collect();
    assert!((fitness_from_samples(trace) - 1.0).abs() <= 1e-12);
    let f = fitness_from_samples([(0.0, 10.0), (1.0, 10.0), (2.0, 10.0)]);
    assert!((f - 0.2).abs() <= 1e-12 * 0.2);
}

proptest! {
    #[test]
    fn length_law_matches_oracle(g in gene(), frac in 0.0f64..=1.0, tau in 0.5f64..10.0) {
        let p = ActuationParams::default();
        let t = frac * tau;
        let got = current_length(g, t, tau, p).unwrap();
        let want = oracle_length(g.s0, g.s1, t, tau, p.amplitude, p.period);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs());
        prop_assert!(got > 0.0 && got <= 1.75 * 1.2 + 1e-12);
    }

    #[test]
    fn development_hits_its_endpoints(g in gene(), tau in 0.1f64..10.0) {
        prop_assert_eq!(rest_length(g, 0.0, tau).unwrap().powi(3), g.s0.powi(3));
        prop_assert_eq!(rest_length(g, tau, tau).unwrap(), g.s1);
    }

    #[test]
    fn development_is_monotone_without_actuation(g in gene(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let p = ActuationParams::new(0.0, 0.25).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let x = current_length(g, lo * 4.0, 4.0, p).unwrap();
        let y = current_length(g, hi * 4.0, 4.0, p).unwrap();
        if g.s1 >= g.s0 { prop_assert!(x <= y + 1e-15) } else { prop_assert!(x >= y - 1e-15) }
    }

    #[test]
    fn damping_is_continuous_and_bounded(s in 0.25f64..=1.75) {
        let d = damping_factor(s);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((damping_factor(1.0 - 1e-9) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn evo_genomes_embed_exactly(g in genome(Mode::Evo), frac in 0.0f64..=1.0) {
        let p = ActuationParams::default();
        let d = g.to_evo_devo();
        for (a, b) in g.genes().iter().zip(d.genes()) {
            prop_assert_eq!(
                current_length(*a, frac * 8.0, 8.0, p).unwrap(),
                current_length(*b, frac * 8.0, 8.0, p).unwrap()
            );
        }
        prop_assert_eq!(total_window(&g), 0.0);
    }

    #[test]
    fn volume_is_twice_gene_sum(g in genome(Mode::EvoDevo), frac in 0.0f64..=1.0) {
        let p = ActuationParams::default();
        let t = frac * 4.0;
        let q = total_volume(&g, t, 4.0, p).unwrap();
        let expanded: f64 = g
            .expand_symmetric()
            .iter()
            .map(|v| oracle_length(v.s0, v.s1, t, 4.0, p.amplitude, p.period).powi(3))
            .sum();
        prop_assert!((q - expanded).abs() <= 1e-12 * expanded);
        prop_assert!(q > 0.0);
    }

    #[test]
    fn window_counts_every_voxel(g in genome(Mode::EvoDevo)) {
        let by_voxel: f64 = g.expand_symmetric().iter().map(|v| (v.s1 - v.s0).abs()).sum();
        prop_assert!((total_window(&g) - by_voxel).abs() <= 1e-12 * by_voxel.max(1.0));
        prop_assert_eq!(total_window(&g) == 0.0, g.genes().iter().all(|x| x.s0 == x.s1));
    }

    #[test]
    fn constant_volume_reduces_to_net_displacement(
        ys in prop::collection::vec(-50.0f64..50.0, 2..60),
        q in 0.5f64..200.0,
    ) {
        let f = fitness_from_samples(ys.iter().map(|&y| (y, q)));
        let want = (ys[ys.len() - 1] - ys[0]) / q;
        prop_assert!((f - want).abs() <= 1e-12 * want.abs().max(1.0));
        let rev = fitness_from_samples(ys.iter().rev().map(|&y| (y, q)));
        prop_assert!((rev + f).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn fitness_is_scale_aware(
        trace in prop::collection::vec((-5.0f64..5.0, 1.0f64..100.0), 2..40),
        c in 0.1f64..10.0,
    ) {
        let a = fitness_from_samples(trace.iter().copied());
        let b = fitness_from_samples(trace.iter().map(|&(y, q)| (c * y, c * q)));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
    }

    #[test]
    fn genome_text_round_trips(g in genome(Mode::EvoDevo)) {
        let back: Genome = g.to_string().parse().unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn frozen_genome_sits_at_midlife() {
    let g = Genome::uniform(Gene::new(0.5, 1.5).unwrap(), Mode::EvoDevo).unwrap();
    let f = g.frozen_at(0.5);
    assert!(f.genes().iter().all(|x| x.s0 == 1.0 && x.s1 == 1.0));
    assert_eq!(genome::clamp_length(2.0), 1.75);
}
