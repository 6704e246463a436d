//! Monte Carlo checks of sampler laws against closed forms. Every test is
//! seeded, and tolerances are four standard errors unless stated otherwise.

use rand::Rng;
use stickflow::chains::{sample_homogeneous_with, GeneratorMatrix, StochasticKernel};
use stickflow::inhom::{simulate_counts_with, simulate_inhom_with, InhomSpec};
use stickflow::mccgem::{clump_by_switches, sample_mccgem_with};
use stickflow::numeric::mean_stderr;
use stickflow::stats::{ks_one_sample, ks_two_sample, run_replicates, McEstimate, ALPHA_STRICT};
use stickflow::stickcore::{sample_stick_with, FractionLaw, DEFAULT_EPS};

const SEED: u64 = 0x5717_c0de;

fn close(samples: &[f64], target: f64) {
    let (m, se) = mean_stderr(samples);
    assert!((m - target).abs() <= 4.0 * se, "mean {m} vs {target} (se {se})");
}

fn gen(rows: &[&[f64]]) -> GeneratorMatrix {
    GeneratorMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn gem_weight_means() {
    for theta in [0.5, 1.0, 4.0] {
        let law = FractionLaw::Gem { theta };
        let sticks = run_replicates(20_000, SEED, |rng| sample_stick_with(&law, rng, DEFAULT_EPS)).unwrap();
        let p1: Vec<f64> = sticks.iter().map(|s| s.weights()[0]).collect();
        let p2: Vec<f64> = sticks
            .iter()
            .map(|s| s.weights().get(1).copied().unwrap_or(0.0))
            .collect();
        close(&p1, 1.0 / (1.0 + theta));
        close(&p2, theta / (1.0 + theta).powi(2));
        assert!(sticks.iter().all(|s| s.tail_mass() < DEFAULT_EPS));
    }
}

#[test]
fn two_parameter_first_weight() {
    let law = FractionLaw::TwoParam {
        alpha: 0.3,
        theta: 1.0,
    };
    let sticks = run_replicates(20_000, SEED + 1, |rng| sample_stick_with(&law, rng, 1e-6)).unwrap();
    let p1: Vec<f64> = sticks.iter().map(|s| s.weights()[0]).collect();
    close(&p1, 0.7 / 2.0);
}

#[test]
fn mccgem_labels_follow_jump_chain() {
    let g = gen(&[&[-3.0, 1.0, 2.0], &[0.5, -1.0, 0.5], &[1.0, 1.0, -2.0]]);
    let samples = run_replicates(2_000, SEED + 2, |rng| {
        sample_mccgem_with(&g, &[1.0, 0.0, 0.0], 1e-9, rng)
    })
    .unwrap();
    let mut from0 = [0u64; 3];
    for s in &samples {
        for w in s.labels.windows(2) {
            if w[0] == 0 {
                from0[w[1]] += 1;
            }
        }
    }
    assert_eq!(from0[0], 0);
    let total = (from0[1] + from0[2]) as f64;
    let p = 1.0 / 3.0;
    let se = (p * (1.0 - p) / total).sqrt();
    assert!((from0[1] as f64 / total - p).abs() < 4.0 * se, "{from0:?}");
}

#[test]
fn constant_diagonal_gives_plain_gem() {
    let g = gen(&[&[-2.0, 1.0, 1.0], &[1.0, -2.0, 1.0], &[1.0, 1.0, -2.0]]);
    let samples = run_replicates(5_000, SEED + 3, |rng| {
        sample_mccgem_with(&g, &[1.0, 0.0, 0.0], 1e-9, rng)
    })
    .unwrap();
    let p1: Vec<f64> = samples.iter().map(|s| s.weights.weights()[0]).collect();
    let ks = ks_one_sample(&p1, |x| 1.0 - (1.0 - x.clamp(0.0, 1.0)).powi(2)).unwrap();
    assert!(ks.p_value >= ALPHA_STRICT, "{ks:?}");
    let p2: Vec<f64> = samples
        .iter()
        .map(|s| s.weights.weights().get(1).copied().unwrap_or(0.0))
        .collect();
    close(&p2, 2.0 / 9.0);
}

#[test]
fn clumped_gem_fraction_is_uniform() {
    // GEM(2) along a fair coin: the first clump fraction is Beta(1, 2 * 1/2)
    let q = StochasticKernel::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let law = FractionLaw::Gem { theta: 2.0 };
    let first = run_replicates(5_000, SEED + 4, |rng| {
        let p = sample_stick_with(&law, rng, 1e-12)?;
        let path = sample_homogeneous_with(&q, &[1.0, 0.0], p.len(), rng)?;
        let (clumped, labels) = clump_by_switches(&p, &path);
        assert_eq!(labels[0], 0);
        Ok(clumped.weights()[0])
    })
    .unwrap();
    let ks = ks_one_sample(&first, |x| x.clamp(0.0, 1.0)).unwrap();
    assert!(ks.p_value >= ALPHA_STRICT, "{ks:?}");
}

#[test]
fn switch_count_grows_logarithmically() {
    // started from the stationary law the marginal never moves, so the
    // expected number of switches at steps n1..n2 is sum_t rate / t
    let g = gen(&[&[-1.0, 1.0], &[2.0, -2.0]]);
    let mu = vec![2.0 / 3.0, 1.0 / 3.0];
    let (n1, n2) = (1_000usize, 100_000usize);
    let spec = InhomSpec::new(g, None, mu, n2).unwrap();
    let counts = run_replicates(1_000, SEED + 5, |rng| {
        let path = simulate_inhom_with(&spec, rng);
        let s = path.states();
        Ok((n1..n2).filter(|&t| s[t] != s[t - 1]).count() as f64)
    })
    .unwrap();
    let expected: f64 = (n1..n2).map(|t| (4.0 / 3.0) / t as f64).sum();
    close(&counts, expected);
}

#[test]
fn counts_sampler_matches_path_sampler() {
    let g = gen(&[&[-1.0, 1.0], &[2.0, -2.0]]);
    let spec = InhomSpec::new(g, Some(2), vec![0.5, 0.5], 3_000).unwrap();
    run_replicates(20, SEED + 6, |rng| {
        let mut copy = rng.clone();
        let path = simulate_inhom_with(&spec, rng);
        let counts = simulate_counts_with(&spec, &mut copy);
        let ones = path.states().iter().filter(|&&s| s == 1).count() as u64;
        assert_eq!(counts.counts[1], ones);
        assert_eq!(counts.last_state, *path.states().last().unwrap());
        Ok(())
    })
    .unwrap();
}

#[test]
fn mean_occupation_is_stationary() {
    // E nu_n(2) = mu(2) = 1/3 from the stationary start
    let g = gen(&[&[-1.0, 1.0], &[2.0, -2.0]]);
    let spec = InhomSpec::new(g, None, vec![2.0 / 3.0, 1.0 / 3.0], 2_000).unwrap();
    let mass = run_replicates(4_000, SEED + 7, |rng| {
        Ok(simulate_counts_with(&spec, rng).measure().masses[1])
    })
    .unwrap();
    close(&mass, 1.0 / 3.0);
}

#[test]
fn ks_is_calibrated_under_the_null() {
    let p = run_replicates(500, SEED + 8, |rng| {
        let a: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..150).map(|_| rng.random()).collect();
        Ok((
            ks_one_sample(&a, |x| x.clamp(0.0, 1.0))?.p_value,
            ks_two_sample(&a, &b)?.p_value,
        ))
    })
    .unwrap();
    // binomial(500, 0.05): mean 25, sd about 4.9
    let one = p.iter().filter(|x| x.0 < 0.05).count();
    let two = p.iter().filter(|x| x.1 < 0.05).count();
    assert!((8..=45).contains(&one), "one-sample rejections {one}");
    // the two-sample statistic is discrete, which makes the test conservative
    assert!((2..=45).contains(&two), "two-sample rejections {two}");
}

#[test]
fn ks_detects_a_shift() {
    let p = run_replicates(1, SEED + 9, |rng| {
        let a: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.2).collect();
        Ok(ks_two_sample(&a, &b)?.p_value)
    })
    .unwrap();
    assert!(p[0] < 1e-6);
}

#[test]
fn stderr_shrinks_like_root_r() {
    let est = |r: u64| {
        let v = run_replicates(r, SEED + 10, |rng| Ok(rng.random::<f64>())).unwrap();
        McEstimate::from_samples(&v, SEED + 10).unwrap()
    };
    let small = est(1_000);
    let large = est(16_000);
    let ratio = small.stderr / large.stderr;
    assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    assert!(large.agrees_with(0.5));
}

#[test]
fn replicates_do_not_depend_on_thread_count() {
    let law = FractionLaw::Gem { theta: 1.0 };
    let draw = || run_replicates(64, SEED + 11, |rng| sample_stick_with(&law, rng, 1e-9)).unwrap();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(draw);
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(draw);
    assert_eq!(serial, wide);
}
