//! Statistical checks of the particle simulator's elementary moves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactmc::model::{ReactionDiffusionConfig, ReleaseSchedule};
use reactmc::particles::*;

#[test]
fn brownian_mean_square_displacement() {
    let (d, dt, n) = (1e-10, 1e-6, 50_000);
    let mut w = ParticleWorld::new(1e-6, 0.0, 0.0, 7, 0);
    w.release(n, 0);
    w.brownian_pass(d, 0.0, dt);
    let msd = w.pos_a.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64;
    assert!((msd / (6.0 * d * dt) - 1.0).abs() < 0.02, "msd ratio {}", msd / (6.0 * d * dt));
    // Axes are uncorrelated.
    let s2 = 2.0 * d * dt;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = w.pos_a.iter().map(|p| p[i] * p[j]).sum::<f64>() / n as f64 / s2;
        assert!(c.abs() < 0.02, "corr({i},{j}) = {c}");
    }
    assert!(w.pos_b.is_empty());
}

#[test]
fn random_directions_are_isotropic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut m = [0.0; 3];
    let mut zz = 0.0;
    for _ in 0..n {
        let u = random_direction(&mut rng);
        assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..3 {
            m[k] += u[k];
        }
        zz += u[2] * u[2];
    }
    for mk in m {
        assert!((mk / n as f64).abs() < 0.01);
    }
    assert!((zz / n as f64 - 1.0 / 3.0).abs() < 0.005);
}

#[test]
fn removal_follows_mass_action() {
    // Large-step regime: each pair reacts with probability kf dt / V.
    let (kf, diff, dt) = (1e-17, 1e-10, 1e-6);
    let (rho, regime) = binding_radius(kf, diff, diff, dt).unwrap();
    assert_eq!(regime, Regime::Large);
    let (side, n, reps) = (4e-6, 32_000, 20);
    let mut removed = 0;
    for rep in 0..reps {
        let mut w = ParticleWorld::new(side, rho, 0.0, 11, rep);
        w.seed_uniform(n, n);
        removed += w.forward_reaction_pass();
    }
    let expected = reps as f64 * (n * n) as f64 * kf * dt / side.powi(3);
    let ratio = removed as f64 / expected;
    assert!((ratio - 1.0).abs() < 0.05, "removed {removed}, mass action {expected}");
}

#[test]
fn production_is_poisson() {
    let (kb, dt, side): (f64, f64, f64) = (1e25, 1e-6, 1e-6);
    let mean = kb * dt * side.powi(3);
    let mut w = ParticleWorld::new(side, 1e-8, 2e-8, 5, 0);
    let draws: Vec<f64> = (0..4000).map(|_| w.backward_reaction_pass(kb, dt) as f64).collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((m / mean - 1.0).abs() < 0.03, "mean {m} vs {mean}");
    assert!((v / m - 1.0).abs() < 0.1, "dispersion {}", v / m);
    // Pairs land inside the box, partners at the unbinding distance.
    let h = 0.5 * side;
    for (a, b) in w.pos_a.iter().zip(&w.pos_b) {
        assert!(a.iter().all(|x| x.abs() <= h));
        let sep = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
        assert!((sep - 2e-8).abs() < 1e-20);
    }
}

#[test]
fn molecules_conserved_without_reactions() {
    let mut w = ParticleWorld::new(1e-6, 0.0, 0.0, 9, 0);
    w.release(700, 300);
    for _ in 0..100 {
        w.brownian_pass(1e-10, 3e-11, 1e-6);
        assert_eq!(w.forward_reaction_pass(), 0);
        assert_eq!(w.backward_reaction_pass(0.0, 1e-6), 0);
    }
    assert_eq!(w.counts(), (700, 300));
}

#[test]
fn free_diffusion_counts_are_poisson_around_green_function() {
    let mut c = ReactionDiffusionConfig::reference();
    c.kf = 0.0;
    c.kb = 0.0;
    c.t_max = 150e-6;
    let n_tx = 2000.0;
    let s = ReleaseSchedule::from_times(&[0.0], n_tx, &[], 0.0).unwrap();
    let e = run_particle_sim(&c, &s, 600, 21, &ParticleSettings::default()).unwrap();
    let (mean, _) = e.mean();
    let (var, _) = e.variance();
    let j = e.index_of(104e-6);
    let t = e.times[j];
    // Green's function averaged over the receiver ball by sampling.
    let (d, a, sig2) = (c.distance, c.rx_radius, 4.0 * c.diff_a * t);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut acc, mut hits) = (0.0, 0);
    while hits < 200_000 {
        let p: [f64; 3] = [0; 3].map(|_| rng.random_range(-a..a));
        if p.iter().map(|x| x * x).sum::<f64>() <= a * a {
            hits += 1;
            acc += (-((p[0] + d).powi(2) + p[1] * p[1] + p[2] * p[2]) / sig2).exp();
        }
    }
    let exact = n_tx / (std::f64::consts::PI * sig2).powf(1.5) * acc / hits as f64 * c.rx_volume();
    let se = (var[j] / 600.0).sqrt();
    assert!((mean[j] - exact).abs() < 3.5 * se, "{} vs {exact} (se {se})", mean[j]);
    let dispersion = var[j] / mean[j];
    assert!((dispersion - 1.0).abs() < 0.15, "dispersion {dispersion}");
}

#[test]
fn ensemble_is_reproducible_and_seed_sensitive() {
    let mut c = ReactionDiffusionConfig::reference();
    c.t_max = 20e-6;
    let s = ReleaseSchedule::from_times(&[0.0], 500.0, &[5e-6], 500.0).unwrap();
    let st = ParticleSettings { box_side: Some(0.8e-6), ..Default::default() };
    let a = run_particle_sim(&c, &s, 4, 1, &st).unwrap();
    let b = run_particle_sim(&c, &s, 4, 1, &st).unwrap();
    let other = run_particle_sim(&c, &s, 4, 2, &st).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.counts_a, other.counts_a);
}
