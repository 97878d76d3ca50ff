//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` are expected to fail with this model;
//! the run exits non-zero if any other criterion fails, or if a listed one
//! starts passing (so the list stays honest).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactmc::experiments::{
    decay_width, precompute_block_means, run_ber, sweep_block_len, sweep_memory_len, sweep_parameter,
    BerEstimate, BerRun, BlockSimulation, SweepParameter,
};
use reactmc::model::{equilibrium_concentration, CrTable, ReactionDiffusionConfig, ReleaseSchedule, SchemeKind};
use reactmc::particles::{run_particle_sim, ParticleSettings};
use reactmc::signaling::{
    detect_genie_1tm, detect_genie_2tm, non_reactive, DetectorKind, ModulationScheme, Observation, ReceiverKind,
};
use reactmc::solver::{compute_cr, reaction_step};

/// Criteria this model does not meet, with the reason.
const KNOWN_UNMET: &[(usize, &str)] = &[
    (4, "particle kinetics at dt = 25 T_crt depend on pair history (build-up from an empty field runs 5-10% low), ~88% coverage"),
    (6, "residual A one symbol after release is reduced ~55-59x (solver and particles agree), not 10-20x"),
    (8, "reactive OSK reaches zero errors at the top sweep points and non-reactive benchmarks keep improving by >10% per octave"),
];

const EQ_LEVEL: f64 = 0.5236;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn defaults() -> ReactionDiffusionConfig {
    ReactionDiffusionConfig::reference()
}

fn probe_schedule(c: &ReactionDiffusionConfig) -> ReleaseSchedule {
    ReleaseSchedule::from_times(&[200e-6], c.n_tx_a, &[300e-6], c.n_tx_b).unwrap()
}

fn criterion_1() -> Outcome {
    let c = defaults();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let cr = pool.install(|| compute_cr(&c, &probe_schedule(&c)).unwrap());
    let secs = start.elapsed().as_secs_f64();
    let (a, b) = (*cr.ybar_a.last().unwrap(), *cr.ybar_b.last().unwrap());
    let ea = (a / EQ_LEVEL - 1.0).abs();
    let eb = (b / EQ_LEVEL - 1.0).abs();
    outcome(
        ea < 0.02 && eb < 0.02 && secs < 30.0,
        format!("terminal ybar_A = {a:.4}, ybar_B = {b:.4} (errors {:.2}%, {:.2}%), {secs:.2} s", 100.0 * ea, 100.0 * eb),
    )
}

/// Classical RK4 on the full two-species reaction ODE with steps well
/// inside the local time scale `1 / (kf (cA + cB))`.
fn fine_reaction(ca: f64, cb: f64, kf: f64, kb: f64, dt: f64) -> (f64, f64) {
    let f = |a: f64, b: f64| kb - kf * a * b;
    let (mut a, mut b, mut t) = (ca, cb, 0.0);
    while t < dt {
        let rate = kf * (a + b) + kb / (a + b).max(1.0);
        let h = (dt - t).min(dt / 200.0).min(0.01 / rate.max(1e-300));
        let k1 = f(a, b);
        let k2 = f(a + 0.5 * h * k1, b + 0.5 * h * k1);
        let k3 = f(a + 0.5 * h * k2, b + 0.5 * h * k2);
        let k4 = f(a + h * k3, b + h * k3);
        let inc = h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        a += inc;
        b += inc;
        t += h;
    }
    (a, b)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut log_uniform = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
    let (mut worst, mut worst_c1) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let ca = log_uniform(18.0, 24.0);
        let cb = log_uniform(18.0, 24.0);
        let kf = log_uniform(-20.0, -14.0);
        let kb = log_uniform(22.0, 28.0);
        // Step length set through the dimensionless stiffness rate * dt, with
        // the faster of the initial and equilibrium relaxation rates.
        let c1 = ca - cb;
        let rate = (kf * (ca + cb)).max(kf * (c1 * c1 + 4.0 * kb / kf).sqrt());
        let dt = log_uniform(-4.0, 2.0) / rate;
        let (a, b) = reaction_step(ca, cb, kf, kb, dt).unwrap();
        let (ra, rb) = fine_reaction(ca, cb, kf, kb, dt);
        worst = worst.max((a - ra).abs() / ra).max((b - rb).abs() / rb);
        let scale = ca.max(cb).max(a).max(b);
        worst_c1 = worst_c1.max(((a - b) - (ca - cb)).abs() / scale);
    }
    outcome(
        worst < 1e-6 && worst_c1 <= 4.0 * f64::EPSILON,
        format!("max relative deviation {worst:.2e}, max c1 drift {worst_c1:.2e} (relative to magnitude)"),
    )
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for dim in 1..=3u8 {
        let mut c = defaults();
        c.dim = dim;
        c.kf = 0.0;
        c.kb = 0.0;
        c.rx_radius = 10e-9;
        c.t_max = 600e-6;
        let n = 5e3;
        let cr = compute_cr(&c, &ReleaseSchedule::from_times(&[0.0], n, &[], 0.0).unwrap()).unwrap();
        let (j, peak) = cr.ybar_a.iter().enumerate().fold((0, 0.0), |b, (j, &y)| if y > b.1 { (j, y) } else { b });
        let tp = cr.times[j];
        let (d, diff) = (c.distance, c.diff_a);
        let green = |t: f64| {
            n / (4.0 * std::f64::consts::PI * diff * t).powf(dim as f64 / 2.0) * (-d * d / (4.0 * diff * t)).exp() * c.rx_volume()
        };
        let t_star = d * d / (2.0 * dim as f64 * diff);
        let err = (peak / green(tp) - 1.0).abs();
        let pass = err < 0.02 && (tp - t_star).abs() <= c.dt;
        ok &= pass;
        parts.push(format!("{dim}-D peak {:.1} us (analytic {:.1}), error {:.2}%", tp * 1e6, t_star * 1e6, 100.0 * err));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let mut c = defaults();
    c.t_max = 1e-3;
    let s = probe_schedule(&c);
    let start = Instant::now();
    let ens = run_particle_sim(&c, &s, 1000, 4, &ParticleSettings::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let cr = compute_cr(&c, &s).unwrap();
    let (ma, mb) = ens.mean();
    let (ha, hb) = ens.half_width();
    let mut inside = 0;
    for j in 0..ens.times.len() {
        inside += usize::from((ma[j] - cr.ybar_a[j]).abs() <= ha[j]);
        inside += usize::from((mb[j] - cr.ybar_b[j]).abs() <= hb[j]);
    }
    let frac = inside as f64 / (2 * ens.times.len()) as f64;
    outcome(
        frac >= 0.95 && secs < 600.0,
        format!("solver inside the 95% band at {:.1}% of {} instants x 2 species, {secs:.0} s", 100.0 * frac, ens.times.len()),
    )
}

/// Total-variation distance between an empirical pmf and Poisson(mean).
fn poisson_tv(hist: &[(u32, f64)], mean: f64) -> f64 {
    let mut tv = 0.0;
    let mut covered = 0.0;
    let mut log_p = -mean;
    let top = hist.len().max((mean + 20.0 * mean.sqrt() + 20.0) as usize);
    for k in 0..=top {
        if k > 0 {
            log_p += mean.ln() - (k as f64).ln();
        }
        let p = if mean > 0.0 { log_p.exp() } else { f64::from(u8::from(k == 0)) };
        covered += p;
        tv += (p - hist.get(k).map_or(0.0, |h| h.1)).abs();
    }
    0.5 * (tv + (1.0 - covered).max(0.0))
}

fn criterion_5() -> Outcome {
    let mut c = defaults();
    c.t_max = 400e-6;
    let s = probe_schedule(&c);
    let ens = run_particle_sim(&c, &s, 10_000, 5, &ParticleSettings::default()).unwrap();
    let cr = compute_cr(&c, &s).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for t in [200e-6, 300e-6, 400e-6] {
        let (j, k) = (ens.index_of(t), cr.index_of(t));
        let tv_a = poisson_tv(&ens.histogram(true, j), cr.ybar_a[k]);
        let tv_b = poisson_tv(&ens.histogram(false, j), cr.ybar_b[k]);
        worst = worst.max(tv_a).max(tv_b);
        parts.push(format!("{:.0} us: A {tv_a:.3}, B {tv_b:.3}", t * 1e6));
    }
    outcome(worst < 0.05, format!("TV vs Poisson(solver mean) {}", parts.join("; ")))
}

fn criterion_6() -> Outcome {
    let mut c = defaults();
    c.kb = 0.0;
    c.t_max = 400e-6;
    let s = ReleaseSchedule::from_times(&[0.0], c.n_tx_a, &[100e-6], c.n_tx_b).unwrap();
    let reactive = compute_cr(&c, &s).unwrap();
    let mut free = c.clone();
    free.kf = 0.0;
    let inert = compute_cr(&free, &s).unwrap();
    let j = reactive.index_of(c.t_symb + c.t_samp);
    let factor = inert.ybar_a[j] / reactive.ybar_a[j];
    let early = reactive.index_of(c.t_symb);
    outcome(
        (10.0..=20.0).contains(&factor),
        format!(
            "reduction at {:.0} us: {:.4} / {:.4} = {factor:.1} (at {:.0} us: {:.1})",
            reactive.times[j] * 1e6,
            inert.ybar_a[j],
            reactive.ybar_a[j],
            reactive.times[early] * 1e6,
            inert.ybar_a[early] / reactive.ybar_a[early]
        ),
    )
}

fn log_lik(y: u32, m: f64) -> f64 {
    let m = m.max(reactmc::signaling::MEAN_FLOOR);
    y as f64 * m.ln() - m
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut mismatches, mut ties) = (0u64, 0u64, 0u64);
    for _ in 0..100 {
        let means: Vec<[f64; 2]> = (0..8).map(|_| [rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)]).collect();
        let table = CrTable { memory_len: 3, scheme: SchemeKind::OSK, means };
        for isi in 0..4usize {
            let bits = [(isi >> 1) as u8, (isi & 1) as u8];
            let (m0, m1) = (table.get(0, isi), table.get(1, isi));
            let top = (3.0 * m0.iter().chain(&m1).fold(0.0f64, |a, &b| a.max(b))).ceil() as u32;
            for y_a in 0..=top {
                // 1TM against the one-dimensional likelihood.
                let (l1, l0) = (log_lik(y_a, m1[0]), log_lik(y_a, m0[0]));
                if (l1 - l0).abs() <= 1e-9 * l0.abs().max(1.0) {
                    ties += 1;
                } else {
                    checked += 1;
                    let got = detect_genie_1tm(Observation { y_a, y_b: 0 }, &table, &bits).unwrap();
                    mismatches += u64::from(got != u8::from(l1 > l0));
                }
                for y_b in 0..=top {
                    let obs = Observation { y_a, y_b };
                    let l1 = log_lik(y_a, m1[0]) + log_lik(y_b, m1[1]);
                    let l0 = log_lik(y_a, m0[0]) + log_lik(y_b, m0[1]);
                    if (l1 - l0).abs() <= 1e-9 * l0.abs().max(1.0) {
                        ties += 1;
                        continue;
                    }
                    checked += 1;
                    mismatches += u64::from(detect_genie_2tm(obs, &table, &bits).unwrap() != u8::from(l1 > l0));
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{checked} decisions checked, {mismatches} mismatches ({ties} exact ties skipped)"))
}

fn ber_of(points: &[reactmc::experiments::BerPoint], n: f64, d: DetectorKind) -> BerEstimate {
    points.iter().find(|p| p.n_tx == n && p.estimate.detector == d).unwrap().estimate
}

fn fmt_ber(e: &BerEstimate) -> String {
    format!("{:.2e}+-{:.1e}", e.ber, e.ci)
}

/// Point estimates on shared seeds; a suboptimal detector may beat the
/// genie by chance, so the ordering is checked up to the larger half-width.
fn ordered(a: &BerEstimate, b: &BerEstimate) -> bool {
    a.ber <= b.ber + a.ci.max(b.ci)
}

fn flat(es: &[BerEstimate]) -> bool {
    let hi = es.iter().max_by(|x, y| x.ber.total_cmp(&y.ber)).unwrap();
    let lo = es.iter().min_by(|x, y| x.ber.total_cmp(&y.ber)).unwrap();
    hi.ber - lo.ber <= hi.ci + lo.ci
}

fn criterion_8(cache: &Path) -> Outcome {
    let c = defaults();
    let n_tx = vec![1250.0, 2500.0, 5000.0, 10000.0];
    let base = |kind: SchemeKind, receiver: ReceiverKind| BerRun {
        scheme: ModulationScheme::new(kind),
        detectors: DetectorKind::ALL.to_vec(),
        receiver,
        block_len: 8,
        memory_len: 5,
        n_blocks: 10_000,
        n_tx: n_tx.clone(),
        seed: 8,
    };
    let reactive = [
        ("OSK/2TM", SchemeKind::OSK, ReceiverKind::TwoType),
        ("OSK/1TM", SchemeKind::OSK, ReceiverKind::OneType),
        ("OOK/1TM", SchemeKind::OOK, ReceiverKind::OneType),
        ("OOK/2TM", SchemeKind::OOK, ReceiverKind::TwoType),
        ("MoSK/2TM", SchemeKind::MoSK, ReceiverKind::TwoType),
    ];
    let benchmarks = [
        ("conv-OOK/1TM", SchemeKind::ConvOOK1TM, ReceiverKind::OneType),
        ("NR-MoSK/2TM", SchemeKind::MoSK, ReceiverKind::TwoType),
        ("NR-OOK/2TM", SchemeKind::NonReactiveOOK2TM, ReceiverKind::TwoType),
    ];
    let mut lines = Vec::new();
    let mut order_ok = true;
    let mut results = Vec::new();
    for (i, (name, kind, rx)) in reactive.iter().chain(&benchmarks).enumerate() {
        let cfg = if i >= reactive.len() { non_reactive(&c) } else { c.clone() };
        let points = run_ber(&base(*kind, *rx), &cfg, Some(cache)).unwrap();
        for &n in &n_tx {
            let [g, m, s] = DetectorKind::ALL.map(|d| ber_of(&points, n, d));
            let ok = ordered(&g, &m) && ordered(&m, &s);
            order_ok &= ok;
            if !ok {
                lines.push(format!("order broken for {name} at N = {n}: {} {} {}", fmt_ber(&g), fmt_ber(&m), fmt_ber(&s)));
            }
        }
        results.push((*name, i >= reactive.len(), points));
    }

    let mut decreasing_ok = true;
    let mut saturating_ok = true;
    for (name, bench, points) in &results {
        let ml: Vec<BerEstimate> = n_tx.iter().map(|&n| ber_of(points, n, DetectorKind::MlEstimatedIsi)).collect();
        let curve = ml.iter().map(fmt_ber).collect::<Vec<_>>().join(", ");
        if *bench {
            let change = (ml[3].ber - ml[2].ber).abs() / ml[2].ber;
            saturating_ok &= change < 0.10;
            lines.push(format!("{name} ML [{curve}] top-octave change {:.0}%", 100.0 * change));
        } else if *name == "OSK/2TM" || *name == "OOK/1TM" {
            let strict = ml.windows(2).all(|w| w[1].ber < w[0].ber);
            decreasing_ok &= strict;
            lines.push(format!("{name} ML [{curve}] strictly decreasing: {strict}"));
        }
    }

    // Memory and block-length sweeps for OSK/2TM.
    let mut flat_ok = true;
    let scheme = ModulationScheme::new(SchemeKind::OSK);
    for n in [2500.0, 5000.0] {
        let mut cfg = c.clone();
        cfg.n_tx_a = n;
        cfg.n_tx_b = n;
        let s = scheme.resolve(&cfg).unwrap();
        let tree = precompute_block_means(&cfg, &s, 10, Some(cache)).unwrap();
        let sim = BlockSimulation {
            block_len: 8,
            memory_len: 5,
            receiver: ReceiverKind::TwoType,
            n_blocks: 10_000,
            seed: 8,
        };
        let ml = [DetectorKind::MlEstimatedIsi];
        let by_l: Vec<BerEstimate> =
            sweep_memory_len(&tree, s.kind, &sim, &[3, 4, 5, 6, 7, 8], &ml).unwrap().into_iter().map(|(_, e)| e[0]).collect();
        let by_k: Vec<BerEstimate> =
            sweep_block_len(&tree, s.kind, &sim, &[6, 8, 10], &ml).unwrap().into_iter().map(|(_, e)| e[0]).collect();
        let (fl, fk) = (flat(&by_l), flat(&by_k));
        flat_ok &= fl && fk;
        let show = |v: &[BerEstimate]| v.iter().map(fmt_ber).collect::<Vec<_>>().join(", ");
        lines.push(format!("OSK/2TM N = {n}: L = 3..8 [{}] flat {fl}; K = 6,8,10 [{}] flat {fk}", show(&by_l), show(&by_k)));
    }
    let pass = order_ok && decreasing_ok && saturating_ok && flat_ok;
    outcome(
        pass,
        format!(
            "(a) ordering {order_ok}, (b) reactive decreasing {decreasing_ok}, benchmarks saturating {saturating_ok}, (c) flat {flat_ok}\n    {}",
            lines.join("\n    ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let c = defaults();
    // The slowest B diffusion needs about 20 ms to settle at equilibrium.
    let long = ReactionDiffusionConfig { t_max: 20e-3, ..c.clone() };
    let family = sweep_parameter(&long, SweepParameter::DiffB, &SweepParameter::DiffB.default_values()).unwrap();
    let widths: Vec<f64> = family.iter().map(|(_, cr)| decay_width(cr, 300e-6).unwrap_or(f64::INFINITY)).collect();
    let strictly = widths.windows(2).all(|w| w[1] < w[0]);
    let eq_err = family
        .iter()
        .map(|(_, cr)| (cr.ybar_a.last().unwrap() / EQ_LEVEL - 1.0).abs())
        .fold(0.0f64, f64::max);
    let kb_values = SweepParameter::Kb.default_values();
    let kb_family = sweep_parameter(&c, SweepParameter::Kb, &kb_values).unwrap();
    let targets: Vec<f64> = kb_values
        .iter()
        .map(|&kb| {
            let cfg = ReactionDiffusionConfig { kb, ..c.clone() };
            equilibrium_concentration(&cfg).unwrap().0 * cfg.rx_volume()
        })
        .collect();
    let smallest = targets.iter().copied().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
    let mut kb_ok = true;
    let mut kb_parts = Vec::new();
    for ((kb, cr), target) in kb_family.iter().zip(&targets) {
        let y = *cr.ybar_a.last().unwrap();
        let ok = if *target > 0.0 { (y / target - 1.0).abs() < 0.03 } else { y.abs() < 0.03 * smallest };
        kb_ok &= ok;
        kb_parts.push(format!("kb {kb:.0e}: {y:.4} vs {target:.4}"));
    }
    let w = widths.iter().map(|w| format!("{:.0}", w * 1e6)).collect::<Vec<_>>().join(", ");
    outcome(
        strictly && eq_err < 0.02 && kb_ok,
        format!(
            "D_B widths [{w}] us strictly decreasing {strictly}, equilibrium spread {:.2}%; {}",
            100.0 * eq_err,
            kb_parts.join(", ")
        ),
    )
}

fn criterion_10(work: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_reactmc");
    let commands: Vec<Vec<&str>> = vec![
        vec!["cr", "--release-a", "200e-6", "--release-b", "300e-6", "--set", "t_max=1e-3"],
        vec!["particle", "--release-a", "200e-6", "--release-b", "300e-6", "--trials", "10", "--set", "t_max=3e-4"],
        vec!["tau"],
        vec!["table", "--scheme", "osk", "--memory", "3"],
        vec!["ber", "--scheme", "osk", "--detector", "genie", "--receiver", "2tm", "--seed", "7", "--blocks", "2000", "--block-len", "4", "--memory", "3", "--n-tx", "2500"],
        vec!["sweep", "--parameter", "kb", "--set", "t_max=1e-3"],
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for args in &commands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = work.join(format!("{}-{rep}", args[0]));
            let status = Command::new(bin).args(args).arg("--out").arg(&dir).output().unwrap();
            assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
            let mut files: Vec<_> = std::fs::read_dir(&dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            outputs.push(files.iter().map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap())).collect::<Vec<_>>());
        }
        compared += outputs[0].len();
        if outputs[0] != outputs[1] {
            differing.push(args[0]);
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} CSV files over {} commands, differing: {differing:?}", commands.len()),
    )
}

fn main() {
    let work = tempfile::tempdir().unwrap();
    let cache = work.path().join("cache");
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "equilibrium reproduction", Box::new(criterion_1)),
        (2, "reaction-step oracle", Box::new(criterion_2)),
        (3, "free-diffusion Green's function", Box::new(criterion_3)),
        (4, "solver inside particle band", Box::new(criterion_4)),
        (5, "Poisson counts", Box::new(criterion_5)),
        (6, "ISI reduction factor", Box::new(criterion_6)),
        (7, "detector brute-force equivalence", Box::new(criterion_7)),
        (8, "BER behaviour", Box::new(move || criterion_8(&cache))),
        (9, "sweep properties", Box::new(criterion_9)),
        (10, "CLI determinism", Box::new(|| criterion_10(work.path()))),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in &criteria {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_UNMET.iter().find(|(k, _)| k == id);
        println!(
            "{} criterion {id} ({name}): {} [{secs:.1} s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        match (out.pass, known) {
            (false, Some((_, why))) => println!("    known unmet: {why}"),
            (false, None) => unexpected.push(format!("criterion {id} failed")),
            (true, Some(_)) => unexpected.push(format!("criterion {id} passes but is listed as unmet")),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcomes: {unexpected:?}");
        std::process::exit(1);
    }
}
