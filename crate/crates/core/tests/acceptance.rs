//! Acceptance suite at desk scale. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use simcf::baselines::{run_scheme, SchemeOutcome, SchemeSpec, SchemeState, SchemeTag};
use simcf::channel::{draw_realization, effective_channels, ChannelRealization};
use simcf::experiment::trial_seed;
use simcf::fp::{
    dl_optimal_aux, dl_optimal_xi, dl_phase_gradient, dl_surrogate_fronthaul, dl_surrogate_rates,
    mmse_combiners, ul_optimal_aux, ul_optimal_xi, ul_surrogate_fronthaul, ul_surrogate_rates,
};
use simcf::linalg::{cx, scaled_identity, CMat, CVec};
use simcf::metrics::{
    downlink_fronthaul_load, downlink_rates, uplink_fronthaul_load, uplink_rates, weighted_sum,
    DownlinkState, UplinkState,
};
use simcf::optimizers::AoSettings;
use simcf::program::Compression;
use simcf::sim::{build_stack, Direction, PhaseProfile, SimStack};
use simcf::SystemConfig;

const BASE_SEED: u64 = 2024;
const TRIALS: usize = 20;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} criterion {id:2} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn instance(config: &SystemConfig, seed: u64) -> (ChannelRealization, SimStack) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (_, ch) = draw_realization(config, &mut rng).expect("channel draw");
    let stack =
        build_stack(&config.geometry().expect("geometry"), config.num_aps, seed).expect("stack");
    (ch, stack)
}

fn rand_cx(rng: &mut ChaCha20Rng) -> simcf::linalg::Cx {
    cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

fn rand_hpd(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| rand_cx(rng));
    (&a * a.adjoint() + scaled_identity(n, 0.05)) * cx(scale, 0.0)
}

fn random_uplink(config: &SystemConfig, rng: &mut ChaCha20Rng) -> UplinkState {
    let n = config.rf_chains;
    UplinkState {
        power: (0..config.num_ues)
            .map(|_| config.ue_power * rng.random::<f64>())
            .collect(),
        quant: (0..config.num_aps)
            .map(|_| rand_hpd(rng, n, config.noise_ul))
            .collect(),
        combiners: (0..config.num_ues)
            .map(|_| CVec::from_fn(n * config.num_aps, |_, _| rand_cx(rng)))
            .collect(),
        phases: PhaseProfile::random(config.num_aps, config.layers, config.atoms, rng),
    }
}

fn random_downlink(config: &SystemConfig, rng: &mut ChaCha20Rng) -> DownlinkState {
    let n = config.rf_chains;
    let amp = (config.ap_power / (n * config.num_ues) as f64).sqrt();
    DownlinkState {
        beams: (0..config.num_ues)
            .map(|_| {
                (0..config.num_aps)
                    .map(|_| CVec::from_fn(n, |_, _| rand_cx(rng) * cx(amp, 0.0)))
                    .collect()
            })
            .collect(),
        quant: (0..config.num_aps)
            .map(|_| rand_hpd(rng, n, config.ap_power * 0.01))
            .collect(),
        phases: PhaseProfile::random(config.num_aps, config.layers, config.atoms, rng),
    }
}

fn criterion_1(report: &mut Report) {
    let config = SystemConfig::default();
    let (ch, stack) = instance(&config, 11);
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ul = random_uplink(&config, &mut rng);
        let eff = effective_channels(&ch, &stack, &ul.phases, Direction::Uplink).unwrap();
        let aux = ul_optimal_aux(&ul, &eff, config.noise_ul).unwrap();
        let s = ul_surrogate_rates(&ul, &eff, config.noise_ul, &aux).unwrap();
        let r = uplink_rates(&ul, &eff, config.noise_ul).unwrap();
        for (a, b) in s.iter().zip(&r) {
            worst = worst.max((a - b).abs());
        }
        let dl = random_downlink(&config, &mut rng);
        let eff = effective_channels(&ch, &stack, &dl.phases, Direction::Downlink).unwrap();
        let aux = dl_optimal_aux(&dl, &eff, config.noise_dl);
        let s = dl_surrogate_rates(&dl, &eff, config.noise_dl, &aux);
        let r = downlink_rates(&dl, &eff, config.noise_dl).unwrap();
        for (a, b) in s.iter().zip(&r) {
            worst = worst.max((a - b).abs());
        }
    }
    report.line(
        1,
        "FP tightness",
        worst <= 1e-9,
        format!("max |surrogate - rate| {worst:.2e} over 100 UL + 100 DL states (tol 1e-9)"),
    );
}

fn criterion_2(report: &mut Report) {
    let config = SystemConfig::default();
    let (ch, stack) = instance(&config, 12);
    let n = config.rf_chains;
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let mut tight: f64 = 0.0;
    let mut below: f64 = f64::INFINITY;
    let perturb = |rng: &mut ChaCha20Rng, xi: &CMat| -> CMat {
        let scale = xi.trace().re / n as f64;
        match rng.random_range(0..3) {
            0 => rand_hpd(rng, n, scale),
            1 => {
                let s = scale * rng.random::<f64>();
                xi + rand_hpd(rng, n, s)
            }
            _ => xi * cx(0.3 + 3.0 * rng.random::<f64>(), 0.0),
        }
    };
    for _ in 0..100 {
        let ul = random_uplink(&config, &mut rng);
        let eff = effective_channels(&ch, &stack, &ul.phases, Direction::Uplink).unwrap();
        let dl = random_downlink(&config, &mut rng);
        for i in 0..config.num_aps {
            let xi = ul_optimal_xi(&ul, &eff, config.noise_ul, i);
            let exact = uplink_fronthaul_load(&ul, &eff, config.noise_ul, i).unwrap();
            let at = ul_surrogate_fronthaul(&ul, &eff, config.noise_ul, &xi, i).unwrap();
            tight = tight.max((at - exact).abs());
            let p = perturb(&mut rng, &xi);
            let v = ul_surrogate_fronthaul(&ul, &eff, config.noise_ul, &p, i).unwrap();
            below = below.min(v - exact);
            let xi = dl_optimal_xi(&dl, i);
            let exact = downlink_fronthaul_load(&dl, i).unwrap();
            let at = dl_surrogate_fronthaul(&dl, &xi, i).unwrap();
            tight = tight.max((at - exact).abs());
            let p = perturb(&mut rng, &xi);
            let v = dl_surrogate_fronthaul(&dl, &p, i).unwrap();
            below = below.min(v - exact);
        }
    }
    let ok = tight <= 1e-9 && below >= -1e-9;
    report.line(
        2,
        "Fenchel tightness",
        ok,
        format!(
            "max |bound - load| at optimum {tight:.2e} (tol 1e-9); min bound - load over perturbed anchors {below:.2e} (>= -1e-9)"
        ),
    );
}

fn criterion_3(report: &mut Report) {
    let config = SystemConfig {
        num_aps: 2,
        rf_chains: 2,
        atoms: 4,
        layers: 2,
        ..SystemConfig::default().with_ues(2)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for inst in 0..5u64 {
        let (ch, stack) = instance(&config, 30 + inst);
        let mut dl = random_downlink(&config, &mut rng);
        let grad =
            dl_phase_gradient(&dl, &ch, &stack, config.noise_dl, &config.weights_dl).unwrap();
        let wsr = |s: &DownlinkState| {
            let eff = effective_channels(&ch, &stack, &s.phases, Direction::Downlink).unwrap();
            weighted_sum(
                &downlink_rates(s, &eff, config.noise_dl).unwrap(),
                &config.weights_dl,
            )
        };
        for _ in 0..10 {
            let i = rng.random_range(0..config.num_aps);
            let l = rng.random_range(0..config.layers);
            let m = rng.random_range(0..config.atoms);
            let t = dl.phases.angles[i][l][m];
            let h = 1e-6;
            dl.phases.angles[i][l][m] = t + h;
            let up = wsr(&dl);
            dl.phases.angles[i][l][m] = t - h;
            let down = wsr(&dl);
            dl.phases.angles[i][l][m] = t;
            let fd = (up - down) / (2.0 * h);
            let g = grad[i][l][m];
            worst = worst.max((fd - g).abs() / g.abs().max(1e-12));
            checked += 1;
        }
    }
    report.line(
        3,
        "phase gradient",
        worst < 1e-5,
        format!("max relative error {worst:.2e} over {checked} coordinates (tol 1e-5)"),
    );
}

fn criterion_4(report: &mut Report) {
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let mut margin = f64::INFINITY;
    for inst in 0..20u64 {
        let (ch, stack) = instance(&config, 40 + inst);
        let mut ul = random_uplink(&config, &mut rng);
        let eff = effective_channels(&ch, &stack, &ul.phases, Direction::Uplink).unwrap();
        ul.combiners = mmse_combiners(&ul.power, &ul.quant, &eff, config.noise_ul).unwrap();
        let best = uplink_rates(&ul, &eff, config.noise_ul).unwrap();
        let len = config.rf_chains * config.num_aps;
        for _ in 0..1000 {
            let mut trial = ul.clone();
            for u in &mut trial.combiners {
                *u = CVec::from_fn(len, |_, _| rand_cx(&mut rng));
            }
            let r = uplink_rates(&trial, &eff, config.noise_ul).unwrap();
            for (b, a) in best.iter().zip(&r) {
                margin = margin.min(b - a);
            }
        }
    }
    report.line(
        4,
        "MMSE optimality",
        margin >= -1e-9,
        format!("min MMSE rate - random-combiner rate {margin:.2e} over 20 instances x 1000 draws"),
    );
}

#[derive(Clone)]
struct Run {
    label: String,
    sum_rate: f64,
    trace: Vec<f64>,
    digital_time: Duration,
    feasibility: Option<String>,
}

fn feasibility(out: &SchemeOutcome, config: &SystemConfig) -> Option<String> {
    if out.slacks.fronthaul < -1e-6 {
        return Some(format!("fronthaul slack {:.2e}", out.slacks.fronthaul));
    }
    let phases = match &out.state {
        SchemeState::Uplink(s) => {
            if s.power
                .iter()
                .any(|&p| !(0.0..=config.ue_power).contains(&p))
            {
                return Some("uplink power outside [0, P_U]".into());
            }
            &s.phases
        }
        SchemeState::Downlink(s) => {
            if out.slacks.power < -1e-8 {
                return Some(format!("power slack {:.2e}", out.slacks.power));
            }
            &s.phases
        }
    };
    for i in 0..phases.aps() {
        for z in phases.coefficients(i).iter().flatten() {
            if (z.norm() - 1.0).abs() > 4.0 * f64::EPSILON {
                return Some(format!("|phi| = {}", z.norm()));
            }
        }
    }
    None
}

fn run(
    spec: SchemeSpec,
    config: &SystemConfig,
    seed: u64,
    dir: Direction,
    settings: &AoSettings,
) -> Run {
    let (ch, stack) = instance(config, seed);
    let label = format!("{spec} {dir:?} seed {seed}");
    let out = run_scheme(spec, config, &ch, &stack, settings, dir)
        .unwrap_or_else(|e| panic!("{label}: {e}"));
    Run {
        feasibility: feasibility(&out, config),
        label,
        sum_rate: out.sum_rate,
        trace: out.trace.objectives(),
        digital_time: out.digital_time,
    }
}

struct Ordering {
    /// `[direction][scheme][trial]`, schemes in `SchemeTag::ALL` order.
    base: Vec<Vec<Vec<Run>>>,
    /// `[direction][trial]` hybrid at seven layers.
    deep: Vec<Vec<Run>>,
}

const DIRS: [Direction; 2] = [Direction::Uplink, Direction::Downlink];

fn ordering_runs() -> Ordering {
    let config = SystemConfig::default();
    let deep_config = SystemConfig {
        layers: 7,
        ..config.clone()
    };
    let settings = AoSettings::default();
    let mut jobs = Vec::new();
    for (d, &dir) in DIRS.iter().enumerate() {
        for (s, &tag) in SchemeTag::ALL.iter().enumerate() {
            for t in 0..TRIALS {
                jobs.push((d, Some(s), tag, t, dir));
            }
        }
        for t in 0..TRIALS {
            jobs.push((d, None, SchemeTag::Hybrid, t, dir));
        }
    }
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|&(d, s, tag, t, dir)| {
            let cfg = if s.is_some() { &config } else { &deep_config };
            let r = run(
                SchemeSpec::optimized(tag),
                cfg,
                trial_seed(BASE_SEED, t),
                dir,
                &settings,
            );
            (d, s, t, r)
        })
        .collect();
    let mut base = vec![vec![Vec::new(); SchemeTag::ALL.len()]; 2];
    let mut deep = vec![Vec::new(); 2];
    for (d, s, _, r) in runs {
        match s {
            Some(s) => base[d][s].push(r),
            None => deep[d].push(r),
        }
    }
    Ordering { base, deep }
}

fn scheme_index(tag: SchemeTag) -> usize {
    SchemeTag::ALL.iter().position(|&t| t == tag).unwrap()
}

fn mean(runs: &[Run]) -> f64 {
    runs.iter().map(|r| r.sum_rate).sum::<f64>() / runs.len() as f64
}

fn criterion_5(report: &mut Report, ord: &Ordering) {
    let runs = &ord.base[1][scheme_index(SchemeTag::Hybrid)];
    let mut worst_drop: f64 = 0.0;
    let mut unsettled = Vec::new();
    for r in runs {
        for w in r.trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        let settled = r
            .trace
            .windows(2)
            .take(20)
            .any(|w| (w[1] - w[0]).abs() / w[0].abs().max(1e-12) < 1e-3);
        if !settled {
            unsettled.push(r.label.clone());
        }
    }
    report.line(
        5,
        "downlink monotone convergence",
        worst_drop <= 1e-8 && unsettled.is_empty(),
        format!(
            "largest outer decrease {worst_drop:.2e} (tol 1e-8); {} of {} runs reach relative change < 1e-3 within 20 outer iterations",
            runs.len() - unsettled.len(),
            runs.len()
        ),
    );
}

fn criterion_6(report: &mut Report, ord: &Ordering) {
    let runs = &ord.base[0][scheme_index(SchemeTag::Hybrid)];
    let mut monotone = 0;
    for r in runs {
        let drops: Vec<(usize, f64)> = r
            .trace
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] < w[0] - 1e-6)
            .map(|(i, w)| (i + 1, w[0] - w[1]))
            .collect();
        if drops.is_empty() {
            monotone += 1;
        } else {
            for (it, d) in drops {
                println!("  uplink decrease: {} iteration {it} by {d:.3e}", r.label);
            }
        }
    }
    report.line(
        6,
        "uplink empirical monotonicity",
        monotone >= 18,
        format!(
            "{monotone} of {} seeds non-decreasing within 1e-6 (need 18)",
            runs.len()
        ),
    );
}

fn criterion_8(report: &mut Report, ord: &Ordering) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, dir) in DIRS.iter().enumerate() {
        let m: Vec<f64> = [
            SchemeTag::FullyDigital,
            SchemeTag::Hybrid,
            SchemeTag::WaveOnly,
            SchemeTag::RandomPhase,
        ]
        .iter()
        .map(|&t| mean(&ord.base[d][scheme_index(t)]))
        .collect();
        let deep = mean(&ord.deep[d]);
        let good = m[0] >= m[1] && m[1] >= m[2] && m[2] >= m[3] && deep >= m[1];
        ok &= good;
        parts.push(format!(
            "{dir:?} fd {:.3} >= hybrid {:.3} >= wave_only {:.3} >= random {:.3}, hybrid L=7 {deep:.3} >= L=2{}",
            m[0],
            m[1],
            m[2],
            m[3],
            if good { "" } else { " (violated)" }
        ));
    }
    report.line(
        8,
        "scheme ordering",
        ok,
        format!("means over {TRIALS} paired trials: {}", parts.join("; ")),
    );
}

fn criterion_9(report: &mut Report, all: &mut Vec<Run>) {
    let settings = AoSettings::default();
    let mut jobs = Vec::new();
    for n in [2usize, 4] {
        for cf in [3.0, 5.0] {
            for dir in DIRS {
                for comp in [Compression::Optimized, Compression::EqualRate] {
                    for t in 0..TRIALS {
                        jobs.push((n, cf, dir, comp, t));
                    }
                }
            }
        }
    }
    let runs: Vec<_> = jobs
        .par_iter()
        .map(|&(n, cf, dir, comp, t)| {
            let config = SystemConfig {
                rf_chains: n,
                fronthaul: cf,
                ..SystemConfig::default()
            };
            let spec = SchemeSpec::new(SchemeTag::Hybrid, comp).unwrap();
            (
                n,
                cf,
                dir,
                comp,
                run(spec, &config, trial_seed(BASE_SEED, t), dir, &settings),
            )
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2usize, 4] {
        for cf in [3.0, 5.0] {
            for dir in DIRS {
                let pick = |c: Compression| -> Vec<Run> {
                    runs.iter()
                        .filter(|r| r.0 == n && r.1 == cf && r.2 == dir && r.3 == c)
                        .map(|r| r.4.clone())
                        .collect()
                };
                let opt = mean(&pick(Compression::Optimized));
                let eq = mean(&pick(Compression::EqualRate));
                ok &= opt >= eq;
                parts.push(format!(
                    "N={n} C_F={cf} {dir:?} {opt:.3} vs {eq:.3}{}",
                    if opt >= eq { "" } else { " (violated)" }
                ));
            }
        }
    }
    all.extend(runs.into_iter().map(|r| r.4));
    report.line(
        9,
        "compression ordering",
        ok,
        format!("optimized vs equal-rate means: {}", parts.join("; ")),
    );
}

fn scalar_uplink_oracle(config: &SystemConfig, ch: &ChannelRealization, stack: &SimStack) -> f64 {
    let mut best_gain: f64 = 0.0;
    let mut phases = PhaseProfile::zeros(1, 1, 2);
    for a in 0..360 {
        for b in 0..360 {
            phases.angles[0][0][0] = (a as f64).to_radians();
            phases.angles[0][0][1] = (b as f64).to_radians();
            let eff = effective_channels(ch, stack, &phases, Direction::Uplink).unwrap();
            best_gain = best_gain.max(eff.vectors[0][0][0].norm_sqr());
        }
    }
    let s2 = config.noise_ul;
    let mut best: f64 = 0.0;
    for ip in 0..=200 {
        let p = config.ue_power * ip as f64 / 200.0;
        for iw in 0..=6000 {
            let w = s2 * 10f64.powf(-6.0 + 12.0 * iw as f64 / 6000.0);
            let load = ((p * best_gain + s2 + w) / w).log2();
            if load <= config.fronthaul {
                best = best.max((1.0 + p * best_gain / (s2 + w)).log2());
            }
        }
    }
    best
}

fn criterion_10(report: &mut Report, all: &mut Vec<Run>) {
    let config = SystemConfig {
        num_aps: 1,
        rf_chains: 1,
        atoms: 2,
        layers: 1,
        ..SystemConfig::default().with_ues(1)
    };
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let (ch, stack) = instance(&config, 500 + seed);
        let spec = SchemeSpec::optimized(SchemeTag::Hybrid);
        let r = run(
            spec,
            &config,
            500 + seed,
            Direction::Uplink,
            &AoSettings::default(),
        );
        let grid = scalar_uplink_oracle(&config, &ch, &stack);
        worst = worst.max((r.sum_rate - grid).abs());
        parts.push(format!("{:.4}/{:.4}", r.sum_rate, grid));
        all.push(r);
    }
    report.line(
        10,
        "small-instance oracle",
        worst <= 1e-2,
        format!(
            "max |AO - grid| {worst:.2e} bps/Hz (tol 1e-2); AO/grid {}",
            parts.join(" ")
        ),
    );
}

fn criterion_11(report: &mut Report, ord: &Ordering) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, dir) in DIRS.iter().enumerate() {
        let hy = &ord.base[d][scheme_index(SchemeTag::Hybrid)];
        let fd = &ord.base[d][scheme_index(SchemeTag::FullyDigital)];
        let ratios: Vec<f64> = (0..5)
            .map(|t| fd[t].digital_time.as_secs_f64() / hy[t].digital_time.as_secs_f64())
            .collect();
        ok &= ratios.iter().all(|&r| r > 1.0);
        let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
        parts.push(format!("{dir:?} [{}]", shown.join(", ")));
    }
    report.line(
        11,
        "runtime scaling",
        ok,
        format!(
            "fully-digital / hybrid digital time on 5 realizations: {}",
            parts.join("; ")
        ),
    );
}

fn criterion_7(report: &mut Report, runs: &[Run]) {
    let bad: Vec<String> = runs
        .iter()
        .filter_map(|r| r.feasibility.as_ref().map(|m| format!("{}: {m}", r.label)))
        .collect();
    for b in &bad {
        println!("  infeasible exit: {b}");
    }
    report.line(
        7,
        "feasibility at exit",
        bad.is_empty(),
        format!("{} of {} runs feasible", runs.len() - bad.len(), runs.len()),
    );
}

fn main() {
    let start = Instant::now();
    let mut report = Report { failed: 0 };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    let ord = ordering_runs();
    criterion_5(&mut report, &ord);
    criterion_6(&mut report, &ord);
    criterion_8(&mut report, &ord);
    criterion_11(&mut report, &ord);
    let mut all: Vec<Run> = ord
        .base
        .iter()
        .flatten()
        .flatten()
        .chain(ord.deep.iter().flatten())
        .cloned()
        .collect();
    criterion_9(&mut report, &mut all);
    criterion_10(&mut report, &mut all);
    criterion_7(&mut report, &all);
    println!(
        "acceptance: {} failed, {:.0} s",
        report.failed,
        start.elapsed().as_secs_f64()
    );
    if report.failed > 0 {
        std::process::exit(1);
    }
}
