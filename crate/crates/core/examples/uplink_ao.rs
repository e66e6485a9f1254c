//! Uplink alternating optimisation: FP/Fenchel digital passes with MMSE
//! combining and penalty-based layer-by-layer phase updates.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::channel::draw_realization;
use simcf::optimizers::{run_uplink, AoSettings, Variant};
use simcf::sim::build_stack;
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (_, channels) = draw_realization(&config, &mut rng)?;
    let stack = build_stack(&config.geometry()?, config.num_aps, seed)?;
    let out = run_uplink(
        &config,
        &channels,
        &stack,
        &AoSettings::default(),
        Variant::hybrid(),
    )?;
    for e in &out.trace.entries {
        println!(
            "iter {:2}  sum-rate {:8.4} bps/Hz  fronthaul slack {:.2e}  power slack {:.2e}",
            e.iter, e.sum_rate, e.min_fronthaul_slack, e.min_power_slack
        );
    }
    let p: Vec<String> = out.state.power.iter().map(|p| format!("{p:.2}")).collect();
    println!("powers [{}] of {:.2}", p.join(", "), config.ue_power);
    println!(
        "digital {:.0} ms, wave {:.0} ms, degraded subproblems: {}",
        out.digital_time.as_secs_f64() * 1e3,
        out.wave_time.as_secs_f64() * 1e3,
        out.degraded
    );
    Ok(())
}
