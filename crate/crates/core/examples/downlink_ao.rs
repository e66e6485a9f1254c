//! Downlink alternating optimisation: FP digital passes and normalised
//! gradient ascent on the SIM phases, printed per outer iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::channel::draw_realization;
use simcf::optimizers::{run_downlink, AoSettings, Variant};
use simcf::sim::build_stack;
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (_, channels) = draw_realization(&config, &mut rng)?;
    let stack = build_stack(&config.geometry()?, config.num_aps, 7)?;
    let out = run_downlink(
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
    println!(
        "digital {:.0} ms, wave {:.0} ms, degraded subproblems: {}",
        out.digital_time.as_secs_f64() * 1e3,
        out.wave_time.as_secs_f64() * 1e3,
        out.degraded
    );
    Ok(())
}
