//! Runs the proposed hybrid scheme and its benchmarks on one shared channel
//! realization, in both directions.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::baselines::{run_scheme, SchemeSpec, SchemeTag};
use simcf::channel::draw_realization;
use simcf::optimizers::AoSettings;
use simcf::sim::{build_stack, Direction};
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (_, channels) = draw_realization(&config, &mut rng)?;
    let stack = build_stack(&config.geometry()?, config.num_aps, seed)?;
    let settings = AoSettings::default();
    for dir in [Direction::Uplink, Direction::Downlink] {
        for tag in SchemeTag::ALL {
            let r = run_scheme(
                SchemeSpec::optimized(tag),
                &config,
                &channels,
                &stack,
                &settings,
                dir,
            )?;
            println!(
                "{dir:<8} {:<14} {:8.4} bps/Hz  {:2} outer iterations  digital {:6.0} ms  wave {:6.0} ms",
                r.scheme.to_string(),
                r.sum_rate,
                r.outer_iters,
                r.digital_time.as_secs_f64() * 1e3,
                r.wave_time.as_secs_f64() * 1e3
            );
        }
    }
    Ok(())
}
