//! Optimised against equal-rate fronthaul compression across fronthaul
//! capacities, downlink, one realization.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::baselines::{
    downlink_equal_rate_floors, run_scheme, SchemeSpec, SchemeState, SchemeTag,
};
use simcf::channel::draw_realization;
use simcf::optimizers::AoSettings;
use simcf::program::Compression;
use simcf::sim::{build_stack, Direction};
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let base = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (_, channels) = draw_realization(&base, &mut rng)?;
    let stack = build_stack(&base.geometry()?, base.num_aps, 4)?;
    let settings = AoSettings::default();
    for cf in [2.0, 3.0, 5.0, 8.0] {
        let config = SystemConfig {
            fronthaul: cf,
            ..base.clone()
        };
        let mut line = format!("C_F = {cf}:");
        for c in [Compression::Optimized, Compression::EqualRate] {
            let spec = SchemeSpec::new(SchemeTag::Hybrid, c)?;
            let r = run_scheme(
                spec,
                &config,
                &channels,
                &stack,
                &settings,
                Direction::Downlink,
            )?;
            line += &format!("  {} {:.4} bps/Hz", c.as_str(), r.sum_rate);
            if let (Compression::EqualRate, SchemeState::Downlink(s)) = (c, &r.state) {
                let slack: Vec<String> = downlink_equal_rate_floors(s, &config, 0)
                    .iter()
                    .enumerate()
                    .map(|(n, f)| format!("{:.1e}", s.quant[0][(n, n)].re - f))
                    .collect();
                line += &format!(" (AP 0 floor slack [{}])", slack.join(", "));
            }
        }
        println!("{line}");
    }
    Ok(())
}
