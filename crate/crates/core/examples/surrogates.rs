//! Checks the fractional-programming and Fenchel surrogates on one uplink
//! state: tight at the optimal auxiliaries, below the true value elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::channel::{draw_realization, effective_channels};
use simcf::fp::{ul_optimal_aux, ul_optimal_xi, ul_surrogate_fronthaul, ul_surrogate_rates};
use simcf::linalg::cx;
use simcf::metrics::{uplink_fronthaul_load, uplink_rates};
use simcf::optimizers::{uplink_initial_state, Variant};
use simcf::sim::{build_stack, Direction};
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (_, ch) = draw_realization(&config, &mut rng)?;
    let stack = build_stack(&config.geometry()?, config.num_aps, 5)?;
    let state = uplink_initial_state(&config, &ch, &stack, Variant::hybrid())?;
    let eff = effective_channels(&ch, &stack, &state.phases, Direction::Uplink)?;

    let exact = uplink_rates(&state, &eff, config.noise_ul)?;
    let mut aux = ul_optimal_aux(&state, &eff, config.noise_ul)?;
    let tight = ul_surrogate_rates(&state, &eff, config.noise_ul, &aux)?;
    for aux_k in aux.omega.iter_mut() {
        *aux_k *= cx(0.7, 0.2);
    }
    let loose = ul_surrogate_rates(&state, &eff, config.noise_ul, &aux)?;
    for k in 0..exact.len() {
        println!(
            "UE {k}: rate {:.6}  surrogate at optimum {:.6}  perturbed {:.6}",
            exact[k], tight[k], loose[k]
        );
    }
    for i in 0..config.num_aps {
        let load = uplink_fronthaul_load(&state, &eff, config.noise_ul, i)?;
        let xi = ul_optimal_xi(&state, &eff, config.noise_ul, i);
        let at_opt = ul_surrogate_fronthaul(&state, &eff, config.noise_ul, &xi, i)?;
        let off = ul_surrogate_fronthaul(&state, &eff, config.noise_ul, &(xi * cx(1.5, 0.0)), i)?;
        println!("AP {i}: load {load:.6} bits, Fenchel bound {at_opt:.6} at Ξ*, {off:.6} at 1.5Ξ*");
    }
    Ok(())
}
