use std::time::{Duration, Instant};

use super::{
    bisect_decreasing, relative_change, AoOutcome, AoSettings, ConvergenceTrace, TraceEntry,
    Variant,
};
use crate::channel::{
    effective_channels, effective_channels_with, ChannelRealization, EffectiveChannels,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fp::{
    layer_surrogates, mmse_combiners, stack_layer, ul_optimal_aux, ul_optimal_xi, LayerInputs,
};
use crate::linalg::{cx, log2_det_hpd, scaled_identity, CMat, Cx};
use crate::metrics::{
    uplink_fronthaul_load, uplink_rates, uplink_signal_covariance, uplink_slacks, weighted_sum,
    UplinkState,
};
use crate::program::{
    equal_rate_factor, pack_nonneg_combiners, pack_uplink_digital, pack_wave_layer, Compression,
    WaveLayerInputs, QUANT_FLOOR,
};
use crate::sim::{wrap_angle, Direction, PhaseProfile, SimStack};
use crate::solver::solve;

/// Fronthaul margin kept after feasibility restoration.
const RESTORE_MARGIN: f64 = 1e-9;
/// Relative margin of equal-rate floors at initialisation and restoration.
const FLOOR_MARGIN: f64 = 1e-6;

fn wsr(state: &UplinkState, eff: &EffectiveChannels, config: &SystemConfig) -> Result<f64> {
    Ok(weighted_sum(
        &uplink_rates(state, eff, config.noise_ul)?,
        &config.weights_ul,
    ))
}

fn equal_rate_quant(
    state: &UplinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
    i: usize,
) -> CMat {
    let n = eff.rf_chains();
    let ct = equal_rate_factor(config.fronthaul, n);
    let s = uplink_signal_covariance(state, eff, config.noise_ul, i);
    let mut q = CMat::zeros(n, n);
    for j in 0..n {
        q[(j, j)] = cx(
            (ct * s[(j, j)].re * (1.0 + FLOOR_MARGIN)).max(QUANT_FLOOR * config.noise_ul),
            0.0,
        );
    }
    q
}

/// `p = P_U/2`, `Ω_i = cI` loading `0.9 C_F`, MMSE combiners, the stack's
/// initial phases.
pub fn uplink_initial_state(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    variant: Variant,
) -> Result<UplinkState> {
    let phases = stack.initial_phases(Direction::Uplink).clone();
    if phases.aps() != config.num_aps || channels.num_ues() != config.num_ues {
        return Err(Error::Dimension(
            "stack or channels do not match the configuration".into(),
        ));
    }
    let eff = effective_channels(channels, stack, &phases, Direction::Uplink)?;
    let n = eff.rf_chains();
    let mut state = UplinkState {
        power: vec![config.ue_power / 2.0; config.num_ues],
        quant: vec![scaled_identity(n, 1.0); config.num_aps],
        combiners: Vec::new(),
        phases,
    };
    for i in 0..config.num_aps {
        state.quant[i] = match variant.compression {
            Compression::Optimized => {
                let s = uplink_signal_covariance(&state, &eff, config.noise_ul, i);
                let load = |c: f64| -> Result<f64> {
                    Ok(log2_det_hpd(&(&s + scaled_identity(n, c)))? - n as f64 * c.log2())
                };
                let c =
                    bisect_decreasing(load, 0.9 * config.fronthaul, QUANT_FLOOR * config.noise_ul)?;
                scaled_identity(n, c)
            }
            Compression::EqualRate => equal_rate_quant(&state, &eff, config, i),
        };
    }
    state.combiners = mmse_combiners(&state.power, &state.quant, &eff, config.noise_ul)?;
    if variant.nonnegative_digital {
        for u in &mut state.combiners {
            *u = u.map(|z| cx(z.norm(), 0.0));
        }
    }
    Ok(state)
}

/// Inflates `Ω_i` by the smallest factor `>= 1` (or raises equal-rate
/// floors) so every fronthaul constraint holds with a small margin.
/// Returns whether anything changed.
pub fn restore_uplink_feasibility(
    state: &mut UplinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
    compression: Compression,
) -> Result<bool> {
    let mut changed = false;
    let n = eff.rf_chains();
    for i in 0..state.quant.len() {
        match compression {
            Compression::Optimized => {
                let target = config.fronthaul - RESTORE_MARGIN;
                if uplink_fronthaul_load(state, eff, config.noise_ul, i)? <= target {
                    continue;
                }
                let s = uplink_signal_covariance(state, eff, config.noise_ul, i);
                let om = state.quant[i].clone();
                let load = |f: f64| -> Result<f64> {
                    let q = &om * cx(f, 0.0);
                    Ok(log2_det_hpd(&(&s + &q))? - log2_det_hpd(&q)?)
                };
                let f = bisect_decreasing(load, target, 1.0)?;
                state.quant[i] = om * cx(f, 0.0);
                changed = true;
            }
            Compression::EqualRate => {
                let ct = equal_rate_factor(config.fronthaul, n);
                let s = uplink_signal_covariance(state, eff, config.noise_ul, i);
                for j in 0..n {
                    let floor = ct * s[(j, j)].re;
                    if state.quant[i][(j, j)].re <= floor * (1.0 + 1e-12) {
                        state.quant[i][(j, j)] = cx(floor * (1.0 + FLOOR_MARGIN), 0.0);
                        changed = true;
                    }
                }
            }
        }
    }
    Ok(changed)
}

/// Repeated `(p, Ω)` and combiner updates at fixed phases.
fn digital_pass(
    state: &mut UplinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
    settings: &AoSettings,
    variant: Variant,
) -> Result<bool> {
    let mut degraded = false;
    let mut obj = wsr(state, eff, config)?;
    for _ in 0..settings.max_digital {
        restore_uplink_feasibility(state, eff, config, variant.compression)?;
        let aux = ul_optimal_aux(state, eff, config.noise_ul)?;
        let xi: Vec<CMat> = (0..state.quant.len())
            .map(|i| ul_optimal_xi(state, eff, config.noise_ul, i))
            .collect();
        let packed = pack_uplink_digital(state, eff, &aux, &xi, config, variant.compression)?;
        let sol = solve(&packed.program, &settings.solver)?;
        degraded |= sol.degraded;
        packed.unpack(&sol.x, state);
        if variant.nonnegative_digital {
            let aux = ul_optimal_aux(state, eff, config.noise_ul)?;
            let packed = pack_nonneg_combiners(state, eff, &aux, config)?;
            let sol = solve(&packed.program, &settings.solver)?;
            degraded |= sol.degraded;
            state.combiners = packed.unpack(&sol.x);
        } else {
            state.combiners = mmse_combiners(&state.power, &state.quant, eff, config.noise_ul)?;
        }
        let new = wsr(state, eff, config)?;
        let rel = relative_change(new, obj);
        obj = new;
        if rel < settings.tol {
            break;
        }
    }
    Ok(degraded)
}

fn coefficients(phases: &PhaseProfile) -> Vec<Vec<Vec<Cx>>> {
    (0..phases.aps()).map(|i| phases.coefficients(i)).collect()
}

fn unit(z: Cx) -> Cx {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        cx(1.0, 0.0)
    }
}

/// Penalty-based layer-by-layer update of the uplink phases, relaxed to
/// `|φ| <= 1` and projected back onto the unit circle at the end.
pub fn uplink_wave_pass(
    state: &mut UplinkState,
    channels: &ChannelRealization,
    stack: &SimStack,
    config: &SystemConfig,
    settings: &AoSettings,
    variant: Variant,
) -> Result<bool> {
    let dir = Direction::Uplink;
    let mut coeffs = coefficients(&state.phases);
    let l_n = stack.layers();
    let mut xi_pen = settings.penalty_init;
    let mut degraded = false;
    let mut obj = {
        let eff = effective_channels_with(channels, stack, &coeffs, dir)?;
        wsr(state, &eff, config)?
    };
    let ct = matches!(variant.compression, Compression::EqualRate)
        .then(|| equal_rate_factor(config.fronthaul, stack.rf_chains()));
    for _ in 0..settings.max_wave {
        for l in 1..=l_n {
            let eff = effective_channels_with(channels, stack, &coeffs, dir)?;
            let aux = ul_optimal_aux(state, &eff, config.noise_ul)?;
            let xi: Vec<CMat> = (0..state.quant.len())
                .map(|i| ul_optimal_xi(state, &eff, config.noise_ul, i))
                .collect();
            let inputs = LayerInputs {
                channels,
                stack,
                coeffs: &coeffs,
                power: &state.power,
                quant: &state.quant,
                combiners: &state.combiners,
                aux: &aux,
                xi: &xi,
                noise: config.noise_ul,
                equal_rate: ct,
            };
            let forms = layer_surrogates(&inputs, l)?;
            let current = stack_layer(&coeffs, l);
            let anchor = current.map(unit);
            let packed = pack_wave_layer(&WaveLayerInputs {
                surrogates: &forms,
                weights: &config.weights_ul,
                current: &current,
                anchor: &anchor,
                penalty: xi_pen,
                fronthaul: config.fronthaul,
                compression: variant.compression,
                quant: &state.quant,
            })?;
            let sol = match solve(&packed.program, &settings.solver) {
                Ok(s) => s,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            };
            degraded |= sol.degraded;
            for (i, layer) in packed.unpack(&sol.x).into_iter().enumerate() {
                coeffs[i][l - 1] = layer;
            }
        }
        xi_pen *= settings.penalty_growth;
        let eff = effective_channels_with(channels, stack, &coeffs, dir)?;
        let new = wsr(state, &eff, config)?;
        let rel = relative_change(new, obj);
        obj = new;
        if rel < settings.tol {
            break;
        }
    }
    for (i, ap) in coeffs.iter().enumerate() {
        for (l, layer) in ap.iter().enumerate() {
            for (m, z) in layer.iter().enumerate() {
                state.phases.angles[i][l][m] = wrap_angle(z.arg());
            }
        }
    }
    let eff = effective_channels(channels, stack, &state.phases, dir)?;
    restore_uplink_feasibility(state, &eff, config, variant.compression)?;
    Ok(degraded)
}

/// Alternates wave and digital passes until the weighted sum-rate settles.
pub fn run_uplink(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    variant: Variant,
) -> Result<AoOutcome<UplinkState>> {
    config.validate()?;
    settings.validate()?;
    let start = Instant::now();
    let mut state = uplink_initial_state(config, channels, stack, variant)?;
    let dir = Direction::Uplink;
    let mut eff = effective_channels(channels, stack, &state.phases, dir)?;
    let mut obj = wsr(&state, &eff, config)?;
    let mut trace = ConvergenceTrace::default();
    let push = |trace: &mut ConvergenceTrace,
                iter: usize,
                v: f64,
                state: &UplinkState,
                eff: &EffectiveChannels|
     -> Result<()> {
        let s = uplink_slacks(state, eff, config)?;
        trace.entries.push(TraceEntry {
            iter,
            sum_rate: v,
            min_fronthaul_slack: s.fronthaul,
            min_power_slack: s.power,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    };
    push(&mut trace, 0, obj, &state, &eff)?;
    let mut digital_time = Duration::ZERO;
    let mut wave_time = Duration::ZERO;
    let mut degraded = false;
    let mut outer_iters = 0;
    for it in 1..=settings.max_outer {
        if variant.optimize_wave && !stack.is_identity() {
            let t = Instant::now();
            degraded |= uplink_wave_pass(&mut state, channels, stack, config, settings, variant)?;
            wave_time += t.elapsed();
            eff = effective_channels(channels, stack, &state.phases, dir)?;
        }
        let t = Instant::now();
        degraded |= digital_pass(&mut state, &eff, config, settings, variant)?;
        digital_time += t.elapsed();
        let new = wsr(&state, &eff, config)?;
        push(&mut trace, it, new, &state, &eff)?;
        outer_iters = it;
        let rel = relative_change(new, obj);
        obj = new;
        if rel < settings.tol {
            break;
        }
    }
    let slacks = uplink_slacks(&state, &eff, config)?;
    Ok(AoOutcome {
        state,
        sum_rate: obj,
        slacks,
        trace,
        outer_iters,
        digital_time,
        wave_time,
        degraded,
    })
}
