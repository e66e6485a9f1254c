use std::time::{Duration, Instant};

use super::{
    bisect_decreasing, relative_change, AoOutcome, AoSettings, ConvergenceTrace, TraceEntry,
    Variant,
};
use crate::channel::{effective_channels, ChannelRealization, EffectiveChannels};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fp::{dl_optimal_aux, dl_optimal_xi, dl_phase_gradient};
use crate::linalg::{cx, log2_det_hpd, scaled_identity, CMat, CVec};
use crate::metrics::{
    downlink_power, downlink_rates, downlink_slacks, weighted_sum, DownlinkState,
};
use crate::program::{equal_rate_factor, pack_downlink_digital, Compression, QUANT_FLOOR};
use crate::sim::{wrap_angle, Direction, SimStack};
use crate::solver::solve;

const FLOOR_MARGIN: f64 = 1e-6;

fn wsr(state: &DownlinkState, eff: &EffectiveChannels, config: &SystemConfig) -> Result<f64> {
    Ok(weighted_sum(
        &downlink_rates(state, eff, config.noise_dl)?,
        &config.weights_dl,
    ))
}

fn equal_rate_quant(state: &DownlinkState, config: &SystemConfig, i: usize, n: usize) -> CMat {
    let ct = equal_rate_factor(config.fronthaul, n);
    let mut q = CMat::zeros(n, n);
    for j in 0..n {
        let s: f64 = state.beams.iter().map(|b| b[i][j].norm_sqr()).sum();
        q[(j, j)] = cx(
            (ct * s * (1.0 + FLOOR_MARGIN)).max(QUANT_FLOOR * config.ap_power),
            0.0,
        );
    }
    q
}

/// Matched-filter beams using `0.45 P_A` per AP and `Ω_i = cI` using
/// `0.05 P_A`; beams are shrunk when needed so the load stays below
/// `0.9 C_F`.
pub fn downlink_initial_state(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    variant: Variant,
) -> Result<DownlinkState> {
    let phases = stack.initial_phases(Direction::Downlink).clone();
    if phases.aps() != config.num_aps || channels.num_ues() != config.num_ues {
        return Err(Error::Dimension(
            "stack or channels do not match the configuration".into(),
        ));
    }
    let eff = effective_channels(channels, stack, &phases, Direction::Downlink)?;
    let n = eff.rf_chains();
    let k_n = config.num_ues;
    let pa = config.ap_power;
    let mut beams = vec![vec![CVec::zeros(n); config.num_aps]; k_n];
    for i in 0..config.num_aps {
        let mf: Vec<CVec> = (0..k_n)
            .map(|k| {
                let h = &eff.vectors[k][i];
                if variant.nonnegative_digital {
                    h.map(|z| cx(z.norm(), 0.0))
                } else {
                    h.clone()
                }
            })
            .collect();
        let tot: f64 = mf.iter().map(|v| v.norm_squared()).sum();
        let s = if tot > 0.0 {
            (0.45 * pa / tot).sqrt()
        } else {
            0.0
        };
        for k in 0..k_n {
            beams[k][i] = &mf[k] * cx(s, 0.0);
        }
    }
    let mut state = DownlinkState {
        beams,
        quant: vec![scaled_identity(n, 0.05 * pa / n as f64); config.num_aps],
        phases,
    };
    for i in 0..config.num_aps {
        match variant.compression {
            Compression::Optimized => {
                let mut vv = CMat::zeros(n, n);
                for b in &state.beams {
                    vv += &b[i] * b[i].adjoint();
                }
                let om = state.quant[i].clone();
                let ld_om = log2_det_hpd(&om)?;
                // load with beams scaled by 1/c, decreasing in c
                let load = |c: f64| -> Result<f64> {
                    Ok(log2_det_hpd(&(&vv * cx(1.0 / (c * c), 0.0) + &om))? - ld_om)
                };
                let c = bisect_decreasing(load, 0.9 * config.fronthaul, 1.0)?;
                for b in &mut state.beams {
                    b[i] /= cx(c, 0.0);
                }
            }
            Compression::EqualRate => {
                state.quant[i] = equal_rate_quant(&state, config, i, n);
                let p = downlink_power(&state, i);
                if p > 0.5 * pa {
                    let f = (0.5 * pa / p).sqrt();
                    for b in &mut state.beams {
                        b[i] *= cx(f, 0.0);
                    }
                    state.quant[i] = equal_rate_quant(&state, config, i, n);
                }
            }
        }
    }
    Ok(state)
}

fn digital_pass(
    state: &mut DownlinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
    settings: &AoSettings,
    variant: Variant,
) -> Result<bool> {
    let mut degraded = false;
    let mut obj = wsr(state, eff, config)?;
    for _ in 0..settings.max_digital {
        let aux = dl_optimal_aux(state, eff, config.noise_dl);
        let xi: Vec<CMat> = (0..state.quant.len())
            .map(|i| dl_optimal_xi(state, i))
            .collect();
        let packed = pack_downlink_digital(
            state,
            eff,
            &aux,
            &xi,
            config,
            variant.compression,
            variant.nonnegative_digital,
        )?;
        let sol = solve(&packed.program, &settings.solver)?;
        degraded |= sol.degraded;
        packed.unpack(&sol.x, state);
        let new = wsr(state, eff, config)?;
        let rel = relative_change(new, obj);
        obj = new;
        if rel < settings.tol {
            break;
        }
    }
    Ok(degraded)
}

/// Normalised gradient ascent on the downlink phases with a decaying step.
pub fn downlink_wave_pass(
    state: &mut DownlinkState,
    channels: &ChannelRealization,
    stack: &SimStack,
    config: &SystemConfig,
    settings: &AoSettings,
) -> Result<()> {
    let dir = Direction::Downlink;
    let mut obj = wsr(
        state,
        &effective_channels(channels, stack, &state.phases, dir)?,
        config,
    )?;
    let mut mu = settings.step_init;
    for _ in 0..settings.max_wave {
        let grad = dl_phase_gradient(state, channels, stack, config.noise_dl, &config.weights_dl)?;
        let mut step = mu;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = state.phases.clone();
            for (i, ap) in grad.iter().enumerate() {
                for (l, g) in ap.iter().enumerate() {
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    for (m, gv) in g.iter().enumerate() {
                        let t = &mut trial.angles[i][l][m];
                        *t = wrap_angle(*t + step * gv / norm);
                    }
                }
            }
            let e = effective_channels(channels, stack, &trial, dir)?;
            let state_trial = DownlinkState {
                beams: state.beams.clone(),
                quant: state.quant.clone(),
                phases: trial,
            };
            let v = wsr(&state_trial, &e, config)?;
            if !settings.strict_ascent || v >= obj {
                accepted = Some((state_trial.phases, v));
                break;
            }
            step *= 0.5;
        }
        mu *= settings.step_decay;
        let Some((phases, v)) = accepted else { break };
        state.phases = phases;
        let rel = relative_change(v, obj);
        obj = v;
        if rel < settings.tol {
            break;
        }
    }
    Ok(())
}

/// Alternates digital and wave passes until the weighted sum-rate settles.
pub fn run_downlink(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    variant: Variant,
) -> Result<AoOutcome<DownlinkState>> {
    config.validate()?;
    settings.validate()?;
    let start = Instant::now();
    let dir = Direction::Downlink;
    let mut state = downlink_initial_state(config, channels, stack, variant)?;
    let mut eff = effective_channels(channels, stack, &state.phases, dir)?;
    let mut obj = wsr(&state, &eff, config)?;
    let mut trace = ConvergenceTrace::default();
    let push =
        |trace: &mut ConvergenceTrace, iter: usize, v: f64, state: &DownlinkState| -> Result<()> {
            let s = downlink_slacks(state, config)?;
            trace.entries.push(TraceEntry {
                iter,
                sum_rate: v,
                min_fronthaul_slack: s.fronthaul,
                min_power_slack: s.power,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            Ok(())
        };
    push(&mut trace, 0, obj, &state)?;
    let mut digital_time = Duration::ZERO;
    let mut wave_time = Duration::ZERO;
    let mut degraded = false;
    let mut outer_iters = 0;
    for it in 1..=settings.max_outer {
        let t = Instant::now();
        degraded |= digital_pass(&mut state, &eff, config, settings, variant)?;
        digital_time += t.elapsed();
        if variant.optimize_wave && !stack.is_identity() {
            let t = Instant::now();
            downlink_wave_pass(&mut state, channels, stack, config, settings)?;
            wave_time += t.elapsed();
            eff = effective_channels(channels, stack, &state.phases, dir)?;
        }
        let new = wsr(&state, &eff, config)?;
        push(&mut trace, it, new, &state)?;
        outer_iters = it;
        let rel = relative_change(new, obj);
        obj = new;
        if rel < settings.tol {
            break;
        }
    }
    let slacks = downlink_slacks(&state, config)?;
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
