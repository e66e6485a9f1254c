//! Exact achievable rates, fronthaul loads and power usage.

use crate::channel::EffectiveChannels;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, log2_det_hpd, quad_form, scaled_identity, trace_re, CMat, CVec};
use crate::sim::PhaseProfile;

/// Uplink optimisation variables.
#[derive(Debug, Clone)]
pub struct UplinkState {
    pub power: Vec<f64>,
    /// Per-AP quantisation noise covariance `Ω_i` (`N x N`).
    pub quant: Vec<CMat>,
    /// Stacked combiners `u_k` (length `N·K_A`).
    pub combiners: Vec<CVec>,
    pub phases: PhaseProfile,
}

/// Downlink optimisation variables.
#[derive(Debug, Clone)]
pub struct DownlinkState {
    /// `v[k][i]`, length `N`.
    pub beams: Vec<Vec<CVec>>,
    pub quant: Vec<CMat>,
    pub phases: PhaseProfile,
}

impl DownlinkState {
    pub fn stacked_beam(&self, k: usize) -> CVec {
        let n = self.beams[k][0].len();
        let a = self.beams[k].len();
        let mut out = CVec::zeros(n * a);
        for i in 0..a {
            out.rows_mut(i * n, n).copy_from(&self.beams[k][i]);
        }
        out
    }
}

fn check_dims(eff: &EffectiveChannels, k_users: usize, quant: &[CMat]) -> Result<()> {
    if eff.num_ues() != k_users {
        return Err(Error::Dimension(format!(
            "{} channel sets for {} UEs",
            eff.num_ues(),
            k_users
        )));
    }
    if quant.len() != eff.num_aps() {
        return Err(Error::Dimension(format!(
            "{} covariances for {} APs",
            quant.len(),
            eff.num_aps()
        )));
    }
    let n = eff.rf_chains();
    if quant.iter().any(|q| q.shape() != (n, n)) {
        return Err(Error::Dimension(
            "quantisation covariance has wrong shape".into(),
        ));
    }
    Ok(())
}

/// Uplink per-UE `(signal, interference-plus-noise)` with combiner `u_k`.
pub fn uplink_sinr_terms(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    k: usize,
) -> Result<(f64, f64)> {
    check_dims(eff, state.power.len(), &state.quant)?;
    let u = &state.combiners[k];
    let n = eff.rf_chains();
    if u.len() != n * eff.num_aps() {
        return Err(Error::Dimension("combiner length".into()));
    }
    let mut signal = 0.0;
    let mut interf = noise * u.norm_squared();
    for (kp, &p) in state.power.iter().enumerate() {
        let a = u.dotc(&eff.stacked(kp)).norm_sqr() * p;
        if kp == k {
            signal = a;
        } else {
            interf += a;
        }
    }
    for (i, q) in state.quant.iter().enumerate() {
        interf += quad_form(q, &u.rows(i * n, n).into_owned());
    }
    Ok((signal, interf))
}

pub fn uplink_user_rate(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    k: usize,
) -> Result<f64> {
    let (s, d) = uplink_sinr_terms(state, eff, noise, k)?;
    Ok(rate_from_terms(s, d))
}

fn rate_from_terms(signal: f64, interf: f64) -> f64 {
    if signal <= 0.0 {
        0.0
    } else {
        (1.0 + signal / interf).log2()
    }
}

/// `Σ_k p_k h̃_{k,i} h̃_{k,i}ᴴ + σ² I` at AP `i` (uplink signal covariance).
pub fn uplink_signal_covariance(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    i: usize,
) -> CMat {
    let n = eff.rf_chains();
    let mut x = scaled_identity(n, noise);
    for (k, &p) in state.power.iter().enumerate() {
        let h = &eff.vectors[k][i];
        x += (h * h.adjoint()) * cx(p, 0.0);
    }
    x
}

/// `log2 det(Σ p h̃h̃ᴴ + σ²I + Ω_i) − log2 det Ω_i`.
pub fn uplink_fronthaul_load(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    i: usize,
) -> Result<f64> {
    check_dims(eff, state.power.len(), &state.quant)?;
    let x = uplink_signal_covariance(state, eff, noise, i) + &state.quant[i];
    Ok(log2_det_hpd(&x)? - log2_det_hpd(&state.quant[i])?)
}

/// `s[k][k'] = h̃_kᴴ v_{k'}` summed over APs.
pub fn downlink_cross_gains(
    state: &DownlinkState,
    eff: &EffectiveChannels,
) -> Vec<Vec<num_complex::Complex64>> {
    let k_n = state.beams.len();
    (0..k_n)
        .map(|k| {
            (0..k_n)
                .map(|kp| {
                    eff.vectors[k]
                        .iter()
                        .zip(&state.beams[kp])
                        .map(|(h, v)| h.dotc(v))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Quantisation noise power seen by UE `k`: `Σ_i h̃_{k,i}ᴴ Ω_i h̃_{k,i}`.
pub fn downlink_quant_noise(state: &DownlinkState, eff: &EffectiveChannels, k: usize) -> f64 {
    state
        .quant
        .iter()
        .zip(&eff.vectors[k])
        .map(|(q, h)| quad_form(q, h))
        .sum()
}

pub fn downlink_sinr_terms(
    state: &DownlinkState,
    eff: &EffectiveChannels,
    noise: f64,
    k: usize,
) -> Result<(f64, f64)> {
    check_dims(eff, state.beams.len(), &state.quant)?;
    let mut signal = 0.0;
    let mut interf = noise + downlink_quant_noise(state, eff, k);
    for kp in 0..state.beams.len() {
        let s: num_complex::Complex64 = eff.vectors[k]
            .iter()
            .zip(&state.beams[kp])
            .map(|(h, v)| h.dotc(v))
            .sum();
        if kp == k {
            signal = s.norm_sqr();
        } else {
            interf += s.norm_sqr();
        }
    }
    Ok((signal, interf))
}

pub fn downlink_user_rate(
    state: &DownlinkState,
    eff: &EffectiveChannels,
    noise: f64,
    k: usize,
) -> Result<f64> {
    let (s, d) = downlink_sinr_terms(state, eff, noise, k)?;
    Ok(rate_from_terms(s, d))
}

/// `Σ_k v_{k,i} v_{k,i}ᴴ` at AP `i`.
pub fn downlink_beam_covariance(state: &DownlinkState, i: usize) -> CMat {
    let n = state.quant[i].nrows();
    let mut x = CMat::zeros(n, n);
    for per_ue in &state.beams {
        let v = &per_ue[i];
        x += v * v.adjoint();
    }
    x
}

/// `log2 det(Σ v vᴴ + Ω_i) − log2 det Ω_i`.
pub fn downlink_fronthaul_load(state: &DownlinkState, i: usize) -> Result<f64> {
    let x = downlink_beam_covariance(state, i) + &state.quant[i];
    Ok(log2_det_hpd(&x)? - log2_det_hpd(&state.quant[i])?)
}

/// `Σ_k ||v_{k,i}||² + tr Ω_i`.
pub fn downlink_power(state: &DownlinkState, i: usize) -> f64 {
    state.beams.iter().map(|b| b[i].norm_squared()).sum::<f64>() + trace_re(&state.quant[i])
}

pub fn weighted_sum(rates: &[f64], weights: &[f64]) -> f64 {
    rates.iter().zip(weights).map(|(r, w)| r * w).sum()
}

pub fn uplink_rates(state: &UplinkState, eff: &EffectiveChannels, noise: f64) -> Result<Vec<f64>> {
    (0..state.power.len())
        .map(|k| uplink_user_rate(state, eff, noise, k))
        .collect()
}

pub fn downlink_rates(
    state: &DownlinkState,
    eff: &EffectiveChannels,
    noise: f64,
) -> Result<Vec<f64>> {
    (0..state.beams.len())
        .map(|k| downlink_user_rate(state, eff, noise, k))
        .collect()
}

/// Minimum fronthaul and power slacks of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slacks {
    pub fronthaul: f64,
    pub power: f64,
}

pub fn uplink_slacks(
    state: &UplinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
) -> Result<Slacks> {
    let mut fh = f64::INFINITY;
    for i in 0..state.quant.len() {
        fh = fh.min(config.fronthaul - uplink_fronthaul_load(state, eff, config.noise_ul, i)?);
    }
    let pw = state
        .power
        .iter()
        .map(|&p| (config.ue_power - p).min(p))
        .fold(f64::INFINITY, f64::min);
    Ok(Slacks {
        fronthaul: fh,
        power: pw,
    })
}

pub fn downlink_slacks(state: &DownlinkState, config: &SystemConfig) -> Result<Slacks> {
    let mut fh = f64::INFINITY;
    let mut pw = f64::INFINITY;
    for i in 0..state.quant.len() {
        fh = fh.min(config.fronthaul - downlink_fronthaul_load(state, i)?);
        pw = pw.min(config.ap_power - downlink_power(state, i));
    }
    Ok(Slacks {
        fronthaul: fh,
        power: pw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cx;
    use crate::sim::Direction;

    fn scalar_eff(h: &[&[Cx]], dir: Direction) -> EffectiveChannels {
        EffectiveChannels {
            direction: dir,
            vectors: h
                .iter()
                .map(|row| row.iter().map(|&z| CVec::from_vec(vec![z])).collect())
                .collect(),
        }
    }

    #[test]
    fn scalar_uplink_rate_and_load() {
        // one AP, one antenna, one UE
        let h = cx(0.6, 0.8);
        let eff = scalar_eff(&[&[h]], Direction::Uplink);
        let state = UplinkState {
            power: vec![4.0],
            quant: vec![scaled_identity(1, 0.5)],
            combiners: vec![CVec::from_vec(vec![cx(1.0, 0.0)])],
            phases: PhaseProfile::zeros(1, 1, 1),
        };
        let r = uplink_user_rate(&state, &eff, 1.0, 0).unwrap();
        assert!((r - (1.0f64 + 4.0 / 1.5).log2()).abs() < 1e-12);
        let g = uplink_fronthaul_load(&state, &eff, 1.0, 0).unwrap();
        assert!((g - (5.5f64 / 0.5).log2()).abs() < 1e-12);
    }

    #[test]
    fn zero_power_zero_rate() {
        let eff = scalar_eff(&[&[cx(1.0, 0.0)]], Direction::Uplink);
        let state = UplinkState {
            power: vec![0.0],
            quant: vec![scaled_identity(1, 1.0)],
            combiners: vec![CVec::zeros(1)],
            phases: PhaseProfile::zeros(1, 1, 1),
        };
        assert_eq!(uplink_user_rate(&state, &eff, 1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn scalar_downlink_two_users() {
        let eff = scalar_eff(&[&[cx(1.0, 0.0)], &[cx(0.0, 2.0)]], Direction::Downlink);
        let state = DownlinkState {
            beams: vec![
                vec![CVec::from_vec(vec![cx(1.0, 0.0)])],
                vec![CVec::from_vec(vec![cx(0.5, 0.0)])],
            ],
            quant: vec![scaled_identity(1, 0.25)],
            phases: PhaseProfile::zeros(1, 1, 1),
        };
        // UE0: |1|² / (|0.5|² + 0.25 + 1)
        let r0 = downlink_user_rate(&state, &eff, 1.0, 0).unwrap();
        assert!((r0 - (1.0f64 + 1.0 / 1.5).log2()).abs() < 1e-12);
        // UE1: |2j·0.5|² / (|2j|² + 4·0.25 + 1)
        let r1 = downlink_user_rate(&state, &eff, 1.0, 1).unwrap();
        assert!((r1 - (1.0f64 + 1.0 / 6.0).log2()).abs() < 1e-12);
        assert!((downlink_power(&state, 0) - 1.5).abs() < 1e-12);
        let g = downlink_fronthaul_load(&state, 0).unwrap();
        assert!((g - (1.5f64 / 0.25).log2()).abs() < 1e-12);
    }

    #[test]
    fn huge_quant_noise_kills_rate() {
        let eff = scalar_eff(&[&[cx(1.0, 0.0)]], Direction::Uplink);
        let state = UplinkState {
            power: vec![1.0],
            quant: vec![scaled_identity(1, 1e12)],
            combiners: vec![CVec::from_vec(vec![cx(1.0, 0.0)])],
            phases: PhaseProfile::zeros(1, 1, 1),
        };
        assert!(uplink_user_rate(&state, &eff, 1.0, 0).unwrap() < 1e-11);
        assert!(uplink_fronthaul_load(&state, &eff, 1.0, 0).unwrap() < 1e-11);
    }

    #[test]
    fn dimension_errors() {
        let eff = scalar_eff(&[&[cx(1.0, 0.0)]], Direction::Uplink);
        let state = UplinkState {
            power: vec![1.0, 1.0],
            quant: vec![scaled_identity(1, 1.0)],
            combiners: vec![CVec::zeros(1); 2],
            phases: PhaseProfile::zeros(1, 1, 1),
        };
        assert!(uplink_user_rate(&state, &eff, 1.0, 0).is_err());
    }
}
