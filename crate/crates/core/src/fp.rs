//! Fractional-programming and Fenchel surrogates, the closed-form MMSE
//! combiner, per-layer quadratic surrogates and the downlink phase gradient.
//!
//! Rate surrogate (tight at `τ = SINR`, `ω = b / D`):
//! `f̃ = log2(1+τ) − τ/ln2 + (1+τ)/ln2 · [2 Re{b̄ ω} − |ω|² D]`
//! where `b` is the desired amplitude and `D = |b|² + interference`.
//!
//! Load surrogate (tight at `Ξ = X`):
//! `g̃ = log2 det Ξ + tr(Ξ⁻¹ X)/ln2 − N/ln2 − log2 det Ω`.

use crate::channel::{ChannelRealization, EffectiveChannels};
use crate::error::{Error, Result};
use crate::linalg::{
    cx, inv_hpd, log2_det_hpd, quad_form, scaled_identity, solve_hpd, trace_product_re, CMat, CVec,
    Cx, LN2,
};
use crate::metrics::{
    downlink_beam_covariance, downlink_cross_gains, downlink_quant_noise, uplink_signal_covariance,
    DownlinkState, UplinkState,
};
use crate::sim::{partial_products, Direction, SimStack};

/// Auxiliary FP variables `τ_k`, `ω_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpAux {
    pub tau: Vec<f64>,
    pub omega: Vec<Cx>,
}

/// Scalar FP surrogate for amplitude `b` and total received power `d`.
pub fn fp_surrogate(tau: f64, omega: Cx, b: Cx, d: f64) -> f64 {
    (1.0 + tau).log2() - tau / LN2
        + (1.0 + tau) / LN2 * (2.0 * (b.conj() * omega).re - omega.norm_sqr() * d)
}

/// Optimal `(τ, ω)` for amplitude `b` and interference-plus-noise `q`.
pub fn fp_optimal(b: Cx, q: f64) -> (f64, Cx) {
    let s = b.norm_sqr();
    if s == 0.0 {
        return (0.0, cx(0.0, 0.0));
    }
    (s / q, b / (s + q))
}

/// Fenchel bound of `log2 det X − log2 det Ω` at anchor `Ξ`.
pub fn fenchel_bound(x: &CMat, omega: &CMat, xi: &CMat) -> Result<f64> {
    let n = x.nrows() as f64;
    let xi_inv = inv_hpd(xi)?;
    Ok(log2_det_hpd(xi)? + trace_product_re(&xi_inv, x) / LN2 - n / LN2 - log2_det_hpd(omega)?)
}

fn ul_amplitudes(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    k: usize,
) -> Result<(Cx, f64)> {
    let u = &state.combiners[k];
    let hk = eff.stacked(k);
    let b = u.dotc(&hk) * cx(state.power[k].sqrt(), 0.0);
    let (_, q) = crate::metrics::uplink_sinr_terms(state, eff, noise, k)?;
    Ok((b, q))
}

pub fn ul_optimal_aux(state: &UplinkState, eff: &EffectiveChannels, noise: f64) -> Result<FpAux> {
    let mut tau = Vec::new();
    let mut omega = Vec::new();
    for k in 0..state.power.len() {
        let (b, q) = ul_amplitudes(state, eff, noise, k)?;
        let (t, w) = fp_optimal(b, q);
        tau.push(t);
        omega.push(w);
    }
    Ok(FpAux { tau, omega })
}

/// Per-UE uplink rate surrogates.
pub fn ul_surrogate_rates(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    aux: &FpAux,
) -> Result<Vec<f64>> {
    (0..state.power.len())
        .map(|k| {
            let (b, q) = ul_amplitudes(state, eff, noise, k)?;
            Ok(fp_surrogate(aux.tau[k], aux.omega[k], b, b.norm_sqr() + q))
        })
        .collect()
}

/// Optimal Fenchel anchor `Ξ_i = Σ p h̃h̃ᴴ + σ²I + Ω_i`.
pub fn ul_optimal_xi(state: &UplinkState, eff: &EffectiveChannels, noise: f64, i: usize) -> CMat {
    uplink_signal_covariance(state, eff, noise, i) + &state.quant[i]
}

pub fn ul_surrogate_fronthaul(
    state: &UplinkState,
    eff: &EffectiveChannels,
    noise: f64,
    xi: &CMat,
    i: usize,
) -> Result<f64> {
    let x = ul_optimal_xi(state, eff, noise, i);
    fenchel_bound(&x, &state.quant[i], xi)
}

/// `u_k = p_k (Σ p h̃h̃ᴴ + σ²I + blkdiag Ω)⁻¹ h̃_k`.
pub fn mmse_combiners(
    power: &[f64],
    quant: &[CMat],
    eff: &EffectiveChannels,
    noise: f64,
) -> Result<Vec<CVec>> {
    let n = eff.rf_chains();
    let a = eff.num_aps();
    let dim = n * a;
    let mut c = scaled_identity(dim, noise);
    for (i, q) in quant.iter().enumerate() {
        let mut blk = c.view_mut((i * n, i * n), (n, n));
        blk += q;
    }
    let stacked: Vec<CVec> = (0..power.len()).map(|k| eff.stacked(k)).collect();
    for (h, &p) in stacked.iter().zip(power) {
        c += (h * h.adjoint()) * cx(p, 0.0);
    }
    stacked
        .iter()
        .zip(power)
        .map(|(h, &p)| Ok(solve_hpd(&c, h)? * cx(p, 0.0)))
        .collect()
}

fn dl_amplitudes(state: &DownlinkState, eff: &EffectiveChannels, noise: f64) -> Vec<(Cx, f64)> {
    let s = downlink_cross_gains(state, eff);
    (0..state.beams.len())
        .map(|k| {
            let mut q = noise + downlink_quant_noise(state, eff, k);
            for (kp, z) in s[k].iter().enumerate() {
                if kp != k {
                    q += z.norm_sqr();
                }
            }
            (s[k][k], q)
        })
        .collect()
}

pub fn dl_optimal_aux(state: &DownlinkState, eff: &EffectiveChannels, noise: f64) -> FpAux {
    let (tau, omega) = dl_amplitudes(state, eff, noise)
        .into_iter()
        .map(|(b, q)| fp_optimal(b, q))
        .unzip();
    FpAux { tau, omega }
}

pub fn dl_surrogate_rates(
    state: &DownlinkState,
    eff: &EffectiveChannels,
    noise: f64,
    aux: &FpAux,
) -> Vec<f64> {
    dl_amplitudes(state, eff, noise)
        .into_iter()
        .enumerate()
        .map(|(k, (b, q))| fp_surrogate(aux.tau[k], aux.omega[k], b, b.norm_sqr() + q))
        .collect()
}

/// `Ξ_i = Σ v vᴴ + Ω_i`.
pub fn dl_optimal_xi(state: &DownlinkState, i: usize) -> CMat {
    downlink_beam_covariance(state, i) + &state.quant[i]
}

pub fn dl_surrogate_fronthaul(state: &DownlinkState, xi: &CMat, i: usize) -> Result<f64> {
    fenchel_bound(&dl_optimal_xi(state, i), &state.quant[i], xi)
}

/// `c + 2 Re{bᴴφ} + φᴴ Q φ` in complex variables `φ`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub constant: f64,
    pub linear: CVec,
    pub quad: CMat,
}

impl QuadraticForm {
    pub fn zeros(dim: usize) -> Self {
        QuadraticForm {
            constant: 0.0,
            linear: CVec::zeros(dim),
            quad: CMat::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval(&self, phi: &CVec) -> f64 {
        self.constant + 2.0 * self.linear.dotc(phi).re + quad_form(&self.quad, phi)
    }

    /// Wirtinger gradient `∂/∂φ̄ = b + Qφ`; the real-pair gradient is twice this.
    pub fn conj_gradient(&self, phi: &CVec) -> CVec {
        &self.linear + &self.quad * phi
    }

    pub fn add_scaled(&mut self, other: &QuadraticForm, w: f64) {
        self.constant += w * other.constant;
        self.linear += &other.linear * cx(w, 0.0);
        self.quad += &other.quad * cx(w, 0.0);
    }
}

/// Uplink surrogates restricted to one layer, as quadratic forms in the
/// stacked diagonal `φ = [diag Φ_{1,l}; …; diag Φ_{K_A,l}]` (objective) or
/// in `diag Φ_{i,l}` (fronthaul and equal-rate floors).
#[derive(Debug, Clone)]
pub struct LayerSurrogates {
    pub layer: usize,
    pub objective: Vec<QuadraticForm>,
    pub fronthaul: Vec<QuadraticForm>,
    /// `floors[i][n]`: `C̃ (Σ_k p_k |h̃_{k,i,n}|² + σ²)` as a form in `φ_i`.
    pub floors: Vec<Vec<QuadraticForm>>,
}

/// Inputs for [`layer_surrogates`].
pub struct LayerInputs<'a> {
    pub channels: &'a ChannelRealization,
    pub stack: &'a SimStack,
    /// `coeffs[ap][layer][atom]`, possibly relaxed off the unit circle.
    pub coeffs: &'a [Vec<Vec<Cx>>],
    pub power: &'a [f64],
    pub quant: &'a [CMat],
    pub combiners: &'a [CVec],
    pub aux: &'a FpAux,
    pub xi: &'a [CMat],
    pub noise: f64,
    /// `C̃` for equal-rate floors; `None` skips them.
    pub equal_rate: Option<f64>,
}

pub fn layer_surrogates(inp: &LayerInputs<'_>, layer: usize) -> Result<LayerSurrogates> {
    let stack = inp.stack;
    let raw = inp.channels.get(Direction::Uplink);
    let k_n = inp.power.len();
    let a_n = inp.coeffs.len();
    let m = stack.atoms();
    let n = stack.rf_chains();
    if raw.len() != k_n
        || inp.combiners.len() != k_n
        || inp.quant.len() != a_n
        || inp.xi.len() != a_n
    {
        return Err(Error::Dimension("layer surrogate inputs disagree".into()));
    }
    // e[k][i] = N x M matrix E_{k,i} with h̃_{k,i} = E_{k,i} φ_i
    let mut e_mats: Vec<Vec<CMat>> = vec![Vec::with_capacity(a_n); k_n];
    for i in 0..a_n {
        let (a, b) = partial_products(stack, &inp.coeffs[i], layer, Direction::Uplink)?;
        let d = stack.coupling(Direction::Uplink) * a;
        for k in 0..k_n {
            let c = &b * &raw[k][i];
            let mut e = d.clone();
            for (j, z) in c.iter().enumerate() {
                for v in e.column_mut(j).iter_mut() {
                    *v *= z;
                }
            }
            e_mats[k].push(e);
        }
    }
    let dim = a_n * m;
    // eps[k][k'] = e_{k,k'} with a_{k,k'} = e_{k,k'}ᵀ φ
    let eps = |k: usize, kp: usize| -> CVec {
        let mut out = CVec::zeros(dim);
        for i in 0..a_n {
            let uk = inp.combiners[k].rows(i * n, n).map(|z| z.conj());
            let col = e_mats[kp][i].transpose() * uk;
            out.rows_mut(i * m, m).copy_from(&col);
        }
        out
    };
    let mut objective = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let tau = inp.aux.tau[k];
        let w = inp.aux.omega[k];
        let c = (1.0 + tau) / LN2;
        let mut f = QuadraticForm::zeros(dim);
        let ekk = eps(k, k);
        f.linear = ekk.map(|z| z.conj()) * (w * cx(c * inp.power[k].sqrt(), 0.0));
        for kp in 0..k_n {
            let e = if kp == k { ekk.clone() } else { eps(k, kp) };
            let ec = e.map(|z| z.conj());
            f.quad -= (&ec * e.transpose()) * cx(c * w.norm_sqr() * inp.power[kp], 0.0);
        }
        let u = &inp.combiners[k];
        let mut q = inp.noise * u.norm_squared();
        for i in 0..a_n {
            q += quad_form(&inp.quant[i], &u.rows(i * n, n).into_owned());
        }
        f.constant = (1.0 + tau).log2() - tau / LN2 - c * w.norm_sqr() * q;
        objective.push(f);
    }
    let mut fronthaul = Vec::with_capacity(a_n);
    let mut floors = Vec::with_capacity(a_n);
    for i in 0..a_n {
        let xi_inv = inv_hpd(&inp.xi[i])?;
        let mut g = QuadraticForm::zeros(m);
        for k in 0..k_n {
            let e = &e_mats[k][i];
            g.quad += (e.adjoint() * &xi_inv * e) * cx(inp.power[k] / LN2, 0.0);
        }
        let base = scaled_identity(n, inp.noise) + &inp.quant[i];
        g.constant = log2_det_hpd(&inp.xi[i])? - n as f64 / LN2 - log2_det_hpd(&inp.quant[i])?
            + trace_product_re(&xi_inv, &base) / LN2;
        fronthaul.push(g);
        let mut per_n = Vec::new();
        if let Some(ct) = inp.equal_rate {
            for r in 0..n {
                let mut fl = QuadraticForm::zeros(m);
                fl.constant = ct * inp.noise;
                for k in 0..k_n {
                    let row = e_mats[k][i].row(r).transpose();
                    let rc = row.map(|z| z.conj());
                    fl.quad += (&rc * row.transpose()) * cx(ct * inp.power[k], 0.0);
                }
                per_n.push(fl);
            }
        }
        floors.push(per_n);
    }
    Ok(LayerSurrogates {
        layer,
        objective,
        fronthaul,
        floors,
    })
}

/// Stacks `coeffs[·][layer-1]` into one vector.
pub fn stack_layer(coeffs: &[Vec<Vec<Cx>>], layer: usize) -> CVec {
    let m = coeffs[0][layer - 1].len();
    let mut out = CVec::zeros(coeffs.len() * m);
    for (i, c) in coeffs.iter().enumerate() {
        for (j, z) in c[layer - 1].iter().enumerate() {
            out[i * m + j] = *z;
        }
    }
    out
}

/// Gradient of the exact downlink weighted sum-rate w.r.t. every phase,
/// indexed `[ap][layer][atom]`.
pub fn dl_phase_gradient(
    state: &DownlinkState,
    channels: &ChannelRealization,
    stack: &SimStack,
    noise: f64,
    weights: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let dir = Direction::Downlink;
    let raw = channels.get(dir);
    let k_n = state.beams.len();
    let a_n = state.quant.len();
    let m = stack.atoms();
    let l_n = stack.layers();
    let eff = crate::channel::effective_channels(channels, stack, &state.phases, dir)?;
    let s = downlink_cross_gains(state, &eff);
    let mut delta = vec![0.0; k_n];
    let mut gamma = vec![0.0; k_n];
    for k in 0..k_n {
        let mut q = noise + downlink_quant_noise(state, &eff, k);
        for (kp, z) in s[k].iter().enumerate() {
            if kp != k {
                q += z.norm_sqr();
            }
        }
        let sig = s[k][k].norm_sqr();
        delta[k] = 1.0 / (sig + q);
        gamma[k] = sig / q;
    }
    let t = stack.coupling(dir);
    let mut grad = vec![vec![vec![0.0; m]; l_n]; a_n];
    for i in 0..a_n {
        let coeffs = state.phases.coefficients(i);
        let tv: Vec<CVec> = (0..k_n).map(|kp| t * &state.beams[kp][i]).collect();
        let tqh: Vec<CVec> = (0..k_n)
            .map(|k| t * (&state.quant[i] * &eff.vectors[k][i]))
            .collect();
        for l in 1..=l_n {
            let (a, b) = partial_products(stack, &coeffs, l, dir)?;
            // hb[k][m] = (h_{k,i}ᴴ B)_m
            let hb: Vec<CVec> = (0..k_n)
                .map(|k| (b.adjoint() * &raw[k][i]).map(|z| z.conj()))
                .collect();
            let atv: Vec<CVec> = tv.iter().map(|v| &a * v).collect();
            let atq: Vec<CVec> = tqh.iter().map(|v| &a * v).collect();
            for mm in 0..m {
                let jphi = cx(0.0, 1.0) * coeffs[l - 1][mm];
                let mut acc = 0.0;
                for k in 0..k_n {
                    let base = jphi * hb[k][mm];
                    let eta = |kp: usize| (s[k][kp].conj() * base * atv[kp][mm]).re;
                    let zeta = (base * atq[k][mm]).re;
                    let mut cross = zeta;
                    for kp in 0..k_n {
                        if kp != k {
                            cross += eta(kp);
                        }
                    }
                    acc += weights[k] * delta[k] * (eta(k) - gamma[k] * cross);
                }
                grad[i][l - 1][mm] = 2.0 * acc / LN2;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn scalar_fp_is_tight() {
        let b = cx(0.3, -1.2);
        let q = 0.7;
        let (t, w) = fp_optimal(b, q);
        let exact = (1.0 + b.norm_sqr() / q).log2();
        assert!((fp_surrogate(t, w, b, b.norm_sqr() + q) - exact).abs() < 1e-12);
        for dt in [-0.1, 0.2, 1.0] {
            let v = fp_surrogate(t + dt, w * cx(1.1, 0.1), b, b.norm_sqr() + q);
            assert!(v <= exact + 1e-12);
        }
    }

    #[test]
    fn fenchel_reference_value() {
        // p = 0, Ω = σ²I, Ξ = 2σ²I: X = 2σ²I so the bound equals N·log2(2)
        let n = 3;
        let s2 = 0.7;
        let x = scaled_identity(n, 2.0 * s2);
        let om = scaled_identity(n, s2);
        let xi = scaled_identity(n, 2.0 * s2);
        assert!((fenchel_bound(&x, &om, &xi).unwrap() - n as f64).abs() < 1e-12);
    }

    #[test]
    fn fenchel_is_upper_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let n = 3;
        let rnd = |rng: &mut ChaCha20Rng| {
            let a = CMat::from_fn(n, n, |_, _| {
                cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            &a * a.adjoint() + scaled_identity(n, 0.05)
        };
        let om = rnd(&mut rng);
        let x = rnd(&mut rng) + &om;
        let exact = log2_det_hpd(&x).unwrap() - log2_det_hpd(&om).unwrap();
        assert!((fenchel_bound(&x, &om, &x).unwrap() - exact).abs() < 1e-10);
        for _ in 0..50 {
            let xi = rnd(&mut rng);
            assert!(fenchel_bound(&x, &om, &xi).unwrap() >= exact - 1e-10);
        }
    }

    #[test]
    fn quadratic_form_gradient_matches_fd() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let d = 4;
        let mut f = QuadraticForm::zeros(d);
        f.constant = 0.3;
        f.linear = CVec::from_fn(d, |_, _| cx(rng.random(), rng.random()));
        let a = CMat::from_fn(d, d, |_, _| cx(rng.random(), rng.random()));
        f.quad = -(&a * a.adjoint());
        let phi = CVec::from_fn(d, |_, _| cx(rng.random(), rng.random()));
        let g = f.conj_gradient(&phi) * cx(2.0, 0.0);
        let h = 1e-6;
        for j in 0..d {
            let mut p = phi.clone();
            p[j] += cx(h, 0.0);
            let mut q = phi.clone();
            q[j] -= cx(h, 0.0);
            let fd_re = (f.eval(&p) - f.eval(&q)) / (2.0 * h);
            let mut p = phi.clone();
            p[j] += cx(0.0, h);
            let mut q = phi.clone();
            q[j] -= cx(0.0, h);
            let fd_im = (f.eval(&p) - f.eval(&q)) / (2.0 * h);
            assert!((fd_re - g[j].re).abs() < 1e-5 * (1.0 + g[j].norm()));
            assert!((fd_im - g[j].im).abs() < 1e-5 * (1.0 + g[j].norm()));
        }
    }

    #[test]
    fn layer_forms_match_surrogates() {
        use crate::channel::{draw_realization, effective_channels_with};
        use crate::config::SystemConfig;
        use crate::metrics::UplinkState;
        use crate::sim::build_stack;

        let config = SystemConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let (_, ch) = draw_realization(&config, &mut rng).unwrap();
        let stack = build_stack(&config.geometry().unwrap(), config.num_aps, 3).unwrap();
        let n = stack.rf_chains();
        let m = stack.atoms();
        let dim = n * config.num_aps;
        let mut phases = stack.initial_phases(Direction::Uplink).clone();
        for layer in phases.angles.iter_mut().flatten() {
            for a in layer.iter_mut() {
                *a = rng.random::<f64>() * 6.0;
            }
        }
        let mut coeffs: Vec<Vec<Vec<Cx>>> =
            (0..phases.aps()).map(|i| phases.coefficients(i)).collect();
        let eff = effective_channels_with(&ch, &stack, &coeffs, Direction::Uplink).unwrap();
        let rnd_hpd = |rng: &mut ChaCha20Rng| {
            let a = CMat::from_fn(n, n, |_, _| {
                cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            &a * a.adjoint() * cx(config.noise_ul, 0.0) + scaled_identity(n, config.noise_ul)
        };
        let state = UplinkState {
            power: (0..config.num_ues)
                .map(|_| config.ue_power * rng.random::<f64>())
                .collect(),
            quant: (0..config.num_aps).map(|_| rnd_hpd(&mut rng)).collect(),
            combiners: (0..config.num_ues)
                .map(|_| CVec::from_fn(dim, |_, _| cx(rng.random(), rng.random::<f64>() - 0.5)))
                .collect(),
            phases,
        };
        let aux = ul_optimal_aux(&state, &eff, config.noise_ul).unwrap();
        let xi: Vec<CMat> = (0..config.num_aps)
            .map(|i| ul_optimal_xi(&state, &eff, config.noise_ul, i) + rnd_hpd(&mut rng))
            .collect();
        for l in 1..=stack.layers() {
            let inputs = LayerInputs {
                channels: &ch,
                stack: &stack,
                coeffs: &coeffs,
                power: &state.power,
                quant: &state.quant,
                combiners: &state.combiners,
                aux: &aux,
                xi: &xi,
                noise: config.noise_ul,
                equal_rate: Some(0.3),
            };
            let forms = layer_surrogates(&inputs, l).unwrap();
            for ap in coeffs.iter_mut() {
                for z in ap[l - 1].iter_mut() {
                    *z = cx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                }
            }
            let phi = stack_layer(&coeffs, l);
            let eff = effective_channels_with(&ch, &stack, &coeffs, Direction::Uplink).unwrap();
            let want = ul_surrogate_rates(&state, &eff, config.noise_ul, &aux).unwrap();
            for (f, w) in forms.objective.iter().zip(&want) {
                assert!((f.eval(&phi) - w).abs() < 1e-10 * (1.0 + w.abs()));
            }
            for i in 0..config.num_aps {
                let phi_i = phi.rows(i * m, m).into_owned();
                let want =
                    ul_surrogate_fronthaul(&state, &eff, config.noise_ul, &xi[i], i).unwrap();
                let got = forms.fronthaul[i].eval(&phi_i);
                assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()));
                let s = uplink_signal_covariance(&state, &eff, config.noise_ul, i);
                for r in 0..n {
                    let want = 0.3 * s[(r, r)].re;
                    let got = forms.floors[i][r].eval(&phi_i);
                    assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()));
                }
            }
        }
    }
}
