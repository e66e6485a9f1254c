//! Packing of the concave subproblems into flat real vectors.
//!
//! Uplink digital variables are `q_k = √p_k` followed by the quantisation
//! blocks, which keeps the surrogate objective a concave quadratic.

use crate::channel::EffectiveChannels;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fp::{FpAux, LayerSurrogates, QuadraticForm};
use crate::linalg::{
    cx, hunvec, hvec, hvec_len, inv_hpd, log2_det_hpd, quad_form, trace_re, CMat, CVec, Cx, LN2,
};
use crate::metrics::{DownlinkState, UplinkState};
use crate::solver::{ConcaveProgram, Disk, PsdBlock};

/// How the quantisation covariances are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compression {
    /// Full Hermitian `Ω_i` under the exact log-det fronthaul constraint.
    Optimized,
    /// Diagonal `Ω_i` with every element allotted `C_F / N` bits.
    EqualRate,
}

impl Compression {
    pub fn as_str(self) -> &'static str {
        match self {
            Compression::Optimized => "optimized",
            Compression::EqualRate => "equal_rate",
        }
    }
}

/// `C̃ = 1 / (2^{C_F/N} − 1)`.
pub fn equal_rate_factor(fronthaul: f64, rf_chains: usize) -> f64 {
    1.0 / ((fronthaul / rf_chains as f64).exp2() - 1.0)
}

/// Eigenvalue floor of `Ω_i` relative to the reference power.
pub const QUANT_FLOOR: f64 = 1e-10;

fn quant_len(n: usize, c: Compression) -> usize {
    match c {
        Compression::Optimized => hvec_len(n),
        Compression::EqualRate => n,
    }
}

fn write_quant(q: &CMat, c: Compression, out: &mut [f64]) {
    match c {
        Compression::Optimized => hvec(q, out),
        Compression::EqualRate => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = q[(j, j)].re;
            }
        }
    }
}

fn read_quant(x: &[f64], n: usize, c: Compression) -> CMat {
    match c {
        Compression::Optimized => hunvec(x, n),
        Compression::EqualRate => {
            let mut m = CMat::zeros(n, n);
            for j in 0..n {
                m[(j, j)] = cx(x[j], 0.0);
            }
            m
        }
    }
}

/// Packed layout of the quantisation blocks.
#[derive(Debug, Clone, Copy)]
pub struct QuantLayout {
    pub offset: usize,
    pub rf_chains: usize,
    pub aps: usize,
    pub compression: Compression,
}

impl QuantLayout {
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        let len = quant_len(self.rf_chains, self.compression);
        let s = self.offset + i * len;
        s..s + len
    }

    pub fn end(&self) -> usize {
        self.offset + self.aps * quant_len(self.rf_chains, self.compression)
    }

    pub fn read(&self, x: &[f64], i: usize) -> CMat {
        read_quant(&x[self.block(i)], self.rf_chains, self.compression)
    }

    fn write(&self, q: &CMat, i: usize, x: &mut [f64]) {
        let r = self.block(i);
        write_quant(q, self.compression, &mut x[r]);
    }

    /// Gradient of `tr(Ω_i Y)` w.r.t. the packed block.
    fn trace_grad(&self, y: &CMat, out: &mut [f64]) {
        write_quant(y, self.compression, out);
    }

    fn attach(&self, prog: &mut ConcaveProgram<'_>, floor: f64) {
        for i in 0..self.aps {
            match self.compression {
                Compression::Optimized => prog.psd.push(PsdBlock {
                    offset: self.block(i).start,
                    dim: self.rf_chains,
                    floor,
                }),
                Compression::EqualRate => {
                    for j in self.block(i) {
                        prog.lower[j] = floor;
                    }
                }
            }
        }
    }
}

/// `-log2 det Ω` with its gradient, `+∞` if `Ω` is not positive definite.
fn neg_logdet(layout: &QuantLayout, x: &[f64], i: usize, grad: Option<&mut [f64]>) -> f64 {
    let om = layout.read(x, i);
    match layout.compression {
        Compression::EqualRate => {
            let mut v = 0.0;
            for j in 0..layout.rf_chains {
                let d = om[(j, j)].re;
                if !(d > 0.0) {
                    return f64::INFINITY;
                }
                v -= d.log2();
            }
            if let Some(g) = grad {
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj = -1.0 / (om[(j, j)].re * LN2);
                }
            }
            v
        }
        Compression::Optimized => match grad {
            Some(g) => match crate::linalg::log2_det_and_inv_hpd(&om) {
                Ok((ld, inv)) => {
                    hvec(&(inv * cx(-1.0 / LN2, 0.0)), g);
                    -ld
                }
                Err(_) => f64::INFINITY,
            },
            None => log2_det_hpd(&om).map_or(f64::INFINITY, |ld| -ld),
        },
    }
}

/// Uplink `(p, Ω)` subproblem.
pub struct UplinkDigital {
    pub program: ConcaveProgram<'static>,
    pub layout: QuantLayout,
    pub users: usize,
    pub max_power: f64,
}

/// Builds the uplink digital subproblem at fixed combiners, phases and
/// auxiliary variables `(τ, ω, Ξ)`.
pub fn pack_uplink_digital(
    state: &UplinkState,
    eff: &EffectiveChannels,
    aux: &FpAux,
    xi: &[CMat],
    config: &SystemConfig,
    compression: Compression,
) -> Result<UplinkDigital> {
    let k_n = state.power.len();
    let a_n = eff.num_aps();
    let n = eff.rf_chains();
    let w = &config.weights_ul;
    let noise = config.noise_ul;
    if aux.tau.len() != k_n || w.len() != k_n || xi.len() != a_n {
        return Err(Error::Dimension(
            "uplink digital packing inputs disagree".into(),
        ));
    }
    let hs: Vec<CVec> = (0..k_n).map(|k| eff.stacked(k)).collect();
    let mut constant = 0.0;
    let mut lin = vec![0.0; k_n];
    let mut quad = vec![0.0; k_n];
    let mut x_mats = vec![CMat::zeros(n, n); a_n];
    for k in 0..k_n {
        let tau = aux.tau[k];
        let om = aux.omega[k];
        let c = w[k] * (1.0 + tau) / LN2;
        let u = &state.combiners[k];
        constant +=
            w[k] * ((1.0 + tau).log2() - tau / LN2) - c * om.norm_sqr() * noise * u.norm_squared();
        lin[k] += 2.0 * c * (u.dotc(&hs[k]).conj() * om).re;
        for kp in 0..k_n {
            quad[kp] += c * om.norm_sqr() * u.dotc(&hs[kp]).norm_sqr();
        }
        for i in 0..a_n {
            let ui = u.rows(i * n, n);
            x_mats[i] += (&ui * ui.adjoint()) * cx(c * om.norm_sqr(), 0.0);
        }
    }
    let layout = QuantLayout {
        offset: k_n,
        rf_chains: n,
        aps: a_n,
        compression,
    };
    let dim = layout.end();
    let mut x0 = vec![0.0; dim];
    let qmax = config.ue_power.sqrt();
    for k in 0..k_n {
        x0[k] = state.power[k].max(0.0).sqrt().min(qmax);
    }
    for i in 0..a_n {
        layout.write(&state.quant[i], i, &mut x0);
    }
    let obj_x = x_mats.clone();
    let objective = Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
        let mut f = constant;
        for k in 0..k_n {
            f += lin[k] * x[k] - quad[k] * x[k] * x[k];
        }
        for i in 0..a_n {
            let om = layout.read(x, i);
            f -= crate::linalg::trace_product_re(&om, &obj_x[i]);
        }
        if let Some(g) = g {
            for k in 0..k_n {
                g[k] = lin[k] - 2.0 * quad[k] * x[k];
            }
            for i in 0..a_n {
                let r = layout.block(i);
                layout.trace_grad(&(-&obj_x[i]), &mut g[r]);
            }
        }
        f
    });
    let mut prog = ConcaveProgram::new(x0, objective);
    for k in 0..k_n {
        prog.lower[k] = 0.0;
        prog.upper[k] = qmax;
    }
    layout.attach(&mut prog, QUANT_FLOOR * noise);
    let cf = config.fronthaul;
    match compression {
        Compression::Optimized => {
            for i in 0..a_n {
                let xi_inv = inv_hpd(&xi[i])?;
                let r: Vec<f64> = (0..k_n)
                    .map(|k| quad_form(&xi_inv, &eff.vectors[k][i]) / LN2)
                    .collect();
                let base = log2_det_hpd(&xi[i])? - n as f64 / LN2 + noise * trace_re(&xi_inv) / LN2;
                let xi_scaled = xi_inv * cx(1.0 / LN2, 0.0);
                prog.constraints.push(crate::solver::Constraint {
                    name: format!("fronthaul[{i}]"),
                    eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                        let om = layout.read(x, i);
                        let mut v = base - cf + crate::linalg::trace_product_re(&xi_scaled, &om);
                        for k in 0..k_n {
                            v += r[k] * x[k] * x[k];
                        }
                        let rng = layout.block(i);
                        match g {
                            Some(g) => {
                                g.fill(0.0);
                                let nl = neg_logdet(&layout, x, i, Some(&mut g[rng.clone()]));
                                if !nl.is_finite() {
                                    return f64::INFINITY;
                                }
                                v += nl;
                                let mut tmp = vec![0.0; rng.len()];
                                layout.trace_grad(&xi_scaled, &mut tmp);
                                for (a, b) in g[rng].iter_mut().zip(&tmp) {
                                    *a += b;
                                }
                                for k in 0..k_n {
                                    g[k] = 2.0 * r[k] * x[k];
                                }
                            }
                            None => v += neg_logdet(&layout, x, i, None),
                        }
                        v
                    }),
                });
            }
        }
        Compression::EqualRate => {
            let ct = equal_rate_factor(cf, n);
            for i in 0..a_n {
                for j in 0..n {
                    let h2: Vec<f64> = (0..k_n).map(|k| eff.vectors[k][i][j].norm_sqr()).collect();
                    let col = layout.block(i).start + j;
                    prog.constraints.push(crate::solver::Constraint {
                        name: format!("floor[{i},{j}]"),
                        eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                            let mut s = noise;
                            for k in 0..k_n {
                                s += x[k] * x[k] * h2[k];
                            }
                            if let Some(g) = g {
                                g.fill(0.0);
                                for k in 0..k_n {
                                    g[k] = 2.0 * ct * x[k] * h2[k];
                                }
                                g[col] = -1.0;
                            }
                            ct * s - x[col]
                        }),
                    });
                }
            }
        }
    }
    Ok(UplinkDigital {
        program: prog,
        layout,
        users: k_n,
        max_power: config.ue_power,
    })
}

impl UplinkDigital {
    /// Writes `(p, Ω)` from a solution vector into `state`.
    pub fn unpack(&self, x: &[f64], state: &mut UplinkState) {
        for k in 0..self.users {
            state.power[k] = (x[k] * x[k]).min(self.max_power);
        }
        for i in 0..self.layout.aps {
            state.quant[i] = self.layout.read(x, i);
        }
    }
}

/// Downlink `(v, Ω)` subproblem.
pub struct DownlinkDigital {
    pub program: ConcaveProgram<'static>,
    pub layout: QuantLayout,
    pub users: usize,
    pub aps: usize,
    pub rf_chains: usize,
}

fn beam_index(k: usize, i: usize, j: usize, a_n: usize, n: usize) -> usize {
    2 * ((k * a_n + i) * n + j)
}

pub fn pack_downlink_digital(
    state: &DownlinkState,
    eff: &EffectiveChannels,
    aux: &FpAux,
    xi: &[CMat],
    config: &SystemConfig,
    compression: Compression,
    nonnegative: bool,
) -> Result<DownlinkDigital> {
    let k_n = state.beams.len();
    let a_n = eff.num_aps();
    let n = eff.rf_chains();
    let w = &config.weights_dl;
    let noise = config.noise_dl;
    if aux.tau.len() != k_n || w.len() != k_n || xi.len() != a_n {
        return Err(Error::Dimension(
            "downlink digital packing inputs disagree".into(),
        ));
    }
    let na = n * a_n;
    let mut constant = 0.0;
    let mut b: Vec<CVec> = Vec::with_capacity(k_n);
    let mut q = CMat::zeros(na, na);
    // Q = Σ_j c_j h_j h_jᴴ, applied through its factors
    let mut factors: Vec<(CVec, f64)> = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let tau = aux.tau[k];
        let om = aux.omega[k];
        let c = w[k] * (1.0 + tau) / LN2;
        constant += w[k] * ((1.0 + tau).log2() - tau / LN2) - c * om.norm_sqr() * noise;
        let h = eff.stacked(k);
        b.push(&h * (om * cx(c, 0.0)));
        q += (&h * h.adjoint()) * cx(c * om.norm_sqr(), 0.0);
        factors.push((h, c * om.norm_sqr()));
    }
    let q_blocks: Vec<CMat> = (0..a_n)
        .map(|i| q.view((i * n, i * n), (n, n)).into_owned())
        .collect();
    let layout = QuantLayout {
        offset: 2 * k_n * na,
        rf_chains: n,
        aps: a_n,
        compression,
    };
    let dim = layout.end();
    let mut x0 = vec![0.0; dim];
    for k in 0..k_n {
        for i in 0..a_n {
            for j in 0..n {
                let z = state.beams[k][i][j];
                let id = beam_index(k, i, j, a_n, n);
                x0[id] = z.re;
                x0[id + 1] = z.im;
            }
        }
    }
    for i in 0..a_n {
        layout.write(&state.quant[i], i, &mut x0);
    }
    let read_beam = move |x: &[f64], k: usize| -> CVec {
        CVec::from_fn(na, |r, _| {
            let id = 2 * (k * na + r);
            cx(x[id], x[id + 1])
        })
    };
    let objective = Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
        let mut f = constant;
        let mut gv: Vec<CVec> = Vec::new();
        for k in 0..k_n {
            let v = read_beam(x, k);
            let mut qv = CVec::zeros(na);
            for (h, c) in &factors {
                qv.axpy(h.dotc(&v) * cx(*c, 0.0), h, cx(1.0, 0.0));
            }
            f += 2.0 * v.dotc(&b[k]).re - v.dotc(&qv).re;
            if g.is_some() {
                gv.push((&b[k] - qv) * cx(2.0, 0.0));
            }
        }
        for i in 0..a_n {
            f -= crate::linalg::trace_product_re(&layout.read(x, i), &q_blocks[i]);
        }
        if let Some(g) = g {
            for (k, gk) in gv.iter().enumerate() {
                for r in 0..na {
                    g[2 * (k * na + r)] = gk[r].re;
                    g[2 * (k * na + r) + 1] = gk[r].im;
                }
            }
            for i in 0..a_n {
                let r = layout.block(i);
                layout.trace_grad(&(-&q_blocks[i]), &mut g[r]);
            }
        }
        f
    });
    let mut prog = ConcaveProgram::new(x0, objective);
    if nonnegative {
        for k in 0..k_n {
            for i in 0..a_n {
                for j in 0..n {
                    let id = beam_index(k, i, j, a_n, n);
                    prog.lower[id] = 0.0;
                    prog.upper[id + 1] = 0.0;
                    prog.lower[id + 1] = 0.0;
                }
            }
        }
    }
    layout.attach(&mut prog, QUANT_FLOOR * config.ap_power);
    let pa = config.ap_power;
    let cf = config.fronthaul;
    for i in 0..a_n {
        let eye = CMat::identity(n, n);
        prog.constraints.push(crate::solver::Constraint {
            name: format!("power[{i}]"),
            eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                let mut v = -pa;
                for k in 0..k_n {
                    for j in 0..n {
                        let id = beam_index(k, i, j, a_n, n);
                        v += x[id] * x[id] + x[id + 1] * x[id + 1];
                    }
                }
                let om = layout.read(x, i);
                v += trace_re(&om);
                if let Some(g) = g {
                    g.fill(0.0);
                    for k in 0..k_n {
                        for j in 0..n {
                            let id = beam_index(k, i, j, a_n, n);
                            g[id] = 2.0 * x[id];
                            g[id + 1] = 2.0 * x[id + 1];
                        }
                    }
                    layout.trace_grad(&eye, &mut g[layout.block(i)]);
                }
                v
            }),
        });
    }
    match compression {
        Compression::Optimized => {
            for i in 0..a_n {
                let xi_inv = inv_hpd(&xi[i])? * cx(1.0 / LN2, 0.0);
                let base = log2_det_hpd(&xi[i])? - n as f64 / LN2 - cf;
                prog.constraints.push(crate::solver::Constraint {
                    name: format!("fronthaul[{i}]"),
                    eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                        let om = layout.read(x, i);
                        let mut v = base + crate::linalg::trace_product_re(&xi_inv, &om);
                        let beams: Vec<CVec> = (0..k_n)
                            .map(|k| {
                                CVec::from_fn(n, |j, _| {
                                    let id = beam_index(k, i, j, a_n, n);
                                    cx(x[id], x[id + 1])
                                })
                            })
                            .collect();
                        for bv in &beams {
                            v += quad_form(&xi_inv, bv);
                        }
                        match g {
                            Some(g) => {
                                g.fill(0.0);
                                let rng = layout.block(i);
                                let nl = neg_logdet(&layout, x, i, Some(&mut g[rng.clone()]));
                                if !nl.is_finite() {
                                    return f64::INFINITY;
                                }
                                v += nl;
                                let mut tmp = vec![0.0; rng.len()];
                                layout.trace_grad(&xi_inv, &mut tmp);
                                for (a, t) in g[rng].iter_mut().zip(&tmp) {
                                    *a += t;
                                }
                                for (k, bv) in beams.iter().enumerate() {
                                    let gb = &xi_inv * bv;
                                    for j in 0..n {
                                        let id = beam_index(k, i, j, a_n, n);
                                        g[id] = 2.0 * gb[j].re;
                                        g[id + 1] = 2.0 * gb[j].im;
                                    }
                                }
                            }
                            None => v += neg_logdet(&layout, x, i, None),
                        }
                        v
                    }),
                });
            }
        }
        Compression::EqualRate => {
            let ct = equal_rate_factor(cf, n);
            for i in 0..a_n {
                for j in 0..n {
                    let col = layout.block(i).start + j;
                    prog.constraints.push(crate::solver::Constraint {
                        name: format!("floor[{i},{j}]"),
                        eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                            let mut s = 0.0;
                            for k in 0..k_n {
                                let id = beam_index(k, i, j, a_n, n);
                                s += x[id] * x[id] + x[id + 1] * x[id + 1];
                            }
                            if let Some(g) = g {
                                g.fill(0.0);
                                for k in 0..k_n {
                                    let id = beam_index(k, i, j, a_n, n);
                                    g[id] = 2.0 * ct * x[id];
                                    g[id + 1] = 2.0 * ct * x[id + 1];
                                }
                                g[col] = -1.0;
                            }
                            ct * s - x[col]
                        }),
                    });
                }
            }
        }
    }
    Ok(DownlinkDigital {
        program: prog,
        layout,
        users: k_n,
        aps: a_n,
        rf_chains: n,
    })
}

impl DownlinkDigital {
    pub fn unpack(&self, x: &[f64], state: &mut DownlinkState) {
        for k in 0..self.users {
            for i in 0..self.aps {
                for j in 0..self.rf_chains {
                    let id = beam_index(k, i, j, self.aps, self.rf_chains);
                    state.beams[k][i][j] = cx(x[id], x[id + 1]);
                }
            }
        }
        for i in 0..self.aps {
            state.quant[i] = self.layout.read(x, i);
        }
    }
}

/// Uplink per-layer wave subproblem over `φ` (all APs), with the disk
/// relaxation `|φ| <= 1` and the penalty `−ξ ||φ − ψ||²`.
pub struct WaveLayer {
    pub program: ConcaveProgram<'static>,
    pub aps: usize,
    pub atoms: usize,
}

pub struct WaveLayerInputs<'a> {
    pub surrogates: &'a LayerSurrogates,
    pub weights: &'a [f64],
    pub current: &'a CVec,
    pub anchor: &'a CVec,
    pub penalty: f64,
    pub fronthaul: f64,
    pub compression: Compression,
    /// Current diagonal `Ω_i` (equal-rate floors compare against it).
    pub quant: &'a [CMat],
}

pub fn pack_wave_layer(inp: &WaveLayerInputs<'_>) -> Result<WaveLayer> {
    let s = inp.surrogates;
    let dim = inp.current.len();
    let a_n = s.fronthaul.len();
    if a_n == 0 || dim % a_n != 0 || s.objective.len() != inp.weights.len() {
        return Err(Error::Dimension("wave layer inputs disagree".into()));
    }
    let m = dim / a_n;
    let mut f = QuadraticForm::zeros(dim);
    for (form, &w) in s.objective.iter().zip(inp.weights) {
        f.add_scaled(form, w);
    }
    let xi = inp.penalty;
    for j in 0..dim {
        f.quad[(j, j)] -= cx(xi, 0.0);
    }
    f.linear += inp.anchor * cx(xi, 0.0);
    f.constant -= xi * inp.anchor.norm_squared();
    let read = move |x: &[f64], off: usize, len: usize| -> CVec {
        CVec::from_fn(len, |r, _| cx(x[2 * (off + r)], x[2 * (off + r) + 1]))
    };
    let mut x0 = vec![0.0; 2 * dim];
    for j in 0..dim {
        x0[2 * j] = inp.current[j].re;
        x0[2 * j + 1] = inp.current[j].im;
    }
    let write_grad = |g: &mut [f64], off: usize, w: &CVec| {
        for (r, z) in w.iter().enumerate() {
            g[2 * (off + r)] = 2.0 * z.re;
            g[2 * (off + r) + 1] = 2.0 * z.im;
        }
    };
    let objective = Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
        let phi = read(x, 0, dim);
        if let Some(g) = g {
            write_grad(g, 0, &f.conj_gradient(&phi));
        }
        f.eval(&phi)
    });
    let mut prog = ConcaveProgram::new(x0, objective);
    for j in 0..dim {
        prog.disks.push(Disk {
            re: 2 * j,
            im: 2 * j + 1,
            radius: 1.0,
        });
    }
    match inp.compression {
        Compression::Optimized => {
            for (i, form) in s.fronthaul.iter().enumerate() {
                let form = form.clone();
                let cf = inp.fronthaul;
                prog.constraints.push(crate::solver::Constraint {
                    name: format!("fronthaul[{i}]"),
                    eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                        let phi = read(x, i * m, m);
                        if let Some(g) = g {
                            g.fill(0.0);
                            write_grad(g, i * m, &form.conj_gradient(&phi));
                        }
                        form.eval(&phi) - cf
                    }),
                });
            }
        }
        Compression::EqualRate => {
            for (i, per_n) in s.floors.iter().enumerate() {
                if per_n.is_empty() {
                    return Err(Error::Dimension("equal-rate floors were not built".into()));
                }
                for (j, form) in per_n.iter().enumerate() {
                    let form = form.clone();
                    let nu = inp.quant[i][(j, j)].re;
                    prog.constraints.push(crate::solver::Constraint {
                        name: format!("floor[{i},{j}]"),
                        eval: Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
                            let phi = read(x, i * m, m);
                            if let Some(g) = g {
                                g.fill(0.0);
                                write_grad(g, i * m, &form.conj_gradient(&phi));
                            }
                            form.eval(&phi) - nu
                        }),
                    });
                }
            }
        }
    }
    Ok(WaveLayer {
        program: prog,
        aps: a_n,
        atoms: m,
    })
}

impl WaveLayer {
    /// Per-AP coefficients of the layer from a solution vector.
    pub fn unpack(&self, x: &[f64]) -> Vec<Vec<Cx>> {
        (0..self.aps)
            .map(|i| {
                (0..self.atoms)
                    .map(|j| cx(x[2 * (i * self.atoms + j)], x[2 * (i * self.atoms + j) + 1]))
                    .collect()
            })
            .collect()
    }
}

/// Uplink combiner subproblem with `u_k ∈ R₊^{N K_A}` (wave-only scheme).
pub struct NonnegCombiners {
    pub program: ConcaveProgram<'static>,
    pub users: usize,
    pub len: usize,
}

pub fn pack_nonneg_combiners(
    state: &UplinkState,
    eff: &EffectiveChannels,
    aux: &FpAux,
    config: &SystemConfig,
) -> Result<NonnegCombiners> {
    let k_n = state.power.len();
    let n = eff.rf_chains();
    let a_n = eff.num_aps();
    let na = n * a_n;
    let mut c = crate::linalg::scaled_identity(na, config.noise_ul);
    for (i, q) in state.quant.iter().enumerate() {
        let mut blk = c.view_mut((i * n, i * n), (n, n));
        blk += q;
    }
    let hs: Vec<CVec> = (0..k_n).map(|k| eff.stacked(k)).collect();
    for (h, &p) in hs.iter().zip(&state.power) {
        c += (h * h.adjoint()) * cx(p, 0.0);
    }
    let c_re = c.map(|z| z.re);
    let mut lin = Vec::with_capacity(k_n);
    let mut scale = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let wk = config.weights_ul[k] * (1.0 + aux.tau[k]) / LN2;
        let om = aux.omega[k];
        let sp = state.power[k].sqrt();
        lin.push(nalgebra::DVector::from_fn(na, |j, _| {
            2.0 * wk * sp * (om * hs[k][j].conj()).re
        }));
        scale.push(wk * om.norm_sqr());
    }
    let mut x0 = vec![0.0; k_n * na];
    for k in 0..k_n {
        for j in 0..na {
            x0[k * na + j] = state.combiners[k][j].re.max(0.0);
        }
    }
    let objective = Box::new(move |x: &[f64], g: Option<&mut [f64]>| {
        let mut f = 0.0;
        let mut g = g;
        for k in 0..k_n {
            let u = nalgebra::DVector::from_column_slice(&x[k * na..(k + 1) * na]);
            let cu = &c_re * &u;
            f += lin[k].dot(&u) - scale[k] * u.dot(&cu);
            if let Some(g) = g.as_deref_mut() {
                for j in 0..na {
                    g[k * na + j] = lin[k][j] - 2.0 * scale[k] * cu[j];
                }
            }
        }
        f
    });
    let mut prog = ConcaveProgram::new(x0, objective);
    for j in 0..k_n * na {
        prog.lower[j] = 0.0;
    }
    Ok(NonnegCombiners {
        program: prog,
        users: k_n,
        len: na,
    })
}

impl NonnegCombiners {
    pub fn unpack(&self, x: &[f64]) -> Vec<CVec> {
        (0..self.users)
            .map(|k| CVec::from_fn(self.len, |j, _| cx(x[k * self.len + j], 0.0)))
            .collect()
    }
}
