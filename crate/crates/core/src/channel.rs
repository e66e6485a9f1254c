//! Deployment geometry, spatially correlated Rayleigh fading and effective
//! (post-SIM) channels.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, sqrt_psd_real, CMat, CVec, Cx};
use crate::sim::{
    wave_transfer, wave_transfer_phases, Direction, PhaseProfile, SimGeometry, SimStack,
};

/// Floor applied to the eigenvalues of `R` before taking its square root.
pub const COVARIANCE_FLOOR: f64 = 1e-10;

/// AP and UE positions with the resulting large-scale gains `β[k][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub pathloss: Vec<Vec<f64>>,
}

/// `β = β0 (d/d0)^(-η)`.
pub fn pathloss(config: &SystemConfig, distance: f64) -> f64 {
    config.ref_pathloss * (distance / config.ref_distance).powf(-config.pathloss_exponent)
}

fn hex_vertex(radius: f64, j: usize) -> [f64; 2] {
    let a = j as f64 * std::f64::consts::PI / 3.0;
    [radius * a.cos(), radius * a.sin()]
}

/// Whether `p` lies in the regular hexagon of circumradius `radius` with a
/// vertex on the positive x axis.
pub fn in_hexagon(p: [f64; 2], radius: f64) -> bool {
    let s3 = 3f64.sqrt();
    p[1].abs() <= radius * s3 / 2.0 && s3 * p[0].abs() + p[1].abs() <= s3 * radius
}

/// `n` points equally spaced along the hexagon perimeter, starting at a vertex.
pub fn perimeter_points(radius: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|j| {
            let s = j as f64 * 6.0 / n as f64;
            let e = (s.floor() as usize).min(5);
            let f = s - e as f64;
            let a = hex_vertex(radius, e);
            let b = hex_vertex(radius, (e + 1) % 6);
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Rejection-sampling budget for UE placement.
const MAX_DRAWS: usize = 1_000_000;

/// Hexagonal cell, APs on the boundary, UEs uniform inside.
pub fn sample_scenario<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let r = config.coverage_radius;
    let aps = perimeter_points(r, config.num_aps);
    let mut ues = Vec::with_capacity(config.num_ues);
    let mut draws = 0usize;
    while ues.len() < config.num_ues {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::Config("cannot place UEs away from every AP".into()));
        }
        let p = [
            (2.0 * rng.random::<f64>() - 1.0) * r,
            (2.0 * rng.random::<f64>() - 1.0) * r,
        ];
        if !in_hexagon(p, r) {
            continue;
        }
        if aps.iter().any(|&a| dist2(a, p) < config.min_ap_distance) {
            continue;
        }
        ues.push(p);
    }
    let pathloss = ues
        .iter()
        .map(|&u| aps.iter().map(|&a| pathloss(config, dist2(a, u))).collect())
        .collect();
    Ok(Scenario {
        ap_positions: aps,
        ue_positions: ues,
        pathloss,
    })
}

/// `R(n, n') = sinc(2 d_{n,n'} / λ)` over the air-facing layer.
pub fn spatial_covariance(geometry: &SimGeometry) -> DMatrix<f64> {
    let pts = geometry.atom_positions(geometry.layers);
    let m = pts.len();
    DMatrix::from_fn(m, m, |a, b| {
        let d = ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt();
        let x = 2.0 * std::f64::consts::PI * d / geometry.wavelength;
        if x == 0.0 {
            1.0
        } else {
            x.sin() / x
        }
    })
}

/// Raw UE–AP channels `h[k][i]` (length `M`), independent per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub uplink: Vec<Vec<CVec>>,
    pub downlink: Vec<Vec<CVec>>,
}

impl ChannelRealization {
    pub fn get(&self, dir: Direction) -> &Vec<Vec<CVec>> {
        match dir {
            Direction::Uplink => &self.uplink,
            Direction::Downlink => &self.downlink,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.uplink.len()
    }

    pub fn num_aps(&self) -> usize {
        self.uplink.first().map_or(0, |v| v.len())
    }

    /// Stable digest of every channel coefficient (hex, 16 chars).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for set in [&self.uplink, &self.downlink] {
            for per_ue in set {
                for v in per_ue {
                    for z in v.iter() {
                        h.update(z.re.to_le_bytes());
                        h.update(z.im.to_le_bytes());
                    }
                }
            }
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes one CSV per direction, one row per `(ue, ap)` with `re,im`
    /// column pairs.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, set) in [("uplink", &self.uplink), ("downlink", &self.downlink)] {
            let mut f = std::io::BufWriter::new(std::fs::File::create(
                dir.join(format!("channels_{name}.csv")),
            )?);
            let m = set.first().and_then(|v| v.first()).map_or(0, |v| v.len());
            write!(f, "ue,ap")?;
            for n in 0..m {
                write!(f, ",re{n},im{n}")?;
            }
            writeln!(f)?;
            for (k, per_ue) in set.iter().enumerate() {
                for (i, v) in per_ue.iter().enumerate() {
                    write!(f, "{k},{i}")?;
                    for z in v.iter() {
                        write!(f, ",{},{}", z.re, z.im)?;
                    }
                    writeln!(f)?;
                }
            }
        }
        Ok(())
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Cx {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cx(s * re, s * im)
}

/// `h = √β R^{1/2} g` with `g ~ CN(0, I)`.
pub fn sample_channels<R: Rng + ?Sized>(
    scenario: &Scenario,
    covariance: &DMatrix<f64>,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let m = covariance.nrows();
    if m == 0 || covariance.ncols() != m {
        return Err(Error::Dimension(
            "covariance must be square and non-empty".into(),
        ));
    }
    let root = sqrt_psd_real(covariance, COVARIANCE_FLOOR).map(|v| cx(v, 0.0));
    let draw = |rng: &mut R| -> Vec<Vec<CVec>> {
        scenario
            .pathloss
            .iter()
            .map(|betas| {
                betas
                    .iter()
                    .map(|&b| {
                        let g = CVec::from_fn(m, |_, _| complex_gaussian(rng));
                        (&root * g) * cx(b.sqrt(), 0.0)
                    })
                    .collect()
            })
            .collect()
    };
    let uplink = draw(rng);
    let downlink = draw(rng);
    Ok(ChannelRealization { uplink, downlink })
}

/// Channels seen at the digital side, `h̃[k][i]` of length `N`.
///
/// Uplink `h̃ = T G h`; downlink `h̃ = (G T_dl)ᴴ h`, so the received
/// downlink signal is `Σ_i h̃_{k,i}ᴴ x_i`.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub direction: Direction,
    pub vectors: Vec<Vec<CVec>>,
}

impl EffectiveChannels {
    pub fn num_ues(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_aps(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn rf_chains(&self) -> usize {
        self.vectors
            .first()
            .and_then(|v| v.first())
            .map_or(0, |v| v.len())
    }

    /// Stacked channel of UE `k` over all APs (length `N·K_A`).
    pub fn stacked(&self, k: usize) -> CVec {
        let n = self.rf_chains();
        let a = self.num_aps();
        let mut out = CVec::zeros(n * a);
        for i in 0..a {
            out.rows_mut(i * n, n).copy_from(&self.vectors[k][i]);
        }
        out
    }
}

/// Per-AP digital-facing matrix: uplink `T G` (`N x M`); downlink
/// `(G T_dl)ᴴ` (`N x M`), so that `h̃ = F h` in both cases.
pub fn front_matrix(stack: &SimStack, coeffs: &[Vec<Cx>], dir: Direction) -> Result<CMat> {
    let g = wave_transfer(stack, coeffs, dir)?;
    Ok(match dir {
        Direction::Uplink => stack.coupling(dir) * g,
        Direction::Downlink => (g * stack.coupling(dir)).adjoint(),
    })
}

pub fn effective_channels(
    channels: &ChannelRealization,
    stack: &SimStack,
    phases: &PhaseProfile,
    dir: Direction,
) -> Result<EffectiveChannels> {
    let coeffs: Vec<Vec<Vec<Cx>>> = (0..phases.aps()).map(|i| phases.coefficients(i)).collect();
    effective_channels_with(channels, stack, &coeffs, dir)
}

/// Same as [`effective_channels`] but from arbitrary (possibly
/// non-unit-modulus) diagonal coefficients `coeffs[ap][layer][atom]`.
pub fn effective_channels_with(
    channels: &ChannelRealization,
    stack: &SimStack,
    coeffs: &[Vec<Vec<Cx>>],
    dir: Direction,
) -> Result<EffectiveChannels> {
    let raw = channels.get(dir);
    let aps = channels.num_aps();
    if coeffs.len() != aps {
        return Err(Error::Dimension(format!(
            "{} phase profiles for {} APs",
            coeffs.len(),
            aps
        )));
    }
    let fronts: Vec<CMat> = if stack.is_identity() {
        vec![CMat::identity(stack.atoms(), stack.atoms()); aps]
    } else {
        coeffs
            .iter()
            .map(|c| front_matrix(stack, c, dir))
            .collect::<Result<_>>()?
    };
    let mut vectors = Vec::with_capacity(raw.len());
    for per_ue in raw {
        if per_ue.len() != aps {
            return Err(Error::Dimension("ragged channel realization".into()));
        }
        let mut row = Vec::with_capacity(aps);
        for (i, h) in per_ue.iter().enumerate() {
            if h.len() != stack.atoms() {
                return Err(Error::Dimension(format!(
                    "channel length {} vs {} atoms",
                    h.len(),
                    stack.atoms()
                )));
            }
            row.push(&fronts[i] * h);
        }
        vectors.push(row);
    }
    Ok(EffectiveChannels {
        direction: dir,
        vectors,
    })
}

/// Convenience: transfer `G` of one AP from its phase profile.
pub fn transfer_of(
    stack: &SimStack,
    phases: &PhaseProfile,
    ap: usize,
    dir: Direction,
) -> Result<CMat> {
    wave_transfer_phases(stack, phases, ap, dir)
}

/// Draws a scenario and channels for one trial.
pub fn draw_realization<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<(Scenario, ChannelRealization)> {
    let scen = sample_scenario(config, rng)?;
    let cov = spatial_covariance(&config.geometry()?);
    let ch = sample_channels(&scen, &cov, rng)?;
    Ok((scen, ch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pathloss_reference_points() {
        let c = SystemConfig::default();
        assert!((pathloss(&c, 30.0) - 10.0).abs() < 1e-12);
        assert!((pathloss(&c, 60.0) - 10.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn three_aps_on_alternate_vertices() {
        let p = perimeter_points(100.0, 3);
        for (j, v) in [0usize, 2, 4].iter().enumerate() {
            let w = hex_vertex(100.0, *v);
            assert!(dist2(p[j], w) < 1e-9);
        }
    }

    #[test]
    fn ues_inside_and_centered() {
        let c = SystemConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut sum = [0.0, 0.0];
        let mut n: f64 = 0.0;
        for _ in 0..400 {
            let s = sample_scenario(&c, &mut rng).unwrap();
            for &u in &s.ue_positions {
                assert!(in_hexagon(u, 100.0));
                sum[0] += u[0];
                sum[1] += u[1];
                n += 1.0;
            }
        }
        // per-coordinate std of a uniform hexagon is below 0.5 R
        let tol = 3.0 * 50.0 / n.sqrt();
        assert!((sum[0] / n).abs() < tol && (sum[1] / n).abs() < tol);
    }

    #[test]
    fn covariance_is_psd_with_unit_diagonal() {
        let g = SystemConfig::default().geometry().unwrap();
        let r = spatial_covariance(&g);
        assert_eq!(r.nrows(), 16);
        for i in 0..16 {
            assert_eq!(r[(i, i)], 1.0);
        }
        let root = sqrt_psd_real(&r, COVARIANCE_FLOOR);
        let eig = (&root * &root).symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn empirical_covariance_matches_beta_r() {
        let g = SimGeometry::new(1.0, 2, 2, 1, 1).unwrap();
        let r = spatial_covariance(&g);
        let scen = Scenario {
            ap_positions: vec![[0.0, 0.0]],
            ue_positions: vec![[1.0, 0.0]],
            pathloss: vec![vec![2.0]],
        };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let trials = 20000;
        let mut acc = CMat::zeros(4, 4);
        for _ in 0..trials {
            let ch = sample_channels(&scen, &r, &mut rng).unwrap();
            let h = &ch.uplink[0][0];
            acc += h * h.adjoint();
        }
        acc /= cx(trials as f64, 0.0);
        let want = r.map(|v| cx(2.0 * v, 0.0));
        assert!((&acc - &want).norm() / want.norm() < 0.05);
    }

    #[test]
    fn uplink_and_downlink_draws_differ() {
        let c = SystemConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (_, ch) = draw_realization(&c, &mut rng).unwrap();
        assert_ne!(ch.uplink, ch.downlink);
        assert_eq!(ch.digest().len(), 16);
    }

    #[test]
    fn identity_stack_passes_channels_through() {
        let c = SystemConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, ch) = draw_realization(&c, &mut rng).unwrap();
        let s = SimStack::identity(c.wavelength(), 16, 3).unwrap();
        let e = effective_channels(&ch, &s, &s.init_uplink, Direction::Downlink).unwrap();
        assert_eq!(e.vectors, ch.downlink);
    }

    #[test]
    fn csv_dump_has_pairs() {
        let c = SystemConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (_, ch) = draw_realization(&c, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ch.write_csv(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("channels_uplink.csv")).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 2 + 32);
        assert_eq!(text.lines().count(), 1 + 18);
    }
}
