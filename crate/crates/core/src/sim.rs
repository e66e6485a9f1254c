//! Stacked-metasurface geometry, Rayleigh–Sommerfeld diffraction and the
//! cascaded wave-domain transfer matrices.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::{cx, scale_cols, scale_rows, CMat, Cx};

/// Link direction. The two directions traverse the stack in opposite order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Point = [f64; 3];

/// Grid shape `(rows, cols)` for `n` elements: the most square factorisation
/// with `rows <= cols`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = 1;
    let mut r = 1;
    while r * r <= n {
        if n % r == 0 {
            rows = r;
        }
        r += 1;
    }
    (rows, n / rows)
}

fn centered_grid(rows: usize, cols: usize, pitch: f64, z: f64) -> Vec<Point> {
    let mut pts = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
            let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
            pts.push([x, y, z]);
        }
    }
    pts
}

/// Physical layout of one SIM and its RF-chain antennas.
///
/// Antennas sit in the plane `z = 0`; layer `l` (1-based) lies at
/// `z = l · d_layer`, so layer 1 is antenna-adjacent and layer `L` faces the air.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGeometry {
    pub wavelength: f64,
    pub atom_rows: usize,
    pub atom_cols: usize,
    pub layers: usize,
    pub rf_chains: usize,
    pub thickness: f64,
    pub atom_pitch: f64,
    pub atom_area: f64,
}

impl SimGeometry {
    /// Default layout: λ/2 pitch, `(λ/2)²` atoms, thickness `5λ`.
    pub fn new(
        wavelength: f64,
        atom_rows: usize,
        atom_cols: usize,
        layers: usize,
        rf_chains: usize,
    ) -> Result<Self> {
        let g = SimGeometry {
            wavelength,
            atom_rows,
            atom_cols,
            layers,
            rf_chains,
            thickness: 5.0 * wavelength,
            atom_pitch: wavelength / 2.0,
            atom_area: (wavelength / 2.0).powi(2),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_thickness(mut self, thickness: f64) -> Result<Self> {
        self.thickness = thickness;
        self.validate()?;
        Ok(self)
    }

    pub fn with_atom_area(mut self, area: f64) -> Result<Self> {
        self.atom_area = area;
        self.validate()?;
        Ok(self)
    }

    pub fn with_atom_pitch(mut self, pitch: f64) -> Result<Self> {
        self.atom_pitch = pitch;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Geometry(m.to_string()));
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return bad("wavelength must be positive");
        }
        if self.atom_rows == 0 || self.atom_cols == 0 {
            return bad("atom grid must be non-empty");
        }
        if self.layers == 0 {
            return bad("at least one layer is required");
        }
        if self.rf_chains == 0 {
            return bad("at least one RF chain is required");
        }
        if self.rf_chains > self.atoms() {
            return bad("more RF chains than meta-atoms");
        }
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return bad("thickness must be positive");
        }
        if !(self.atom_pitch.is_finite() && self.atom_pitch > 0.0) {
            return bad("atom pitch must be positive");
        }
        if !(self.atom_area.is_finite() && self.atom_area > 0.0) {
            return bad("atom area must be positive");
        }
        Ok(())
    }

    pub fn atoms(&self) -> usize {
        self.atom_rows * self.atom_cols
    }

    pub fn layer_spacing(&self) -> f64 {
        self.thickness / self.layers as f64
    }

    /// Atom centres of `layer` (1-based).
    pub fn atom_positions(&self, layer: usize) -> Vec<Point> {
        centered_grid(
            self.atom_rows,
            self.atom_cols,
            self.atom_pitch,
            layer as f64 * self.layer_spacing(),
        )
    }

    pub fn antenna_positions(&self) -> Vec<Point> {
        let (r, c) = grid_shape(self.rf_chains);
        centered_grid(r, c, self.wavelength / 2.0, 0.0)
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Rayleigh–Sommerfeld transmission coefficient between two points:
/// `w = (S d_layer / d²) (1/(2πd) − j/λ) e^{j2πd/λ}`.
pub fn diffraction_coefficient(geometry: &SimGeometry, src: &Point, dst: &Point) -> Result<Cx> {
    let d = distance(src, dst);
    if !(d > 0.0) {
        return Err(Error::Geometry("coincident points in diffraction".into()));
    }
    let lam = geometry.wavelength;
    let amp = geometry.atom_area * geometry.layer_spacing() / (d * d);
    let inner = cx(1.0 / (2.0 * PI * d), -1.0 / lam);
    Ok(cx(amp, 0.0) * inner * Cx::from_polar(1.0, 2.0 * PI * d / lam))
}

fn coupling(geometry: &SimGeometry, dst: &[Point], src: &[Point]) -> Result<CMat> {
    let mut m = CMat::zeros(dst.len(), src.len());
    for (r, p) in dst.iter().enumerate() {
        for (c, q) in src.iter().enumerate() {
            m[(r, c)] = diffraction_coefficient(geometry, q, p)?;
        }
    }
    Ok(m)
}

/// Per-AP phase shifts `θ[ap][layer][atom]` in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub angles: Vec<Vec<Vec<f64>>>,
}

impl PhaseProfile {
    pub fn zeros(aps: usize, layers: usize, atoms: usize) -> Self {
        PhaseProfile {
            angles: vec![vec![vec![0.0; atoms]; layers]; aps],
        }
    }

    pub fn random<R: Rng + ?Sized>(aps: usize, layers: usize, atoms: usize, rng: &mut R) -> Self {
        let angles = (0..aps)
            .map(|_| {
                (0..layers)
                    .map(|_| (0..atoms).map(|_| rng.random::<f64>() * 2.0 * PI).collect())
                    .collect()
            })
            .collect();
        PhaseProfile { angles }
    }

    pub fn aps(&self) -> usize {
        self.angles.len()
    }

    /// Unit-modulus coefficients `e^{jθ}` for one AP, per layer.
    pub fn coefficients(&self, ap: usize) -> Vec<Vec<Cx>> {
        self.angles[ap]
            .iter()
            .map(|layer| layer.iter().map(|&t| Cx::from_polar(1.0, t)).collect())
            .collect()
    }

    /// Wraps every angle into `[0, 2π)`.
    pub fn wrap(&mut self) {
        for ap in &mut self.angles {
            for layer in ap {
                for t in layer {
                    *t = wrap_angle(*t);
                }
            }
        }
    }
}

pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Fixed diffraction matrices of one SIM design, shared by all APs, plus
/// the random initial phase profiles for both directions.
#[derive(Debug, Clone)]
pub struct SimStack {
    pub geometry: SimGeometry,
    /// Uplink `T` (`N x M`): layer 1 → antennas. The downlink uses `Tᵀ`.
    pub coupling_ul: CMat,
    pub coupling_dl: CMat,
    /// Downlink-sense `W_l` for `l = 2..=L` (layer `l-1` → layer `l`),
    /// stored at index `l - 2`.
    pub interlayer_dl: Vec<CMat>,
    /// Uplink-sense `W_l` (layer `l` → layer `l-1`), i.e. `W_lᵀ`.
    pub interlayer_ul: Vec<CMat>,
    pub init_uplink: PhaseProfile,
    pub init_downlink: PhaseProfile,
    identity: bool,
}

/// Builds the stack for `aps` identical SIMs; initial phases are uniform in
/// `[0, 2π)` from `seed`.
pub fn build_stack(geometry: &SimGeometry, aps: usize, seed: u64) -> Result<SimStack> {
    geometry.validate()?;
    let ant = geometry.antenna_positions();
    let first = geometry.atom_positions(1);
    let coupling_ul = coupling(geometry, &ant, &first)?;
    let mut interlayer_dl = Vec::with_capacity(geometry.layers.saturating_sub(1));
    for l in 2..=geometry.layers {
        let prev = geometry.atom_positions(l - 1);
        let cur = geometry.atom_positions(l);
        interlayer_dl.push(coupling(geometry, &cur, &prev)?);
    }
    let interlayer_ul = interlayer_dl.iter().map(|w| w.transpose()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = geometry.atoms();
    let init_uplink = PhaseProfile::random(aps, geometry.layers, m, &mut rng);
    let init_downlink = PhaseProfile::random(aps, geometry.layers, m, &mut rng);
    Ok(SimStack {
        geometry: geometry.clone(),
        coupling_dl: coupling_ul.transpose(),
        coupling_ul,
        interlayer_dl,
        interlayer_ul,
        init_uplink,
        init_downlink,
        identity: false,
    })
}

impl SimStack {
    /// Stack with `T = I`, `G = I` (one layer held at zero phase), used for
    /// the fully digital benchmark where every antenna has its own RF chain.
    pub fn identity(wavelength: f64, antennas: usize, aps: usize) -> Result<Self> {
        let (r, c) = grid_shape(antennas);
        let geometry = SimGeometry::new(wavelength, r, c, 1, antennas)?;
        let eye = CMat::identity(antennas, antennas);
        Ok(SimStack {
            geometry,
            coupling_ul: eye.clone(),
            coupling_dl: eye,
            interlayer_dl: Vec::new(),
            interlayer_ul: Vec::new(),
            init_uplink: PhaseProfile::zeros(aps, 1, antennas),
            init_downlink: PhaseProfile::zeros(aps, 1, antennas),
            identity: true,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn layers(&self) -> usize {
        self.geometry.layers
    }

    pub fn atoms(&self) -> usize {
        self.geometry.atoms()
    }

    pub fn rf_chains(&self) -> usize {
        self.geometry.rf_chains
    }

    pub fn coupling(&self, dir: Direction) -> &CMat {
        match dir {
            Direction::Uplink => &self.coupling_ul,
            Direction::Downlink => &self.coupling_dl,
        }
    }

    /// `W_l` for `l` in `2..=L` in the given direction.
    pub fn interlayer(&self, l: usize, dir: Direction) -> &CMat {
        match dir {
            Direction::Uplink => &self.interlayer_ul[l - 2],
            Direction::Downlink => &self.interlayer_dl[l - 2],
        }
    }

    pub fn initial_phases(&self, dir: Direction) -> &PhaseProfile {
        match dir {
            Direction::Uplink => &self.init_uplink,
            Direction::Downlink => &self.init_downlink,
        }
    }
}

fn check_coeffs(stack: &SimStack, coeffs: &[Vec<Cx>]) -> Result<()> {
    if coeffs.len() != stack.layers() || coeffs.iter().any(|c| c.len() != stack.atoms()) {
        return Err(Error::Dimension(format!(
            "expected {} layers of {} coefficients",
            stack.layers(),
            stack.atoms()
        )));
    }
    Ok(())
}

/// Cascaded transfer `G` for one AP given per-layer diagonal coefficients.
///
/// Uplink `G = Φ_1 W_2 Φ_2 ⋯ W_L Φ_L`; downlink `G = Φ_L W_L ⋯ W_2 Φ_1`.
pub fn wave_transfer(stack: &SimStack, coeffs: &[Vec<Cx>], dir: Direction) -> Result<CMat> {
    check_coeffs(stack, coeffs)?;
    let m = stack.atoms();
    let l_tot = stack.layers();
    Ok(match dir {
        Direction::Uplink => {
            let mut g = scale_rows(&coeffs[0], &CMat::identity(m, m));
            for l in 2..=l_tot {
                g = scale_cols(&(g * stack.interlayer(l, dir)), &coeffs[l - 1]);
            }
            g
        }
        Direction::Downlink => {
            let mut g = scale_rows(&coeffs[0], &CMat::identity(m, m));
            for l in 2..=l_tot {
                g = scale_rows(&coeffs[l - 1], &(stack.interlayer(l, dir) * g));
            }
            g
        }
    })
}

/// Transfer from unit-modulus phases of one AP.
pub fn wave_transfer_phases(
    stack: &SimStack,
    phases: &PhaseProfile,
    ap: usize,
    dir: Direction,
) -> Result<CMat> {
    wave_transfer(stack, &phases.coefficients(ap), dir)
}

/// Partial products around layer `l` (1-based).
///
/// Uplink returns `(A, B)` with `G = A Φ_l B`; downlink returns `(A, B)`
/// with `G = B Φ_l A`. `A = I` at `l = 1` and `B = I` at `l = L`.
pub fn partial_products(
    stack: &SimStack,
    coeffs: &[Vec<Cx>],
    l: usize,
    dir: Direction,
) -> Result<(CMat, CMat)> {
    check_coeffs(stack, coeffs)?;
    let l_tot = stack.layers();
    if l == 0 || l > l_tot {
        return Err(Error::Dimension(format!("layer {l} outside 1..={l_tot}")));
    }
    let m = stack.atoms();
    let eye = CMat::identity(m, m);
    Ok(match dir {
        Direction::Uplink => {
            // A = Φ_1 W_2 ⋯ Φ_{l-1} W_l
            let mut a = eye.clone();
            for j in 1..l {
                a = scale_cols(&a, &coeffs[j - 1]) * stack.interlayer(j + 1, dir);
            }
            // B = W_{l+1} Φ_{l+1} ⋯ W_L Φ_L
            let mut b = eye;
            for j in (l + 1)..=l_tot {
                b = scale_cols(&(b * stack.interlayer(j, dir)), &coeffs[j - 1]);
            }
            (a, b)
        }
        Direction::Downlink => {
            // A = W_l Φ_{l-1} ⋯ W_2 Φ_1
            let mut a = eye.clone();
            for j in 1..l {
                a = stack.interlayer(j + 1, dir) * scale_rows(&coeffs[j - 1], &a);
            }
            // B = Φ_L W_L ⋯ Φ_{l+1} W_{l+1}
            let mut b = eye;
            for j in (l + 1)..=l_tot {
                b = scale_rows(&coeffs[j - 1], &(stack.interlayer(j, dir) * b));
            }
            (a, b)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_geometry(layers: usize) -> SimGeometry {
        SimGeometry::new(1.0, 2, 2, layers, 2)
            .unwrap()
            .with_atom_area(0.25)
            .unwrap()
            .with_thickness(layers as f64)
            .unwrap()
    }

    #[test]
    fn coefficient_on_axis_reference_value() {
        let g = unit_geometry(1);
        let w = diffraction_coefficient(&g, &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        // 0.25·(1/(2π) − j)·e^{j2π} with λ = 1, d = d_layer = 1
        let want = cx(0.25 / (2.0 * PI), -0.25);
        assert!((w - want).norm() < 1e-12, "{w}");
    }

    #[test]
    fn coefficient_far_field_magnitude() {
        let g = unit_geometry(1);
        for &d in &[10.0, 100.0, 1000.0] {
            let w = diffraction_coefficient(&g, &[0.0, 0.0, 0.0], &[0.0, 0.0, d]).unwrap();
            let lead = 0.25 / (d * d);
            assert!((w.norm() - lead).abs() / lead < 2.0 / (2.0 * PI * d));
        }
    }

    #[test]
    fn coincident_points_rejected() {
        let g = unit_geometry(1);
        assert!(diffraction_coefficient(&g, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn interlayer_matrices_are_symmetric() {
        let g = SimGeometry::new(0.01, 4, 4, 3, 2).unwrap();
        let s = build_stack(&g, 1, 0).unwrap();
        for w in &s.interlayer_dl {
            assert!((w - w.transpose()).norm() < 1e-15 * w.norm().max(1.0) * 10.0);
        }
        assert_eq!(s.coupling_ul.shape(), (2, 16));
    }

    #[test]
    fn single_layer_zero_phase_is_identity() {
        let g = unit_geometry(1);
        let s = build_stack(&g, 1, 0).unwrap();
        let p = PhaseProfile::zeros(1, 1, 4);
        for dir in [Direction::Uplink, Direction::Downlink] {
            let gm = wave_transfer_phases(&s, &p, 0, dir).unwrap();
            assert!((gm - CMat::identity(4, 4)).norm() < 1e-15);
        }
    }

    #[test]
    fn uplink_and_downlink_are_transposes() {
        let g = SimGeometry::new(0.01, 3, 3, 4, 2).unwrap();
        let s = build_stack(&g, 1, 7).unwrap();
        let c = s.init_uplink.coefficients(0);
        let ul = wave_transfer(&s, &c, Direction::Uplink).unwrap();
        let dl = wave_transfer(&s, &c, Direction::Downlink).unwrap();
        assert!((ul.transpose() - dl).norm() < 1e-12 * ul.norm());
    }

    #[test]
    fn stacks_reproducible_from_seed() {
        let g = SimGeometry::new(0.01, 4, 4, 2, 2).unwrap();
        let a = build_stack(&g, 3, 11).unwrap();
        let b = build_stack(&g, 3, 11).unwrap();
        assert_eq!(a.init_uplink, b.init_uplink);
        assert_eq!(a.init_downlink, b.init_downlink);
        assert_eq!(a.interlayer_dl, b.interlayer_dl);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(SimGeometry::new(0.01, 4, 4, 0, 2).is_err());
        assert!(SimGeometry::new(0.01, 1, 2, 1, 3).is_err());
        assert!(SimGeometry::new(-1.0, 4, 4, 1, 2).is_err());
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(2), (1, 2));
        assert_eq!(grid_shape(6), (2, 3));
        assert_eq!(grid_shape(7), (1, 7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partial_products_recompose(seed in 0u64..1000, layers in 1usize..5, l_pick in 0usize..5) {
            let g = SimGeometry::new(0.01, 3, 3, layers, 2).unwrap();
            let s = build_stack(&g, 1, seed).unwrap();
            let c = s.init_uplink.coefficients(0);
            let l = 1 + l_pick % layers;
            for dir in [Direction::Uplink, Direction::Downlink] {
                let full = wave_transfer(&s, &c, dir).unwrap();
                let (a, b) = partial_products(&s, &c, l, dir).unwrap();
                let recomposed = match dir {
                    Direction::Uplink => scale_cols(&a, &c[l - 1]) * &b,
                    Direction::Downlink => scale_cols(&b, &c[l - 1]) * &a,
                };
                prop_assert!((full - recomposed).norm() < 1e-10 * (1.0 + a.norm() * b.norm()));
            }
        }

        #[test]
        fn wrap_stays_in_range(t in -100.0f64..100.0) {
            let w = wrap_angle(t);
            prop_assert!((0.0..2.0 * PI).contains(&w));
            prop_assert!(((w - t) / (2.0 * PI)).fract().abs() < 1e-9 || ((w - t) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
