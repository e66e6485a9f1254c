use crate::error::{Error, Result};
use crate::sim::{grid_shape, SimGeometry};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Network-level parameters shared by every scheme and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub rf_chains: usize,
    pub atoms: usize,
    pub layers: usize,
    /// Per-AP fronthaul capacity `C_F` in bits per channel use.
    pub fronthaul: f64,
    pub ue_power: f64,
    pub ap_power: f64,
    pub noise_ul: f64,
    pub noise_dl: f64,
    pub weights_ul: Vec<f64>,
    pub weights_dl: Vec<f64>,
    pub carrier_hz: f64,
    /// SIM thickness in wavelengths.
    pub thickness_wavelengths: f64,
    pub coverage_radius: f64,
    pub ref_distance: f64,
    pub ref_pathloss: f64,
    pub pathloss_exponent: f64,
    /// UEs closer than this to any AP are redrawn.
    pub min_ap_distance: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let p = db_to_linear(15.0);
        SystemConfig {
            num_aps: 3,
            num_ues: 6,
            rf_chains: 2,
            atoms: 16,
            layers: 2,
            fronthaul: 5.0,
            ue_power: p,
            ap_power: p,
            noise_ul: 1.0,
            noise_dl: 1.0,
            weights_ul: vec![1.0; 6],
            weights_dl: vec![1.0; 6],
            carrier_hz: 28e9,
            thickness_wavelengths: 5.0,
            coverage_radius: 100.0,
            ref_distance: 30.0,
            ref_pathloss: 10.0,
            pathloss_exponent: 3.0,
            min_ap_distance: 5.0,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemConfig {
    /// Sets both transmit powers to `SNR · σ²`.
    pub fn with_snr_db(mut self, db: f64) -> Self {
        self.ue_power = db_to_linear(db) * self.noise_ul;
        self.ap_power = db_to_linear(db) * self.noise_dl;
        self
    }

    pub fn with_ues(mut self, k: usize) -> Self {
        self.num_ues = k;
        self.weights_ul = vec![1.0; k];
        self.weights_dl = vec![1.0; k];
        self
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn geometry(&self) -> Result<SimGeometry> {
        let (r, c) = grid_shape(self.atoms);
        let lam = self.wavelength();
        SimGeometry::new(lam, r, c, self.layers, self.rf_chains)?
            .with_thickness(self.thickness_wavelengths * lam)
    }

    pub fn weights(&self, dir: crate::sim::Direction) -> &[f64] {
        match dir {
            crate::sim::Direction::Uplink => &self.weights_ul,
            crate::sim::Direction::Downlink => &self.weights_dl,
        }
    }

    pub fn noise(&self, dir: crate::sim::Direction) -> f64 {
        match dir {
            crate::sim::Direction::Uplink => self.noise_ul,
            crate::sim::Direction::Downlink => self.noise_dl,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_aps == 0 || self.num_ues == 0 {
            return bad("need at least one AP and one UE".into());
        }
        if self.rf_chains == 0 || self.atoms == 0 || self.layers == 0 {
            return bad("rf_chains, atoms and layers must be positive".into());
        }
        if self.rf_chains > self.atoms {
            return bad(format!(
                "rf_chains {} exceeds atoms {}",
                self.rf_chains, self.atoms
            ));
        }
        if !(self.fronthaul.is_finite() && self.fronthaul > 0.0) {
            return bad("fronthaul capacity must be positive and finite".into());
        }
        for (name, v) in [
            ("ue_power", self.ue_power),
            ("ap_power", self.ap_power),
            ("noise_ul", self.noise_ul),
            ("noise_dl", self.noise_dl),
            ("carrier_hz", self.carrier_hz),
            ("thickness_wavelengths", self.thickness_wavelengths),
            ("coverage_radius", self.coverage_radius),
            ("ref_distance", self.ref_distance),
            ("ref_pathloss", self.ref_pathloss),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        if !(self.min_ap_distance >= 0.0 && self.min_ap_distance < self.coverage_radius) {
            return bad("min_ap_distance must lie in [0, coverage_radius)".into());
        }
        if self.weights_ul.len() != self.num_ues || self.weights_dl.len() != self.num_ues {
            return bad("one weight per UE is required".into());
        }
        if self
            .weights_ul
            .iter()
            .chain(&self.weights_dl)
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("weights must be non-negative".into());
        }
        self.geometry()?;
        Ok(())
    }
}
