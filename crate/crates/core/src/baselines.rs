//! Comparison schemes: fully digital upper bound, random fixed phases,
//! wave-only beamforming and equal-rate fronthaul compression.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::channel::{ChannelRealization, EffectiveChannels};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::metrics::{uplink_signal_covariance, DownlinkState, Slacks, UplinkState};
use crate::optimizers::{
    run_downlink, run_uplink, AoOutcome, AoSettings, ConvergenceTrace, Variant,
};
use crate::program::{equal_rate_factor, Compression};
use crate::sim::{Direction, SimStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeTag {
    Hybrid,
    FullyDigital,
    RandomPhase,
    WaveOnly,
}

impl SchemeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeTag::Hybrid => "hybrid",
            SchemeTag::FullyDigital => "fully_digital",
            SchemeTag::RandomPhase => "random_phase",
            SchemeTag::WaveOnly => "wave_only",
        }
    }

    pub const ALL: [SchemeTag; 4] = [
        SchemeTag::Hybrid,
        SchemeTag::FullyDigital,
        SchemeTag::RandomPhase,
        SchemeTag::WaveOnly,
    ];
}

/// A scheme and its fronthaul compression mode. Written as `hybrid`,
/// `fully_digital_equal_rate`, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeSpec {
    pub tag: SchemeTag,
    pub compression: Compression,
}

impl SchemeSpec {
    pub fn new(tag: SchemeTag, compression: Compression) -> Result<Self> {
        let s = SchemeSpec { tag, compression };
        s.validate()?;
        Ok(s)
    }

    pub fn optimized(tag: SchemeTag) -> Self {
        SchemeSpec {
            tag,
            compression: Compression::Optimized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = matches!(self.tag, SchemeTag::Hybrid | SchemeTag::FullyDigital);
        if self.compression == Compression::EqualRate && !allowed {
            return Err(Error::Config(format!(
                "equal-rate compression is not defined for {}",
                self.tag.as_str()
            )));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        Variant {
            optimize_wave: matches!(self.tag, SchemeTag::Hybrid | SchemeTag::WaveOnly),
            nonnegative_digital: self.tag == SchemeTag::WaveOnly,
            compression: self.compression,
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.compression {
            Compression::Optimized => f.write_str(self.tag.as_str()),
            Compression::EqualRate => write!(f, "{}_equal_rate", self.tag.as_str()),
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, compression) = match s.strip_suffix("_equal_rate") {
            Some(b) => (b, Compression::EqualRate),
            None => (s, Compression::Optimized),
        };
        let tag = SchemeTag::ALL
            .into_iter()
            .find(|t| t.as_str() == base)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))?;
        SchemeSpec::new(tag, compression)
    }
}

#[derive(Debug, Clone)]
pub enum SchemeState {
    Uplink(UplinkState),
    Downlink(DownlinkState),
}

#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub scheme: SchemeSpec,
    pub direction: Direction,
    pub state: SchemeState,
    pub sum_rate: f64,
    pub slacks: Slacks,
    pub trace: ConvergenceTrace,
    pub outer_iters: usize,
    pub digital_time: Duration,
    pub wave_time: Duration,
    pub degraded: bool,
}

fn wrap<S>(
    scheme: SchemeSpec,
    direction: Direction,
    out: AoOutcome<S>,
    f: impl FnOnce(S) -> SchemeState,
) -> SchemeOutcome {
    SchemeOutcome {
        scheme,
        direction,
        state: f(out.state),
        sum_rate: out.sum_rate,
        slacks: out.slacks,
        trace: out.trace,
        outer_iters: out.outer_iters,
        digital_time: out.digital_time,
        wave_time: out.wave_time,
        degraded: out.degraded,
    }
}

fn run_variant(
    scheme: SchemeSpec,
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    direction: Direction,
) -> Result<SchemeOutcome> {
    let variant = scheme.variant();
    Ok(match direction {
        Direction::Uplink => wrap(
            scheme,
            direction,
            run_uplink(config, channels, stack, settings, variant)?,
            SchemeState::Uplink,
        ),
        Direction::Downlink => wrap(
            scheme,
            direction,
            run_downlink(config, channels, stack, settings, variant)?,
            SchemeState::Downlink,
        ),
    })
}

/// Configuration of the fully digital benchmark: one RF chain per antenna.
pub fn fully_digital_config(config: &SystemConfig) -> SystemConfig {
    SystemConfig {
        rf_chains: config.atoms,
        ..config.clone()
    }
}

/// Every antenna has its own RF chain and the raw channels are used as
/// effective channels; `Ω_i` is `M × M`.
pub fn run_fully_digital(
    config: &SystemConfig,
    channels: &ChannelRealization,
    settings: &AoSettings,
    direction: Direction,
    compression: Compression,
) -> Result<SchemeOutcome> {
    let scheme = SchemeSpec::new(SchemeTag::FullyDigital, compression)?;
    let fd = fully_digital_config(config);
    let stack = SimStack::identity(fd.wavelength(), fd.atoms, fd.num_aps)?;
    run_variant(scheme, &fd, channels, &stack, settings, direction)
}

/// Phases stay at the stack's random initial draw; only digital passes run.
pub fn run_random_phase(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    direction: Direction,
) -> Result<SchemeOutcome> {
    run_variant(
        SchemeSpec::optimized(SchemeTag::RandomPhase),
        config,
        channels,
        stack,
        settings,
        direction,
    )
}

/// Digital weights restricted to non-negative reals, so spatial processing
/// happens in the wave domain.
pub fn run_wave_only(
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    direction: Direction,
) -> Result<SchemeOutcome> {
    run_variant(
        SchemeSpec::optimized(SchemeTag::WaveOnly),
        config,
        channels,
        stack,
        settings,
        direction,
    )
}

pub fn run_scheme(
    scheme: SchemeSpec,
    config: &SystemConfig,
    channels: &ChannelRealization,
    stack: &SimStack,
    settings: &AoSettings,
    direction: Direction,
) -> Result<SchemeOutcome> {
    scheme.validate()?;
    match scheme.tag {
        SchemeTag::FullyDigital => {
            run_fully_digital(config, channels, settings, direction, scheme.compression)
        }
        _ => run_variant(scheme, config, channels, stack, settings, direction),
    }
}

/// Uplink equal-rate floors `C̃ [Σ_k p_k h̃h̃ᴴ + σ²I]_nn` of AP `i`.
pub fn uplink_equal_rate_floors(
    state: &UplinkState,
    eff: &EffectiveChannels,
    config: &SystemConfig,
    i: usize,
) -> Vec<f64> {
    let ct = equal_rate_factor(config.fronthaul, eff.rf_chains());
    let s = uplink_signal_covariance(state, eff, config.noise_ul, i);
    (0..eff.rf_chains()).map(|n| ct * s[(n, n)].re).collect()
}

/// Downlink equal-rate floors `C̃ Σ_k |v_{k,i}(n)|²` of AP `i`.
pub fn downlink_equal_rate_floors(
    state: &DownlinkState,
    config: &SystemConfig,
    i: usize,
) -> Vec<f64> {
    let n = state.beams.first().map_or(0, |b| b[i].len());
    let ct = equal_rate_factor(config.fronthaul, n);
    (0..n)
        .map(|j| ct * state.beams.iter().map(|b| b[i][j].norm_sqr()).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for tag in SchemeTag::ALL {
            let s = SchemeSpec::optimized(tag);
            assert_eq!(s.to_string().parse::<SchemeSpec>().unwrap(), s);
        }
        let s: SchemeSpec = "fully_digital_equal_rate".parse().unwrap();
        assert_eq!(s.tag, SchemeTag::FullyDigital);
        assert_eq!(s.compression, Compression::EqualRate);
        assert!("wave_only_equal_rate".parse::<SchemeSpec>().is_err());
        assert!("analog".parse::<SchemeSpec>().is_err());
    }

    #[test]
    fn variants() {
        let v = SchemeSpec::optimized(SchemeTag::RandomPhase).variant();
        assert!(!v.optimize_wave && !v.nonnegative_digital);
        let v = SchemeSpec::optimized(SchemeTag::WaveOnly).variant();
        assert!(v.optimize_wave && v.nonnegative_digital);
    }

    #[test]
    fn equal_rate_scalar_floor() {
        let config = SystemConfig {
            fronthaul: 3.0,
            ..SystemConfig::default()
        };
        let state = DownlinkState {
            beams: vec![vec![
                crate::linalg::CVec::from_element(
                    1,
                    crate::linalg::cx(2.0, 0.0)
                );
                1
            ]],
            quant: vec![crate::linalg::CMat::identity(1, 1)],
            phases: crate::sim::PhaseProfile::zeros(1, 1, 1),
        };
        let f = downlink_equal_rate_floors(&state, &config, 0);
        assert!((f[0] - 4.0 / 7.0).abs() < 1e-14);
        let big = SystemConfig {
            fronthaul: 500.0,
            ..config
        };
        assert!(downlink_equal_rate_floors(&state, &big, 0)[0] < 1e-100);
    }
}
