//! Back-correction of detected coincidence rates through the loss budget.
//!
//! Rates carry their unit as a type parameter; the experiment quotes pair
//! rates both per mW and per MHz per mW, and conflating the two is the
//! likeliest bookkeeping bug.

use std::marker::PhantomData;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::detection::LossBudget;
use crate::error::{Error, Result};

pub trait RateUnit: Copy + Clone + std::fmt::Debug {
    const LABEL: &'static str;
}

/// Pairs per second per milliwatt of pump power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerSecPerMilliwatt;

impl RateUnit for PerSecPerMilliwatt {
    const LABEL: &'static str = "s^-1 mW^-1";
}

/// Pairs per second per megahertz of bandwidth per milliwatt (spectral
/// brightness).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerSecPerMwPerMhz;

impl RateUnit for PerSecPerMwPerMhz {
    const LABEL: &'static str = "s^-1 MHz^-1 mW^-1";
}

/// A rate tagged with its unit at the type level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate<U: RateUnit> {
    value: f64,
    _unit: PhantomData<U>,
}

impl<U: RateUnit> Rate<U> {
    pub fn new(value: f64) -> Self {
        Rate {
            value,
            _unit: PhantomData,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// One named factor of the correction monomial.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LossFactor {
    pub name: &'static str,
    pub value: f64,
    pub exponent: u32,
}

/// Detected rate, back-corrected estimate, and the factor breakdown.
#[derive(Debug, Clone)]
pub struct RateEstimate<U: RateUnit> {
    pub r_detected: Rate<U>,
    pub r_estimate: Rate<U>,
    pub correction_factor: f64,
    pub factors: Vec<LossFactor>,
}

impl<U: RateUnit> Serialize for RateEstimate<U> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RateEstimate", 5)?;
        s.serialize_field("unit", U::LABEL)?;
        s.serialize_field("r_detected", &self.r_detected.value())?;
        s.serialize_field("r_estimate", &self.r_estimate.value())?;
        s.serialize_field("correction_factor", &self.correction_factor)?;
        s.serialize_field("factors", &self.factors)?;
        s.end()
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::argument(
            "loss_factor",
            format!("{name} = {value} not in (0, 1]"),
        ));
    }
    Ok(())
}

fn build_estimate<U: RateUnit>(
    r_detected: Rate<U>,
    factors: Vec<LossFactor>,
) -> Result<RateEstimate<U>> {
    if r_detected.value() < 0.0 {
        return Err(Error::argument("r_detected", "must be >= 0"));
    }
    let mut correction = 1.0;
    for f in &factors {
        check_fraction(f.name, f.value)?;
        correction *= f.value.powi(f.exponent as i32);
    }
    Ok(RateEstimate {
        r_detected,
        r_estimate: Rate::new(r_detected.value() / correction),
        correction_factor: correction,
        factors,
    })
}

/// Single-pass chain: R_estimate = R_detected / (d·α₁·α₂·t²·η²).
pub fn estimate_rate_single_pass<U: RateUnit>(
    r_detected: Rate<U>,
    duty_cycle: f64,
    alpha1: f64,
    alpha2: f64,
    filter_t: f64,
    eta: f64,
) -> Result<RateEstimate<U>> {
    build_estimate(
        r_detected,
        vec![
            LossFactor { name: "d", value: duty_cycle, exponent: 1 },
            LossFactor { name: "alpha1", value: alpha1, exponent: 1 },
            LossFactor { name: "alpha2", value: alpha2, exponent: 1 },
            LossFactor { name: "t", value: filter_t, exponent: 2 },
            LossFactor { name: "eta", value: eta, exponent: 2 },
        ],
    )
}

/// Cavity chain: R_estimate = R_detected / (d·α²·α₁·α₂·t₁²·t₂²·η²).
pub fn estimate_rate_cavity<U: RateUnit>(
    r_detected: Rate<U>,
    duty_cycle: f64,
    budget: &LossBudget,
    eta: f64,
) -> Result<RateEstimate<U>> {
    build_estimate(
        r_detected,
        vec![
            LossFactor { name: "d", value: duty_cycle, exponent: 1 },
            LossFactor { name: "alpha", value: budget.alpha, exponent: 2 },
            LossFactor { name: "alpha1", value: budget.alpha1, exponent: 1 },
            LossFactor { name: "alpha2", value: budget.alpha2, exponent: 1 },
            LossFactor { name: "t1", value: budget.t1, exponent: 2 },
            LossFactor { name: "t2", value: budget.t2, exponent: 2 },
            LossFactor { name: "eta", value: eta, exponent: 2 },
        ],
    )
}

/// Pair rate divided by bandwidth: spectral brightness in (s·MHz·mW)⁻¹.
pub fn spectral_brightness(
    pair_rate: Rate<PerSecPerMilliwatt>,
    bandwidth_mhz: f64,
) -> Result<Rate<PerSecPerMwPerMhz>> {
    if !(bandwidth_mhz > 0.0) {
        return Err(Error::argument("bandwidth_mhz", "must be positive"));
    }
    Ok(Rate::new(pair_rate.value() / bandwidth_mhz))
}

/// Published OPO pair-source figures, kept as a data record for comparison
/// tables.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportedSource {
    pub label: &'static str,
    pub wavelength_nm: f64,
    pub bandwidth_mhz: f64,
    pub brightness_per_s_mhz_mw: f64,
    pub single_mode: bool,
    pub fiber_coupled: bool,
    pub entanglement: bool,
}

pub const REPORTED_SOURCES: [ReportedSource; 8] = [
    ReportedSource { label: "Wang 2004", wavelength_nm: 860.0, bandwidth_mhz: 18.0, brightness_per_s_mhz_mw: 0.12, single_mode: false, fiber_coupled: false, entanglement: true },
    ReportedSource { label: "Kuklewicz 2006", wavelength_nm: 795.0, bandwidth_mhz: 22.0, brightness_per_s_mhz_mw: 0.7, single_mode: false, fiber_coupled: true, entanglement: true },
    ReportedSource { label: "Bao 2008", wavelength_nm: 780.0, bandwidth_mhz: 9.6, brightness_per_s_mhz_mw: 6.0, single_mode: true, fiber_coupled: true, entanglement: true },
    ReportedSource { label: "Scholz 2009", wavelength_nm: 893.4, bandwidth_mhz: 2.7, brightness_per_s_mhz_mw: 330.0, single_mode: true, fiber_coupled: true, entanglement: false },
    ReportedSource { label: "Wang 2010", wavelength_nm: 780.0, bandwidth_mhz: 20.0, brightness_per_s_mhz_mw: 5.4, single_mode: true, fiber_coupled: true, entanglement: false },
    ReportedSource { label: "Wolfgramm 2008", wavelength_nm: 795.0, bandwidth_mhz: 7.0, brightness_per_s_mhz_mw: 70.0, single_mode: false, fiber_coupled: true, entanglement: true },
    ReportedSource { label: "Pomarico 2009", wavelength_nm: 1560.0, bandwidth_mhz: 117.0, brightness_per_s_mhz_mw: 17.0, single_mode: true, fiber_coupled: true, entanglement: true },
    ReportedSource { label: "this source", wavelength_nm: 1560.0, bandwidth_mhz: 8.0, brightness_per_s_mhz_mw: 134.0, single_mode: true, fiber_coupled: true, entanglement: false },
];
