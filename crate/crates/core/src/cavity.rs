//! Linear two-mirror cavity arithmetic: FSR, finesse, bandwidth-derived
//! quantities, and the triple-resonance (cluster) search under an ideal
//! pump lock.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_matching::{refractive_index, Axis, IndexModel};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// One intracavity segment: physical length and refractive index per named
/// wavelength label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub length_mm: f64,
    pub index: BTreeMap<String, f64>,
}

/// Standing-wave cavity: ordered segments plus mirror power transmittances
/// per named wavelength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavityGeometry {
    pub segments: Vec<Segment>,
    pub input_transmittance: BTreeMap<String, f64>,
    pub output_transmittance: BTreeMap<String, f64>,
}

impl CavityGeometry {
    pub fn new(
        segments: Vec<Segment>,
        input_transmittance: BTreeMap<String, f64>,
        output_transmittance: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::argument("segments", "at least one segment required"));
        }
        for seg in &segments {
            if !(seg.length_mm > 0.0) {
                return Err(Error::argument("length_mm", "segment lengths must be positive"));
            }
        }
        for (label, &t) in input_transmittance.iter().chain(&output_transmittance) {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::argument(
                    "transmittance",
                    format!("{label}: {t} not in (0, 1)"),
                ));
            }
        }
        let geometry = CavityGeometry {
            segments,
            input_transmittance,
            output_transmittance,
        };
        for label in geometry
            .input_transmittance
            .keys()
            .chain(geometry.output_transmittance.keys())
        {
            geometry.one_pass_optical_length_mm(label)?;
        }
        Ok(geometry)
    }

    /// Σ n·L over the segments for one wavelength label, in mm.
    pub fn one_pass_optical_length_mm(&self, label: &str) -> Result<f64> {
        let mut total = 0.0;
        for seg in &self.segments {
            let n = seg
                .index
                .get(label)
                .ok_or_else(|| Error::Lookup(format!("wavelength label {label}")))?;
            total += n * seg.length_mm;
        }
        Ok(total)
    }
}

/// Resonant-mode description of the down-converted field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombSpec {
    /// Signal cavity damping rate (full linewidth), Hz.
    pub gamma_s_hz: f64,
    /// Idler cavity damping rate (full linewidth), Hz.
    pub gamma_i_hz: f64,
    /// Common free spectral range, Hz.
    pub fsr_hz: f64,
    /// Longitudinal modes retained per field; odd, symmetric about degeneracy.
    pub modes: u32,
    /// Signal–idler propagation delay inside the conversion crystal, s.
    pub tau0_s: f64,
    /// Central signal frequency, Hz.
    pub omega_s_hz: f64,
    /// Central idler frequency, Hz.
    pub omega_i_hz: f64,
}

impl CombSpec {
    pub fn new(
        gamma_s_hz: f64,
        gamma_i_hz: f64,
        fsr_hz: f64,
        modes: u32,
        tau0_s: f64,
        omega_s_hz: f64,
        omega_i_hz: f64,
    ) -> Result<Self> {
        if !(gamma_s_hz > 0.0) {
            return Err(Error::argument("gamma_s_hz", "must be positive"));
        }
        if !(gamma_i_hz > 0.0) {
            return Err(Error::argument("gamma_i_hz", "must be positive"));
        }
        if !(fsr_hz > gamma_s_hz && fsr_hz > gamma_i_hz) {
            return Err(Error::argument(
                "fsr_hz",
                "free spectral range must exceed both damping rates (resolved comb)",
            ));
        }
        if modes == 0 || modes % 2 == 0 {
            return Err(Error::argument("modes", "must be odd and >= 1"));
        }
        if tau0_s < 0.0 {
            return Err(Error::argument("tau0_s", "must be >= 0"));
        }
        Ok(CombSpec {
            gamma_s_hz,
            gamma_i_hz,
            fsr_hz,
            modes,
            tau0_s,
            omega_s_hz,
            omega_i_hz,
        })
    }

    /// Single-mode degenerate comb, a convenience for tests and fits.
    pub fn single_mode(gamma_hz: f64, omega_hz: f64) -> Result<Self> {
        CombSpec::new(gamma_hz, gamma_hz, gamma_hz * 10.0, 1, 0.0, omega_hz, omega_hz)
    }
}

/// FSR = c / (2·Σ n·L) for a standing-wave cavity.
pub fn free_spectral_range(geometry: &CavityGeometry, label: &str) -> Result<f64> {
    let opl_m = geometry.one_pass_optical_length_mm(label)? * 1e-3;
    Ok(SPEED_OF_LIGHT_M_PER_S / (2.0 * opl_m))
}

/// F = FSR / bandwidth.
pub fn finesse(fsr_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(fsr_hz > 0.0) {
        return Err(Error::argument("fsr_hz", "must be positive"));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::argument("bandwidth_hz", "must be positive"));
    }
    Ok(fsr_hz / bandwidth_hz)
}

/// Intracavity circulating power inferred from the power leaking through the
/// output mirror: P_circ = P_leak / T_out.
pub fn circulating_power(leaked_power_mw: f64, output_transmittance: f64) -> Result<f64> {
    if !(output_transmittance > 0.0 && output_transmittance < 1.0) {
        return Err(Error::argument(
            "output_transmittance",
            "must be in (0, 1)",
        ));
    }
    if leaked_power_mw < 0.0 {
        return Err(Error::argument("leaked_power_mw", "must be >= 0"));
    }
    Ok(leaked_power_mw / output_transmittance)
}

/// Optical-length change that detunes a resonance to half maximum: λ/(2F).
pub fn resonance_length_tolerance(lambda_nm: f64, finesse: f64) -> Result<f64> {
    if !(lambda_nm > 0.0) {
        return Err(Error::argument("lambda_nm", "must be positive"));
    }
    if !(finesse > 0.0) {
        return Err(Error::argument("finesse", "must be positive"));
    }
    Ok(lambda_nm / (2.0 * finesse))
}

/// FWHM of the temperature-detuning response under an ideal pump lock:
/// FWHM_T = λ / (F · L_c · |Δ dn/dT|), where Δ dn/dT is the differential
/// thermo-optic slope between the down-converted and pump optical paths.
pub fn temperature_detuning_fwhm(
    lambda_nm: f64,
    finesse: f64,
    crystal_length_mm: f64,
    delta_dndt_per_k: f64,
) -> Result<f64> {
    if !(lambda_nm > 0.0) || !(finesse > 0.0) || !(crystal_length_mm > 0.0) {
        return Err(Error::argument(
            "temperature_detuning_fwhm",
            "lambda, finesse and crystal length must be positive",
        ));
    }
    if delta_dndt_per_k == 0.0 {
        return Err(Error::argument(
            "delta_dndt_per_k",
            "zero differential thermo-optic slope: no detuning mechanism",
        ));
    }
    Ok(lambda_nm * 1e-9 / (finesse * crystal_length_mm * 1e-3 * delta_dndt_per_k.abs()))
}

/// M frequencies center + m·Δω for m ∈ [−(M−1)/2, (M−1)/2], ascending.
pub fn mode_comb(center_hz: f64, fsr_hz: f64, modes: u32) -> Result<Vec<f64>> {
    if modes == 0 || modes % 2 == 0 {
        return Err(Error::argument("modes", "must be odd and >= 1"));
    }
    let half = (modes as i64 - 1) / 2;
    Ok((-half..=half)
        .map(|m| center_hz + m as f64 * fsr_hz)
        .collect())
}

/// One crystal inside the cavity for the triple-resonance search. The axis
/// assignment carries the 90° rotation of a compensating crystal.
#[derive(Debug, Clone)]
pub struct IntracavityCrystal {
    pub model: IndexModel,
    pub length_mm: f64,
    pub pump_axis: Axis,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
}

impl IntracavityCrystal {
    fn opl_contribution_mm(&self, axis: Axis, lambda_nm: f64, t_c: f64) -> Result<f64> {
        Ok(self.length_mm * refractive_index(&self.model, axis, lambda_nm, t_c)?)
    }
}

/// Inputs for [`find_triple_resonance`].
#[derive(Debug, Clone)]
pub struct TripleResonanceSearch {
    pub crystal1: IntracavityCrystal,
    pub crystal2: IntracavityCrystal,
    /// Air-gap length at the reference temperatures, mm.
    pub air_length_mm: f64,
    pub pump_lambda_nm: f64,
    /// Reference temperatures defining the locked pump optical path.
    pub ref_t1_c: f64,
    pub ref_t2_c: f64,
    /// Cavity bandwidth γ, Hz; acceptance threshold is γ/2.
    pub bandwidth_hz: f64,
    /// Signal modes examined on each side of degeneracy.
    pub mode_window: i64,
}

/// One grid point where both down-converted combs sit within half a cavity
/// bandwidth of an energy-conserving mode pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleResonancePoint {
    pub t1_c: f64,
    pub t2_c: f64,
    pub residual_hz: f64,
}

/// Grid search for simultaneous pump/signal/idler resonance.
///
/// The pump lock is an ideal algebraic constraint: at every grid point the
/// air gap re-solves so the pump optical path equals its locked value, which
/// is snapped to exact pump resonance at the reference temperatures. A point
/// is reported when some energy-conserving mode pair (ν_s + ν_i = ν_p) has
/// residual detuning at most half the cavity bandwidth. Results are sorted by
/// residual, ties broken by (T₁, T₂).
pub fn find_triple_resonance(
    search: &TripleResonanceSearch,
    t1_range_c: (f64, f64),
    t2_range_c: (f64, f64),
    grid_steps: (usize, usize),
) -> Result<Vec<TripleResonancePoint>> {
    let (n1, n2) = grid_steps;
    if n1 == 0 || n2 == 0 {
        return Err(Error::argument("grid_steps", "grids must be non-empty"));
    }
    let lambda_p = search.pump_lambda_nm;
    let lambda_d = 2.0 * lambda_p;
    let nu_p = SPEED_OF_LIGHT_M_PER_S / (lambda_p * 1e-9);

    // Locked pump optical path, snapped to exact resonance at the reference.
    let opl_p_ref_mm = search
        .crystal1
        .opl_contribution_mm(search.crystal1.pump_axis, lambda_p, search.ref_t1_c)?
        + search
            .crystal2
            .opl_contribution_mm(search.crystal2.pump_axis, lambda_p, search.ref_t2_c)?
        + search.air_length_mm;
    let pump_order = (2.0 * opl_p_ref_mm * 1e-3 * nu_p / SPEED_OF_LIGHT_M_PER_S).round();
    let opl_p_locked_mm = pump_order * SPEED_OF_LIGHT_M_PER_S / (2.0 * nu_p) * 1e3;

    let t1_at = |i: usize| grid_value(t1_range_c, n1, i);
    let t2_at = |j: usize| grid_value(t2_range_c, n2, j);

    let points: Result<Vec<Option<TripleResonancePoint>>> = (0..n1 * n2)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n2, k % n2);
            let (t1, t2) = (t1_at(i), t2_at(j));
            let c1 = &search.crystal1;
            let c2 = &search.crystal2;
            let air_mm = opl_p_locked_mm
                - c1.opl_contribution_mm(c1.pump_axis, lambda_p, t1)?
                - c2.opl_contribution_mm(c2.pump_axis, lambda_p, t2)?;
            let opl_s_mm = c1.opl_contribution_mm(c1.signal_axis, lambda_d, t1)?
                + c2.opl_contribution_mm(c2.signal_axis, lambda_d, t2)?
                + air_mm;
            let opl_i_mm = c1.opl_contribution_mm(c1.idler_axis, lambda_d, t1)?
                + c2.opl_contribution_mm(c2.idler_axis, lambda_d, t2)?
                + air_mm;
            let fsr_s = SPEED_OF_LIGHT_M_PER_S / (2.0 * opl_s_mm * 1e-3);
            let fsr_i = SPEED_OF_LIGHT_M_PER_S / (2.0 * opl_i_mm * 1e-3);
            let q0 = (0.5 * nu_p / fsr_s).round() as i64;
            let mut best = f64::INFINITY;
            for q in (q0 - search.mode_window)..=(q0 + search.mode_window) {
                let nu_s = q as f64 * fsr_s;
                let target_i = nu_p - nu_s;
                let r = (target_i / fsr_i).round();
                let residual = (target_i - r * fsr_i).abs();
                if residual < best {
                    best = residual;
                }
            }
            Ok((best <= search.bandwidth_hz / 2.0).then_some(TripleResonancePoint {
                t1_c: t1,
                t2_c: t2,
                residual_hz: best,
            }))
        })
        .collect();

    let mut hits: Vec<TripleResonancePoint> = points?.into_iter().flatten().collect();
    hits.sort_by(|a, b| {
        a.residual_hz
            .total_cmp(&b.residual_hz)
            .then(a.t1_c.total_cmp(&b.t1_c))
            .then(a.t2_c.total_cmp(&b.t2_c))
    });
    Ok(hits)
}

fn grid_value(range: (f64, f64), steps: usize, i: usize) -> f64 {
    if steps == 1 {
        range.0
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (steps - 1) as f64
    }
}
