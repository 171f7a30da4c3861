//! Refractive-index and quasi-phase-matching models.
//!
//! A crystal axis is described by a single-pole Sellmeier form evaluated at a
//! reference temperature plus a linearized thermo-optic slope per wavelength
//! band. Coefficients are configuration inputs; nothing here is tied to one
//! material.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Crystal axes relevant to type-II phase matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Y,
    Z,
}

/// Thermo-optic slope over one wavelength band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThermoOpticBand {
    pub lambda_lo_nm: f64,
    pub lambda_hi_nm: f64,
    pub dn_dt_per_k: f64,
}

/// Dispersion of a single crystal axis: n²(λ) = a + b/(λ² − c), λ in µm,
/// plus banded dn/dT slopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisDispersion {
    pub sellmeier_a: f64,
    pub sellmeier_b: f64,
    pub sellmeier_c_um2: f64,
    pub thermo_optic: Vec<ThermoOpticBand>,
}

impl AxisDispersion {
    fn n_ref(&self, lambda_nm: f64) -> f64 {
        let l2 = (lambda_nm * 1e-3).powi(2);
        (self.sellmeier_a + self.sellmeier_b / (l2 - self.sellmeier_c_um2)).sqrt()
    }

    fn dn_dt(&self, lambda_nm: f64) -> Result<f64> {
        self.thermo_optic
            .iter()
            .find(|b| lambda_nm >= b.lambda_lo_nm && lambda_nm <= b.lambda_hi_nm)
            .map(|b| b.dn_dt_per_k)
            .ok_or_else(|| Error::Lookup(format!("no thermo-optic band covers {lambda_nm} nm")))
    }
}

/// Refractive-index model for both axes of a biaxial crystal cut for
/// propagation along x, valid over bounded wavelength and temperature ranges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexModel {
    pub y: AxisDispersion,
    pub z: AxisDispersion,
    pub t_ref_c: f64,
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub t_min_c: f64,
    pub t_max_c: f64,
}

impl IndexModel {
    pub fn axis(&self, axis: Axis) -> &AxisDispersion {
        match axis {
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }

    fn check_ranges(&self, lambda_nm: f64, t_c: f64) -> Result<()> {
        if !(lambda_nm >= self.lambda_min_nm && lambda_nm <= self.lambda_max_nm) {
            return Err(Error::OutOfRange {
                param: "lambda_nm",
                value: lambda_nm,
                min: self.lambda_min_nm,
                max: self.lambda_max_nm,
            });
        }
        if !(t_c >= self.t_min_c && t_c <= self.t_max_c) {
            return Err(Error::OutOfRange {
                param: "temperature_c",
                value: t_c,
                min: self.t_min_c,
                max: self.t_max_c,
            });
        }
        Ok(())
    }

    /// Swap the two axes, as for an identical crystal rotated by 90° about
    /// the propagation direction.
    pub fn rotated(&self) -> IndexModel {
        IndexModel {
            y: self.z.clone(),
            z: self.y.clone(),
            ..self.clone()
        }
    }
}

/// n(λ, T) = n_ref(λ) + dn/dT · (T − T_ref). Pure; evaluation outside the
/// model's validity ranges is an error, never an extrapolation.
pub fn refractive_index(model: &IndexModel, axis: Axis, lambda_nm: f64, t_c: f64) -> Result<f64> {
    model.check_ranges(lambda_nm, t_c)?;
    let disp = model.axis(axis);
    let n = disp.n_ref(lambda_nm) + disp.dn_dt(lambda_nm)? * (t_c - model.t_ref_c);
    if !(n > 1.0) {
        return Err(Error::Invariant(format!(
            "index model yields n = {n} <= 1 at {lambda_nm} nm, {t_c} C"
        )));
    }
    Ok(n)
}

/// Periodically poled crystal for collinear type-II quasi-phase matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpmCrystal {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub pump_axis: Axis,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
    pub index_model: IndexModel,
}

impl QpmCrystal {
    pub fn new(
        length_mm: f64,
        poling_period_um: f64,
        pump_axis: Axis,
        signal_axis: Axis,
        idler_axis: Axis,
        index_model: IndexModel,
    ) -> Result<Self> {
        if !(length_mm > 0.0) {
            return Err(Error::argument("length_mm", "must be positive"));
        }
        if !(poling_period_um > 0.0) {
            return Err(Error::argument("poling_period_um", "must be positive"));
        }
        Ok(QpmCrystal {
            length_mm,
            poling_period_um,
            pump_axis,
            signal_axis,
            idler_axis,
            index_model,
        })
    }
}

const ENERGY_CONSERVATION_TOL_PER_NM: f64 = 1e-9;

/// Signed quasi-phase-matching mismatch in rad/m:
/// Δk = 2π[n_p(λ_p)/λ_p − n_s(λ_s)/λ_s − n_i(λ_i)/λ_i − 1/Λ].
///
/// Δk = 0 defines perfect QPM. Requires 1/λ_p = 1/λ_s + 1/λ_i.
pub fn qpm_mismatch(
    crystal: &QpmCrystal,
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    t_c: f64,
) -> Result<f64> {
    let defect = (1.0 / lambda_p_nm - 1.0 / lambda_s_nm - 1.0 / lambda_i_nm).abs();
    if defect > ENERGY_CONSERVATION_TOL_PER_NM {
        return Err(Error::Invariant(format!(
            "energy conservation violated: |1/lp - 1/ls - 1/li| = {defect:e} per nm"
        )));
    }
    let model = &crystal.index_model;
    let n_p = refractive_index(model, crystal.pump_axis, lambda_p_nm, t_c)?;
    let n_s = refractive_index(model, crystal.signal_axis, lambda_s_nm, t_c)?;
    let n_i = refractive_index(model, crystal.idler_axis, lambda_i_nm, t_c)?;
    let period_nm = crystal.poling_period_um * 1e3;
    let per_nm = n_p / lambda_p_nm - n_s / lambda_s_nm - n_i / lambda_i_nm - 1.0 / period_nm;
    Ok(2.0 * std::f64::consts::PI * per_nm * 1e9)
}

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Normalized conversion-efficiency tuning curve P(T) = sinc²(Δk(T)·L/2),
/// rescaled so the sampled maximum is exactly 1.
pub fn tuning_curve(
    crystal: &QpmCrystal,
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    t_range_c: (f64, f64),
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(Error::argument("samples", "need at least 2"));
    }
    let (lo, hi) = t_range_c;
    if !(hi > lo) {
        return Err(Error::argument("t_range_c", "empty temperature range"));
    }
    let step = (hi - lo) / (samples - 1) as f64;
    let half_length_m = crystal.length_mm * 1e-3 / 2.0;
    let mut curve = Vec::with_capacity(samples);
    for j in 0..samples {
        let t = lo + step * j as f64;
        let dk = qpm_mismatch(crystal, lambda_p_nm, lambda_s_nm, lambda_i_nm, t)?;
        curve.push((t, sinc(dk * half_length_m).powi(2)));
    }
    let max = curve.iter().map(|&(_, p)| p).fold(f64::MIN, f64::max);
    if max > 0.0 {
        for (_, p) in &mut curve {
            *p /= max;
        }
    }
    Ok(curve)
}

const DEGENERATE_TOL_RAD_PER_M: f64 = 1e-3;

/// Degenerate operating temperature: bisection on the sign change of
/// Δk(T) for λ_s = λ_i = 2λ_p, to |Δk| ≤ 1e-3 rad/m.
pub fn degenerate_temperature(
    crystal: &QpmCrystal,
    lambda_p_nm: f64,
    t_bracket_c: (f64, f64),
) -> Result<f64> {
    let lambda_d = 2.0 * lambda_p_nm;
    let dk = |t: f64| qpm_mismatch(crystal, lambda_p_nm, lambda_d, lambda_d, t);
    let (mut lo, mut hi) = t_bracket_c;
    let mut f_lo = dk(lo)?;
    let f_hi = dk(hi)?;
    if f_lo.abs() <= DEGENERATE_TOL_RAD_PER_M {
        return Ok(lo);
    }
    if f_hi.abs() <= DEGENERATE_TOL_RAD_PER_M {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = dk(mid)?;
        if f_mid.abs() <= DEGENERATE_TOL_RAD_PER_M || (hi - lo) < 1e-12 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
