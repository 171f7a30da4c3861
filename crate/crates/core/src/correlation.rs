//! Biphoton cross-correlation traces, detector response, and their
//! convolution.
//!
//! The multi-mode correlation is evaluated as a paired sum over
//! energy-conserving cavity mode pairs (m_s = m, m_i = −m). All overall
//! constants are absorbed by peak normalization; absolute scale lives in the
//! detection simulation.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};
use serde::Serialize;

use crate::cavity::CombSpec;
use crate::error::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Uniform τ grid, strictly ascending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauGrid {
    start_s: f64,
    step_s: f64,
    len: usize,
}

impl TauGrid {
    pub fn new(start_s: f64, step_s: f64, len: usize) -> Result<Self> {
        if !(step_s > 0.0) {
            return Err(Error::argument("step_s", "must be positive"));
        }
        if len < 2 {
            return Err(Error::argument("len", "need at least 2 samples"));
        }
        Ok(TauGrid { start_s, step_s, len })
    }

    /// Symmetric grid about τ = 0, including 0 exactly.
    pub fn symmetric(half_span_s: f64, step_s: f64) -> Result<Self> {
        if !(half_span_s > 0.0) {
            return Err(Error::argument("half_span_s", "must be positive"));
        }
        let half = (half_span_s / step_s).round().max(1.0) as usize;
        TauGrid::new(-(half as f64) * step_s, step_s, 2 * half + 1)
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn step_s(&self) -> f64 {
        self.step_s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start_s + self.step_s * i as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.value(i))
    }
}

/// Peak-normalized correlation trace on a uniform τ grid.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationTrace {
    grid: TauGrid,
    values: Vec<f64>,
    /// Comb the trace was generated from, if any.
    pub comb: Option<CombSpec>,
    /// Detector-response width folded in; 0 for unconvolved traces.
    pub sigma_s: f64,
}

impl CorrelationTrace {
    /// Build from raw non-negative samples; rescales so max = 1 exactly.
    pub fn from_raw(
        grid: TauGrid,
        mut raw: Vec<f64>,
        comb: Option<CombSpec>,
        sigma_s: f64,
    ) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::argument("values", "length does not match grid"));
        }
        let mut max = f64::MIN;
        for &v in &raw {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Shape(format!("non-finite or negative sample {v}")));
            }
            max = max.max(v);
        }
        if !(max > 0.0) {
            return Err(Error::Shape("all-zero trace cannot be normalized".into()));
        }
        for v in &mut raw {
            *v /= max;
        }
        Ok(CorrelationTrace {
            grid,
            values: raw,
            comb,
            sigma_s,
        })
    }

    pub fn grid(&self) -> &TauGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().zip(self.values.iter().copied())
    }
}

/// Single-mode degenerate correlation e^{−2πγ|τ|}.
pub fn g2_single_mode(gamma_hz: f64, tau_s: f64) -> Result<f64> {
    if !(gamma_hz > 0.0) {
        return Err(Error::argument("gamma_hz", "must be positive"));
    }
    Ok((-2.0 * PI * gamma_hz * tau_s.abs()).exp())
}

/// Gaussian detection-system response h(t) = e^{−t²/σ²}.
pub fn detector_response(sigma_s: f64, t_s: f64) -> Result<f64> {
    if !(sigma_s > 0.0) {
        return Err(Error::argument("sigma_s", "must be positive"));
    }
    Ok((-(t_s / sigma_s).powi(2)).exp())
}

/// Decay (coherence) time T_c = 1.39 / (2πγ); 1.39 ≈ 2 ln 2, so this equals
/// the FWHM of e^{−2πγ|τ|} to 0.3%.
pub fn coherence_time(gamma_hz: f64) -> Result<f64> {
    if !(gamma_hz > 0.0) {
        return Err(Error::argument("gamma_hz", "must be positive"));
    }
    Ok(1.39 / (2.0 * PI * gamma_hz))
}

/// How the mode indices of the two combs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeSum {
    /// Energy-conserving pairing m_i = −m_s (single sum). The physical case
    /// for a monochromatic pump with aligned combs.
    #[default]
    Paired,
    /// Independent double sum over m_s and m_i, for comparison. Off-diagonal
    /// terms are suppressed by the (m_s + m_i)Δω detuning in the denominator.
    Independent,
}

/// sinc(iπτ₀Γ) = sinh(πτ₀Γ)/(πτ₀Γ), with the τ₀ → 0 limit of 1.
fn crystal_delay_factor(tau0_s: f64, big_gamma_hz: Complex64) -> Complex64 {
    let z = PI * tau0_s * big_gamma_hz;
    if z.norm() < 1e-12 {
        Complex64::new(1.0, 0.0)
    } else {
        z.sinh() / z
    }
}

struct ModeWeights {
    /// Weight per mode index m ∈ [−half, half] for the τ ≥ τ₀/2 branch.
    right: Vec<Complex64>,
    /// Same for the τ < τ₀/2 branch.
    left: Vec<Complex64>,
    half: i64,
}

fn mode_weights(spec: &CombSpec, sum: ModeSum) -> ModeWeights {
    let half = (spec.modes as i64 - 1) / 2;
    let gamma_bar = 0.5 * (spec.gamma_s_hz + spec.gamma_i_hz);
    let gs = |m: i64| Complex64::new(spec.gamma_s_hz / 2.0, m as f64 * spec.fsr_hz);
    let gi = |m: i64| Complex64::new(spec.gamma_i_hz / 2.0, m as f64 * spec.fsr_hz);
    let mut right = Vec::with_capacity((2 * half + 1) as usize);
    let mut left = Vec::with_capacity((2 * half + 1) as usize);
    match sum {
        ModeSum::Paired => {
            // Γ_s + Γ_i = (γ_s + γ_i)/2 for the paired indices.
            let denom = Complex64::new(gamma_bar, 0.0);
            for m in -half..=half {
                right.push(crystal_delay_factor(spec.tau0_s, gs(m)) / denom);
                left.push(crystal_delay_factor(spec.tau0_s, gi(-m)) / denom);
            }
        }
        ModeSum::Independent => {
            // Collapse the partner-mode sum into a per-mode weight.
            for m in -half..=half {
                let mut acc_r = Complex64::new(0.0, 0.0);
                let mut acc_l = Complex64::new(0.0, 0.0);
                for p in -half..=half {
                    acc_r += crystal_delay_factor(spec.tau0_s, gs(m)) / (gs(m) + gi(p));
                    acc_l += crystal_delay_factor(spec.tau0_s, gi(-m)) / (gs(p) + gi(-m));
                }
                right.push(acc_r);
                left.push(acc_l);
            }
        }
    }
    ModeWeights { right, left, half }
}

fn g2_value(spec: &CombSpec, weights: &ModeWeights, tau_s: f64) -> f64 {
    let tp = tau_s - spec.tau0_s / 2.0;
    let (env, w) = if tp >= 0.0 {
        ((-PI * spec.gamma_s_hz * tp).exp(), &weights.right)
    } else {
        ((PI * spec.gamma_i_hz * tp).exp(), &weights.left)
    };
    // Σ_m w_m z^m with z = e^{−2πiΔω τ'}, accumulated from m = 0 outward.
    let phase = -2.0 * PI * spec.fsr_hz * tp;
    let z = Complex64::new(phase.cos(), phase.sin());
    let mid = weights.half as usize;
    let mut acc = w[mid];
    let mut zp = Complex64::new(1.0, 0.0);
    for m in 1..=weights.half as usize {
        zp *= z;
        acc += w[mid + m] * zp + w[mid - m] * zp.conj();
    }
    (env * acc.norm()).powi(2)
}

/// Multi-mode cross-correlation G²(τ) on the given grid, peak-normalized.
pub fn g2_multimode(spec: &CombSpec, grid: &TauGrid) -> Result<CorrelationTrace> {
    g2_multimode_with(spec, grid, ModeSum::Paired)
}

/// As [`g2_multimode`], with the mode-pairing rule selectable.
pub fn g2_multimode_with(
    spec: &CombSpec,
    grid: &TauGrid,
    sum: ModeSum,
) -> Result<CorrelationTrace> {
    let weights = mode_weights(spec, sum);
    let raw = g2_samples(spec, &weights, grid);
    CorrelationTrace::from_raw(*grid, raw, Some(spec.clone()), 0.0)
}

fn g2_samples(spec: &CombSpec, weights: &ModeWeights, grid: &TauGrid) -> Vec<f64> {
    // Parallel over samples; each sample sums modes in a fixed order, so the
    // result is bit-identical regardless of partitioning.
    (0..grid.len())
        .into_par_iter()
        .map(|i| g2_value(spec, weights, grid.value(i)))
        .collect()
}

/// Un-normalized G² at a single exact τ. Test and envelope-diagnostic hook;
/// shares the evaluation path with [`g2_multimode`].
pub fn g2_multimode_at(spec: &CombSpec, tau_s: f64) -> f64 {
    let weights = mode_weights(spec, ModeSum::Paired);
    g2_value(spec, &weights, tau_s)
}

/// Full width at half maximum by linear interpolation on each side of the
/// global peak. Exact for piecewise-linear traces.
pub fn fwhm(trace: &CorrelationTrace) -> Result<f64> {
    let v = trace.values();
    let (peak_idx, &peak) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("trace is non-empty");
    if peak_idx == 0 || peak_idx == v.len() - 1 {
        return Err(Error::Shape("global maximum sits on a grid boundary".into()));
    }
    let half = 0.5 * peak;
    let step = trace.grid().step_s();
    let cross = |a_idx: usize, b_idx: usize| -> f64 {
        let (va, vb) = (v[a_idx], v[b_idx]);
        let frac = (va - half) / (va - vb);
        trace.grid().value(a_idx) + frac * (trace.grid().value(b_idx) - trace.grid().value(a_idx))
    };
    let mut right = None;
    for i in peak_idx + 1..v.len() {
        if v[i] < half {
            right = Some(cross(i - 1, i));
            break;
        }
    }
    let mut left = None;
    for i in (0..peak_idx).rev() {
        if v[i] < half {
            left = Some(cross(i + 1, i));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Shape(
            "trace never falls below half maximum on both sides".into(),
        )),
    }
    .and_then(|w| {
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::Shape(format!("degenerate width {w} from step {step}")))
        }
    })
}

/// Convolution of a trace with the Gaussian detector response, evaluated by
/// discrete quadrature on the trace grid and peak-normalized.
///
/// The grid must resolve the kernel (step ≤ σ/4); kernels narrower than a
/// quarter grid step degenerate to the identity and are passed through the
/// same quadrature, which then reduces to a single-sample sum. The trace must
/// extend at least 5σ beyond the region of interest at both ends (enforced as
/// total span ≥ 10σ); values within 5σ of the boundary are edge-affected.
pub fn convolve_response(trace: &CorrelationTrace, sigma_s: f64) -> Result<CorrelationTrace> {
    if !(sigma_s > 0.0) {
        return Err(Error::argument("sigma_s", "must be positive"));
    }
    let step = trace.grid().step_s();
    if step > sigma_s / 4.0 && sigma_s > step / 4.0 {
        return Err(Error::Resolution {
            step_s: step,
            required_s: sigma_s / 4.0,
        });
    }
    let span = step * (trace.grid().len() - 1) as f64;
    if span < 10.0 * sigma_s {
        return Err(Error::argument(
            "trace",
            format!("span {span} s shorter than 10 sigma = {} s", 10.0 * sigma_s),
        ));
    }
    let raw = convolve_fft(trace.values(), step, sigma_s);
    CorrelationTrace::from_raw(*trace.grid(), raw, trace.comb.clone(), sigma_s)
}

/// Linear convolution with a sampled Gaussian via zero-padded FFT,
/// out[k] = Σ_j v[j]·h((k−j)·step)·step.
fn convolve_fft(values: &[f64], step_s: f64, sigma_s: f64) -> Vec<f64> {
    let n = values.len();
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);

    let mut sig: Vec<FftComplex<f64>> = values
        .iter()
        .map(|&v| FftComplex::new(v, 0.0))
        .chain(std::iter::repeat(FftComplex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut ker = vec![FftComplex::new(0.0, 0.0); len];
    for m in -(n as i64 - 1)..=(n as i64 - 1) {
        let h = (-((m as f64 * step_s) / sigma_s).powi(2)).exp();
        let idx = m.rem_euclid(len as i64) as usize;
        ker[idx].re += h;
    }
    fft.process(&mut sig);
    fft.process(&mut ker);
    for (s, k) in sig.iter_mut().zip(&ker) {
        *s *= *k;
    }
    ifft.process(&mut sig);
    let scale = step_s / len as f64;
    sig[..n].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

/// Raw and detector-convolved multi-mode correlation on an output grid.
///
/// The convolution integral is evaluated on an internal grid fine enough to
/// sample the comb alias-free (the paired G² is band-limited to (M−1)Δω) and
/// to resolve the kernel, then decimated onto the requested grid. The raw
/// trace is evaluated directly on the output grid.
pub fn convolved_correlation(
    spec: &CombSpec,
    sigma_s: f64,
    output_grid: &TauGrid,
) -> Result<(CorrelationTrace, CorrelationTrace)> {
    if !(sigma_s > 0.0) {
        return Err(Error::argument("sigma_s", "must be positive"));
    }
    let raw = g2_multimode(spec, output_grid)?;

    let max_comb_hz = (spec.modes.max(1) - 1) as f64 * spec.fsr_hz;
    let alias_limit_s = if max_comb_hz > 0.0 {
        1.0 / (4.0 * max_comb_hz)
    } else {
        f64::INFINITY
    };
    let target = (sigma_s / 4.0).min(alias_limit_s);
    let refine = (output_grid.step_s() / target).ceil().max(1.0) as usize;
    let fine_step = output_grid.step_s() / refine as f64;

    // Margin so the output region sits ≥ 6σ from the fine-grid boundary.
    let margin_out = (6.0 * sigma_s / output_grid.step_s()).ceil() as usize;
    let fine_start = output_grid.start_s() - margin_out as f64 * output_grid.step_s();
    let fine_len = (output_grid.len() - 1 + 2 * margin_out) * refine + 1;
    let fine_grid = TauGrid::new(fine_start, fine_step, fine_len)?;

    let weights = mode_weights(spec, ModeSum::Paired);
    let fine_raw = g2_samples(spec, &weights, &fine_grid);
    let fine_conv = convolve_fft(&fine_raw, fine_step, sigma_s);

    let decimated: Vec<f64> = (0..output_grid.len())
        .map(|i| fine_conv[(margin_out + i) * refine])
        .collect();
    let convolved =
        CorrelationTrace::from_raw(*output_grid, decimated, Some(spec.clone()), sigma_s)?;
    Ok((raw, convolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn comb(gamma_hz: f64, fsr_hz: f64, modes: u32, tau0_s: f64) -> CombSpec {
        let omega = 1.922e14;
        CombSpec::new(gamma_hz, gamma_hz, fsr_hz, modes, tau0_s, omega, omega).unwrap()
    }

    #[test]
    fn grid_is_uniform_and_contains_zero() {
        let g = TauGrid::symmetric(150e-9, 0.05e-9).unwrap();
        assert_eq!(g.len(), 6001);
        assert_abs_diff_eq!(g.value(3000), 0.0, epsilon = 1e-24);
        let step = g.value(1) - g.value(0);
        assert_relative_eq!(step, 0.05e-9, max_relative = 1e-12);
    }

    #[test]
    fn single_mode_values() {
        assert_eq!(g2_single_mode(8e6, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            g2_single_mode(8e6, 27.66e-9).unwrap(),
            0.249,
            max_relative = 1e-3
        );
        assert!(g2_single_mode(0.0, 1.0).is_err());
    }

    #[test]
    fn detector_response_values() {
        assert_eq!(detector_response(1.4e-9, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            detector_response(2.0e-9, 2.0e-9).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            detector_response(1.4e-9, 2.8e-9).unwrap(),
            0.0183,
            max_relative = 1e-2
        );
        assert!(detector_response(0.0, 1.0).is_err());
        // Even function.
        assert_eq!(
            detector_response(1.4e-9, 2.2e-9).unwrap(),
            detector_response(1.4e-9, -2.2e-9).unwrap()
        );
    }

    #[test]
    fn coherence_time_values() {
        assert_relative_eq!(coherence_time(8e6).unwrap(), 27.66e-9, max_relative = 1e-3);
        assert_relative_eq!(
            coherence_time(16e6).unwrap(),
            coherence_time(8e6).unwrap() / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn coherence_time_matches_single_mode_fwhm() {
        let gamma = 8e6;
        let grid = TauGrid::symmetric(120e-9, 0.05e-9).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| g2_single_mode(gamma, t).unwrap())
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        let width = fwhm(&trace).unwrap();
        let tc = coherence_time(gamma).unwrap();
        assert!((tc - width).abs() / width < 3e-3);
        // Analytic value ln 2/(πγ).
        assert_relative_eq!(
            width,
            2.0f64.ln() / (PI * gamma),
            max_relative = 1e-4
        );
    }

    #[test]
    fn single_mode_limit_of_multimode() {
        let spec = comb(8e6, 80e6, 1, 0.0);
        let grid = TauGrid::symmetric(100e-9, 0.1e-9).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        for (tau, v) in trace.samples() {
            let expect = g2_single_mode(8e6, tau).unwrap();
            assert_abs_diff_eq!(v, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn multimode_comb_peaks_and_envelope() {
        let spec = comb(8e6, 0.952e9, 255, 0.0);
        // Resolve the teeth: width ~ 1/(MΔω) ≈ 4 ps.
        let grid = TauGrid::symmetric(8e-9, 0.2e-12).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        let v = trace.values();
        // Local maxima above 10% of peak.
        let mut peaks = Vec::new();
        for i in 1..v.len() - 1 {
            if v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > 0.1 {
                peaks.push(trace.grid().value(i));
            }
        }
        let expected_spacing = 1.0 / 0.952e9;
        assert!(peaks.len() >= 15, "found {} comb peaks", peaks.len());
        for pair in peaks.windows(2) {
            let spacing = pair[1] - pair[0];
            assert!(
                (spacing - expected_spacing).abs() <= trace.grid().step_s(),
                "comb spacing {spacing} vs expected {expected_spacing}"
            );
        }
        assert_relative_eq!(expected_spacing, 1.0504e-9, max_relative = 1e-3);
    }

    #[test]
    fn envelope_decay_at_exact_tooth_centers() {
        let spec = comb(8e6, 0.952e9, 255, 0.0);
        let spacing = 1.0 / spec.fsr_hz;
        let peak0 = g2_multimode_at(&spec, 0.0);
        for k in 1..60 {
            let tau = k as f64 * spacing;
            let ratio = g2_multimode_at(&spec, tau) / peak0;
            let expect = (-2.0 * PI * 8e6 * tau).exp();
            assert_relative_eq!(ratio, expect, max_relative = 1e-6);
        }
        // Per-tooth decay factor.
        let r = g2_multimode_at(&spec, spacing) / peak0;
        assert_relative_eq!(r, 0.99947, max_relative = 1e-4);
    }

    #[test]
    fn time_symmetry_for_symmetric_spec() {
        let spec = comb(8e6, 0.952e9, 31, 0.0);
        let grid = TauGrid::symmetric(20e-9, 0.01e-9).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        let v = trace.values();
        let n = v.len();
        for i in 0..n {
            assert_abs_diff_eq!(v[i], v[n - 1 - i], epsilon = 1e-9);
        }
    }

    #[test]
    fn normalization_exact() {
        let spec = comb(8e6, 0.952e9, 31, 0.0);
        let grid = TauGrid::symmetric(20e-9, 0.05e-9).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        let max = trace.values().iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn unconstrained_sum_close_to_paired_for_resolved_comb() {
        // Off-diagonal terms are suppressed by ~γ/Δω, so the two summation
        // rules agree closely at tooth centers.
        let spec = comb(8e6, 0.952e9, 21, 0.0);
        let grid = TauGrid::symmetric(4e-9, 0.5e-12).unwrap();
        let paired = g2_multimode_with(&spec, &grid, ModeSum::Paired).unwrap();
        let indep = g2_multimode_with(&spec, &grid, ModeSum::Independent).unwrap();
        let i0 = grid.len() / 2;
        assert_relative_eq!(
            paired.values()[i0],
            indep.values()[i0],
            max_relative = 1e-3
        );
    }

    #[test]
    fn tau0_delay_shifts_branch_point() {
        let tau0 = 2e-12;
        let spec = comb(8e6, 0.952e9, 1, tau0);
        let grid = TauGrid::symmetric(50e-9, 0.05e-9).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        // Peak moves to τ₀/2; with a 50 ps grid it stays within one step.
        let (idx, _) = trace
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let peak_tau = trace.grid().value(idx);
        assert!((peak_tau - tau0 / 2.0).abs() <= grid.step_s());
    }

    #[test]
    fn fwhm_triangle_is_exact() {
        let grid = TauGrid::new(-2.0, 0.25, 17).unwrap();
        let w = 1.0;
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| (1.0 - (t / w).abs()).max(0.0))
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        assert_abs_diff_eq!(fwhm(&trace).unwrap(), w, epsilon = 1e-12);
    }

    #[test]
    fn fwhm_gaussian() {
        let sigma = 1.4e-9;
        let grid = TauGrid::symmetric(10e-9, 0.01e-9).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| detector_response(sigma, t).unwrap())
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        let expect = 2.0 * sigma * (2.0f64.ln()).sqrt();
        assert!((fwhm(&trace).unwrap() - expect).abs() <= grid.step_s());
    }

    #[test]
    fn fwhm_exponential() {
        let gamma = 8e6;
        let grid = TauGrid::symmetric(100e-9, 0.05e-9).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| g2_single_mode(gamma, t).unwrap())
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        assert_abs_diff_eq!(fwhm(&trace).unwrap(), 27.6e-9, epsilon = 0.1e-9);
    }

    #[test]
    fn fwhm_shape_errors() {
        let grid = TauGrid::new(0.0, 1.0, 8).unwrap();
        // Monotone ramp: peak on the boundary.
        let ramp: Vec<f64> = (0..8).map(|i| i as f64 + 1.0).collect();
        let trace = CorrelationTrace::from_raw(grid, ramp, None, 0.0).unwrap();
        assert!(matches!(fwhm(&trace), Err(Error::Shape(_))));
        // Never falls below half.
        let flatish: Vec<f64> = vec![0.9, 0.95, 1.0, 0.95, 0.9, 0.9, 0.9, 0.9];
        let trace = CorrelationTrace::from_raw(grid, flatish, None, 0.0).unwrap();
        assert!(matches!(fwhm(&trace), Err(Error::Shape(_))));
    }

    #[test]
    fn convolve_near_delta_kernel_is_identity() {
        let gamma = 8e6;
        let grid = TauGrid::symmetric(100e-9, 0.1e-9).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| g2_single_mode(gamma, t).unwrap())
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        let out = convolve_response(&trace, 0.1e-9 / 100.0).unwrap();
        for (a, b) in trace.values().iter().zip(out.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-3);
        }
    }

    #[test]
    fn convolve_impulse_gives_kernel() {
        let sigma = 1.0e-9;
        let grid = TauGrid::symmetric(8e-9, 0.05e-9).unwrap();
        let mut raw = vec![0.0; grid.len()];
        raw[grid.len() / 2] = 1.0;
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        let out = convolve_response(&trace, sigma).unwrap();
        for (t, v) in out.samples() {
            let expect = detector_response(sigma, t).unwrap();
            assert_abs_diff_eq!(v, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn convolve_resolution_rule() {
        let grid = TauGrid::symmetric(100e-9, 1.0e-9).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|t| g2_single_mode(8e6, t).unwrap())
            .collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        match convolve_response(&trace, 1.4e-9) {
            Err(Error::Resolution { required_s, .. }) => {
                assert_relative_eq!(required_s, 1.4e-9 / 4.0, max_relative = 1e-12);
            }
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn convolve_span_rule() {
        let grid = TauGrid::symmetric(4e-9, 0.05e-9).unwrap();
        let raw: Vec<f64> = grid.iter().map(|t| g2_single_mode(8e6, t).unwrap()).collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        assert!(convolve_response(&trace, 1.4e-9).is_err());
    }

    #[test]
    fn convolve_preserves_symmetry() {
        let spec = comb(8e6, 0.952e9, 1, 0.0);
        let grid = TauGrid::symmetric(100e-9, 0.1e-9).unwrap();
        let trace = g2_multimode(&spec, &grid).unwrap();
        let out = convolve_response(&trace, 1.4e-9).unwrap();
        let v = out.values();
        let n = v.len();
        for i in 0..n {
            assert_abs_diff_eq!(v[i], v[n - 1 - i], epsilon = 1e-9);
        }
    }

    #[test]
    fn paper_parameters_give_27_7_ns() {
        let spec = comb(8e6, 0.952e9, 255, 0.0);
        let grid = TauGrid::symmetric(150e-9, 0.05e-9).unwrap();
        let (_, convolved) = convolved_correlation(&spec, 1.4e-9, &grid).unwrap();
        let width = fwhm(&convolved).unwrap();
        assert_abs_diff_eq!(width, 27.7e-9, epsilon = 0.5e-9);
    }
}
