//! Monte Carlo simulation of the photon-counting chain: Poisson pair
//! emission, Bernoulli loss thinning, two gated APDs with dead time and dark
//! counts, and delay-scanned coincidence histograms.
//!
//! Detector 1 runs on an internal trigger; each of its clicks, shifted by the
//! scanned electrical delay, opens detector 2's gate. Event times are
//! continuous seconds; histogramming happens only at the coincidence level.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correlation::CorrelationTrace;
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-point, per-stage seed: (seed, index) as the scan
/// contract requires, with a lane per random stage.
pub fn derive_seed(seed: u64, index: u64, lane: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(index)).wrapping_add(lane))
}

/// Signal–idler delay distribution of the source.
#[derive(Debug, Clone)]
pub enum CorrelationShape {
    /// pdf ∝ e^{−2πγ|τ|}.
    SingleMode { gamma_hz: f64 },
    /// pdf proportional to a sampled trace, linear within each grid cell.
    Trace(CorrelationTrace),
}

impl CorrelationShape {
    /// Upper bound on |t_idler − t_signal|; the single-mode sampler clamps
    /// at a tail probability of e⁻⁴⁵.
    pub fn offset_bound_s(&self) -> f64 {
        match self {
            CorrelationShape::SingleMode { gamma_hz } => 45.0 / (TWO_PI * gamma_hz),
            CorrelationShape::Trace(t) => {
                let g = t.grid();
                g.start_s().abs().max(g.value(g.len() - 1).abs())
            }
        }
    }
}

enum OffsetSampler {
    SingleMode { inv_rate_s: f64, bound_s: f64 },
    Table(TableSampler),
}

struct TableSampler {
    start_s: f64,
    step_s: f64,
    values: Vec<f64>,
    /// Cumulative trapezoid mass up to each grid point, scaled to end at 1.
    cdf: Vec<f64>,
}

impl OffsetSampler {
    fn new(shape: &CorrelationShape) -> Result<Self> {
        match shape {
            CorrelationShape::SingleMode { gamma_hz } => {
                if !(*gamma_hz > 0.0) {
                    return Err(Error::argument("gamma_hz", "must be positive"));
                }
                Ok(OffsetSampler::SingleMode {
                    inv_rate_s: 1.0 / (TWO_PI * gamma_hz),
                    bound_s: shape.offset_bound_s(),
                })
            }
            CorrelationShape::Trace(trace) => {
                let v = trace.values();
                let step = trace.grid().step_s();
                let mut cdf = Vec::with_capacity(v.len());
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in v.windows(2) {
                    acc += 0.5 * (w[0] + w[1]) * step;
                    cdf.push(acc);
                }
                if !(acc > 0.0) {
                    return Err(Error::Shape("trace has zero total mass".into()));
                }
                for c in &mut cdf {
                    *c /= acc;
                }
                Ok(OffsetSampler::Table(TableSampler {
                    start_s: trace.grid().start_s(),
                    step_s: step,
                    values: v.to_vec(),
                    cdf,
                }))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            OffsetSampler::SingleMode { inv_rate_s, bound_s } => {
                // One uniform: sign from the half, magnitude exponential.
                let s = 2.0 * rng.gen::<f64>() - 1.0;
                let mag = if s == 0.0 {
                    *bound_s
                } else {
                    (-s.abs().ln() * inv_rate_s).min(*bound_s)
                };
                if s < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            OffsetSampler::Table(t) => t.sample(rng.gen::<f64>()),
        }
    }
}

impl TableSampler {
    fn sample(&self, u: f64) -> f64 {
        let i = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
        .min(self.cdf.len() - 2);
        let cell_mass = self.cdf[i + 1] - self.cdf[i];
        let frac = if cell_mass > 0.0 {
            let target = (u - self.cdf[i]) / cell_mass;
            let v0 = self.values[i];
            let v1 = self.values[i + 1];
            // Invert the linear-density cell: v0·t + (v1−v0)t²/2 = target·(v0+v1)/2.
            let d = v1 - v0;
            if d.abs() < 1e-12 * (v0 + v1) {
                target
            } else {
                let disc = (v0 * v0 + d * (v0 + v1) * target).max(0.0);
                ((disc.sqrt() - v0) / d).clamp(0.0, 1.0)
            }
        } else {
            0.5
        };
        self.start_s + (i as f64 + frac) * self.step_s
    }
}

/// Pair-emission model: Poisson arrivals at rate·power, idler offset drawn
/// from the correlation shape.
#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub pairs_per_s_per_mw: f64,
    pub pump_power_mw: f64,
    pub shape: CorrelationShape,
}

impl SourceConfig {
    pub fn new(pairs_per_s_per_mw: f64, pump_power_mw: f64, shape: CorrelationShape) -> Result<Self> {
        if pairs_per_s_per_mw < 0.0 {
            return Err(Error::argument("pairs_per_s_per_mw", "must be >= 0"));
        }
        if pump_power_mw < 0.0 {
            return Err(Error::argument("pump_power_mw", "must be >= 0"));
        }
        Ok(SourceConfig {
            pairs_per_s_per_mw,
            pump_power_mw,
            shape,
        })
    }

    pub fn pair_rate_hz(&self) -> f64 {
        self.pairs_per_s_per_mw * self.pump_power_mw
    }
}

/// One emitted pair; the idler may precede the signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub t_signal_s: f64,
    pub t_idler_s: f64,
}

/// Streaming pair-event generator, time-ordered by signal time.
pub struct PairEventStream {
    rng: ChaCha8Rng,
    sampler: OffsetSampler,
    rate_hz: f64,
    duration_s: f64,
    t_s: f64,
    done: bool,
}

/// Poisson pair events over `[0, duration_s)`; deterministic per seed.
pub fn generate_pair_events(
    source: &SourceConfig,
    duration_s: f64,
    seed: u64,
) -> Result<PairEventStream> {
    if !(duration_s > 0.0) {
        return Err(Error::argument("duration_s", "must be positive"));
    }
    let rate = source.pair_rate_hz();
    Ok(PairEventStream {
        rng: ChaCha8Rng::seed_from_u64(seed),
        sampler: OffsetSampler::new(&source.shape)?,
        rate_hz: rate,
        duration_s,
        t_s: 0.0,
        done: rate <= 0.0,
    })
}

impl Iterator for PairEventStream {
    type Item = PairEvent;

    fn next(&mut self) -> Option<PairEvent> {
        if self.done {
            return None;
        }
        let u: f64 = self.rng.gen();
        self.t_s += -(1.0 - u).ln() / self.rate_hz;
        if self.t_s >= self.duration_s {
            self.done = true;
            return None;
        }
        let tau = self.sampler.sample(&mut self.rng);
        Some(PairEvent {
            t_signal_s: self.t_s,
            t_idler_s: self.t_s + tau,
        })
    }
}

/// Named transmittance/efficiency factors of the collection chain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossBudget {
    /// SMF collection efficiency, applied to both photons.
    pub alpha: f64,
    /// Signal-arm fiber-splitter coupling.
    pub alpha1: f64,
    /// Idler-arm fiber-splitter coupling.
    pub alpha2: f64,
    /// Long-pass filter transmittance, applied to both photons.
    pub t1: f64,
    /// Filter-cavity transmittance, applied to both photons.
    pub t2: f64,
}

impl LossBudget {
    pub fn new(alpha: f64, alpha1: f64, alpha2: f64, t1: f64, t2: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("alpha1", alpha1),
            ("alpha2", alpha2),
            ("t1", t1),
            ("t2", t2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::argument("loss_factor", format!("{name} = {v} not in (0, 1]")));
            }
        }
        Ok(LossBudget {
            alpha,
            alpha1,
            alpha2,
            t1,
            t2,
        })
    }

    /// Lossless budget, handy for detector-only studies.
    pub fn unity() -> Self {
        LossBudget {
            alpha: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            t1: 1.0,
            t2: 1.0,
        }
    }

    pub fn signal_survival(&self) -> f64 {
        self.alpha * self.alpha1 * self.t1 * self.t2
    }

    pub fn idler_survival(&self) -> f64 {
        self.alpha * self.alpha2 * self.t1 * self.t2
    }

    /// α²·α₁·α₂·t₁²·t₂².
    pub fn pair_survival(&self) -> f64 {
        self.signal_survival() * self.idler_survival()
    }
}

/// Which photon is routed to the internally triggered detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArmAssignment {
    #[default]
    SignalToDet1,
    IdlerToDet1,
}

/// Pair after loss thinning, photons labeled by detector arm; either photon
/// may be gone. `emitted_s` keeps the stream clock (the pair's signal time)
/// even when both photons are lost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinnedEvent {
    pub emitted_s: f64,
    pub det1_s: Option<f64>,
    pub det2_s: Option<f64>,
}

pub struct LossFiltered<I> {
    inner: I,
    rng: ChaCha8Rng,
    signal_survival: f64,
    idler_survival: f64,
    assignment: ArmAssignment,
}

/// Independent Bernoulli survival per photon with its arm's product of
/// factors; squared factors in the rate formulas correspond to factors
/// applied to both photons.
pub fn apply_losses<I: Iterator<Item = PairEvent>>(
    events: I,
    budget: &LossBudget,
    assignment: ArmAssignment,
    seed: u64,
) -> LossFiltered<I> {
    LossFiltered {
        inner: events,
        rng: ChaCha8Rng::seed_from_u64(seed),
        signal_survival: budget.signal_survival(),
        idler_survival: budget.idler_survival(),
        assignment,
    }
}

impl<I: Iterator<Item = PairEvent>> LossFiltered<I> {
    fn survives(&mut self, p: f64) -> bool {
        p >= 1.0 || self.rng.gen::<f64>() < p
    }
}

impl<I: Iterator<Item = PairEvent>> Iterator for LossFiltered<I> {
    type Item = ThinnedEvent;

    fn next(&mut self) -> Option<ThinnedEvent> {
        let e = self.inner.next()?;
        let signal = self.survives(self.signal_survival).then_some(e.t_signal_s);
        let idler = self.survives(self.idler_survival).then_some(e.t_idler_s);
        let (det1_s, det2_s) = match self.assignment {
            ArmAssignment::SignalToDet1 => (signal, idler),
            ArmAssignment::IdlerToDet1 => (idler, signal),
        };
        Some(ThinnedEvent {
            emitted_s: e.t_signal_s,
            det1_s,
            det2_s,
        })
    }
}

/// Gate/efficiency/dead-time/dark parameters of one gated APD.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GatedDetector {
    pub efficiency: f64,
    pub gate_ns: f64,
    pub dead_time_ns: f64,
    pub dark_rate_per_ns: f64,
}

impl GatedDetector {
    fn validate(&self, which: &'static str) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::argument(which, "efficiency must be in (0, 1]"));
        }
        if self.gate_ns < 0.0 || self.dead_time_ns < 0.0 || self.dark_rate_per_ns < 0.0 {
            return Err(Error::argument(
                which,
                "gate, dead time and dark rate must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Two-detector chain: detector 1 internally triggered, detector 2 gated by
/// detector 1's delayed output.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetectionChainConfig {
    pub det1: GatedDetector,
    pub det2: GatedDetector,
    /// Detector-1 internal trigger rate, Hz.
    pub trigger_rate_hz: f64,
    /// Optical delay on the detector-2 arm, ns.
    pub optical_delay_ns: f64,
    /// Electrical delay applied to detector-1 output, ns; the scan variable.
    pub electrical_delay_ns: f64,
    /// Detection duty cycle used by the rate estimators only; the physical
    /// gate simulation derives its own duty from trigger rate × gate width.
    pub duty_cycle: f64,
}

impl DetectionChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.det1.validate("det1")?;
        self.det2.validate("det2")?;
        if !(self.trigger_rate_hz > 0.0) {
            return Err(Error::argument("trigger_rate_hz", "must be positive"));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::argument("duty_cycle", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn with_electrical_delay(mut self, delay_ns: f64) -> Self {
        self.electrical_delay_ns = delay_ns;
        self
    }
}

/// Click times produced by one detection run.
#[derive(Debug, Clone, Default)]
pub struct DetectionRecord {
    pub clicks1_s: Vec<f64>,
    pub clicks2_s: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Candidate {
    Photon(f64),
    Dark(f64),
}

impl Candidate {
    fn time(&self) -> f64 {
        match self {
            Candidate::Photon(t) | Candidate::Dark(t) => *t,
        }
    }
}

/// Run the gated two-detector chain over a thinned event stream.
///
/// `offset_bound_s` must bound |t_det2 − t_det1| and the disorder of det1
/// arrival times relative to stream order (the correlation shape's support
/// bound); it sets the look-back horizon for gate matching.
pub fn simulate_detection<I: Iterator<Item = ThinnedEvent>>(
    events: I,
    chain: &DetectionChainConfig,
    duration_s: f64,
    offset_bound_s: f64,
    seed: u64,
) -> Result<DetectionRecord> {
    chain.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::argument("duration_s", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period_s = 1.0 / chain.trigger_rate_hz;
    let gate1_s = chain.det1.gate_ns * 1e-9;
    let dead1_s = chain.det1.dead_time_ns * 1e-9;
    let gate2_s = chain.det2.gate_ns * 1e-9;
    let dead2_s = chain.det2.dead_time_ns * 1e-9;
    let opt_delay_s = chain.optical_delay_ns * 1e-9;
    let elec_delay_s = chain.electrical_delay_ns * 1e-9;
    let p_dark2 = chain.det2.dark_rate_per_ns * chain.det2.gate_ns;

    // Trigger phase is uniformly random per run.
    let phase_s = rng.gen::<f64>() * period_s;

    // Detector-1 dark candidates, generated in open-gate coordinate and
    // mapped back onto the trigger grid. They are click candidates like
    // photons, minus the efficiency draw (the dark rate is a click rate).
    let n_gates = (duration_s / period_s).ceil() as u64;
    let mut darks1: Vec<f64> = Vec::new();
    if gate1_s > 0.0 && chain.det1.dark_rate_per_ns > 0.0 {
        let open_total_s = n_gates as f64 * gate1_s;
        let rate = chain.det1.dark_rate_per_ns * 1e9;
        let mut u_open = 0.0;
        loop {
            let u: f64 = rng.gen();
            u_open += -(1.0 - u).ln() / rate;
            if u_open >= open_total_s {
                break;
            }
            let gate_idx = (u_open / gate1_s).floor();
            let within = u_open - gate_idx * gate1_s;
            let t = phase_s + gate_idx * period_s + within;
            if t < duration_s {
                darks1.push(t);
            }
        }
    }

    let mut rec = DetectionRecord::default();
    let mut next_alive1 = f64::NEG_INFINITY;
    let mut next_alive2 = f64::NEG_INFINITY;
    // det1 candidates within `offset_bound_s` of the stream head, kept sorted.
    let mut pending1: VecDeque<Candidate> = VecDeque::new();
    let mut darks1_iter = darks1.into_iter().peekable();
    let mut gates2: VecDeque<f64> = VecDeque::new();
    let mut pending2: VecDeque<f64> = VecDeque::new();
    let mut gate_cands: Vec<Candidate> = Vec::new();

    macro_rules! click1 {
        ($t:expr, $is_photon:expr) => {{
            let t = $t;
            if t >= next_alive1 {
                let fires = if $is_photon {
                    let in_gate = (t - phase_s).rem_euclid(period_s) < gate1_s;
                    in_gate
                        && (chain.det1.efficiency >= 1.0
                            || rng.gen::<f64>() < chain.det1.efficiency)
                } else {
                    true
                };
                if fires {
                    next_alive1 = t + dead1_s;
                    rec.clicks1_s.push(t);
                    gates2.push_back(t + elec_delay_s);
                }
            }
        }};
    }

    macro_rules! resolve_gates {
        ($horizon:expr) => {{
            let horizon = $horizon;
            while let Some(&gs) = gates2.front() {
                let ge = gs + gate2_s;
                if ge > horizon {
                    break;
                }
                gates2.pop_front();
                gate_cands.clear();
                for &t in pending2.iter() {
                    if t >= gs && t < ge {
                        gate_cands.push(Candidate::Photon(t));
                    }
                }
                // Consumed and stale arrivals can never match a later gate.
                pending2.retain(|&t| t >= ge);
                if p_dark2 > 0.0 && rng.gen::<f64>() < p_dark2 {
                    gate_cands.push(Candidate::Dark(gs + rng.gen::<f64>() * gate2_s));
                }
                gate_cands.sort_by(|a, b| a.time().total_cmp(&b.time()));
                for cand in gate_cands.drain(..) {
                    let t = cand.time();
                    if t < next_alive2 {
                        continue;
                    }
                    let fires = match cand {
                        Candidate::Photon(_) => {
                            chain.det2.efficiency >= 1.0
                                || rng.gen::<f64>() < chain.det2.efficiency
                        }
                        Candidate::Dark(_) => true,
                    };
                    if fires {
                        next_alive2 = t + dead2_s;
                        rec.clicks2_s.push(t);
                    }
                }
            }
        }};
    }

    macro_rules! drain_pending1 {
        ($up_to:expr) => {{
            let up_to = $up_to;
            loop {
                let next_photon = pending1.front().map(|c| c.time());
                let next_dark = darks1_iter.peek().copied();
                match (next_photon, next_dark) {
                    (Some(tp), Some(td)) if tp <= up_to || td <= up_to => {
                        if tp <= td {
                            click1!(tp, true);
                            pending1.pop_front();
                        } else {
                            click1!(td, false);
                            darks1_iter.next();
                        }
                    }
                    (Some(tp), None) if tp <= up_to => {
                        click1!(tp, true);
                        pending1.pop_front();
                    }
                    (None, Some(td)) if td <= up_to => {
                        click1!(td, false);
                        darks1_iter.next();
                    }
                    _ => break,
                }
            }
        }};
    }

    for event in events {
        // Stream order is by emission time; arrivals deviate from it by at
        // most the offset bound, which sets the safe processing horizons.
        let stream_t = event.emitted_s;
        if let Some(t1) = event.det1_s {
            let mut insert_at = pending1.len();
            while insert_at > 0 && pending1[insert_at - 1].time() > t1 {
                insert_at -= 1;
            }
            pending1.insert(insert_at, Candidate::Photon(t1));
        }
        if let Some(t2) = event.det2_s {
            pending2.push_back(t2 + opt_delay_s);
        }
        drain_pending1!(stream_t - offset_bound_s);
        resolve_gates!(stream_t + opt_delay_s - offset_bound_s);
    }
    drain_pending1!(f64::INFINITY);
    resolve_gates!(f64::INFINITY);
    Ok(rec)
}

/// Coincidence counts vs scanned electrical delay.
#[derive(Debug, Clone, Serialize)]
pub struct CoincidenceHistogram {
    pub delays_ns: Vec<f64>,
    pub coincidences: Vec<u64>,
    pub singles1: Vec<u64>,
    pub singles2: Vec<u64>,
    pub accumulation_s: f64,
    pub seed: u64,
}

/// One full detection simulation per delay point, each with a seed derived
/// from (seed, index); points run in parallel and the result is independent
/// of scheduling.
pub fn scan_coincidences(
    source: &SourceConfig,
    budget: &LossBudget,
    assignment: ArmAssignment,
    chain: &DetectionChainConfig,
    delays_ns: &[f64],
    accumulation_s: f64,
    seed: u64,
) -> Result<CoincidenceHistogram> {
    if delays_ns.is_empty() {
        return Err(Error::argument("delays_ns", "delay list must be non-empty"));
    }
    chain.validate()?;
    let bound = source.shape.offset_bound_s();
    let rows: Result<Vec<(u64, u64, u64)>> = delays_ns
        .par_iter()
        .enumerate()
        .map(|(i, &delay_ns)| {
            let chain_i = chain.with_electrical_delay(delay_ns);
            let events = generate_pair_events(source, accumulation_s, derive_seed(seed, i as u64, 0))?;
            let thinned = apply_losses(events, budget, assignment, derive_seed(seed, i as u64, 1));
            let rec = simulate_detection(
                thinned,
                &chain_i,
                accumulation_s,
                bound,
                derive_seed(seed, i as u64, 2),
            )?;
            Ok((
                rec.clicks2_s.len() as u64,
                rec.clicks1_s.len() as u64,
                rec.clicks2_s.len() as u64,
            ))
        })
        .collect();
    let rows = rows?;
    Ok(CoincidenceHistogram {
        delays_ns: delays_ns.to_vec(),
        coincidences: rows.iter().map(|r| r.0).collect(),
        singles1: rows.iter().map(|r| r.1).collect(),
        singles2: rows.iter().map(|r| r.2).collect(),
        accumulation_s,
        seed,
    })
}

/// Max/min coincidence count over the scanned delays.
pub fn snr(histogram: &CoincidenceHistogram) -> Result<f64> {
    if histogram.coincidences.len() < 2 {
        return Err(Error::argument(
            "histogram",
            "need at least two delay points",
        ));
    }
    let max = *histogram.coincidences.iter().max().unwrap();
    let min = *histogram.coincidences.iter().min().unwrap();
    if min == 0 {
        return Err(Error::UndefinedSnr);
    }
    Ok(max as f64 / min as f64)
}

/// Chain-detected pair rate per mW inferred from a delay scan.
///
/// The scan sweeps the detector-2 window across the correlation profile in
/// steps of `step_ns`, so each chain-surviving pair is counted window/step
/// times; summing floor-subtracted counts and rescaling by step/window counts
/// every such pair once.
pub fn detected_pair_rate_per_mw(
    scan_counts: &[u64],
    floor_per_point: f64,
    step_ns: f64,
    window_ns: f64,
    accumulation_s: f64,
    pump_power_mw: f64,
) -> Result<f64> {
    if !(step_ns > 0.0 && window_ns > 0.0 && accumulation_s > 0.0 && pump_power_mw > 0.0) {
        return Err(Error::argument(
            "detected_pair_rate_per_mw",
            "step, window, accumulation and power must be positive",
        ));
    }
    let excess: f64 = scan_counts
        .iter()
        .map(|&c| c as f64 - floor_per_point)
        .sum();
    Ok(excess * (step_ns / window_ns) / (accumulation_s * pump_power_mw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_mode_source(rate_per_mw: f64, power_mw: f64, gamma_hz: f64) -> SourceConfig {
        SourceConfig::new(
            rate_per_mw,
            power_mw,
            CorrelationShape::SingleMode { gamma_hz },
        )
        .unwrap()
    }

    fn paper_chain(delay_ns: f64) -> DetectionChainConfig {
        DetectionChainConfig {
            det1: GatedDetector {
                efficiency: 0.08,
                gate_ns: 5.0,
                dead_time_ns: 1000.0,
                dark_rate_per_ns: 6e-6,
            },
            det2: GatedDetector {
                efficiency: 0.08,
                gate_ns: 2.5,
                dead_time_ns: 1000.0,
                dark_rate_per_ns: 6e-6,
            },
            trigger_rate_hz: 10e6,
            optical_delay_ns: 1000.0,
            electrical_delay_ns: delay_ns,
            duty_cycle: 0.025,
        }
    }

    #[test]
    fn zero_rate_gives_empty_stream() {
        let src = single_mode_source(0.0, 5.0, 8e6);
        let events: Vec<_> = generate_pair_events(&src, 1.0, 7).unwrap().collect();
        assert!(events.is_empty());
    }

    #[test]
    fn poisson_count_within_five_sigma() {
        let src = single_mode_source(1e4, 1.0, 8e6);
        let n = generate_pair_events(&src, 10.0, 11).unwrap().count() as f64;
        let expected = 1e5;
        assert!((n - expected).abs() < 5.0 * expected.sqrt(), "count {n}");
    }

    #[test]
    fn events_are_time_ordered_by_signal() {
        let src = single_mode_source(1e5, 1.0, 8e6);
        let mut last = f64::NEG_INFINITY;
        for e in generate_pair_events(&src, 0.1, 3).unwrap() {
            assert!(e.t_signal_s > last);
            last = e.t_signal_s;
        }
    }

    #[test]
    fn offsets_fit_single_mode_shape() {
        // χ² of the sampled offsets against the exponential cell masses.
        let gamma = 8e6;
        let src = single_mode_source(1e6, 1.0, gamma);
        let offsets: Vec<f64> = generate_pair_events(&src, 1.0, 21)
            .unwrap()
            .map(|e| e.t_idler_s - e.t_signal_s)
            .collect();
        let n = offsets.len() as f64;
        assert!(n > 9e5);
        let bins = 40usize;
        let half_span = 60e-9;
        let width = 2.0 * half_span / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut clipped = 0u64;
        for tau in &offsets {
            let b = ((tau + half_span) / width).floor();
            if b < 0.0 || b >= bins as f64 {
                clipped += 1;
            } else {
                counts[b as usize] += 1;
            }
        }
        let cdf = |t: f64| {
            // P(τ ≤ t) for the two-sided exponential.
            if t < 0.0 {
                0.5 * (TWO_PI * gamma * t).exp()
            } else {
                1.0 - 0.5 * (-TWO_PI * gamma * t).exp()
            }
        };
        let mut chi2 = 0.0;
        for (b, &c) in counts.iter().enumerate() {
            let lo = -half_span + b as f64 * width;
            let expected = n * (cdf(lo + width) - cdf(lo));
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let dof = (bins - 1) as f64;
        assert!(chi2 / dof < 2.0, "chi2/dof = {}", chi2 / dof);
        assert!((clipped as f64) < 100.0);
    }

    #[test]
    fn trace_shaped_offsets_match_triangle_moments() {
        use crate::correlation::{CorrelationTrace, TauGrid};
        let grid = TauGrid::symmetric(10e-9, 0.5e-9).unwrap();
        let raw: Vec<f64> = grid.iter().map(|t| (1.0 - (t / 10e-9).abs()).max(0.0)).collect();
        let trace = CorrelationTrace::from_raw(grid, raw, None, 0.0).unwrap();
        let src = SourceConfig::new(1e6, 1.0, CorrelationShape::Trace(trace)).unwrap();
        let offsets: Vec<f64> = generate_pair_events(&src, 1.0, 5)
            .unwrap()
            .map(|e| e.t_idler_s - e.t_signal_s)
            .collect();
        let n = offsets.len() as f64;
        let mean = offsets.iter().sum::<f64>() / n;
        let var = offsets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        // Symmetric triangle of half-base a: mean 0, variance a²/6.
        assert!(mean.abs() < 5.0 * (var / n).sqrt());
        assert_relative_eq!(var, (10e-9f64).powi(2) / 6.0, max_relative = 0.01);
    }

    #[test]
    fn lossless_budget_is_identity() {
        let src = single_mode_source(1e4, 1.0, 8e6);
        let events: Vec<PairEvent> = generate_pair_events(&src, 0.1, 9).unwrap().collect();
        let thinned: Vec<ThinnedEvent> = apply_losses(
            events.iter().copied(),
            &LossBudget::unity(),
            ArmAssignment::SignalToDet1,
            13,
        )
        .collect();
        assert_eq!(events.len(), thinned.len());
        for (e, t) in events.iter().zip(&thinned) {
            assert_eq!(t.det1_s, Some(e.t_signal_s));
            assert_eq!(t.det2_s, Some(e.t_idler_s));
        }
    }

    #[test]
    fn half_loss_on_one_arm_within_five_sigma() {
        let budget = LossBudget::new(1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let src = single_mode_source(1e6, 1.0, 8e6);
        let events = generate_pair_events(&src, 1.0, 17).unwrap();
        let n_total = 1e6;
        let survivors = apply_losses(events, &budget, ArmAssignment::SignalToDet1, 19)
            .filter(|t| t.det1_s.is_some() && t.det2_s.is_some())
            .count() as f64;
        // Pair survives only if the halved arm survives; expect N·0.5 up to
        // the Poisson spread of N itself.
        let sigma = (n_total * 0.5f64 * 0.5).sqrt() + 0.5 * n_total.sqrt();
        assert!((survivors - 0.5 * n_total).abs() < 5.0 * sigma, "{survivors}");
    }

    #[test]
    fn table_budget_pair_survival() {
        let budget = LossBudget::new(0.33, 0.82, 0.86, 0.78, 0.84).unwrap();
        assert_relative_eq!(budget.pair_survival(), 0.0330, max_relative = 1e-2);
        let src = single_mode_source(1e6, 1.0, 8e6);
        let events = generate_pair_events(&src, 1.0, 23).unwrap();
        let survivors = apply_losses(events, &budget, ArmAssignment::SignalToDet1, 29)
            .filter(|t| t.det1_s.is_some() && t.det2_s.is_some())
            .count() as f64;
        let expect = 1e6 * budget.pair_survival();
        assert!((survivors - expect).abs() < 5.0 * expect.sqrt() + 200.0, "{survivors}");
    }

    #[test]
    fn zero_factor_rejected() {
        assert!(LossBudget::new(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(LossBudget::new(0.5, 1.0, 1.0, 1.0, 1.1).is_err());
    }

    #[test]
    fn dark_clicks_match_open_gate_rate() {
        // 10 MHz × 5 ns gates at 6e-6 /ns for 1 s → 300 expected dark clicks.
        let chain = paper_chain(1000.0);
        let rec = simulate_detection(std::iter::empty(), &chain, 1.0, 1e-7, 31).unwrap();
        let n = rec.clicks1_s.len() as f64;
        assert!((n - 300.0).abs() < 5.0 * 300.0f64.sqrt(), "dark clicks {n}");
    }

    #[test]
    fn certain_click_when_gate_always_open() {
        // Gate spans the whole trigger period, η = 1, no dark, no dead time.
        let chain = DetectionChainConfig {
            det1: GatedDetector {
                efficiency: 1.0,
                gate_ns: 100.0,
                dead_time_ns: 0.0,
                dark_rate_per_ns: 0.0,
            },
            det2: GatedDetector {
                efficiency: 1.0,
                gate_ns: 2.5,
                dead_time_ns: 0.0,
                dark_rate_per_ns: 0.0,
            },
            trigger_rate_hz: 10e6,
            optical_delay_ns: 0.0,
            electrical_delay_ns: -1.25,
            duty_cycle: 0.025,
        };
        let events = vec![
            ThinnedEvent {
                emitted_s: 1e-6,
                det1_s: Some(1e-6),
                det2_s: Some(1e-6),
            },
            ThinnedEvent {
                emitted_s: 2e-6,
                det1_s: Some(2e-6),
                det2_s: Some(2e-6),
            },
        ];
        let rec = simulate_detection(events.into_iter(), &chain, 1.0, 1e-7, 37).unwrap();
        assert_eq!(rec.clicks1_s.len(), 2);
        assert_eq!(rec.clicks2_s.len(), 2);
    }

    #[test]
    fn dead_time_suppresses_second_click() {
        let chain = DetectionChainConfig {
            det1: GatedDetector {
                efficiency: 1.0,
                gate_ns: 100.0,
                dead_time_ns: 1000.0,
                dark_rate_per_ns: 0.0,
            },
            det2: GatedDetector {
                efficiency: 1.0,
                gate_ns: 2.5,
                dead_time_ns: 1000.0,
                dark_rate_per_ns: 0.0,
            },
            trigger_rate_hz: 10e6,
            optical_delay_ns: 0.0,
            electrical_delay_ns: 0.0,
            duty_cycle: 0.025,
        };
        let events = vec![
            ThinnedEvent {
                emitted_s: 1.0e-6,
                det1_s: Some(1.0e-6),
                det2_s: None,
            },
            ThinnedEvent {
                emitted_s: 1.1e-6,
                det1_s: Some(1.1e-6),
                det2_s: None,
            },
        ];
        let rec = simulate_detection(events.into_iter(), &chain, 1.0, 1e-7, 41).unwrap();
        assert_eq!(rec.clicks1_s.len(), 1);
    }

    #[test]
    fn dead_time_ordering_invariant() {
        let src = single_mode_source(2e5, 5.0, 8e6);
        let chain = paper_chain(1000.0);
        let events = generate_pair_events(&src, 2.0, 43).unwrap();
        let thinned = apply_losses(events, &LossBudget::unity(), ArmAssignment::SignalToDet1, 47);
        let rec = simulate_detection(
            thinned,
            &chain,
            2.0,
            src.shape.offset_bound_s(),
            53,
        )
        .unwrap();
        assert!(rec.clicks1_s.len() > 100);
        for w in rec.clicks1_s.windows(2) {
            assert!(w[1] - w[0] >= chain.det1.dead_time_ns * 1e-9 - 1e-15);
        }
        for w in rec.clicks2_s.windows(2) {
            assert!(w[1] - w[0] >= chain.det2.dead_time_ns * 1e-9 - 1e-15);
        }
    }

    #[test]
    fn scan_is_deterministic() {
        let src = single_mode_source(5e4, 5.0, 8e6);
        let chain = paper_chain(0.0);
        let delays: Vec<f64> = (0..8).map(|i| 990.0 + i as f64 * 2.0).collect();
        let budget = LossBudget::new(0.9, 0.9, 0.9, 0.9, 0.9).unwrap();
        let a = scan_coincidences(
            &src,
            &budget,
            ArmAssignment::SignalToDet1,
            &chain,
            &delays,
            1.0,
            101,
        )
        .unwrap();
        let b = scan_coincidences(
            &src,
            &budget,
            ArmAssignment::SignalToDet1,
            &chain,
            &delays,
            1.0,
            101,
        )
        .unwrap();
        assert_eq!(a.coincidences, b.coincidences);
        assert_eq!(a.singles1, b.singles1);
        assert_eq!(a.singles2, b.singles2);
        let c = scan_coincidences(
            &src,
            &budget,
            ArmAssignment::SignalToDet1,
            &chain,
            &delays,
            1.0,
            102,
        )
        .unwrap();
        assert_ne!(a.singles1, c.singles1);
    }

    #[test]
    fn snr_values() {
        let hist = CoincidenceHistogram {
            delays_ns: vec![0.0, 1.0, 2.0],
            coincidences: vec![98, 259, 98],
            singles1: vec![0, 0, 0],
            singles2: vec![0, 0, 0],
            accumulation_s: 300.0,
            seed: 0,
        };
        assert_relative_eq!(snr(&hist).unwrap(), 2.64, max_relative = 1e-2);
        let flat = CoincidenceHistogram {
            coincidences: vec![5, 5, 5],
            ..hist.clone()
        };
        assert_eq!(snr(&flat).unwrap(), 1.0);
        let zero = CoincidenceHistogram {
            coincidences: vec![5, 0, 5],
            ..hist
        };
        assert!(matches!(snr(&zero), Err(Error::UndefinedSnr)));
    }

    #[test]
    fn detected_rate_helper_arithmetic() {
        // 10 scan points of 100 counts over a floor of 20, step 1 ns,
        // window 2.5 ns, 10 s at 2 mW → (800)·0.4/20 = 16 pairs/s/mW.
        let counts = vec![100u64; 10];
        let r = detected_pair_rate_per_mw(&counts, 20.0, 1.0, 2.5, 10.0, 2.0).unwrap();
        assert_relative_eq!(r, 16.0, max_relative = 1e-12);
    }
}
