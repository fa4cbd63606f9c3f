use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to spectral magnitudes before taking logs.
pub const LOG_EPSILON: f64 = 1e-8;

/// Which difference forms the spectral residual.
///
/// Classic spectral-residual saliency uses `log − avg`, which keeps the
/// spectral detail an impulse adds. `avg − log` inverts the whitening: an
/// impulse still maps to a peak of exactly 1, but ordinary residual noise
/// produces larger peaks, so no threshold separates them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualOrder {
    AverageMinusLog,
    #[default]
    LogMinusAverage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
    pub peak_index: usize,
    pub peak_value: f64,
}

impl SaliencyMap {
    fn from_values(values: Vec<f64>) -> Self {
        let (peak_index, peak_value) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        Self {
            values,
            peak_index,
            peak_value,
        }
    }
}

/// Circular centred moving average with an odd window.
fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            (0..window)
                .map(|j| values[(i + n + j - half) % n])
                .sum::<f64>()
                / window as f64
        })
        .collect()
}

/// Spectral-residual saliency of a residual series.
///
/// Amplitude and phase come from the FFT; the log amplitude spectrum is
/// compared to its circular moving average over `q` bins, and the residual
/// is recombined with the original phase and inverted.
pub fn spectral_saliency(residual: &[f64], q: usize, order: ResidualOrder) -> Result<SaliencyMap> {
    let n = residual.len();
    if q == 0 || q % 2 == 0 {
        return Err(Error::Config(format!("q must be a positive odd number, got {q}")));
    }
    if q > n {
        return Err(Error::Precondition(format!(
            "window q = {q} exceeds series length {n}"
        )));
    }
    // A zero residual has no phase to recombine with; whitening it would
    // fabricate an impulse at slot 0.
    if residual.iter().all(|&v| v == 0.0) {
        return Ok(SaliencyMap::from_values(vec![0.0; n]));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex<f64>> = residual.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let log_amplitude: Vec<f64> = spectrum.iter().map(|c| (c.norm() + LOG_EPSILON).ln()).collect();
    let averaged = moving_average(&log_amplitude, q);
    let mut whitened: Vec<Complex<f64>> = spectrum
        .iter()
        .zip(log_amplitude.iter().zip(&averaged))
        .map(|(c, (ls, als))| {
            let r = match order {
                ResidualOrder::AverageMinusLog => als - ls,
                ResidualOrder::LogMinusAverage => ls - als,
            };
            Complex::from_polar(r.exp(), c.arg())
        })
        .collect();
    planner.plan_fft_inverse(n).process(&mut whitened);
    let scale = 1.0 / n as f64;
    Ok(SaliencyMap::from_values(
        whitened.iter().map(|c| c.norm() * scale).collect(),
    ))
}
