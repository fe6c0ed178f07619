//! Per-step scalar summaries, their CSV form, and the exponential-decay fit
//! of the oscillation of `u̇`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const CSV_TAG: &str = "# cmaflow-diag v1";

/// Values at or below this are treated as exact zeros by [`fit_decay`].
pub const DECAY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    #[serde(rename = "H_min")]
    pub h_min: f64,
    #[serde(rename = "H_max")]
    pub h_max: f64,
    #[serde(rename = "TrH_min")]
    pub trh_min: f64,
    #[serde(rename = "TrH_max")]
    pub trh_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub osc_udot: f64,
    pub residual_sup: f64,
    #[serde(rename = "G_max")]
    pub g_max: f64,
    pub phi_mean: f64,
    pub phi_sup: f64,
}

pub const COLUMNS: [&str; 13] = [
    "t", "dt", "H_min", "H_max", "TrH_min", "TrH_max", "lambda_min", "lambda_max", "osc_udot",
    "residual_sup", "G_max", "phi_mean", "phi_sup",
];

/// Append-only diagnostics CSV; every record is flushed as it is written.
pub struct DiagnosticsWriter {
    inner: csv::Writer<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{CSV_TAG}")?;
        let inner = csv::WriterBuilder::new().has_headers(true).from_writer(file);
        Ok(DiagnosticsWriter { inner })
    }

    pub fn append(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.inner.serialize(record)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = DiagnosticsWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != CSV_TAG {
        return Err(Error::Format(format!("missing `{CSV_TAG}` tag line")));
    }
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(Error::Format(format!("unexpected columns {header:?}")));
    }
    csv.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    /// Rate `η` in `ω(t) ≈ C e^{-ηt}`.
    pub eta: f64,
    pub c: f64,
    pub r_squared: f64,
    /// Number of samples in the fitted window.
    pub samples: usize,
    pub t_start: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecayOutcome {
    Fitted(DecayFit),
    Skipped(String),
}

impl DecayOutcome {
    pub fn fitted(&self) -> Option<&DecayFit> {
        match self {
            DecayOutcome::Fitted(fit) => Some(fit),
            DecayOutcome::Skipped(_) => None,
        }
    }
}

/// Least-squares fit of `log ω` against `t` over the last decade of decay.
///
/// The window starts at the last sample still at least ten times the final
/// value; if the whole series spans less than a decade, every sample above
/// [`DECAY_FLOOR`] is used.
pub fn fit_decay(series: &[(f64, f64)]) -> DecayOutcome {
    let valid: Vec<(f64, f64)> = series.iter().copied().take_while(|&(_, w)| w > DECAY_FLOOR).collect();
    if valid.len() < 3 {
        return DecayOutcome::Skipped(format!(
            "only {} samples above the {DECAY_FLOOR:e} floor; state is stationary from the start",
            valid.len()
        ));
    }
    let last = valid[valid.len() - 1].1;
    let start = valid.iter().rposition(|&(_, w)| w >= 10.0 * last).unwrap_or(0);
    let start = start.min(valid.len() - 3);
    let window = &valid[start..];

    let m = window.len() as f64;
    let mean_t = window.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = window.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, w) in window {
        let (dt, dy) = (t - mean_t, w.ln() - mean_y);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return DecayOutcome::Skipped("fit window has no time extent".into());
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let ss_res = (syy - slope * sty).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    DecayOutcome::Fitted(DecayFit {
        eta: -slope,
        c: intercept.exp(),
        r_squared,
        samples: window.len(),
        t_start: window[0].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_exponential() {
        let series: Vec<_> = (0..100).map(|i| {
            let t = i as f64 * 0.05;
            (t, 3.0 * (-2.0 * t).exp())
        }).collect();
        let fit = fit_decay(&series).fitted().cloned().unwrap();
        assert!((fit.eta - 2.0).abs() < 1e-6);
        assert!((fit.c - 3.0).abs() < 1e-6);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn noisy_exponential_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let series: Vec<_> = (0..100).map(|i| {
            let t = i as f64 * 0.05;
            let noise = 1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0);
            (t, 3.0 * (-2.0 * t).exp() * noise)
        }).collect();
        let fit = fit_decay(&series).fitted().cloned().unwrap();
        assert!((fit.eta - 2.0).abs() < 0.1, "eta = {}", fit.eta);
        assert!(fit.r_squared > 0.9);
    }

    #[test]
    fn stationary_start_is_skipped() {
        let series = vec![(0.0, 0.0)];
        assert!(matches!(fit_decay(&series), DecayOutcome::Skipped(_)));
        let series: Vec<_> = (0..10).map(|i| (i as f64, 1e-14)).collect();
        assert!(matches!(fit_decay(&series), DecayOutcome::Skipped(_)));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let records: Vec<_> = (0..4).map(|i| DiagnosticsRecord {
            t: i as f64 * 0.1 + 1e-17,
            dt: 0.1,
            h_min: 0.6065306597126334,
            h_max: 1.6487212707001282,
            trh_min: 0.5,
            trh_max: 1.5,
            lambda_min: 0.5,
            lambda_max: 1.5,
            osc_udot: 1.0 / 3.0,
            residual_sup: 7.0839e-1,
            g_max: -0.25,
            phi_mean: -1.2e-17,
            phi_sup: 0.0,
        }).collect();
        write_diagnostics(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# cmaflow-diag v1\nt,dt,H_min,H_max,TrH_min,TrH_max,lambda_min,lambda_max,osc_udot,residual_sup,G_max,phi_mean,phi_sup\n"));
        assert_eq!(read_diagnostics(&path).unwrap(), records);
    }
}
