//! Synthetic flow-like data with a known labelling rule.
//!
//! Columns: three signal features `sig_0..sig_2`, seven uniform noise
//! features `noise_0..noise_6`, two decoys that mirror `sig_0`/`sig_1` and so
//! anti-correlate with the label, and one constant column. A row is an
//! anomaly when at least two signal features exceed 0.5.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIGNAL: [&str; 3] = ["sig_0", "sig_1", "sig_2"];
pub const DECOYS: [&str; 2] = ["decoy_0", "decoy_1"];
pub const CONSTANT: &str = "constant";
pub const NOISE_COLUMNS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub seed: u64,
    /// Probability that a noise cell is left empty.
    pub missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 5000,
            seed: 42,
            missing_rate: 0.01,
        }
    }
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = SIGNAL.iter().map(|s| s.to_string()).collect();
    h.extend((0..NOISE_COLUMNS).map(|i| format!("noise_{i}")));
    h.extend(DECOYS.iter().map(|s| s.to_string()));
    h.push(CONSTANT.to_string());
    h.push("Class".to_string());
    h
}

/// Labelling rule on the three signal values.
pub fn rule(signal: [f64; 3]) -> u8 {
    u8::from(signal.iter().filter(|&&v| v > 0.5).count() >= 2)
}

fn micro(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.gen_range(0u32..1_000_000)) / 1e6
}

/// Rows of cell text, label last. Missing cells are empty strings.
pub fn generate(spec: &SyntheticSpec) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.rows)
        .map(|_| {
            let signal = [micro(&mut rng), micro(&mut rng), micro(&mut rng)];
            let mut row: Vec<String> = signal.iter().map(f64::to_string).collect();
            for _ in 0..NOISE_COLUMNS {
                let v = micro(&mut rng);
                row.push(if rng.gen_bool(spec.missing_rate) {
                    String::new()
                } else {
                    v.to_string()
                });
            }
            for s in &signal[..2] {
                let jitter = (micro(&mut rng) - 0.5) * 0.1;
                row.push((1.0 - s + jitter).to_string());
            }
            row.push("7".to_string());
            row.push(rule(signal).to_string());
            row
        })
        .collect()
}

pub fn write_csv<W: Write>(spec: &SyntheticSpec, writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header())?;
    for row in generate(spec) {
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
