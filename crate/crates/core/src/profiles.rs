//! Hourly market-day profiles: CSV ingestion, a synthetic default day, and
//! seeded multiplicative perturbation used to diversify training episodes.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_DAY: usize = 24;

/// Bit-exact header of the profile CSV format.
pub const PROFILE_CSV_HEADER: &str = "hour,demand_mwh,price_usd_per_mwh,solar_cf,wind_cf";

/// Lowest and highest price of the synthetic default day ($/MWh).
pub const DEFAULT_PRICE_RANGE: (f64, f64) = (14.0, 66.0);

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid profile: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub hour: usize,
    pub demand: f64,
    pub price: f64,
    pub solar_cf: f64,
    pub wind_cf: f64,
}

impl HourlyRecord {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let h = self.hour;
        if h >= HOURS_PER_DAY {
            return Err(ProfileError::Validation(format!("hour {h} outside 0..23")));
        }
        if !(self.demand.is_finite() && self.demand >= 0.0) {
            return Err(ProfileError::Validation(format!(
                "hour {h}: demand {} must be finite and >= 0",
                self.demand
            )));
        }
        if !(self.price.is_finite() && self.price >= 0.0) {
            return Err(ProfileError::Validation(format!(
                "hour {h}: price {} must be finite and >= 0",
                self.price
            )));
        }
        for (name, cf) in [("solar_cf", self.solar_cf), ("wind_cf", self.wind_cf)] {
            if !(0.0..=1.0).contains(&cf) {
                return Err(ProfileError::Validation(format!(
                    "hour {h}: {name} {cf} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// One market day: exactly 24 records ordered by hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    records: Vec<HourlyRecord>,
}

impl DayProfile {
    /// Validates and orders the records. Every hour 0..23 must appear once.
    pub fn new(mut records: Vec<HourlyRecord>) -> Result<Self, ProfileError> {
        for r in &records {
            r.validate()?;
        }
        records.sort_by_key(|r| r.hour);
        let mut seen = [false; HOURS_PER_DAY];
        for r in &records {
            if seen[r.hour] {
                return Err(ProfileError::Validation(format!("duplicate hour {}", r.hour)));
            }
            seen[r.hour] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ProfileError::Validation(format!("missing hour {missing}")));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn record(&self, hour: usize) -> &HourlyRecord {
        &self.records[hour]
    }

    pub fn peak_demand(&self) -> f64 {
        self.records.iter().map(|r| r.demand).fold(0.0, f64::max)
    }

    pub fn demands(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.demand).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(amplitude: f64, seed: u64) -> Result<Self, ProfileError> {
        if !(amplitude.is_finite() && (0.0..1.0).contains(&amplitude)) {
            return Err(ProfileError::Validation(format!(
                "perturbation amplitude {amplitude} must lie in [0, 1)"
            )));
        }
        Ok(Self { amplitude, seed })
    }
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<DayProfile, ProfileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile(&text)
}

/// Parses the CSV text of a profile. The header must match
/// [`PROFILE_CSV_HEADER`] column for column.
pub fn parse_profile(text: &str) -> Result<DayProfile, ProfileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| ProfileError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let expected: Vec<&str> = PROFILE_CSV_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ProfileError::Parse {
            line: 1,
            message: format!("header must be `{PROFILE_CSV_HEADER}`"),
        });
    }

    let mut records = Vec::with_capacity(HOURS_PER_DAY);
    for row in reader.records() {
        let row = row.map_err(|e| ProfileError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != expected.len() {
            return Err(ProfileError::Parse {
                line,
                message: format!("expected {} columns, found {}", expected.len(), row.len()),
            });
        }
        let num = |i: usize| -> Result<f64, ProfileError> {
            row[i].parse::<f64>().map_err(|e| ProfileError::Parse {
                line,
                message: format!("column `{}`: {e}", expected[i]),
            })
        };
        let hour = row[0].parse::<usize>().map_err(|e| ProfileError::Parse {
            line,
            message: format!("column `hour`: {e}"),
        })?;
        records.push(HourlyRecord {
            hour,
            demand: num(1)?,
            price: num(2)?,
            solar_cf: num(3)?,
            wind_cf: num(4)?,
        });
    }
    DayProfile::new(records)
}

/// Renders the canonical CSV text (fixed 6 decimals, `\n` line endings).
pub fn format_profile(profile: &DayProfile) -> String {
    let mut out = String::with_capacity(64 * (HOURS_PER_DAY + 1));
    out.push_str(PROFILE_CSV_HEADER);
    out.push('\n');
    for r in profile.records() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.hour, r.demand, r.price, r.solar_cf, r.wind_cf
        ));
    }
    out
}

pub fn save_profile(profile: &DayProfile, path: impl AsRef<Path>) -> Result<(), ProfileError> {
    let path = path.as_ref();
    fs::write(path, format_profile(profile)).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Deterministic summer-like day: two-harmonic demand with an evening peak
/// near 1 GW, price mapped affinely from demand onto [14, 66] $/MWh, a solar
/// bell centred at 13:00 that is dark outside 06:00..19:00, and a seeded wind
/// series.
pub fn synthesize_default() -> DayProfile {
    const WIND_SEED: u64 = 0x57_1D;
    let demand: Vec<f64> = (0..HOURS_PER_DAY)
        .map(|h| {
            let h = h as f64;
            680.0 + 250.0 * (2.0 * PI * (h - 19.0) / 24.0).cos()
                + 90.0 * (4.0 * PI * (h - 20.0) / 24.0).cos()
        })
        .collect();
    let lo = demand.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = demand.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (p_lo, p_hi) = DEFAULT_PRICE_RANGE;

    let mut rng = ChaCha8Rng::seed_from_u64(WIND_SEED);
    let records = (0..HOURS_PER_DAY)
        .map(|h| {
            let hf = h as f64;
            let solar_cf = if (6..=19).contains(&h) {
                0.85 * (-0.5 * ((hf - 13.0) / 3.0).powi(2)).exp()
            } else {
                0.0
            };
            let wind_base = 0.40 + 0.15 * (2.0 * PI * (hf - 3.0) / 24.0).cos();
            let wind_cf = (wind_base + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0);
            HourlyRecord {
                hour: h,
                demand: demand[h],
                price: p_lo + (p_hi - p_lo) * (demand[h] - lo) / (hi - lo),
                solar_cf,
                wind_cf,
            }
        })
        .collect();
    DayProfile::new(records).expect("synthetic profile is valid")
}

/// Multiplies every numeric field by `1 + u`, `u ~ U[-amplitude, amplitude]`,
/// drawn from a stream seeded by `spec.seed`. Capacity factors are clamped
/// back into [0, 1].
pub fn perturb(profile: &DayProfile, spec: &PerturbationSpec) -> DayProfile {
    let a = spec.amplitude;
    if a == 0.0 {
        return profile.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jitter = |v: f64| v * (1.0 + rng.random_range(-a..=a));
    let records = profile
        .records()
        .iter()
        .map(|r| HourlyRecord {
            hour: r.hour,
            demand: jitter(r.demand),
            price: jitter(r.price),
            solar_cf: jitter(r.solar_cf).clamp(0.0, 1.0),
            wind_cf: jitter(r.wind_cf).clamp(0.0, 1.0),
        })
        .collect();
    DayProfile { records }
}
