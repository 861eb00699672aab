//! Click statistics: event sets, correlation estimators and the
//! Cauchy-Schwarz nonclassicality test.
//!
//! The event-set CSV (`trial_index,delay_us,stokes,antistokes`) is the frozen
//! contract between simulation and analysis: binary click flags per trial,
//! delays in microseconds with six decimals. Number-resolved detector outputs
//! ride along in memory only, for auto-correlation estimates.

use std::collections::BTreeMap;

use crate::scalar::Real;
use crate::{ModelError, Result};

/// One write/read trial: did each detector fire?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord<R: Real = f64> {
    /// Label of the trial; duplicates are legal (records are weights, not keys).
    pub trial_index: u64,
    /// Storage delay before the read pulse [s].
    pub delay: R,
    pub stokes_click: bool,
    pub antistokes_click: bool,
}

/// A batch of trials, optionally with the number-resolved side channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet<R: Real = f64> {
    pub records: Vec<TrialRecord<R>>,
    /// Detected (stokes, anti-stokes) photon numbers per record, present when
    /// the simulation kept them. Not part of the CSV contract.
    pub photon_numbers: Option<Vec<(u32, u32)>>,
}

/// Correlation estimate at one storage delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPoint<R: Real = f64> {
    /// Storage delay [s].
    pub delay: R,
    /// g = p_sas / (p_s * p_as).
    pub g_value: R,
    /// Delta-method standard error of g.
    pub std_error: R,
    pub n_trials: u64,
    pub p_s: R,
    pub p_as: R,
    pub p_sas: R,
}

/// Outcome of the Cauchy-Schwarz check R = g_si^2 / (g_ss * g_asas).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchySchwarzResult<R: Real = f64> {
    /// The ratio R; classical fields obey R <= 1.
    pub ratio: R,
    pub violated: bool,
    /// Distance of g_si above the classical bound sqrt(g_ss g_asas), in
    /// standard errors.
    pub significance: R,
}

const CSV_HEADER: &str = "trial_index,delay_us,stokes,antistokes";

impl<R: Real> EventSet<R> {
    /// Serializes to the event CSV contract.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{},{}\n",
                r.trial_index,
                r.delay.as_f64() * 1e6,
                r.stokes_click as u8,
                r.antistokes_click as u8
            ));
        }
        out
    }

    /// Parses the event CSV contract; errors carry 1-based line numbers.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim_end_matches('\r') == CSV_HEADER => {}
            Some((_, first)) => {
                return Err(ModelError::CsvFormat {
                    line: 1,
                    msg: format!("expected header '{}', got '{}'", CSV_HEADER, first),
                })
            }
            None => {
                return Err(ModelError::CsvFormat {
                    line: 1,
                    msg: "empty input; expected the event header".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                return Err(ModelError::CsvFormat {
                    line: line_no,
                    msg: "blank line inside the record block".into(),
                });
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(ModelError::CsvFormat {
                    line: line_no,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let trial_index: u64 = fields[0].parse().map_err(|_| ModelError::CsvFormat {
                line: line_no,
                msg: format!("trial_index '{}' is not an unsigned integer", fields[0]),
            })?;
            let delay_us: f64 = fields[1].parse().map_err(|_| ModelError::CsvFormat {
                line: line_no,
                msg: format!("delay_us '{}' is not a number", fields[1]),
            })?;
            if !(delay_us.is_finite() && delay_us >= 0.0) {
                return Err(ModelError::CsvFormat {
                    line: line_no,
                    msg: format!("delay_us {} must be finite and nonnegative", delay_us),
                });
            }
            let click = |s: &str, name: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(ModelError::CsvFormat {
                    line: line_no,
                    msg: format!("{} flag '{}' must be 0 or 1", name, s),
                }),
            };
            records.push(TrialRecord {
                trial_index,
                // divide rather than scale by 1e-6 so short decimal delays
                // (the whole microsecond grid) round-trip bit-exactly
                delay: R::of(delay_us / 1e6),
                stokes_click: click(fields[2], "stokes")?,
                antistokes_click: click(fields[3], "antistokes")?,
            });
        }
        Ok(EventSet {
            records,
            photon_numbers: None,
        })
    }
}

/// Correlation estimate from the four click counts of one delay group.
///
/// Preconditions: at least one click on each arm (g is undefined otherwise)
/// and internally consistent counts. The standard error is the delta-method
/// propagation through g = p_sas/(p_s p_as) with the multinomial covariances
/// of the three shares; the bracket can go slightly negative in finite
/// samples and is clamped at zero. With zero coincidences the error is
/// reported at the one-coincidence scale.
pub fn cross_correlation_from_counts<R: Real>(
    delay: R,
    n: u64,
    n_s: u64,
    n_as: u64,
    n_sas: u64,
) -> Result<CorrelationPoint<R>> {
    if n == 0 {
        return Err(ModelError::TooFewPoints {
            what: "trials",
            needed: 1,
            got: 0,
        });
    }
    if n_s > n || n_as > n || n_sas > n_s.min(n_as) {
        return Err(ModelError::InvalidConfig {
            field: "counts",
            constraint: "consistent (n_sas <= n_s, n_as <= n)",
            value: n_sas as f64,
        });
    }
    if n_s == 0 {
        return Err(ModelError::NoClicks {
            which: "stokes",
            delay_us: delay.as_f64() * 1e6,
            n_trials: n,
        });
    }
    if n_as == 0 {
        return Err(ModelError::NoClicks {
            which: "anti-stokes",
            delay_us: delay.as_f64() * 1e6,
            n_trials: n,
        });
    }
    let nr = R::of(n as f64);
    let p_s = R::of(n_s as f64) / nr;
    let p_as = R::of(n_as as f64) / nr;
    let p_sas = R::of(n_sas as f64) / nr;
    let g = p_sas / (p_s * p_as);
    let std_error = if n_sas == 0 {
        R::one() / (nr * p_s * p_as)
    } else {
        let one = R::one();
        let bracket = (one - p_sas) / p_sas - (one - p_s) / p_s - (one - p_as) / p_as
            + R::of(2.0) * (g - one);
        (g * g / nr * bracket.max(R::zero())).sqrt()
    };
    Ok(CorrelationPoint {
        delay,
        g_value: g,
        std_error,
        n_trials: n,
        p_s,
        p_as,
        p_sas,
    })
}

/// Groups records by their (nanosecond-binned) delay and counts clicks.
fn count_by_delay<R: Real>(
    records: &[TrialRecord<R>],
) -> Result<BTreeMap<i64, (R, u64, u64, u64, u64)>> {
    let mut bins: BTreeMap<i64, (R, u64, u64, u64, u64)> = BTreeMap::new();
    for (index, r) in records.iter().enumerate() {
        let d = r.delay.as_f64();
        if !(d.is_finite() && d >= 0.0) {
            return Err(ModelError::UngroupableDelay { index, value: d });
        }
        let key = (d * 1e9).round() as i64;
        let entry = bins.entry(key).or_insert((r.delay, 0, 0, 0, 0));
        entry.1 += 1;
        entry.2 += r.stokes_click as u64;
        entry.3 += r.antistokes_click as u64;
        entry.4 += (r.stokes_click && r.antistokes_click) as u64;
    }
    Ok(bins)
}

/// Correlation estimate for records that all share one delay.
pub fn cross_correlation<R: Real>(records: &[TrialRecord<R>]) -> Result<CorrelationPoint<R>> {
    let bins = count_by_delay(records)?;
    match bins.len() {
        0 => Err(ModelError::TooFewPoints {
            what: "trials",
            needed: 1,
            got: 0,
        }),
        1 => {
            let (delay, n, ns, na, nsas) = bins.into_values().next().unwrap();
            cross_correlation_from_counts(delay, n, ns, na, nsas)
        }
        _ => {
            let mut it = bins.into_values();
            let a = it.next().unwrap().0;
            let b = it.next().unwrap().0;
            Err(ModelError::MixedDelays {
                a_us: a.as_f64() * 1e6,
                b_us: b.as_f64() * 1e6,
            })
        }
    }
}

/// Per-delay correlation estimates over a whole event set, ascending in
/// delay. An empty event set yields an empty sweep.
pub fn correlation_sweep<R: Real>(events: &EventSet<R>) -> Result<Vec<CorrelationPoint<R>>> {
    let bins = count_by_delay(&events.records)?;
    bins.into_values()
        .map(|(delay, n, ns, na, nsas)| cross_correlation_from_counts(delay, n, ns, na, nsas))
        .collect()
}

/// Cauchy-Schwarz test on a cross-correlation against the two
/// auto-correlations.
pub fn cauchy_schwarz<R: Real>(
    g_si: R,
    std_error: R,
    g_ss: R,
    g_asas: R,
) -> Result<CauchySchwarzResult<R>> {
    for (v, field) in [(g_ss, "cauchy_schwarz.g_ss"), (g_asas, "cauchy_schwarz.g_asas")] {
        if !(v.is_finite() && v > R::zero()) {
            return Err(ModelError::InvalidConfig {
                field,
                constraint: "finite and positive",
                value: v.as_f64(),
            });
        }
    }
    if !(std_error.is_finite() && std_error > R::zero()) {
        return Err(ModelError::InvalidConfig {
            field: "cauchy_schwarz.std_error",
            constraint: "finite and positive",
            value: std_error.as_f64(),
        });
    }
    let ratio = g_si * g_si / (g_ss * g_asas);
    let bound = (g_ss * g_asas).sqrt();
    Ok(CauchySchwarzResult {
        ratio,
        violated: ratio > R::one(),
        significance: (g_si - bound) / std_error,
    })
}

/// Normalized second-order auto-correlation <n(n-1)> / <n>^2 of detected
/// photon numbers. Counts accumulate exactly in integers.
pub fn auto_correlation<R: Real>(numbers: &[u32]) -> Result<R> {
    if numbers.is_empty() {
        return Err(ModelError::TooFewPoints {
            what: "photon-number records",
            needed: 1,
            got: 0,
        });
    }
    let mut sum: u128 = 0;
    let mut sum_pairs: u128 = 0;
    for &n in numbers {
        let n = n as u128;
        sum += n;
        if n >= 2 {
            sum_pairs += n * (n - 1);
        }
    }
    if sum == 0 {
        return Err(ModelError::TooFewPoints {
            what: "nonzero photon-number records",
            needed: 1,
            got: 0,
        });
    }
    let len = R::of(numbers.len() as f64);
    let mean = R::of(sum as f64) / len;
    let pairs = R::of(sum_pairs as f64) / len;
    Ok(pairs / (mean * mean))
}

/// Stokes and anti-Stokes auto-correlations from the number side channel.
pub fn auto_correlations<R: Real>(events: &EventSet<R>) -> Result<(R, R)> {
    let numbers = events
        .photon_numbers
        .as_ref()
        .ok_or(ModelError::NoNumberRecords)?;
    let s: Vec<u32> = numbers.iter().map(|&(a, _)| a).collect();
    let a: Vec<u32> = numbers.iter().map(|&(_, b)| b).collect();
    Ok((auto_correlation(&s)?, auto_correlation(&a)?))
}
