//! Weekly surveillance ingestion: the ILI+ correction and season windowing.
//!
//! Input is a CSV of `(season, epi_week, ili, flu_pos)` rows, one per
//! surveillance week: the fraction of patient visits for influenza-like
//! illness and the fraction of virologic specimens testing positive. Their
//! product — "ILI+" — is the proportion the observation model fits. A season
//! is the 35-week window anchored at epidemiology week 40 (treated as t = 1,
//! roughly the first week of October), following the calendar wrap at week
//! 52 or 53; the window either comes out complete or the loader fails
//! listing the absent weeks. Products are clamped into the open support of
//! the Beta observation density.

use std::collections::HashMap;
use std::path::Path;

use crate::dbssm::OBS_CLAMP;
use crate::{Error, Result};

/// Number of weekly observations in a season window.
pub const SEASON_WEEKS: usize = 35;
/// Epidemiology week treated as t = 1.
pub const ANCHOR_WEEK: u32 = 40;

/// One season's raw surveillance rows, in week order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveillanceSeries {
    pub season_label: String,
    pub epi_weeks: Vec<u32>,
    pub ili_proportion: Vec<f64>,
    pub flu_positive_proportion: Vec<f64>,
}

impl SurveillanceSeries {
    /// Equal-length, in-range, contiguous-week checks. Contiguity follows
    /// the epidemiological calendar: week w is followed by w + 1, except
    /// that weeks 52 and 53 may wrap to 1.
    pub fn validate(&self) -> Result<()> {
        let n = self.epi_weeks.len();
        if n == 0 {
            return Err(Error::invalid(format!("season {}: no rows", self.season_label)));
        }
        if self.ili_proportion.len() != n || self.flu_positive_proportion.len() != n {
            return Err(Error::invalid(format!(
                "season {}: column lengths differ ({n} weeks, {} ili, {} flu_pos)",
                self.season_label,
                self.ili_proportion.len(),
                self.flu_positive_proportion.len()
            )));
        }
        for (name, col) in [
            ("ili", &self.ili_proportion),
            ("flu_pos", &self.flu_positive_proportion),
        ] {
            if let Some(v) = col.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "season {}: {name} value {v} is not a proportion in [0, 1]",
                    self.season_label
                )));
            }
        }
        for (i, &w) in self.epi_weeks.iter().enumerate() {
            if !(1..=53).contains(&w) {
                return Err(Error::invalid(format!(
                    "season {}: epi_week {w} outside 1..=53",
                    self.season_label
                )));
            }
            if i > 0 {
                let prev = self.epi_weeks[i - 1];
                let wraps = prev >= 52 && w == 1;
                if w != prev + 1 && !wraps {
                    return Err(Error::invalid(format!(
                        "season {}: weeks not contiguous ({prev} then {w})",
                        self.season_label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A windowed season of ILI+ proportions, t = 1..=35.
#[derive(Debug, Clone, PartialEq)]
pub struct Season {
    pub label: String,
    pub y: Vec<f64>,
    /// Data-quality notes accumulated while building the season.
    pub warnings: Vec<String>,
}

impl Season {
    /// Wrap an already-computed weekly series, enforcing the window length
    /// and the observation support.
    pub fn from_weekly(label: impl Into<String>, y: Vec<f64>) -> Result<Season> {
        let label = label.into();
        if y.len() != SEASON_WEEKS {
            return Err(Error::invalid(format!(
                "season {label}: expected {SEASON_WEEKS} weekly values, got {}",
                y.len()
            )));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite() || **v <= 0.0 || **v >= 1.0) {
            return Err(Error::invalid(format!(
                "season {label}: value {v} outside the open unit interval"
            )));
        }
        Ok(Season { label, y, warnings: Vec::new() })
    }

    /// Write the season as `(t, y)` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["t", "y"])?;
        for (t, y) in self.y.iter().enumerate() {
            w.write_record([(t + 1).to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read a `(t, y)` weekly series of any length — a full season or the first
/// t' weeks of one. Weeks must run 1..=n in order; values must lie strictly
/// inside the unit interval.
pub fn read_weekly_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    let mut y = Vec::new();
    for row in rd.records() {
        let row = row?;
        let t: usize = field(&row, 0, "t")?;
        let v: f64 = field(&row, 1, "y")?;
        if t != y.len() + 1 {
            return Err(Error::invalid(format!(
                "weekly series: expected t = {}, got {t}",
                y.len() + 1
            )));
        }
        if !v.is_finite() || v <= 0.0 || v >= 1.0 {
            return Err(Error::invalid(format!(
                "weekly series: week {t} value {v} outside the open unit interval"
            )));
        }
        y.push(v);
    }
    if y.is_empty() {
        return Err(Error::invalid("weekly series: no rows".to_string()));
    }
    Ok(y)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = row
        .get(idx)
        .ok_or_else(|| Error::invalid(format!("missing {name} column in row {row:?}")))?;
    raw.trim()
        .parse()
        .map_err(|e| Error::invalid(format!("bad {name} value {raw:?}: {e}")))
}

/// Load every season in a `(season, epi_week, ili, flu_pos)` CSV, grouped by
/// label in order of first appearance, each validated.
pub fn read_surveillance_csv(path: impl AsRef<Path>) -> Result<Vec<SurveillanceSeries>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    let mut order: Vec<SurveillanceSeries> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rd.records() {
        let row = row?;
        let label = row
            .get(0)
            .ok_or_else(|| Error::invalid(format!("missing season column in row {row:?}")))?
            .trim()
            .to_string();
        let week: u32 = field(&row, 1, "epi_week")?;
        let ili: f64 = field(&row, 2, "ili")?;
        let flu_pos: f64 = field(&row, 3, "flu_pos")?;
        let at = *index.entry(label.clone()).or_insert_with(|| {
            order.push(SurveillanceSeries {
                season_label: label,
                epi_weeks: Vec::new(),
                ili_proportion: Vec::new(),
                flu_positive_proportion: Vec::new(),
            });
            order.len() - 1
        });
        order[at].epi_weeks.push(week);
        order[at].ili_proportion.push(ili);
        order[at].flu_positive_proportion.push(flu_pos);
    }
    if order.is_empty() {
        return Err(Error::invalid("surveillance file has no rows".to_string()));
    }
    for series in &order {
        series.validate()?;
    }
    Ok(order)
}

/// Next week of the epidemiological calendar when the series itself cannot
/// tell (53-week years only show up through an actual week-53 row).
fn nominal_successor(week: u32) -> u32 {
    if week >= 52 {
        1
    } else {
        week + 1
    }
}

/// Apply the ILI+ correction and window the season: y_t is the product of
/// the ILI and virologic-positive proportions for the t-th week at or after
/// the anchor, clamped into the Beta support. Fails with the list of absent
/// weeks when the window is incomplete.
pub fn ili_plus(series: &SurveillanceSeries) -> Result<Season> {
    series.validate()?;
    let Some(start) = series.epi_weeks.iter().position(|&w| w == ANCHOR_WEEK) else {
        // No anchor row at all: report every expected week the series lacks.
        let mut gaps = Vec::new();
        let mut w = ANCHOR_WEEK;
        for _ in 0..SEASON_WEEKS {
            if !series.epi_weeks.contains(&w) {
                gaps.push(w);
            }
            w = nominal_successor(w);
        }
        return Err(Error::MissingWeeks(gaps));
    };
    let have = series.epi_weeks.len() - start;
    if have < SEASON_WEEKS {
        // Contiguity is already validated, so the shortfall is a truncated
        // tail: continue the calendar from the last present week.
        let mut gaps = Vec::with_capacity(SEASON_WEEKS - have);
        let mut w = *series.epi_weeks.last().expect("validated non-empty");
        for _ in have..SEASON_WEEKS {
            w = nominal_successor(w);
            gaps.push(w);
        }
        return Err(Error::MissingWeeks(gaps));
    }

    let mut clamped = 0usize;
    let y: Vec<f64> = (start..start + SEASON_WEEKS)
        .map(|i| {
            let product = series.ili_proportion[i] * series.flu_positive_proportion[i];
            let v = product.clamp(OBS_CLAMP, 1.0 - OBS_CLAMP);
            clamped += usize::from(v != product);
            v
        })
        .collect();
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(format!(
            "season {}: {clamped} of {SEASON_WEEKS} weekly products clamped into [{OBS_CLAMP:e}, 1 - {OBS_CLAMP:e}]",
            series.season_label
        ));
    }
    Ok(Season { label: series.season_label.clone(), y, warnings })
}

/// Seasonal peak value and week (1..=35, first occurrence on ties) for each
/// season, in input order — the raw material for peak-pair prior moments.
pub fn peak_history(seasons: &[Season]) -> Vec<(f64, u32)> {
    seasons
        .iter()
        .map(|s| {
            let mut best = f64::NEG_INFINITY;
            let mut week = 1u32;
            for (i, &v) in s.y.iter().enumerate() {
                if v > best {
                    best = v;
                    week = i as u32 + 1;
                }
            }
            (best, week)
        })
        .collect()
}
