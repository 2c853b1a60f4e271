//! Visit (𝓛) and occupancy (𝓢) probability matrices and roulette-wheel
//! synthesis of daily trajectories.
//!
//! 𝓛 is `n_locations × 1440`: column `t` is the distribution of location at
//! minute `t`. 𝓢 is `n_locations × 1440`: row `l` is the distribution of stay
//! length at `l`, entry `d` meaning a stay of `d + 1` minutes.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mobility::Place;
use crate::{Error, Result, MINUTES_PER_DAY};

const M: usize = MINUTES_PER_DAY;
const COLUMN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    /// Day 0 is a Monday.
    pub fn of_day(day_index: u32) -> Self {
        if day_index % 7 >= 5 {
            DayType::Weekend
        } else {
            DayType::Weekday
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

impl std::fmt::Display for DayType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DayType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weekday" => Ok(DayType::Weekday),
            "weekend" => Ok(DayType::Weekend),
            _ => Err(Error::InvalidInput(format!("unknown day type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationModel {
    /// 𝓢 conditioned on location only.
    #[default]
    Location,
    /// Additionally conditioned on the hour in which the stay starts.
    LocationHour,
}

impl DurationModel {
    fn as_str(self) -> &'static str {
        match self {
            DurationModel::Location => "location",
            DurationModel::LocationHour => "location_hour",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatrixKey {
    pub class: String,
    pub subclass: usize,
    pub day_type: DayType,
}

impl MatrixKey {
    pub fn file_name(&self) -> String {
        format!("{}.{}.{}.mat", self.class, self.subclass, self.day_type)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrices {
    pub key: MatrixKey,
    pub locations: Vec<Place>,
    pub visit: Vec<Vec<f64>>,
    pub occupancy: Vec<Vec<f64>>,
    /// `occupancy_by_hour[h][l]`, present for [`DurationModel::LocationHour`].
    pub occupancy_by_hour: Option<Vec<Vec<Vec<f64>>>>,
    /// Number of observed days behind the estimate.
    pub days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Stay {
    pub location: usize,
    pub start: usize,
    pub duration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyTrajectory {
    pub minutes: Vec<usize>,
    pub stays: Vec<Stay>,
    /// Stays whose location had an empty 𝓢 row and were given one minute.
    pub fallbacks: u32,
}

impl DailyTrajectory {
    pub fn from_minutes(minutes: Vec<usize>) -> Self {
        let stays = runs(&minutes);
        Self {
            minutes,
            stays,
            fallbacks: 0,
        }
    }
}

fn runs<T: PartialEq + Copy>(seq: &[T]) -> Vec<Stay>
where
    usize: From<T>,
{
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=seq.len() {
        if t == seq.len() || seq[t] != seq[start] {
            out.push(Stay {
                location: usize::from(seq[start]),
                start,
                duration: t - start,
            });
            start = t;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateOptions {
    /// Additive (Laplace) smoothing applied to counts.
    pub alpha: f64,
    pub duration_model: DurationModel,
}

/// Estimates matrices from days of place labels; locations are the sorted
/// set of places that occur.
pub fn estimate_matrices(key: MatrixKey, days: &[&[Place]], opts: &EstimateOptions) -> Result<ProbabilityMatrices> {
    let mut locations: Vec<Place> = days.iter().flat_map(|d| d.iter().copied()).collect();
    locations.sort();
    locations.dedup();
    let indexed: Vec<Vec<usize>> = days
        .iter()
        .map(|d| d.iter().map(|p| locations.binary_search(p).expect("collected above")).collect())
        .collect();
    estimate_from_indices(key, locations, &indexed, opts)
}

pub fn estimate_from_indices(
    key: MatrixKey,
    locations: Vec<Place>,
    days: &[Vec<usize>],
    opts: &EstimateOptions,
) -> Result<ProbabilityMatrices> {
    let n = locations.len();
    if days.is_empty() {
        return Err(Error::InvalidInput("no complete days to estimate from".into()));
    }
    if !(opts.alpha >= 0.0 && opts.alpha.is_finite()) {
        return Err(Error::InvalidInput("smoothing must be non-negative".into()));
    }
    let mut visit = vec![vec![0.0; M]; n];
    let mut occ = vec![vec![0.0; M]; n];
    let hourly = opts.duration_model == DurationModel::LocationHour;
    let mut occ_h = if hourly { vec![vec![vec![0.0; M]; n]; 24] } else { Vec::new() };
    for (i, day) in days.iter().enumerate() {
        if day.len() != M {
            return Err(Error::InvalidInput(format!("day {i} has {} minutes", day.len())));
        }
        if let Some(&l) = day.iter().find(|&&l| l >= n) {
            return Err(Error::InvalidInput(format!("location index {l} out of range")));
        }
        for (t, &l) in day.iter().enumerate() {
            visit[l][t] += 1.0;
        }
        for s in runs(day) {
            occ[s.location][s.duration - 1] += 1.0;
            if hourly {
                occ_h[s.start / 60][s.location][s.duration - 1] += 1.0;
            }
        }
    }
    for t in 0..M {
        let total: f64 = (0..n).map(|l| visit[l][t] + opts.alpha).sum();
        for row in visit.iter_mut() {
            row[t] = (row[t] + opts.alpha) / total;
        }
    }
    normalize_rows(&mut occ, opts.alpha);
    let occupancy_by_hour = hourly.then(|| {
        for rows in occ_h.iter_mut() {
            normalize_rows(rows, opts.alpha);
        }
        occ_h
    });
    Ok(ProbabilityMatrices {
        key,
        locations,
        visit,
        occupancy: occ,
        occupancy_by_hour,
        days: days.len(),
    })
}

// Rows without any observed stay stay empty regardless of smoothing.
fn normalize_rows(rows: &mut [Vec<f64>], alpha: f64) {
    for row in rows {
        let observed: f64 = row.iter().sum();
        if observed == 0.0 {
            continue;
        }
        let total = observed + alpha * row.len() as f64;
        for x in row.iter_mut() {
            *x = (*x + alpha) / total;
        }
    }
}

impl ProbabilityMatrices {
    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn duration_model(&self) -> DurationModel {
        if self.occupancy_by_hour.is_some() {
            DurationModel::LocationHour
        } else {
            DurationModel::Location
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        let bad = |m: String| Error::InvalidInput(format!("matrices {:?}: {m}", self.key));
        if n == 0 {
            return Err(bad("no locations".into()));
        }
        let check_shape = |rows: &[Vec<f64>], name: &str| -> Result<()> {
            if rows.len() != n || rows.iter().any(|r| r.len() != M) {
                return Err(bad(format!("{name} is not {n} x {M}")));
            }
            if rows.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(bad(format!("{name} has a negative or non-finite entry")));
            }
            Ok(())
        };
        check_shape(&self.visit, "visit")?;
        check_shape(&self.occupancy, "occupancy")?;
        if let Some(h) = &self.occupancy_by_hour {
            if h.len() != 24 {
                return Err(bad("hourly occupancy needs 24 blocks".into()));
            }
            for rows in h {
                check_shape(rows, "hourly occupancy")?;
            }
        }
        for t in 0..M {
            let s: f64 = self.visit.iter().map(|r| r[t]).sum();
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(bad(format!("visit column {t} sums to {s}")));
            }
        }
        let rows = self.occupancy.iter().chain(self.occupancy_by_hour.iter().flatten().flatten());
        for row in rows {
            let s: f64 = row.iter().sum();
            if s != 0.0 && (s - 1.0).abs() > COLUMN_TOL {
                return Err(bad(format!("occupancy row sums to {s}")));
            }
        }
        Ok(())
    }

    fn duration_row(&self, l: usize, t: usize) -> &[f64] {
        if let Some(h) = &self.occupancy_by_hour {
            let row = &h[t / 60][l];
            if row.iter().any(|&x| x > 0.0) {
                return row;
            }
        }
        &self.occupancy[l]
    }

    /// Roulette-wheel synthesis of one day.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> DailyTrajectory {
        let mut minutes = Vec::with_capacity(M);
        let mut stays = Vec::new();
        let mut fallbacks = 0;
        let mut t = 0;
        while t < M {
            let column = self.visit.iter().map(|r| r[t]);
            let l = roulette(column, rng.random::<f64>()).unwrap_or(0);
            let remaining = M - t;
            let row = &self.duration_row(l, t)[..remaining];
            let duration = if self.occupancy[l].iter().all(|&x| x == 0.0) {
                fallbacks += 1;
                log::warn!("location {} has no stay durations; using one minute", self.locations[l]);
                1
            } else {
                // no feasible mass means every observed stay outlasts the day
                roulette(row.iter().copied(), rng.random::<f64>()).map_or(remaining, |d| d + 1)
            };
            stays.push(Stay {
                location: l,
                start: t,
                duration,
            });
            minutes.extend(std::iter::repeat_n(l, duration));
            t += duration;
        }
        DailyTrajectory {
            minutes,
            stays,
            fallbacks,
        }
    }
}

/// Index picked by a uniform `u ∈ [0,1)` against weights renormalized to
/// their sum; `None` when all weights are zero.
pub fn roulette(weights: impl Iterator<Item = f64> + Clone, u: f64) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    if total <= 0.0 {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if target < acc {
            return last;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvProfile {
    pub per_minute: Vec<f64>,
    pub mean: f64,
}

/// Per-minute total-variation distance between the empirical location
/// distribution of `trajectories` and the columns of 𝓛.
pub fn validate_distribution(trajectories: &[DailyTrajectory], m: &ProbabilityMatrices) -> Result<TvProfile> {
    if trajectories.is_empty() {
        return Err(Error::InvalidInput("no trajectories".into()));
    }
    let n = m.n_locations();
    let mut counts = vec![vec![0u32; n]; M];
    for tr in trajectories {
        if tr.minutes.len() != M {
            return Err(Error::InvalidInput("trajectory is not a full day".into()));
        }
        for (t, &l) in tr.minutes.iter().enumerate() {
            if l >= n {
                return Err(Error::InvalidInput(format!("location index {l} out of range")));
            }
            counts[t][l] += 1;
        }
    }
    let k = trajectories.len() as f64;
    let per_minute: Vec<f64> = (0..M)
        .map(|t| 0.5 * (0..n).map(|l| (counts[t][l] as f64 / k - m.visit[l][t]).abs()).sum::<f64>())
        .collect();
    let mean = per_minute.iter().sum::<f64>() / M as f64;
    Ok(TvProfile { per_minute, mean })
}

// ---- text format ----

const MAGIC: &str = "# epimob probability matrices v1";

pub fn write_matrices(m: &ProbabilityMatrices) -> String {
    let mut s = String::new();
    let locs: Vec<String> = m.locations.iter().map(Place::to_string).collect();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "class = {}", m.key.class).unwrap();
    writeln!(s, "subclass = {}", m.key.subclass).unwrap();
    writeln!(s, "day_type = {}", m.key.day_type).unwrap();
    writeln!(s, "duration_model = {}", m.duration_model().as_str()).unwrap();
    writeln!(s, "days = {}", m.days).unwrap();
    writeln!(s, "locations = {}", locs.join(" ")).unwrap();
    let block = |s: &mut String, title: &str, rows: &[Vec<f64>]| {
        writeln!(s, "[{title}]").unwrap();
        for row in rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
    };
    block(&mut s, "visit", &m.visit);
    block(&mut s, "occupancy", &m.occupancy);
    if let Some(h) = &m.occupancy_by_hour {
        for (hour, rows) in h.iter().enumerate() {
            block(&mut s, &format!("occupancy_hour {hour}"), rows);
        }
    }
    s
}

pub fn parse_matrices(text: &str) -> Result<ProbabilityMatrices> {
    let err = |line: usize, msg: String| Error::Format {
        what: "probability matrices",
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(err(1, format!("expected {MAGIC:?}"))),
    }
    let mut header = |name: &str| -> Result<(usize, String)> {
        let (no, line) = lines.next().ok_or_else(|| err(0, format!("missing {name}")))?;
        let (k, v) = line.split_once('=').ok_or_else(|| err(no, format!("expected `{name} = ...`")))?;
        if k.trim() != name {
            return Err(err(no, format!("expected `{name}`, found `{}`", k.trim())));
        }
        Ok((no, v.trim().to_string()))
    };
    let (_, class) = header("class")?;
    let (no, subclass) = header("subclass")?;
    let subclass = subclass.parse().map_err(|_| err(no, "bad subclass".into()))?;
    let (no, day_type) = header("day_type")?;
    let day_type = day_type.parse().map_err(|e: Error| err(no, e.to_string()))?;
    let (no, model) = header("duration_model")?;
    let hourly = match model.as_str() {
        "location" => false,
        "location_hour" => true,
        other => return Err(err(no, format!("unknown duration model {other:?}"))),
    };
    let (no, days) = header("days")?;
    let days = days.parse().map_err(|_| err(no, "bad day count".into()))?;
    let (no, locs) = header("locations")?;
    let locations = locs
        .split_whitespace()
        .map(|t| t.parse::<Place>().map_err(|e| err(no, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let n = locations.len();
    if n == 0 {
        return Err(err(no, "no locations".into()));
    }
    let mut sorted = locations.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != n {
        return Err(err(no, "duplicate location".into()));
    }

    let mut block = |title: &str| -> Result<Vec<Vec<f64>>> {
        let (no, line) = lines.next().ok_or_else(|| err(0, format!("missing [{title}]")))?;
        if line != format!("[{title}]") {
            return Err(err(no, format!("expected [{title}]")));
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, line) = lines.next().ok_or_else(|| err(0, format!("[{title}] is short of rows")))?;
            let row = line
                .split_whitespace()
                .map(|c| c.parse::<f64>().map_err(|_| err(no, format!("bad number {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != M {
                return Err(err(no, format!("row has {} entries, expected {M}", row.len())));
            }
            rows.push(row);
        }
        Ok(rows)
    };
    let visit = block("visit")?;
    let occupancy = block("occupancy")?;
    let occupancy_by_hour = if hourly {
        Some((0..24).map(|h| block(&format!("occupancy_hour {h}"))).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    if let Some((no, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(no, "trailing content".into()));
    }
    let m = ProbabilityMatrices {
        key: MatrixKey {
            class,
            subclass,
            day_type,
        },
        locations,
        visit,
        occupancy,
        occupancy_by_hour,
        days,
    };
    m.validate()?;
    Ok(m)
}
