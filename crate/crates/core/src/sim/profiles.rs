//! Schedule templates per (class, sub-class, day type). They synthesize
//! days of location codes, from which matrices are fitted, and synthetic
//! GPS traces with a matching gazetteer.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::KindConfig;
use crate::mobility::{Gazetteer, GazetteerEntry, GpsPoint, LocalProjection, LocationCode, Place};
use crate::rng::{Domain, Streams};
use crate::trajectory::{estimate_matrices, DayType, EstimateOptions, MatrixKey, ProbabilityMatrices};
use crate::{Error, Result, MINUTES_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateStay {
    pub kind: String,
    /// Minute of day the stay ends.
    pub until: u32,
    /// Chance the stay happens; skipped time goes to the previous stay.
    #[serde(default = "one")]
    pub prob: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub class: String,
    #[serde(default)]
    pub subclass: usize,
    pub day_type: DayType,
    /// Standard deviation of each stay boundary, minutes.
    #[serde(default)]
    pub jitter_min: f64,
    pub stays: Vec<TemplateStay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub class: String,
    #[serde(default)]
    pub subclass: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_cadence")]
    pub cadence_min: u32,
    #[serde(default = "default_jitter")]
    pub jitter_m: f64,
    /// `[lat, lon]` of the synthetic town.
    #[serde(default = "default_origin")]
    pub origin: [f64; 2],
    pub participants: Vec<SynthGroup>,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}
fn default_days() -> u32 {
    21
}
fn default_cadence() -> u32 {
    5
}
fn default_jitter() -> f64 {
    2.0
}
fn default_origin() -> [f64; 2] {
    [7.2906, 80.6337]
}
fn default_fit_days() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    /// Days synthesized per template when fitting matrices.
    #[serde(default = "default_fit_days")]
    pub fit_days: usize,
    #[serde(rename = "template")]
    pub templates: Vec<Template>,
    pub synth: Option<SynthSpec>,
}

impl ProfileSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::config("profiles", e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::config("profiles", m);
        let mut keys = std::collections::BTreeSet::new();
        for t in &self.templates {
            let name = format!("{}/{}/{}", t.class, t.subclass, t.day_type);
            if !keys.insert(name.clone()) {
                return Err(bad(format!("template {name} defined twice")));
            }
            if t.stays.is_empty() || t.stays.last().unwrap().until != MINUTES_PER_DAY as u32 {
                return Err(bad(format!("{name}: the last stay must end at 1440")));
            }
            if t.stays.windows(2).any(|w| w[1].until <= w[0].until) || t.stays[0].until == 0 {
                return Err(bad(format!("{name}: stay ends must increase")));
            }
            if t.stays.iter().any(|s| !(0.0..=1.0).contains(&s.prob)) || !(t.jitter_min >= 0.0) {
                return Err(bad(format!("{name}: bad probability or jitter")));
            }
        }
        Ok(())
    }

    pub fn template(&self, class: &str, subclass: usize, day_type: DayType) -> Option<&Template> {
        self.templates
            .iter()
            .find(|t| t.class == class && t.subclass == subclass && t.day_type == day_type)
    }

    /// Fits matrices to `fit_days` synthesized days per template.
    pub fn fit(&self, kinds: &[KindConfig], seed: u64) -> Result<Vec<ProbabilityMatrices>> {
        let streams = Streams::new(seed);
        self.templates
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut rng = streams.rng(Domain::Synthetic, &[i as u64]);
                let days = (0..self.fit_days.max(1))
                    .map(|_| sample_day(t, kinds, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[Place]> = days.iter().map(Vec::as_slice).collect();
                let key = MatrixKey {
                    class: t.class.clone(),
                    subclass: t.subclass,
                    day_type: t.day_type,
                };
                estimate_matrices(key, &refs, &EstimateOptions::default())
            })
            .collect()
    }
}

pub fn kind_code(kinds: &[KindConfig], name: &str) -> Result<LocationCode> {
    let k = kinds
        .iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::config("profiles", format!("unknown location kind {name:?}")))?;
    LocationCode::encode(k.zone_class.bits(), k.code)
}

/// One day of places drawn from a template.
pub fn sample_day<R: Rng + ?Sized>(t: &Template, kinds: &[KindConfig], rng: &mut R) -> Result<Vec<Place>> {
    let n = t.stays.len();
    let day = MINUTES_PER_DAY as i64;
    let normal = Normal::new(0.0, t.jitter_min.max(1e-12)).expect("finite sd");
    let mut ends = Vec::with_capacity(n);
    let mut prev = 0i64;
    for (i, s) in t.stays.iter().enumerate() {
        let end = if i + 1 == n {
            day
        } else {
            let shift = if t.jitter_min > 0.0 { normal.sample(rng).round() as i64 } else { 0 };
            (s.until as i64 + shift).clamp(prev + 1, day - (n - 1 - i) as i64)
        };
        ends.push(end);
        prev = end;
    }
    let included: Vec<bool> = t.stays.iter().map(|s| s.prob >= 1.0 || rng.random::<f64>() < s.prob).collect();
    let mut places = Vec::with_capacity(MINUTES_PER_DAY);
    let mut pending = 0usize;
    let mut start = 0i64;
    for (i, s) in t.stays.iter().enumerate() {
        let len = (ends[i] - start) as usize;
        start = ends[i];
        if !included[i] {
            if places.is_empty() {
                pending += len;
            } else {
                let last = *places.last().unwrap();
                places.extend(std::iter::repeat_n(last, len));
            }
            continue;
        }
        let p = Place::Code(kind_code(kinds, &s.kind)?);
        places.extend(std::iter::repeat_n(p, len + pending));
        pending = 0;
    }
    if places.is_empty() {
        return Err(Error::config("profiles", format!("template {}/{} can produce an empty day", t.class, t.subclass)));
    }
    let last = *places.last().unwrap();
    places.extend(std::iter::repeat_n(last, pending));
    Ok(places)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub points: Vec<GpsPoint>,
    pub gazetteer: Gazetteer,
    /// Participant → occupation class.
    pub participants: BTreeMap<String, String>,
    /// Participant → planted sub-class.
    pub planted: BTreeMap<String, usize>,
    /// Days actually simulated per participant, as places per minute.
    pub truth: BTreeMap<String, Vec<Vec<Place>>>,
}

const HOME_SPACING_M: f64 = 120.0;
const SITE_SPACING_M: f64 = 200.0;
const ANCHOR_RADIUS_M: f64 = 25.0;

/// Synthetic GPS traces: per participant, `days` days at the configured
/// cadence with Gaussian jitter around the stay anchors. Homes are private
/// to their participant; every other kind has one shared site.
pub fn synth_gps(profiles: &ProfileSet, kinds: &[KindConfig], seed: u64) -> Result<SynthOutput> {
    let spec = profiles
        .synth
        .as_ref()
        .ok_or_else(|| Error::config("profiles", "no [synth] section"))?;
    if spec.cadence_min == 0 || spec.days == 0 || !(spec.jitter_m >= 0.0) {
        return Err(Error::config("profiles", "synth cadence, days and jitter must be positive"));
    }
    let proj = LocalProjection::new(spec.origin[0], spec.origin[1]);
    let streams = Streams::new(seed);
    let noise = Normal::new(0.0, spec.jitter_m.max(1e-12)).expect("finite sd");
    let home_kinds: Vec<&str> = kinds
        .iter()
        .filter(|k| k.zone_class == crate::environment::ZoneClass::Residential)
        .map(|k| k.name.as_str())
        .collect();

    let mut gazetteer = Gazetteer {
        cutoff_m: crate::mobility::DEFAULT_CUTOFF_M,
        places: Vec::new(),
    };
    let mut site_xy: BTreeMap<&str, [f64; 2]> = BTreeMap::new();
    for (j, k) in kinds.iter().enumerate() {
        if home_kinds.contains(&k.name.as_str()) {
            continue;
        }
        let xy = [j as f64 * SITE_SPACING_M, 600.0];
        let (lat, lon) = proj.unproject(xy);
        gazetteer.places.push(GazetteerEntry {
            label: k.name.clone(),
            zone: k.zone_class.bits(),
            location: k.code,
            participant: None,
            center: Some([lat, lon]),
            radius_m: Some(ANCHOR_RADIUS_M),
            polygon: None,
        });
        site_xy.insert(&k.name, xy);
    }

    let mut out = SynthOutput {
        points: Vec::new(),
        gazetteer,
        participants: BTreeMap::new(),
        planted: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    let mut index = 0usize;
    for g in &spec.participants {
        for _ in 0..g.count {
            let id = format!("{}-{:03}", g.class, index);
            let home_xy = [index as f64 * HOME_SPACING_M, -600.0];
            let (hlat, hlon) = proj.unproject(home_xy);
            let mut rng = streams.rng(Domain::Synthetic, &[1, index as u64]);
            let mut days = Vec::new();
            let mut home_kind: Option<&KindConfig> = None;
            for d in 0..spec.days {
                let date = spec.start_date + Duration::days(d as i64);
                let day_type = DayType::of_day(chrono::Datelike::weekday(&date).num_days_from_monday());
                let t = profiles.template(&g.class, g.subclass, day_type).ok_or_else(|| {
                    Error::config("profiles", format!("no {day_type} template for {}/{}", g.class, g.subclass))
                })?;
                for s in &t.stays {
                    if home_kinds.contains(&s.kind.as_str()) {
                        home_kind = kinds.iter().find(|k| k.name == s.kind);
                    } else if !site_xy.contains_key(s.kind.as_str()) {
                        return Err(Error::config("profiles", format!("unknown location kind {:?}", s.kind)));
                    }
                }
                days.push(sample_day(t, kinds, &mut rng)?);
            }
            if let Some(k) = home_kind {
                out.gazetteer.places.push(GazetteerEntry {
                    label: format!("home of {id}"),
                    zone: k.zone_class.bits(),
                    location: k.code,
                    participant: Some(id.clone()),
                    center: Some([hlat, hlon]),
                    radius_m: Some(ANCHOR_RADIUS_M),
                    polygon: None,
                });
            }
            let code_xy: BTreeMap<Place, [f64; 2]> = kinds
                .iter()
                .map(|k| {
                    let p = Place::Code(LocationCode::encode(k.zone_class.bits(), k.code).expect("validated kind"));
                    let xy = if home_kinds.contains(&k.name.as_str()) { home_xy } else { site_xy[k.name.as_str()] };
                    (p, xy)
                })
                .collect();
            let midnight0 = NaiveDateTime::new(spec.start_date, NaiveTime::MIN);
            let total = spec.days as usize * MINUTES_PER_DAY;
            for m in (0..total).step_by(spec.cadence_min as usize) {
                let place = days[m / MINUTES_PER_DAY][m % MINUTES_PER_DAY];
                let xy = code_xy[&place];
                let (lat, lon) = proj.unproject([xy[0] + noise.sample(&mut rng), xy[1] + noise.sample(&mut rng)]);
                out.points.push(GpsPoint {
                    participant_id: id.clone(),
                    timestamp: midnight0 + Duration::minutes(m as i64),
                    lat,
                    lon,
                    alt: 500.0,
                });
            }
            out.participants.insert(id.clone(), g.class.clone());
            out.planted.insert(id.clone(), g.subclass);
            out.truth.insert(id, days);
            index += 1;
        }
    }
    Ok(out)
}
