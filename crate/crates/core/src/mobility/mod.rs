//! GPS traces to a labeled, minute-resolution time-location dataset.
//!
//! Per participant: project to local meters, find stay regions with
//! [`dbscan`], label each region from a [`Gazetteer`], then hold each
//! sample's place until the next sample so that every minute of every
//! complete day carries exactly one [`Place`]. Points outside any stay
//! region are [`Place::InTransit`].

mod code;
mod dbscan;
mod gazetteer;
mod gps;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;

pub use code::{LocationCode, Place, CODE_PAGE};
pub use dbscan::{dbscan, Clustering};
pub use gazetteer::{point_in_polygon, Gazetteer, GazetteerEntry, Resolution, DEFAULT_CUTOFF_M};
pub use gps::{
    check_monotonic, local_distance_m, parse_timestamp, read_gps_csv, read_gps_csv_with, write_gps_csv,
    zoh_upsample, GpsColumns, GpsPoint, LocalProjection, EARTH_RADIUS_M,
};

use crate::{Error, Result, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy)]
pub struct MobilityParams {
    pub eps_m: f64,
    pub min_pts: usize,
    /// A boundary day counts as complete if the trace starts no later than
    /// this many minutes after its midnight (or ends no earlier than this
    /// many minutes before the next midnight).
    pub edge_tolerance_min: i64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            eps_m: 5.0,
            min_pts: 10,
            edge_tolerance_min: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StayRegion {
    pub region_id: usize,
    pub centroid: (f64, f64),
    /// Indices into the participant's trace.
    pub member_points: Vec<usize>,
    pub place: Place,
    pub label: String,
}

/// One participant-day: the place at each of the 1440 minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantDay {
    pub participant_id: String,
    /// Days since the Monday on or before the dataset's first date, so that
    /// `day_index % 7` gives the weekday (0 = Monday).
    pub day_index: u32,
    pub places: Vec<Place>,
}

impl ParticipantDay {
    pub fn weekday(&self) -> u32 {
        self.day_index % 7
    }
}

/// One row of the time-location CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeLocationRecord {
    pub participant_id: String,
    pub day_index: u32,
    pub minute: u16,
    pub place: Place,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MobilityReport {
    /// `(participant, region id, lat, lon)` of regions no gazetteer entry claimed.
    pub unknown_regions: Vec<(String, usize, f64, f64)>,
    /// `(participant, date)` of partial days left out of the dataset.
    pub dropped_days: Vec<(String, NaiveDate)>,
}

#[derive(Debug, Clone, Default)]
pub struct MobilityOutput {
    pub days: Vec<ParticipantDay>,
    pub labels: BTreeMap<Place, String>,
    pub regions: BTreeMap<String, Vec<StayRegion>>,
    pub report: MobilityReport,
}

impl MobilityOutput {
    pub fn records(&self) -> impl Iterator<Item = TimeLocationRecord> + '_ {
        self.days.iter().flat_map(move |d| {
            d.places.iter().enumerate().map(move |(m, &place)| TimeLocationRecord {
                participant_id: d.participant_id.clone(),
                day_index: d.day_index,
                minute: m as u16,
                place,
                label: label_of(&self.labels, place),
            })
        })
    }
}

fn label_of(labels: &BTreeMap<Place, String>, place: Place) -> String {
    labels.get(&place).cloned().unwrap_or_else(|| place.to_string())
}

/// Labels for every code the gazetteer can produce plus the reserved places.
pub fn label_table(gazetteer: &Gazetteer) -> BTreeMap<Place, String> {
    let mut labels = BTreeMap::new();
    for e in &gazetteer.places {
        if let Ok(c) = LocationCode::encode(e.zone, e.location) {
            labels.entry(Place::Code(c)).or_insert_with(|| e.label.clone());
        }
    }
    labels.insert(Place::InTransit, Place::IN_TRANSIT_STR.into());
    labels.insert(Place::Unknown, Place::UNKNOWN_STR.into());
    labels
}

/// Clusters one participant's trace into stay regions (unlabeled).
/// Returns the regions and the region index of each point.
pub fn extract_stay_regions(
    trace: &[GpsPoint],
    proj: &LocalProjection,
    params: &MobilityParams,
) -> Result<(Vec<StayRegion>, Vec<Option<usize>>)> {
    let xy: Vec<[f64; 2]> = trace.iter().map(|p| proj.project(p.lat, p.lon)).collect();
    let clustering = dbscan(&xy, params.eps_m, params.min_pts)?;
    let mut regions: Vec<StayRegion> = (0..clustering.n_clusters)
        .map(|c| StayRegion {
            region_id: c,
            centroid: (0.0, 0.0),
            member_points: Vec::new(),
            place: Place::Unknown,
            label: Place::UNKNOWN_STR.into(),
        })
        .collect();
    for (i, l) in clustering.labels.iter().enumerate() {
        if let Some(c) = *l {
            regions[c].member_points.push(i);
        }
    }
    for r in &mut regions {
        let n = r.member_points.len() as f64;
        let (sx, sy) = r
            .member_points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &i| (sx + xy[i][0], sy + xy[i][1]));
        r.centroid = proj.unproject([sx / n, sy / n]);
    }
    Ok((regions, clustering.labels))
}

/// Assigns gazetteer labels to regions, then expands the trace into
/// complete participant-days of per-minute places. Points in no region are
/// in transit.
pub fn label_stay_regions(
    participant: &str,
    trace: &[GpsPoint],
    region_of_point: &[Option<usize>],
    regions: &mut [StayRegion],
    gazetteer: &Gazetteer,
    anchor_monday: NaiveDate,
    params: &MobilityParams,
    report: &mut MobilityReport,
) -> Vec<ParticipantDay> {
    for r in regions.iter_mut() {
        let res = gazetteer.resolve(participant, r.centroid.0, r.centroid.1);
        r.place = res.place;
        r.label = res.label;
        if res.place == Place::Unknown {
            report
                .unknown_regions
                .push((participant.to_string(), r.region_id, r.centroid.0, r.centroid.1));
        }
    }
    let point_places: Vec<Place> = region_of_point
        .iter()
        .map(|r| r.map_or(Place::InTransit, |c| regions[c].place))
        .collect();
    assemble_days(participant, trace, &point_places, anchor_monday, params, report)
}

fn assemble_days(
    participant: &str,
    trace: &[GpsPoint],
    point_places: &[Place],
    anchor_monday: NaiveDate,
    params: &MobilityParams,
    report: &mut MobilityReport,
) -> Vec<ParticipantDay> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Vec::new();
    };
    let tol = chrono::Duration::minutes(params.edge_tolerance_min);
    let mut days = Vec::new();
    let mut src = 0;
    let mut date = first.timestamp.date();
    while date <= last.timestamp.date() {
        let midnight = NaiveDateTime::new(date, NaiveTime::MIN);
        let next_midnight = midnight + chrono::Duration::days(1);
        let complete = first.timestamp <= midnight + tol && last.timestamp >= next_midnight - tol;
        if !complete {
            report.dropped_days.push((participant.to_string(), date));
        } else {
            let mut places = Vec::with_capacity(MINUTES_PER_DAY);
            for m in 0..MINUTES_PER_DAY as i64 {
                let t = midnight + chrono::Duration::minutes(m);
                while src + 1 < trace.len() && trace[src + 1].timestamp <= t {
                    src += 1;
                }
                places.push(point_places[src]);
            }
            days.push(ParticipantDay {
                participant_id: participant.to_string(),
                day_index: (date - anchor_monday).num_days() as u32,
                places,
            });
        }
        date = date.succ_opt().expect("date in range");
    }
    days
}

/// Full pipeline over a multi-participant trace set. Participants are
/// processed in parallel and merged in participant-id order.
pub fn process_dataset(points: Vec<GpsPoint>, gazetteer: &Gazetteer, params: &MobilityParams) -> Result<MobilityOutput> {
    let proj = LocalProjection::about_centroid(&points);
    let mut by_participant: BTreeMap<String, Vec<GpsPoint>> = BTreeMap::new();
    for p in points {
        by_participant.entry(p.participant_id.clone()).or_default().push(p);
    }
    let Some(first_date) = by_participant
        .values()
        .filter_map(|t| t.first().map(|p| p.timestamp.date()))
        .min()
    else {
        return Ok(MobilityOutput {
            labels: label_table(gazetteer),
            ..Default::default()
        });
    };
    let anchor = first_date - chrono::Duration::days(first_date.weekday().num_days_from_monday() as i64);

    let per: Vec<(String, Vec<StayRegion>, Vec<ParticipantDay>, MobilityReport)> = by_participant
        .into_par_iter()
        .map(|(pid, trace)| {
            check_monotonic(&trace)?;
            let (mut regions, region_of_point) = extract_stay_regions(&trace, &proj, params)?;
            let mut report = MobilityReport::default();
            let days = label_stay_regions(
                &pid,
                &trace,
                &region_of_point,
                &mut regions,
                gazetteer,
                anchor,
                params,
                &mut report,
            );
            Ok((pid, regions, days, report))
        })
        .collect::<Result<_>>()?;

    let mut out = MobilityOutput {
        labels: label_table(gazetteer),
        ..Default::default()
    };
    for (pid, regions, days, report) in per {
        out.days.extend(days);
        out.report.unknown_regions.extend(report.unknown_regions);
        out.report.dropped_days.extend(report.dropped_days);
        out.regions.insert(pid, regions);
    }
    Ok(out)
}

pub fn write_time_location_csv<W: Write>(writer: W, days: &[ParticipantDay], labels: &BTreeMap<Place, String>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "day", "minute", "location_code", "label"])?;
    for d in days {
        let day = d.day_index.to_string();
        for (m, place) in d.places.iter().enumerate() {
            w.write_record([
                d.participant_id.as_str(),
                &day,
                &m.to_string(),
                &place.to_string(),
                &label_of(labels, *place),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<time-location output>", e))?;
    Ok(())
}

/// Reads a time-location CSV back into participant-days, requiring exactly
/// one row per minute of every day present.
pub fn read_time_location_csv<R: Read>(reader: R) -> Result<(Vec<ParticipantDay>, BTreeMap<Place, String>)> {
    const WHAT: &str = "time-location CSV";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["participant_id", "day", "minute", "location_code", "label"];
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format {
            what: WHAT,
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let mut grid: BTreeMap<(String, u32), Vec<Option<Place>>> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec?;
        let err = |msg: String| Error::Format { what: WHAT, line, msg };
        if rec.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", rec.len())));
        }
        let day: u32 = rec[1].parse().map_err(|_| err(format!("bad day {:?}", &rec[1])))?;
        let minute: usize = rec[2]
            .parse()
            .ok()
            .filter(|m| *m < MINUTES_PER_DAY)
            .ok_or_else(|| err(format!("bad minute {:?}", &rec[2])))?;
        let place: Place = rec[3].parse().map_err(|e: Error| err(e.to_string()))?;
        labels.entry(place).or_insert_with(|| rec[4].to_string());
        let slots = grid
            .entry((rec[0].to_string(), day))
            .or_insert_with(|| vec![None; MINUTES_PER_DAY]);
        if slots[minute].replace(place).is_some() {
            return Err(err(format!("duplicate minute {minute} for {} day {day}", &rec[0])));
        }
    }
    let mut days = Vec::with_capacity(grid.len());
    for ((pid, day), slots) in grid {
        let places: Option<Vec<Place>> = slots.into_iter().collect();
        let places = places.ok_or_else(|| Error::Format {
            what: WHAT,
            line: 0,
            msg: format!("participant {pid} day {day} is missing minutes"),
        })?;
        days.push(ParticipantDay {
            participant_id: pid,
            day_index: day,
            places,
        });
    }
    Ok((days, labels))
}

/// `participant_id,occupation` table.
pub fn read_participants_csv<R: Read>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Format {
                what: "participants CSV",
                line: row + 2,
                msg: "expected participant_id,occupation".into(),
            });
        }
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

pub fn write_participants_csv<W: Write>(writer: W, participants: &BTreeMap<String, String>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "occupation"])?;
    for (p, o) in participants {
        w.write_record([p, o])?;
    }
    w.flush().map_err(|e| Error::io("<participants output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::from_toml(
            r#"
[[place]]
label = "Home"
zone = 0
location = 0
participant = "p1"
center = [7.2900, 80.6300]
radius_m = 15.0

[[place]]
label = "Bank"
zone = 3
location = 0
center = [7.3000, 80.6400]
radius_m = 15.0
"#,
        )
        .unwrap()
    }

    /// Home until 08:00, travel, bank 08:30-17:00, travel, home.
    fn two_days() -> Vec<GpsPoint> {
        let start = parse_timestamp("2021-10-05T00:00:00").unwrap(); // a Tuesday
        let mut pts = Vec::new();
        for k in 0..(2 * 288) {
            let t = start + chrono::Duration::minutes(5 * k);
            let m = (k % 288) * 5;
            let (lat, lon) = if m < 480 || m >= 1050 {
                (7.29, 80.63)
            } else if (510..1020).contains(&m) {
                (7.30, 80.64)
            } else {
                let f = ((k % 288) as f64 * 0.173).fract();
                (7.29 + 0.01 * f, 80.63 + 0.01 * f)
            };
            pts.push(GpsPoint {
                participant_id: "p1".into(),
                timestamp: t,
                lat,
                lon,
                alt: 0.0,
            });
        }
        pts
    }

    #[test]
    fn pipeline_labels_every_minute() {
        let mut pts = two_days();
        // last day ends at 23:55, within tolerance
        pts.truncate(2 * 288);
        let out = process_dataset(pts, &gaz(), &MobilityParams::default()).unwrap();
        assert_eq!(out.days.len(), 2);
        let home = Place::Code(LocationCode::encode(0, 0).unwrap());
        let bank = Place::Code(LocationCode::encode(3, 0).unwrap());
        for d in &out.days {
            assert_eq!(d.places.len(), MINUTES_PER_DAY);
            assert_eq!(d.places[0], home);
            assert_eq!(d.places[479], home);
            assert_eq!(d.places[600], bank);
            assert_eq!(d.places[1439], home);
            assert!(d.places[490..505].iter().all(|p| *p == Place::InTransit));
        }
        // Tuesday is weekday 1 relative to the anchoring Monday.
        assert_eq!(out.days[0].day_index, 1);
        assert_eq!(out.days[1].day_index, 2);
        assert_eq!(out.labels[&bank], "Bank");
        assert!(out.report.unknown_regions.is_empty());
    }

    #[test]
    fn partial_days_dropped() {
        let pts: Vec<GpsPoint> = two_days().into_iter().skip(100).collect();
        let out = process_dataset(pts, &gaz(), &MobilityParams::default()).unwrap();
        assert_eq!(out.days.len(), 1);
        assert_eq!(out.report.dropped_days.len(), 1);
    }

    #[test]
    fn unknown_region_reported() {
        let mut pts = two_days();
        for p in &mut pts {
            if p.lat == 7.30 {
                p.lat = 7.35;
            }
        }
        let out = process_dataset(pts, &gaz(), &MobilityParams::default()).unwrap();
        assert_eq!(out.report.unknown_regions.len(), 1);
        assert_eq!(out.days[0].places[600], Place::Unknown);
    }

    #[test]
    fn csv_roundtrip() {
        let out = process_dataset(two_days(), &gaz(), &MobilityParams::default()).unwrap();
        let mut buf = Vec::new();
        write_time_location_csv(&mut buf, &out.days, &out.labels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("participant_id,day,minute,location_code,label\np1,1,0,000000,Home\n"));
        let (days, labels) = read_time_location_csv(buf.as_slice()).unwrap();
        assert_eq!(days, out.days);
        assert_eq!(labels[&Place::InTransit], "IN_TRANSIT");
    }

    #[test]
    fn csv_rejects_gaps_and_duplicates() {
        let head = "participant_id,day,minute,location_code,label\n";
        let dup = format!("{head}p,0,0,000000,Home\np,0,0,000000,Home\n");
        assert!(read_time_location_csv(dup.as_bytes()).is_err());
        let gap = format!("{head}p,0,0,000000,Home\n");
        assert!(read_time_location_csv(gap.as_bytes()).is_err());
        let bad = format!("{head}p,0,1440,000000,Home\n");
        assert!(read_time_location_csv(bad.as_bytes()).is_err());
    }
}
