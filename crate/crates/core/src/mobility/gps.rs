use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};

use crate::{Error, Result};

/// Mean Earth radius used by the local equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, PartialEq)]
pub struct GpsPoint {
    pub participant_id: String,
    /// Local wall-clock time; days split at local midnight.
    pub timestamp: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// Column names used to pull a GPS trace out of an arbitrary CSV export.
///
/// The default matches the native `participant_id,timestamp_iso8601,lat,lon,alt`
/// schema. Other exports (for example the published time-location dataset's
/// raw GPS files) are read by naming their columns here.
#[derive(Debug, Clone)]
pub struct GpsColumns {
    pub participant: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    /// Missing altitude columns are read as 0.
    pub alt: Option<String>,
}

impl Default for GpsColumns {
    fn default() -> Self {
        Self {
            participant: "participant_id".into(),
            timestamp: "timestamp_iso8601".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            alt: Some("alt".into()),
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn read_gps_csv<R: Read>(reader: R) -> Result<Vec<GpsPoint>> {
    read_gps_csv_with(reader, &GpsColumns::default())
}

pub fn read_gps_csv_with<R: Read>(reader: R, cols: &GpsColumns) -> Result<Vec<GpsPoint>> {
    const WHAT: &str = "GPS CSV";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            what: WHAT,
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let ip = find(&cols.participant)?;
    let it = find(&cols.timestamp)?;
    let ilat = find(&cols.lat)?;
    let ilon = find(&cols.lon)?;
    let ialt = cols.alt.as_deref().map(find).transpose()?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Format {
                    what: WHAT,
                    line,
                    msg: format!("bad {name} {:?}", field(i)),
                })
        };
        let timestamp = parse_timestamp(field(it)).ok_or_else(|| Error::Format {
            what: WHAT,
            line,
            msg: format!("bad timestamp {:?}", field(it)),
        })?;
        let lat = num(ilat, "lat")?;
        let lon = num(ilon, "lon")?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Format {
                what: WHAT,
                line,
                msg: format!("coordinate out of range ({lat}, {lon})"),
            });
        }
        let alt = match ialt {
            Some(i) if !field(i).is_empty() => num(i, "alt")?,
            _ => 0.0,
        };
        let participant_id = field(ip).to_string();
        if participant_id.is_empty() {
            return Err(Error::Format {
                what: WHAT,
                line,
                msg: "empty participant id".into(),
            });
        }
        out.push(GpsPoint {
            participant_id,
            timestamp,
            lat,
            lon,
            alt,
        });
    }
    Ok(out)
}

pub fn write_gps_csv<W: Write>(writer: W, points: &[GpsPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "timestamp_iso8601", "lat", "lon", "alt"])?;
    for p in points {
        w.write_record([
            p.participant_id.as_str(),
            &p.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            &format!("{:.7}", p.lat),
            &format!("{:.7}", p.lon),
            &format!("{:.1}", p.alt),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<gps output>", e))?;
    Ok(())
}

/// Checks that timestamps strictly increase within one participant's trace.
pub fn check_monotonic(trace: &[GpsPoint]) -> Result<()> {
    for w in trace.windows(2) {
        if w[0].participant_id != w[1].participant_id {
            return Err(Error::InvalidTrace {
                participant: w[0].participant_id.clone(),
                reason: format!("trace mixes participant {:?}", w[1].participant_id),
            });
        }
        if w[1].timestamp <= w[0].timestamp {
            return Err(Error::InvalidTrace {
                participant: w[0].participant_id.clone(),
                reason: format!(
                    "timestamps not strictly increasing at {} -> {}",
                    w[0].timestamp, w[1].timestamp
                ),
            });
        }
    }
    Ok(())
}

/// Zero-order-hold reconstruction at a one-minute cadence.
///
/// Output instants are `t_0 + j` minutes up to the last input sample; each
/// carries the latest input sample at or before it. A sample that falls
/// between two output instants is superseded by any later sample before the
/// next instant.
pub fn zoh_upsample(trace: &[GpsPoint]) -> Result<Vec<GpsPoint>> {
    check_monotonic(trace)?;
    let Some(first) = trace.first() else {
        return Ok(Vec::new());
    };
    let last = trace.last().unwrap();
    let span = (last.timestamp - first.timestamp).num_seconds();
    let n_out = (span / 60) as usize + 1;
    let mut out = Vec::with_capacity(n_out);
    let mut src = 0;
    for j in 0..n_out {
        let t = first.timestamp + chrono::Duration::minutes(j as i64);
        while src + 1 < trace.len() && trace[src + 1].timestamp <= t {
            src += 1;
        }
        out.push(GpsPoint {
            timestamp: t,
            ..trace[src].clone()
        });
    }
    Ok(out)
}

/// Equirectangular projection to local meters about a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    pub lat0: f64,
    pub lon0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(lat0: f64, lon0: f64) -> Self {
        Self {
            lat0,
            lon0,
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    /// Projection about the mean coordinate of `points`.
    pub fn about_centroid<'a>(points: impl IntoIterator<Item = &'a GpsPoint>) -> Self {
        let (mut slat, mut slon, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            slat += p.lat;
            slon += p.lon;
            n += 1;
        }
        if n == 0 {
            Self::new(0.0, 0.0)
        } else {
            Self::new(slat / n as f64, slon / n as f64)
        }
    }

    pub fn project(&self, lat: f64, lon: f64) -> [f64; 2] {
        [
            EARTH_RADIUS_M * (lon - self.lon0).to_radians() * self.cos_lat0,
            EARTH_RADIUS_M * (lat - self.lat0).to_radians(),
        ]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> (f64, f64) {
        let lat = self.lat0 + (xy[1] / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon0 + (xy[0] / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        (lat, lon)
    }
}

/// Approximate ground distance for points a few kilometres apart.
pub fn local_distance_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let p = LocalProjection::new((a.0 + b.0) / 2.0, a.1);
    let pa = p.project(a.0, a.1);
    let pb = p.project(b.0, b.1);
    ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
}
