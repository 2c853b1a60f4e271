//! Named places used to turn stay-region centroids into location codes.

use serde::{Deserialize, Serialize};

use super::code::{LocationCode, Place};
use super::gps::LocalProjection;
use crate::{Error, Result};

pub const DEFAULT_CUTOFF_M: f64 = 50.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazetteerEntry {
    pub label: String,
    /// Zone-class index (high three bits of the code).
    pub zone: u8,
    /// Location-kind index within the zone class (low three bits).
    pub location: u8,
    /// Restricts the entry to one participant (homes, private workplaces).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    /// Closed ring of `[lat, lon]` vertices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gazetteer {
    /// Farthest a centroid may lie from an entry and still take its label.
    #[serde(default = "default_cutoff")]
    pub cutoff_m: f64,
    #[serde(default, rename = "place")]
    pub places: Vec<GazetteerEntry>,
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_M
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub place: Place,
    pub label: String,
    pub entry: Option<usize>,
    /// Zero when the centroid is inside the entry.
    pub distance_m: f64,
}

impl Gazetteer {
    pub fn from_toml(text: &str) -> Result<Self> {
        let g: Gazetteer = toml::from_str(text).map_err(|e| Error::config("gazetteer", e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("gazetteer serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_m >= 0.0 && self.cutoff_m.is_finite()) {
            return Err(Error::config("gazetteer.cutoff_m", "must be a non-negative number"));
        }
        for (i, e) in self.places.iter().enumerate() {
            let path = format!("gazetteer.place[{i}]");
            LocationCode::encode(e.zone, e.location).map_err(|err| Error::config(&path, err.to_string()))?;
            match (&e.center, e.radius_m, &e.polygon) {
                (Some(c), Some(r), None) => {
                    if !(r >= 0.0 && r.is_finite()) || !valid_coord(c) {
                        return Err(Error::config(&path, "bad center/radius"));
                    }
                }
                (None, None, Some(poly)) => {
                    if poly.len() < 3 || !poly.iter().all(valid_coord) {
                        return Err(Error::config(&path, "polygon needs at least 3 valid vertices"));
                    }
                }
                _ => {
                    return Err(Error::config(
                        &path,
                        "give either center + radius_m or polygon",
                    ))
                }
            }
        }
        Ok(())
    }

    /// Label for a centroid seen by `participant`.
    ///
    /// Entries containing the point win, participant-specific entries first,
    /// then the smaller entry, then file order. Otherwise the nearest entry
    /// within the cutoff is used; failing that the place is `Unknown`.
    pub fn resolve(&self, participant: &str, lat: f64, lon: f64) -> Resolution {
        let proj = LocalProjection::new(lat, lon);
        let mut best: Option<(bool, bool, f64, f64, usize)> = None;
        for (i, e) in self.places.iter().enumerate() {
            let owned = match &e.participant {
                Some(p) if p != participant => continue,
                Some(_) => true,
                None => false,
            };
            let (dist, area) = e.distance_and_area(&proj);
            let inside = dist == 0.0;
            if !inside && dist > self.cutoff_m {
                continue;
            }
            // Lexicographic preference: inside, owned, nearer, smaller.
            let key = (!inside, !owned, dist, area, i);
            let better = match best {
                None => true,
                Some(b) => {
                    let bk = (b.0, b.1, b.2, b.3, b.4);
                    key.partial_cmp(&bk) == Some(std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some(key);
            }
        }
        match best {
            Some((_, _, dist, _, i)) => {
                let e = &self.places[i];
                Resolution {
                    place: Place::Code(LocationCode::encode(e.zone, e.location).expect("validated")),
                    label: e.label.clone(),
                    entry: Some(i),
                    distance_m: dist,
                }
            }
            None => Resolution {
                place: Place::Unknown,
                label: Place::UNKNOWN_STR.into(),
                entry: None,
                distance_m: f64::INFINITY,
            },
        }
    }
}

fn valid_coord(c: &[f64; 2]) -> bool {
    (-90.0..=90.0).contains(&c[0]) && (-180.0..=180.0).contains(&c[1])
}

impl GazetteerEntry {
    /// Distance (m) from the projection origin to the entry, zero inside,
    /// and the entry's area in m².
    fn distance_and_area(&self, proj: &LocalProjection) -> (f64, f64) {
        if let (Some(c), Some(r)) = (self.center, self.radius_m) {
            let p = proj.project(c[0], c[1]);
            let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
            return ((d - r).max(0.0), std::f64::consts::PI * r * r);
        }
        let ring: Vec<[f64; 2]> = self
            .polygon
            .as_ref()
            .map(|v| v.iter().map(|c| proj.project(c[0], c[1])).collect())
            .unwrap_or_default();
        let area = polygon_area(&ring);
        if point_in_polygon([0.0, 0.0], &ring) {
            (0.0, area)
        } else {
            let d = (0..ring.len())
                .map(|i| segment_distance([0.0, 0.0], ring[i], ring[(i + 1) % ring.len()]))
                .fold(f64::INFINITY, f64::min);
            (d, area)
        }
    }
}

pub fn point_in_polygon(p: [f64; 2], ring: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polygon_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let s: f64 = (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    s.abs() / 2.0
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}
