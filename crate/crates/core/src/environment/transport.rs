//! Scheduled bus loops, on-demand shared taxis and per-agent day plans.
//!
//! Buses run continuous loops over their stops, departing the first stop
//! every `headway` minutes; trip `q` leaves it at minute `q * headway`. Seat
//! bookings are kept per (line, trip, minute) so a full bus turns riders
//! away to the next trip.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{Environment, NodeId, NodeKind, TransportConfig, VehicleKind};
use crate::{Error, Result, MINUTES_PER_DAY};

const DAY: u32 = MINUTES_PER_DAY as u32;
/// Trips an agent will wait for before giving up on the bus.
const MAX_TRIPS_WAITED: i64 = 4;

#[derive(Debug, Clone, Serialize)]
pub struct BusLine {
    pub index: usize,
    pub name: String,
    pub kind: VehicleKind,
    pub stops: Vec<NodeId>,
    /// Minutes from the first stop to each stop.
    pub offsets: Vec<u32>,
    pub period: u32,
    pub headway: u32,
    pub capacity: usize,
    pub footprint: [f64; 2],
}

impl BusLine {
    pub(super) fn from_config(env: &Environment, index: usize, t: &TransportConfig) -> Result<Self> {
        let name = t.name.clone().unwrap_or_else(|| format!("line{index}"));
        let bad = |m: String| Error::config("environment", format!("transport {name:?}: {m}"));
        let want = if t.kind == VehicleKind::IntercityBus { NodeKind::City } else { NodeKind::Zone };
        let mut stops = Vec::new();
        for s in &t.route {
            let id = env.by_name(s).ok_or_else(|| bad(format!("unknown stop {s:?}")))?;
            if env.node(id).kind != want {
                return Err(bad(format!("stop {s:?} is not a {want:?}")));
            }
            if stops.contains(&id) {
                return Err(bad(format!("stop {s:?} repeated")));
            }
            stops.push(id);
        }
        if stops.len() < 2 {
            return Err(bad("needs at least two stops".into()));
        }
        if want == NodeKind::Zone && stops.iter().any(|&s| env.city_of(s) != env.city_of(stops[0])) {
            return Err(bad("intracity stops must share a city".into()));
        }
        let mut offsets = vec![0];
        let mut period = 0;
        for j in 0..stops.len() {
            let next = stops[(j + 1) % stops.len()];
            period += t.hop_min.unwrap_or_else(|| env.travel_minutes(stops[j], next)).max(1);
            if j + 1 < stops.len() {
                offsets.push(period);
            }
        }
        let headway = t.headway_min.unwrap_or(if want == NodeKind::City { 60 } else { 15 });
        let capacity = t.capacity.unwrap_or(40);
        if headway == 0 || capacity == 0 {
            return Err(bad("headway and capacity must be positive".into()));
        }
        Ok(Self {
            index,
            name,
            kind: t.kind,
            stops,
            offsets,
            period,
            headway,
            capacity,
            footprint: t.footprint_m.unwrap_or([2.5, 10.0]),
        })
    }

    pub fn stop_index(&self, node: NodeId) -> Option<usize> {
        self.stops.iter().position(|&s| s == node)
    }

    /// First trip passing `stop` at or after minute `t`.
    pub fn next_trip(&self, stop: usize, t: u32) -> i64 {
        (t as i64 - self.offsets[stop] as i64).div_euclid(self.headway as i64)
            + ((t as i64 - self.offsets[stop] as i64).rem_euclid(self.headway as i64) != 0) as i64
    }

    pub fn pass_time(&self, trip: i64, stop: usize) -> i64 {
        trip * self.headway as i64 + self.offsets[stop] as i64
    }

    pub fn ride_minutes(&self, from: usize, to: usize) -> u32 {
        let d = (self.offsets[to] as i64 - self.offsets[from] as i64).rem_euclid(self.period as i64) as u32;
        if d == 0 {
            self.period
        } else {
            d
        }
    }

    /// Index of the last stop the trip has passed at `minute`, or `None`
    /// before the trip starts.
    pub fn position(&self, trip: i64, minute: i64) -> Option<usize> {
        let elapsed = minute - trip * self.headway as i64;
        if elapsed < 0 {
            return None;
        }
        let phase = (elapsed % self.period as i64) as u32;
        Some(self.offsets.iter().rposition(|&o| o <= phase).unwrap_or(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VehicleId {
    Bus { line: usize, trip: i64 },
    Taxi { day: u32, n: u32 },
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleId::Bus { line, trip } => write!(f, "bus:{line}:{trip}"),
            VehicleId::Taxi { day, n } => write!(f, "taxi:{day}:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Mode {
    Private,
    Bus { line: usize, trip: i64, board: u32, alight: u32 },
    Taxi { vehicle: VehicleId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Leg {
    pub from: NodeId,
    pub to: NodeId,
    pub depart: u32,
    pub arrive: u32,
    pub mode: Mode,
    /// Public transport was wanted but none could take the agent.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Position {
    At(NodeId),
    Transit,
    Aboard(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: u32,
    pub end: u32,
    pub pos: Position,
}

#[derive(Debug, Default)]
pub struct TransportBook {
    day: u32,
    seats: HashMap<(usize, i64, u32), usize>,
    taxis: HashMap<(NodeId, NodeId, u32), (VehicleId, usize)>,
    next_taxi: u32,
    pub denied_boardings: u64,
    pub fallbacks: u64,
}

impl TransportBook {
    pub fn new_day(&mut self, day: u32) {
        self.day = day;
        self.seats.clear();
        self.taxis.clear();
        self.next_taxi = 0;
    }

    pub fn seats_taken(&self, line: usize, trip: i64, minute: u32) -> usize {
        self.seats.get(&(line, trip, minute)).copied().unwrap_or(0)
    }

    fn try_board(&mut self, line: &BusLine, trip: i64, board: u32, alight: u32) -> bool {
        let span = board..alight.min(DAY);
        if span.clone().any(|m| self.seats_taken(line.index, trip, m) >= line.capacity) {
            self.denied_boardings += 1;
            return false;
        }
        for m in span {
            *self.seats.entry((line.index, trip, m)).or_default() += 1;
        }
        true
    }

    fn hail_taxi(&mut self, capacity: usize, from: NodeId, to: NodeId, t: u32) -> VehicleId {
        let day = self.day;
        let next = &mut self.next_taxi;
        let slot = self.taxis.entry((from, to, t)).or_insert_with(|| {
            *next += 1;
            (VehicleId::Taxi { day, n: *next - 1 }, 0)
        });
        if slot.1 >= capacity {
            *next += 1;
            *slot = (VehicleId::Taxi { day, n: *next - 1 }, 0);
        }
        slot.1 += 1;
        slot.0
    }
}

fn plan_leg(env: &Environment, book: &mut TransportBook, from: NodeId, to: NodeId, t: u32, public: bool) -> Leg {
    let total = env.travel_minutes(from, to).max(1);
    let private = |fallback| Leg {
        from,
        to,
        depart: t,
        arrive: t + total,
        mode: Mode::Private,
        fallback,
    };
    let (Some(zf), Some(zt)) = (env.zone_of(from), env.zone_of(to)) else {
        return private(false);
    };
    if !public || zf == zt {
        return private(false);
    }
    let (cf, ct) = (env.city_of(zf).unwrap(), env.city_of(zt).unwrap());
    let (a, b, walk_a, walk_b) = if cf == ct {
        (zf, zt, env.travel.location_zone_min, env.travel.location_zone_min)
    } else {
        let w = env.travel.location_zone_min + env.travel.zone_city_min;
        (cf, ct, w, w)
    };
    let want = if cf == ct { VehicleKind::IntracityBus } else { VehicleKind::IntercityBus };
    for line in env.lines.iter().filter(|l| l.kind == want) {
        let (Some(sa), Some(sb)) = (line.stop_index(a), line.stop_index(b)) else {
            continue;
        };
        let ride = line.ride_minutes(sa, sb);
        let first = line.next_trip(sa, t + walk_a);
        for trip in first..first + MAX_TRIPS_WAITED {
            let board = line.pass_time(trip, sa) as u32;
            if board >= DAY {
                break;
            }
            if book.try_board(line, trip, board, board + ride) {
                return Leg {
                    from,
                    to,
                    depart: t,
                    arrive: board + ride + walk_b,
                    mode: Mode::Bus {
                        line: line.index,
                        trip,
                        board,
                        alight: board + ride,
                    },
                    fallback: false,
                };
            }
        }
    }
    if let Some(taxi) = env.taxi {
        let vehicle = book.hail_taxi(taxi.capacity, zf, zt, t);
        return Leg {
            from,
            to,
            depart: t,
            arrive: t + total,
            mode: Mode::Taxi { vehicle },
            fallback: false,
        };
    }
    book.fallbacks += 1;
    log::debug!("no public transport from {} to {}; travelling privately", env.node(from).name, env.node(to).name);
    private(true)
}

fn push(segments: &mut Vec<Segment>, start: u32, end: u32, pos: Position) {
    let end = end.min(DAY);
    if start < end {
        segments.push(Segment { start, end, pos });
    }
}

/// Turns an ordered list of `(location, start, duration)` stays into minute
/// segments. Travel starts when a stay ends and eats into the next one; if
/// it overruns, later stays start late. `public(i)` decides whether leg `i`
/// should use public transport.
pub fn plan_day_route(
    env: &Environment,
    book: &mut TransportBook,
    stays: &[(NodeId, u32, u32)],
    mut public: impl FnMut(usize) -> bool,
) -> (Vec<Segment>, Vec<Leg>) {
    let mut segments = Vec::new();
    let mut legs = Vec::new();
    let mut t = 0u32;
    let mut prev: Option<NodeId> = None;
    for &(node, start, duration) in stays {
        if t >= DAY {
            break;
        }
        if let Some(p) = prev.filter(|&p| p != node) {
            let leg = plan_leg(env, book, p, node, t, public(legs.len()));
            match leg.mode {
                Mode::Private => push(&mut segments, leg.depart, leg.arrive, Position::Transit),
                Mode::Taxi { vehicle } => push(&mut segments, leg.depart, leg.arrive, Position::Aboard(vehicle)),
                Mode::Bus { line, trip, board, alight } => {
                    push(&mut segments, leg.depart, board, Position::Transit);
                    push(&mut segments, board, alight, Position::Aboard(VehicleId::Bus { line, trip }));
                    push(&mut segments, alight, leg.arrive, Position::Transit);
                }
            }
            t = leg.arrive.min(DAY);
            legs.push(leg);
        }
        let end = (start + duration).max(t).min(DAY);
        match segments.last_mut() {
            Some(s) if s.pos == Position::At(node) && s.end == t => s.end = end,
            _ => push(&mut segments, t, end, Position::At(node)),
        }
        t = end;
        prev = Some(node);
    }
    (segments, legs)
}

/// Greedy nearest-neighbour reordering of the stays between the first and
/// the last, keeping each stay's duration.
pub fn reorder_errands(env: &Environment, stays: &[(NodeId, u32, u32)]) -> Vec<(NodeId, u32, u32)> {
    if stays.len() <= 3 {
        return stays.to_vec();
    }
    let mut rest: Vec<(NodeId, u32, u32)> = stays[1..stays.len() - 1].to_vec();
    let mut out = vec![stays[0]];
    while !rest.is_empty() {
        let here = out.last().unwrap().0;
        let i = (0..rest.len())
            .min_by_key(|&i| (env.travel_minutes(here, rest[i].0), i))
            .unwrap();
        out.push(rest.remove(i));
    }
    out.push(*stays.last().unwrap());
    let mut t = 0;
    for s in out.iter_mut() {
        s.1 = t;
        t += s.2;
    }
    out
}
