//! Hierarchical environment: root → city → zone → location, the 500 m
//! vector patch grid, and public/private transport.

mod transport;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mobility::LocationCode;
use crate::{Error, Result};

pub use transport::{plan_day_route, reorder_errands, BusLine, Leg, Mode, Position, Segment, TransportBook, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneClass {
    Residential,
    Educational,
    Medical,
    Commercial,
    Agricultural,
    Industrial,
    Administrative,
    Recreational,
}

impl ZoneClass {
    pub const ALL: [ZoneClass; 8] = [
        ZoneClass::Residential,
        ZoneClass::Educational,
        ZoneClass::Medical,
        ZoneClass::Commercial,
        ZoneClass::Agricultural,
        ZoneClass::Industrial,
        ZoneClass::Administrative,
        ZoneClass::Recreational,
    ];

    /// Zone field of a location code.
    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        Self::ALL.get(bits as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TravelTimes {
    pub location_zone_min: u32,
    pub zone_city_min: u32,
    pub city_city_min: u32,
}

impl Default for TravelTimes {
    fn default() -> Self {
        Self {
            location_zone_min: 5,
            zone_city_min: 10,
            city_city_min: 30,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    pub name: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub name: String,
    pub city: String,
    pub class: ZoneClass,
    /// South-west corner in a planar metre frame.
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub temperature_c: Option<f64>,
    pub rainfall_mm: Option<f64>,
    pub humidity_pct: Option<f64>,
}

fn default_footprint() -> [f64; 2] {
    [20.0, 20.0]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KindConfig {
    pub name: String,
    pub zone_class: ZoneClass,
    /// Location field of the code.
    pub code: u8,
    #[serde(default = "default_footprint")]
    pub footprint_m: [f64; 2],
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LocationConfig {
    pub zone: String,
    pub kind: String,
    #[serde(default = "one")]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    IntercityBus,
    IntracityBus,
    Taxi,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub kind: VehicleKind,
    pub name: Option<String>,
    /// Zones (intracity) or cities (intercity), visited as a loop.
    #[serde(default)]
    pub route: Vec<String>,
    pub headway_min: Option<u32>,
    pub capacity: Option<usize>,
    /// Minutes between consecutive stops; defaults to the tree travel time.
    pub hop_min: Option<u32>,
    pub footprint_m: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchConfig {
    pub cell_m: f64,
    pub kv_range: [f64; 2],
    pub temperature_c: f64,
    /// Optional daily temperatures, cycled; overrides `temperature_c`.
    pub temperature_series: Option<Vec<f64>>,
    pub rainfall_mm: f64,
    pub humidity_pct: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            cell_m: 500.0,
            kv_range: [100.0, 200.0],
            temperature_c: 28.0,
            temperature_series: None,
            rainfall_mm: 0.0,
            humidity_pct: 70.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default = "default_root")]
    pub name: String,
    #[serde(default)]
    pub travel: TravelTimes,
    pub cities: Vec<CityConfig>,
    pub zones: Vec<ZoneConfig>,
    pub kinds: Vec<KindConfig>,
    pub locations: Vec<LocationConfig>,
    #[serde(default)]
    pub transport: Vec<TransportConfig>,
    #[serde(default)]
    pub patches: PatchConfig,
}

fn default_root() -> String {
    "country".into()
}

impl EnvironmentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("environment", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    City,
    Zone,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub origin: [f64; 2],
    pub size: [f64; 2],
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.size[0] * self.size[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.origin[i] && p[i] < self.origin[i] + self.size[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub zone_class: Option<ZoneClass>,
    /// Zones carry their class bits; locations carry their full code.
    pub code: Option<LocationCode>,
    pub location_kind: Option<usize>,
    pub rect: Option<Rect>,
    pub center: Option<[f64; 2]>,
    pub footprint: Option<[f64; 2]>,
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatchCell {
    pub id: usize,
    pub zone: NodeId,
    pub rect: Rect,
    /// Clipped by the zone edge.
    pub partial: bool,
    pub temperature_c: f64,
    pub rainfall_mm: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaxiService {
    pub capacity: usize,
    pub footprint: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub nodes: Vec<EnvNode>,
    pub root: NodeId,
    pub cities: Vec<NodeId>,
    pub zones: Vec<NodeId>,
    pub locations: Vec<NodeId>,
    pub kinds: Vec<KindConfig>,
    pub patches: Vec<PatchCell>,
    pub travel: TravelTimes,
    pub lines: Vec<BusLine>,
    pub taxi: Option<TaxiService>,
    pub kv_range: [f64; 2],
    pub temperature_series: Option<Vec<f64>>,
    by_name: HashMap<String, NodeId>,
    by_code: HashMap<LocationCode, Vec<NodeId>>,
    depth: Vec<u8>,
}

impl Environment {
    pub fn from_toml(text: &str) -> Result<Self> {
        build_tree(&EnvironmentConfig::from_toml(text)?)
    }

    pub fn node(&self, id: NodeId) -> &EnvNode {
        &self.nodes[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    /// Locations whose code matches, in tree order.
    pub fn locations_with_code(&self, code: LocationCode) -> &[NodeId] {
        self.by_code.get(&code).map_or(&[], Vec::as_slice)
    }

    pub fn kind_by_name(&self, name: &str) -> Option<usize> {
        self.kinds.iter().position(|k| k.name == name)
    }

    pub fn locations_of_kind(&self, kind: usize) -> Vec<NodeId> {
        self.locations.iter().copied().filter(|&l| self.node(l).location_kind == Some(kind)).collect()
    }

    fn ancestor(&self, mut id: NodeId, kind: NodeKind) -> Option<NodeId> {
        loop {
            let n = self.node(id);
            if n.kind == kind {
                return Some(id);
            }
            id = n.parent?;
        }
    }

    pub fn zone_of(&self, id: NodeId) -> Option<NodeId> {
        self.ancestor(id, NodeKind::Zone)
    }

    pub fn city_of(&self, id: NodeId) -> Option<NodeId> {
        self.ancestor(id, NodeKind::City)
    }

    pub fn patch_of(&self, id: NodeId) -> Option<usize> {
        self.node(id).patch
    }

    pub fn patches_in_zone(&self, zone: NodeId) -> impl Iterator<Item = &PatchCell> + '_ {
        self.patches.iter().filter(move |p| p.zone == zone)
    }

    /// Tree path from `a` up to the lowest common ancestor and down to `b`.
    pub fn route(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        let (mut x, mut y) = (a, b);
        let mut up = vec![x];
        let mut down = vec![y];
        while self.depth[x.0] > self.depth[y.0] {
            x = self.node(x).parent.expect("non-root");
            up.push(x);
        }
        while self.depth[y.0] > self.depth[x.0] {
            y = self.node(y).parent.expect("non-root");
            down.push(y);
        }
        while x != y {
            x = self.node(x).parent.expect("shared root");
            y = self.node(y).parent.expect("shared root");
            up.push(x);
            down.push(y);
        }
        down.pop();
        up.extend(down.into_iter().rev());
        up
    }

    pub fn edge_minutes(&self, a: NodeId, b: NodeId) -> u32 {
        let child = if self.node(a).parent == Some(b) { a } else { b };
        match self.node(child).kind {
            NodeKind::Location => self.travel.location_zone_min,
            NodeKind::Zone => self.travel.zone_city_min,
            // a city-to-city crossing passes the root twice
            NodeKind::City => self.travel.city_city_min.div_ceil(2),
            NodeKind::Root => 0,
        }
    }

    pub fn path_minutes(&self, path: &[NodeId]) -> u32 {
        path.windows(2).map(|w| self.edge_minutes(w[0], w[1])).sum()
    }

    pub fn travel_minutes(&self, a: NodeId, b: NodeId) -> u32 {
        self.path_minutes(&self.route(a, b))
    }

    pub fn temperature(&self, patch: usize, day: u32) -> f64 {
        match &self.temperature_series {
            Some(s) if !s.is_empty() => s[day as usize % s.len()],
            _ => self.patches[patch].temperature_c,
        }
    }
}

fn check_dims(what: &str, name: &str, v: [f64; 2]) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(Error::config("environment", format!("{what} {name:?}: dimensions must be positive")))
    }
}

pub fn build_tree(cfg: &EnvironmentConfig) -> Result<Environment> {
    let bad = |m: String| Error::config("environment", m);
    let mut nodes = vec![EnvNode {
        id: NodeId(0),
        kind: NodeKind::Root,
        name: cfg.name.clone(),
        parent: None,
        children: Vec::new(),
        zone_class: None,
        code: None,
        location_kind: None,
        rect: None,
        center: None,
        footprint: None,
        patch: None,
    }];
    let mut by_name: HashMap<String, NodeId> = HashMap::new();
    by_name.insert(cfg.name.clone(), NodeId(0));
    let mut depth = vec![0u8];
    let mut add = |nodes: &mut Vec<EnvNode>, mut n: EnvNode, parent: NodeId, depth_v: u8| -> Result<NodeId> {
        let id = NodeId(nodes.len());
        if by_name.insert(n.name.clone(), id).is_some() {
            return Err(bad(format!("duplicate name {:?}", n.name)));
        }
        n.id = id;
        n.parent = Some(parent);
        nodes[parent.0].children.push(id);
        nodes.push(n);
        depth.push(depth_v);
        Ok(id)
    };
    let blank = |kind, name: &str| EnvNode {
        id: NodeId(0),
        kind,
        name: name.to_string(),
        parent: None,
        children: Vec::new(),
        zone_class: None,
        code: None,
        location_kind: None,
        rect: None,
        center: None,
        footprint: None,
        patch: None,
    };

    if cfg.cities.is_empty() {
        return Err(bad("no cities".into()));
    }
    let mut cities = Vec::new();
    for c in &cfg.cities {
        cities.push(add(&mut nodes, blank(NodeKind::City, &c.name), NodeId(0), 1)?);
    }
    let city_id = |nodes: &[EnvNode], name: &str| cities.iter().copied().find(|&c| nodes[c.0].name == name);

    let mut seen_codes = HashMap::new();
    for (i, k) in cfg.kinds.iter().enumerate() {
        let code = LocationCode::encode(k.zone_class.bits(), k.code)
            .map_err(|e| bad(format!("kind {:?}: {e}", k.name)))?;
        if let Some(j) = seen_codes.insert(code, i) {
            return Err(bad(format!("kinds {:?} and {:?} share code {code}", cfg.kinds[j].name, k.name)));
        }
        check_dims("kind", &k.name, k.footprint_m)?;
        if cfg.kinds[..i].iter().any(|o| o.name == k.name) {
            return Err(bad(format!("duplicate kind {:?}", k.name)));
        }
    }

    let mut zones = Vec::new();
    for z in &cfg.zones {
        let city = city_id(&nodes, &z.city)
            .ok_or_else(|| bad(format!("zones.{}: unknown city {:?}", z.name, z.city)))?;
        check_dims("zone", &z.name, z.size)?;
        let mut n = blank(NodeKind::Zone, &z.name);
        n.zone_class = Some(z.class);
        n.code = Some(LocationCode::encode(z.class.bits(), 0).expect("class bits fit"));
        n.rect = Some(Rect {
            origin: z.origin,
            size: z.size,
        });
        zones.push(add(&mut nodes, n, city, 2)?);
    }
    for (i, &a) in zones.iter().enumerate() {
        for &b in &zones[..i] {
            if rects_overlap(nodes[a.0].rect.unwrap(), nodes[b.0].rect.unwrap()) {
                return Err(bad(format!("zones {:?} and {:?} overlap", nodes[a.0].name, nodes[b.0].name)));
            }
        }
    }

    // lay out each zone's locations on a regular lattice
    let mut per_zone: Vec<Vec<(usize, usize)>> = vec![Vec::new(); zones.len()];
    for l in &cfg.locations {
        let zi = cfg
            .zones
            .iter()
            .position(|z| z.name == l.zone)
            .ok_or_else(|| bad(format!("locations: unknown zone {:?}", l.zone)))?;
        let ki = cfg
            .kinds
            .iter()
            .position(|k| k.name == l.kind)
            .ok_or_else(|| bad(format!("locations.{}: unknown kind {:?}", l.zone, l.kind)))?;
        if cfg.kinds[ki].zone_class != cfg.zones[zi].class {
            return Err(bad(format!(
                "locations.{}: kind {:?} belongs in {:?} zones",
                l.zone, l.kind, cfg.kinds[ki].zone_class
            )));
        }
        if l.count == 0 {
            return Err(bad(format!("locations.{}.{}: count must be positive", l.zone, l.kind)));
        }
        per_zone[zi].extend(std::iter::repeat_n((ki, l.count), l.count));
    }
    let mut locations = Vec::new();
    let mut by_code: HashMap<LocationCode, Vec<NodeId>> = HashMap::new();
    for (zi, members) in per_zone.iter().enumerate() {
        let zone = zones[zi];
        let rect = nodes[zone.0].rect.unwrap();
        let n = members.len();
        if n == 0 {
            continue;
        }
        let cols = ((n as f64 * rect.size[0] / rect.size[1]).sqrt().ceil() as usize).clamp(1, n);
        let rows = n.div_ceil(cols);
        let mut ordinal: HashMap<usize, usize> = HashMap::new();
        for (i, &(ki, _)) in members.iter().enumerate() {
            let kind = &cfg.kinds[ki];
            let o = ordinal.entry(ki).or_default();
            let mut node = blank(NodeKind::Location, &format!("{}/{}/{}", cfg.zones[zi].name, kind.name, o));
            *o += 1;
            let code = LocationCode::encode(kind.zone_class.bits(), kind.code).expect("validated");
            node.zone_class = Some(kind.zone_class);
            node.code = Some(code);
            node.location_kind = Some(ki);
            node.footprint = Some(kind.footprint_m);
            node.center = Some([
                rect.origin[0] + ((i % cols) as f64 + 0.5) * rect.size[0] / cols as f64,
                rect.origin[1] + ((i / cols) as f64 + 0.5) * rect.size[1] / rows as f64,
            ]);
            let id = add(&mut nodes, node, zone, 3)?;
            locations.push(id);
            by_code.entry(code).or_default().push(id);
        }
    }

    let pc = &cfg.patches;
    if !(pc.cell_m > 0.0) || !(pc.kv_range[0] >= 0.0 && pc.kv_range[1] >= pc.kv_range[0]) {
        return Err(bad("patches: cell_m must be positive and kv_range ordered".into()));
    }
    let mut patches = Vec::new();
    for (zi, &zone) in zones.iter().enumerate() {
        let zc = &cfg.zones[zi];
        let rect = nodes[zone.0].rect.unwrap();
        let nx = (rect.size[0] / pc.cell_m).ceil() as usize;
        let ny = (rect.size[1] / pc.cell_m).ceil() as usize;
        for iy in 0..ny {
            for ix in 0..nx {
                let x0 = ix as f64 * pc.cell_m;
                let y0 = iy as f64 * pc.cell_m;
                let w = pc.cell_m.min(rect.size[0] - x0);
                let h = pc.cell_m.min(rect.size[1] - y0);
                patches.push(PatchCell {
                    id: patches.len(),
                    zone,
                    rect: Rect {
                        origin: [rect.origin[0] + x0, rect.origin[1] + y0],
                        size: [w, h],
                    },
                    partial: w < pc.cell_m || h < pc.cell_m,
                    temperature_c: zc.temperature_c.unwrap_or(pc.temperature_c),
                    rainfall_mm: zc.rainfall_mm.unwrap_or(pc.rainfall_mm),
                    humidity_pct: zc.humidity_pct.unwrap_or(pc.humidity_pct),
                });
            }
        }
    }
    for &l in &locations {
        let zone = nodes[l.0].parent.unwrap();
        let c = nodes[l.0].center.unwrap();
        nodes[l.0].patch = patches.iter().position(|p| p.zone == zone && p.rect.contains(c));
    }

    let mut env = Environment {
        nodes,
        root: NodeId(0),
        cities,
        zones,
        locations,
        kinds: cfg.kinds.clone(),
        patches,
        travel: cfg.travel,
        lines: Vec::new(),
        taxi: None,
        kv_range: pc.kv_range,
        temperature_series: pc.temperature_series.clone(),
        by_name,
        by_code,
        depth,
    };
    for (i, t) in cfg.transport.iter().enumerate() {
        match t.kind {
            VehicleKind::Taxi => {
                if env.taxi.is_some() {
                    return Err(bad("only one taxi service may be configured".into()));
                }
                env.taxi = Some(TaxiService {
                    capacity: t.capacity.unwrap_or(4),
                    footprint: t.footprint_m.unwrap_or([1.5, 2.5]),
                });
            }
            _ => {
                let line = BusLine::from_config(&env, i, t)?;
                env.lines.push(line);
            }
        }
    }
    Ok(env)
}

fn rects_overlap(a: Rect, b: Rect) -> bool {
    (0..2).all(|i| a.origin[i] < b.origin[i] + b.size[i] && b.origin[i] < a.origin[i] + a.size[i])
}
