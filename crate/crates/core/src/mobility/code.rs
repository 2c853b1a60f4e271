//! Six-bit location codes: three bits of zone class, three bits of
//! location kind within the zone class.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Largest zone or location index that fits in three bits, plus one.
pub const CODE_PAGE: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocationCode(u8);

impl LocationCode {
    pub fn encode(zone_index: u8, location_index: u8) -> Result<Self> {
        if zone_index >= CODE_PAGE || location_index >= CODE_PAGE {
            return Err(Error::InvalidInput(format!(
                "location code ({zone_index}, {location_index}) does not fit in 3+3 bits"
            )));
        }
        Ok(Self(zone_index * CODE_PAGE + location_index))
    }

    pub fn from_value(value: u8) -> Option<Self> {
        (value < CODE_PAGE * CODE_PAGE).then_some(Self(value))
    }

    pub fn decode(self) -> (u8, u8) {
        (self.zone_bits(), self.location_bits())
    }

    pub fn zone_bits(self) -> u8 {
        self.0 >> 3
    }

    pub fn location_bits(self) -> u8 {
        self.0 & 0b111
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn to_binary(self) -> String {
        format!("{:06b}", self.0)
    }

    pub fn from_binary(s: &str) -> Option<Self> {
        if s.len() != 6 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return None;
        }
        u8::from_str_radix(s, 2).ok().and_then(Self::from_value)
    }
}

impl Serialize for LocationCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_binary())
    }
}

impl fmt::Display for LocationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06b}", self.0)
    }
}

/// What a participant-minute (or an agent stay) resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Code(LocationCode),
    InTransit,
    Unknown,
}

impl Place {
    pub const IN_TRANSIT_STR: &'static str = "IN_TRANSIT";
    pub const UNKNOWN_STR: &'static str = "UNKNOWN";

    /// Coordinate used when days are compared as numeric vectors. The two
    /// reserved places sit just above the code range.
    pub fn numeric(self) -> f64 {
        match self {
            Place::Code(c) => c.value() as f64,
            Place::InTransit => 64.0,
            Place::Unknown => 65.0,
        }
    }

    pub fn code(self) -> Option<LocationCode> {
        match self {
            Place::Code(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Code(c) => c.fmt(f),
            Place::InTransit => f.write_str(Self::IN_TRANSIT_STR),
            Place::Unknown => f.write_str(Self::UNKNOWN_STR),
        }
    }
}

impl FromStr for Place {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            Self::IN_TRANSIT_STR => Ok(Place::InTransit),
            Self::UNKNOWN_STR => Ok(Place::Unknown),
            other => LocationCode::from_binary(other)
                .map(Place::Code)
                .ok_or_else(|| Error::InvalidInput(format!("bad location code {other:?}"))),
        }
    }
}

impl Serialize for Place {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Place {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
