//! Event-camera streams and their dense encodings.
//!
//! An event is `(t, x, y, p)`: a microsecond timestamp, a pixel, and the sign of
//! the brightness change that fired it. Encoders turn a half-open time window
//! `[t_a, t_b)` of events into a `[C, H, W]` tensor.

mod encode;
mod io;
mod ten;
mod window;

use std::fmt;
use std::str::FromStr;

pub use encode::{encode, encode_mdes, encode_shist, encode_vtei, mdes_stack_lengths, TafEncoder};
pub use io::{read_events, write_events, EventFormat, EventReader};
pub use ten::{read_ten, write_ten};
pub use window::{window_split, WindowSplitter};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default temporal bins for every encoding.
pub const DEFAULT_BINS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn from_sign(p: i64) -> Option<Self> {
        match p {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    /// Channel-group index: 0 for negative, 1 for positive.
    pub fn index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl EventRecord {
    pub fn new(t_us: u64, x: u16, y: u16, p: Polarity) -> Self {
        EventRecord { t_us, x, y, p }
    }
}

/// Events falling in `[t_a, t_b)` on a `width x height` sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EventWindow {
    events: Vec<EventRecord>,
    t_a: u64,
    t_b: u64,
    width: usize,
    height: usize,
}

impl EventWindow {
    pub fn new(events: Vec<EventRecord>, t_a: u64, t_b: u64, width: usize, height: usize) -> Result<Self> {
        if t_b <= t_a {
            return Err(Error::Config(format!("empty window [{t_a}, {t_b})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Config("sensor geometry must be positive".into()));
        }
        let mut prev = t_a;
        for (i, e) in events.iter().enumerate() {
            if e.t_us < t_a || e.t_us >= t_b {
                return Err(Error::Config(format!(
                    "event {i} at {}us outside [{t_a}, {t_b})",
                    e.t_us
                )));
            }
            if e.t_us < prev {
                return Err(Error::OutOfOrder(format!(
                    "event {i} at {}us precedes {prev}us",
                    e.t_us
                )));
            }
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::Config(format!(
                    "event {i} at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            prev = e.t_us;
        }
        Ok(EventWindow {
            events,
            t_a,
            t_b,
            width,
            height,
        })
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn t_a(&self) -> u64 {
        self.t_a
    }

    pub fn t_b(&self) -> u64 {
        self.t_b
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `clamp(floor((t - t_a) * bins / (t_b - t_a)), 0, bins - 1)` in exact integer arithmetic.
    pub fn bin_of(&self, t_us: u64, bins: usize) -> usize {
        let num = (t_us.saturating_sub(self.t_a)) as u128 * bins as u128;
        let idx = (num / (self.t_b - self.t_a) as u128) as usize;
        idx.min(bins - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Encoding {
    Vtei,
    Shist,
    Mdes,
    Taf,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [Encoding::Vtei, Encoding::Shist, Encoding::Mdes, Encoding::Taf];

    /// Channels of the encoded tensor: `bins` for VTEI/MDES, `2 * bins` for SHIST/TAF.
    pub fn channels(self, bins: usize) -> usize {
        match self {
            Encoding::Vtei | Encoding::Mdes => bins,
            Encoding::Shist | Encoding::Taf => 2 * bins,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Vtei => "VTEI",
            Encoding::Shist => "SHIST",
            Encoding::Mdes => "MDES",
            Encoding::Taf => "TAF",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VTEI" => Ok(Encoding::Vtei),
            "SHIST" => Ok(Encoding::Shist),
            "MDES" => Ok(Encoding::Mdes),
            "TAF" => Ok(Encoding::Taf),
            _ => Err(Error::parse(format!("'{s}'"), "unknown encoding")),
        }
    }
}

/// A dense encoding of one window: `[bins, H, W]` for VTEI/MDES, `[2 * bins, H, W]`
/// for SHIST/TAF.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTensor {
    pub format: Encoding,
    pub bins: usize,
    pub tensor: Tensor,
}
