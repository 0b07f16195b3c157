//! The address-event data model: events, sensor geometry, the coordinate
//! checksum, and the deterministic synthetic event source.

use std::fmt;
use std::iter::FusedIterator;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};

/// Exclusive upper bound for `x` (15 bits in the packed word).
pub const X_LIMIT: u32 = 1 << 15;
/// Exclusive upper bound for `y` (16 bits in the packed word).
pub const Y_LIMIT: u32 = 1 << 16;

/// A single address event `(x, y, p, t)`.
///
/// Fields are private so every `Event` in circulation satisfies the
/// coordinate bounds. Events are `Copy`; stages receive their own copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Event {
    // Field order gives a (t, x, y, p) sort order.
    t: u64,
    x: u16,
    y: u16,
    p: bool,
}

impl Event {
    /// Builds an event, rejecting coordinates that do not fit the packed word.
    pub fn new(x: u32, y: u32, p: bool, t: u64) -> Result<Self> {
        if x >= X_LIMIT {
            return Err(Error::Range {
                field: "x",
                value: x.into(),
                limit: X_LIMIT.into(),
            });
        }
        if y >= Y_LIMIT {
            return Err(Error::Range {
                field: "y",
                value: y.into(),
                limit: Y_LIMIT.into(),
            });
        }
        Ok(Event {
            x: x as u16,
            y: y as u16,
            p,
            t,
        })
    }

    /// Caller guarantees `x < X_LIMIT`.
    #[inline]
    pub(crate) const fn from_parts(x: u16, y: u16, p: bool, t: u64) -> Self {
        Event { x, y, p, t }
    }

    #[inline]
    pub fn x(&self) -> u16 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> u16 {
        self.y
    }

    /// Polarity; `true` is a positive luminosity change.
    #[inline]
    pub fn p(&self) -> bool {
        self.p
    }

    /// Timestamp in microseconds.
    #[inline]
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Same address and polarity, new timestamp.
    #[inline]
    pub fn with_t(self, t: u64) -> Self {
        Event { t, ..self }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.p as u8, self.t)
    }
}

/// Shorthand for [`Event::new`].
pub fn make_event(x: u32, y: u32, p: bool, t: u64) -> Result<Event> {
    Event::new(x, y, p, t)
}

/// Sensor resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    width: u32,
    height: u32,
}

impl Geometry {
    /// The 346×260 DAVIS346 sensor.
    pub const DAVIS346: Geometry = Geometry {
        width: 346,
        height: 260,
    };

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || width > X_LIMIT {
            return Err(Error::Parameter(format!("width must be in 1..={X_LIMIT}, got {width}")));
        }
        if height == 0 || height > Y_LIMIT {
            return Err(Error::Parameter(format!(
                "height must be in 1..={Y_LIMIT}, got {height}"
            )));
        }
        Ok(Geometry { width, height })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of pixels, `width * height`.
    #[inline]
    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, event: &Event) -> bool {
        u32::from(event.x) < self.width && u32::from(event.y) < self.height
    }

    /// Like [`contains`](Self::contains) but reports the offending field.
    pub fn check(&self, event: &Event) -> Result<()> {
        if u32::from(event.x) >= self.width {
            return Err(Error::Range {
                field: "x",
                value: event.x.into(),
                limit: self.width.into(),
            });
        }
        if u32::from(event.y) >= self.height {
            return Err(Error::Range {
                field: "y",
                value: event.y.into(),
                limit: self.height.into(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Parameter(format!("expected WIDTHxHEIGHT, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|e| Error::Parameter(format!("bad geometry {s:?}: {e}")))
        };
        Geometry::new(parse(w)?, parse(h)?)
    }
}

/// Wrapping 64-bit sum of `x + y` over a multiset of events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Checksum(pub u64);

impl Checksum {
    #[inline]
    pub fn push(&mut self, event: &Event) {
        self.0 = self.0.wrapping_add(u64::from(event.x) + u64::from(event.y));
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.0
    }
}

impl Add for Checksum {
    type Output = Checksum;

    fn add(self, rhs: Checksum) -> Checksum {
        Checksum(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for Checksum {
    fn add_assign(&mut self, rhs: Checksum) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl<'a> FromIterator<&'a Event> for Checksum {
    fn from_iter<I: IntoIterator<Item = &'a Event>>(iter: I) -> Self {
        let mut sum = Checksum::default();
        for ev in iter {
            sum.push(ev);
        }
        sum
    }
}

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn checksum<'a>(events: impl IntoIterator<Item = &'a Event>) -> Checksum {
    events.into_iter().collect()
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output for position `counter` of the stream seeded by `seed`.
///
/// Counter-based, so any element can be computed without the ones before it.
#[inline]
pub fn splitmix64(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic uniform event generator.
///
/// Event `i` is derived from the single word `w = splitmix64(seed, i)`:
///
/// * `x = ((w & 0xFFFF_FFFF) * width) >> 32`
/// * `y = (((w >> 32) & 0x7FFF_FFFF) * height) >> 31`
/// * `p = (w >> 63) == 1`
/// * `t = floor(i * 1_000_000 / rate)`
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    seed: u64,
    geometry: Geometry,
    rate: u64,
    next: u64,
    end: u64,
}

impl SyntheticStream {
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// The `i`-th event of the stream.
    pub fn event_at(&self, i: u64) -> Event {
        let w = splitmix64(self.seed, i);
        let x = ((w & 0xFFFF_FFFF) * u64::from(self.geometry.width)) >> 32;
        let y = (((w >> 32) & 0x7FFF_FFFF) * u64::from(self.geometry.height)) >> 31;
        let t = (u128::from(i) * 1_000_000 / u128::from(self.rate)) as u64;
        Event::from_parts(x as u16, y as u16, (w >> 63) == 1, t)
    }
}

impl Iterator for SyntheticStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if self.next >= self.end {
            return None;
        }
        let ev = self.event_at(self.next);
        self.next += 1;
        Some(ev)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for SyntheticStream {}
impl FusedIterator for SyntheticStream {}

/// `n` events uniform over `geometry`, spaced so they span `n / rate` seconds.
pub fn synthetic_stream(seed: u64, n: u64, geometry: Geometry, rate: u64) -> Result<SyntheticStream> {
    if rate == 0 {
        return Err(Error::Parameter("rate must be > 0 events/s".into()));
    }
    Ok(SyntheticStream {
        seed,
        geometry,
        rate,
        next: 0,
        end: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_event_reads_back() {
        let e = make_event(0, 0, false, 0).unwrap();
        assert_eq!((e.x(), e.y(), e.p(), e.t()), (0, 0, false, 0));
        let e = make_event(345, 259, true, 24_800_000).unwrap();
        assert_eq!((e.x(), e.y(), e.p(), e.t()), (345, 259, true, 24_800_000));
    }

    #[test]
    fn make_event_rejects_out_of_range() {
        match make_event(32768, 0, true, 0) {
            Err(Error::Range { field, .. }) => assert_eq!(field, "x"),
            other => panic!("expected range error, got {other:?}"),
        }
        match make_event(0, 65536, true, 0) {
            Err(Error::Range { field, .. }) => assert_eq!(field, "y"),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(make_event(32767, 65535, true, u64::MAX).is_ok());
    }

    #[test]
    fn checksum_small_cases() {
        assert_eq!(checksum(&[]).value(), 0);
        let evs = [make_event(1, 2, true, 0).unwrap(), make_event(3, 4, false, 9).unwrap()];
        assert_eq!(checksum(&evs).value(), 10);
    }

    #[test]
    fn checksum_wraps() {
        let mut c = Checksum(u64::MAX);
        c.push(&make_event(1, 1, false, 0).unwrap());
        assert_eq!(c.value(), 1);
    }

    #[test]
    fn geometry_bounds() {
        assert!(Geometry::new(0, 10).is_err());
        assert!(Geometry::new(10, 0).is_err());
        assert!(Geometry::new(32769, 1).is_err());
        assert!(Geometry::new(32768, 65536).is_ok());
        assert_eq!("346x260".parse::<Geometry>().unwrap(), Geometry::DAVIS346);
        assert!("346".parse::<Geometry>().is_err());
    }

    #[test]
    fn synthetic_empty_and_rate_zero() {
        let g = Geometry::DAVIS346;
        assert_eq!(synthetic_stream(1, 0, g, 1000).unwrap().count(), 0);
        assert!(matches!(synthetic_stream(1, 10, g, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn synthetic_deterministic_and_bounded() {
        let g = Geometry::DAVIS346;
        let a: Vec<_> = synthetic_stream(7, 5, g, 1_000_000).unwrap().collect();
        let b: Vec<_> = synthetic_stream(7, 5, g, 1_000_000).unwrap().collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|e| g.contains(e)));
        let c: Vec<_> = synthetic_stream(8, 5, g, 1_000_000).unwrap().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_span_follows_rate() {
        let evs: Vec<_> = synthetic_stream(7, 1_000_000, Geometry::DAVIS346, 1_000_000)
            .unwrap()
            .collect();
        let span = evs.last().unwrap().t() - evs[0].t();
        assert!(span.abs_diff(1_000_000) <= 1, "span {span}");
        assert!(evs.windows(2).all(|w| w[0].t() <= w[1].t()));
    }

    #[test]
    fn synthetic_polarity_roughly_balanced() {
        let n = 100_000;
        let pos = synthetic_stream(3, n, Geometry::DAVIS346, 1000)
            .unwrap()
            .filter(|e| e.p())
            .count() as f64;
        assert!((pos / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn synthetic_covers_full_geometry() {
        let g = Geometry::new(4, 3).unwrap();
        let mut seen = [[false; 3]; 4];
        for e in synthetic_stream(11, 2000, g, 1000).unwrap() {
            seen[e.x() as usize][e.y() as usize] = true;
        }
        assert!(seen.iter().flatten().all(|&s| s));
    }
}
