//! Binary and text encodings.
//!
//! # Packed word
//!
//! One 32-bit word carries address and polarity, serialized little-endian:
//!
//! ```text
//!  31 | 30 ........ 16 | 15 ........ 0
//!   p |   x (15 bits)  |  y (16 bits)
//! ```
//!
//! The same word is used in file records and in UDP datagrams.
//!
//! # AERF files
//!
//! A 12-byte header followed by 12-byte records, all little-endian:
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `"AERF"`             |
//! | 4      | 1    | version, `1`               |
//! | 5      | 1    | flags, `0`                 |
//! | 6      | 2    | width                      |
//! | 8      | 2    | height                     |
//! | 10     | 2    | reserved, `0`              |
//!
//! Each record is `t: u64` (microseconds) followed by the packed word.
//! Records are stored in non-decreasing `t` order.
//!
//! # Text
//!
//! One event per line, `t,x,y,p\n` with `p` in `{0, 1}`.

use std::io::{self, BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::event::{Event, Geometry, X_LIMIT, Y_LIMIT};

pub const MAGIC: [u8; 4] = *b"AERF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const RECORD_LEN: usize = 12;

/// A packed `(p, x, y)` word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventWord(pub u32);

impl EventWord {
    #[inline]
    pub fn from_event(event: &Event) -> Self {
        EventWord(((event.p() as u32) << 31) | (u32::from(event.x()) << 16) | u32::from(event.y()))
    }

    #[inline]
    pub fn x(self) -> u16 {
        ((self.0 >> 16) & 0x7FFF) as u16
    }

    #[inline]
    pub fn y(self) -> u16 {
        (self.0 & 0xFFFF) as u16
    }

    #[inline]
    pub fn p(self) -> bool {
        self.0 >> 31 == 1
    }

    /// Unpacks into an event stamped with `t`.
    #[inline]
    pub fn to_event(self, t: u64) -> Event {
        Event::from_parts(self.x(), self.y(), self.p(), t)
    }

    #[inline]
    pub fn to_le_bytes(self) -> [u8; 4] {
        self.0.to_le_bytes()
    }

    #[inline]
    pub fn from_le_bytes(bytes: [u8; 4]) -> Self {
        EventWord(u32::from_le_bytes(bytes))
    }
}

pub fn pack_word(x: u32, y: u32, p: bool) -> Result<EventWord> {
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
    Ok(EventWord(((p as u32) << 31) | (x << 16) | y))
}

pub fn unpack_word(word: EventWord) -> (u16, u16, bool) {
    (word.x(), word.y(), word.p())
}

pub fn encode_header(geometry: Geometry) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = VERSION;
    // Widths up to 32768 and heights up to 65536 are valid geometries but
    // the header fields are 16-bit; the writer rejects the overflow cases.
    h[6..8].copy_from_slice(&(geometry.width() as u16).to_le_bytes());
    h[8..10].copy_from_slice(&(geometry.height() as u16).to_le_bytes());
    h
}

pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<Geometry> {
    if h[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}", &h[..4])));
    }
    if h[4] != VERSION {
        return Err(Error::Version(h[4]));
    }
    let width = u16::from_le_bytes([h[6], h[7]]);
    let height = u16::from_le_bytes([h[8], h[9]]);
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty geometry {width}x{height}")));
    }
    Geometry::new(width.into(), height.into()).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_record(event: &Event) -> [u8; RECORD_LEN] {
    let mut r = [0u8; RECORD_LEN];
    r[..8].copy_from_slice(&event.t().to_le_bytes());
    r[8..].copy_from_slice(&EventWord::from_event(event).to_le_bytes());
    r
}

pub fn decode_record(r: &[u8; RECORD_LEN]) -> Event {
    let t = u64::from_le_bytes(r[..8].try_into().unwrap());
    EventWord::from_le_bytes(r[8..].try_into().unwrap()).to_event(t)
}

/// Streaming AERF writer.
pub struct FileWriter<W: Write> {
    inner: W,
    geometry: Geometry,
    last_t: Option<u64>,
    bytes: u64,
}

impl<W: Write> FileWriter<W> {
    /// Writes the header immediately.
    pub fn new(mut inner: W, geometry: Geometry) -> Result<Self> {
        if geometry.width() > u32::from(u16::MAX) || geometry.height() > u32::from(u16::MAX) {
            return Err(Error::Parameter(format!(
                "geometry {geometry} does not fit the 16-bit header fields"
            )));
        }
        inner.write_all(&encode_header(geometry))?;
        Ok(FileWriter {
            inner,
            geometry,
            last_t: None,
            bytes: HEADER_LEN as u64,
        })
    }

    pub fn write(&mut self, event: &Event) -> Result<()> {
        if let Some(prev) = self.last_t {
            if event.t() < prev {
                return Err(Error::Ordering {
                    previous: prev,
                    current: event.t(),
                });
            }
        }
        self.geometry.check(event)?;
        self.inner.write_all(&encode_record(event))?;
        self.last_t = Some(event.t());
        self.bytes += RECORD_LEN as u64;
        Ok(())
    }

    /// Bytes written so far, header included.
    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a complete file; returns `12 + 12·n`.
pub fn write_file<'a, W: Write>(
    sink: W,
    geometry: Geometry,
    events: impl IntoIterator<Item = &'a Event>,
) -> Result<u64> {
    let mut w = FileWriter::new(sink, geometry)?;
    for ev in events {
        w.write(ev)?;
    }
    w.flush()?;
    Ok(w.bytes_written())
}

/// Lazy AERF reader; yields events in file order.
#[derive(Debug)]
pub struct FileReader<R: Read> {
    inner: R,
    geometry: Geometry,
    offset: u64,
    last_t: Option<u64>,
    done: bool,
}

impl<R: Read> FileReader<R> {
    /// Reads and validates the header.
    pub fn new(mut inner: R) -> Result<Self> {
        let mut h = [0u8; HEADER_LEN];
        let n = read_full(&mut inner, &mut h)?;
        if n < HEADER_LEN {
            if n >= 4 && h[..4] != MAGIC {
                return Err(Error::Format(format!("bad magic {:02x?}", &h[..4])));
            }
            return Err(Error::Truncated {
                offset: 0,
                available: n,
                expected: HEADER_LEN,
            });
        }
        let geometry = decode_header(&h)?;
        Ok(FileReader {
            inner,
            geometry,
            offset: HEADER_LEN as u64,
            last_t: None,
            done: false,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn read_next(&mut self) -> Result<Option<Event>> {
        let mut r = [0u8; RECORD_LEN];
        let n = read_full(&mut self.inner, &mut r)?;
        if n == 0 {
            return Ok(None);
        }
        if n < RECORD_LEN {
            return Err(Error::Truncated {
                offset: self.offset,
                available: n,
                expected: RECORD_LEN,
            });
        }
        let ev = decode_record(&r);
        if let Some(prev) = self.last_t {
            if ev.t() < prev {
                return Err(Error::Ordering {
                    previous: prev,
                    current: ev.t(),
                });
            }
        }
        self.geometry.check(&ev)?;
        self.last_t = Some(ev.t());
        self.offset += RECORD_LEN as u64;
        Ok(Some(ev))
    }
}

impl<R: Read> Iterator for FileReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Result<Event>> {
        if self.done {
            return None;
        }
        match self.read_next() {
            Ok(Some(ev)) => Some(Ok(ev)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_file<R: Read>(source: R) -> Result<FileReader<R>> {
    FileReader::new(source)
}

/// Like `read_exact`, but reports how many bytes were available at EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn encode_text(event: &Event) -> String {
    format!("{},{},{},{}\n", event.t(), event.x(), event.y(), event.p() as u8)
}

pub fn decode_text(line: &str) -> Result<Event> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            column: fields.len().min(4),
            reason: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let num = |col: usize| -> Result<u64> {
        fields[col].trim().parse::<u64>().map_err(|e| Error::Parse {
            column: col,
            reason: format!("{:?}: {e}", fields[col]),
        })
    };
    let t = num(0)?;
    let x = num(1)?;
    let y = num(2)?;
    let p = match fields[3].trim() {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::Parse {
                column: 3,
                reason: format!("polarity must be 0 or 1, got {other:?}"),
            })
        }
    };
    if x >= u64::from(X_LIMIT) {
        return Err(Error::Parse {
            column: 1,
            reason: format!("x = {x} out of range"),
        });
    }
    if y >= u64::from(Y_LIMIT) {
        return Err(Error::Parse {
            column: 2,
            reason: format!("y = {y} out of range"),
        });
    }
    Ok(Event::from_parts(x as u16, y as u16, p, t))
}

/// Line-oriented text writer.
pub struct TextWriter<W: Write> {
    inner: W,
}

impl<W: Write> TextWriter<W> {
    pub fn new(inner: W) -> Self {
        TextWriter { inner }
    }

    pub fn write(&mut self, event: &Event) -> io::Result<()> {
        writeln!(
            self.inner,
            "{},{},{},{}",
            event.t(),
            event.x(),
            event.y(),
            event.p() as u8
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Iterates events from text lines, skipping blank lines.
pub fn read_text<R: BufRead>(source: R) -> impl Iterator<Item = Result<Event>> {
    source.lines().filter_map(|line| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(decode_text(&l)),
        Err(e) => Some(Err(e.into())),
    })
}
