//! Ready-made [`Sink`]s.

use std::io::Write;

use crate::codec::{FileWriter, TextWriter};
use crate::error::Result;
use crate::event::{Checksum, Event};
use crate::net::UdpSink;
use crate::runtime::Sink;

/// Accumulates the coordinate checksum of everything it receives.
#[derive(Debug, Default, Clone, Copy)]
pub struct ChecksumSink {
    pub checksum: Checksum,
    pub count: u64,
}

impl Sink for ChecksumSink {
    #[inline]
    fn consume(&mut self, event: Event) -> Result<()> {
        self.checksum.push(&event);
        self.count += 1;
        Ok(())
    }
}

/// Collects events into a `Vec`.
#[derive(Debug, Default, Clone)]
pub struct CollectSink {
    pub events: Vec<Event>,
}

impl Sink for CollectSink {
    fn consume(&mut self, event: Event) -> Result<()> {
        self.events.push(event);
        Ok(())
    }
}

/// Writes an AERF file.
pub struct FileSink<W: Write> {
    writer: FileWriter<W>,
}

impl<W: Write> FileSink<W> {
    pub fn new(writer: FileWriter<W>) -> Self {
        FileSink { writer }
    }

    pub fn bytes_written(&self) -> u64 {
        self.writer.bytes_written()
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner()
    }
}

impl<W: Write> Sink for FileSink<W> {
    fn consume(&mut self, event: Event) -> Result<()> {
        self.writer.write(&event)
    }

    fn finish(&mut self) -> Result<()> {
        self.writer.flush()
    }
}

/// Writes `t,x,y,p` lines.
pub struct TextSink<W: Write> {
    writer: TextWriter<W>,
}

impl<W: Write> TextSink<W> {
    pub fn new(inner: W) -> Self {
        TextSink {
            writer: TextWriter::new(inner),
        }
    }
}

impl<W: Write> Sink for TextSink<W> {
    fn consume(&mut self, event: Event) -> Result<()> {
        Ok(self.writer.write(&event)?)
    }

    fn finish(&mut self) -> Result<()> {
        Ok(self.writer.flush()?)
    }
}

impl Sink for UdpSink {
    fn consume(&mut self, event: Event) -> Result<()> {
        self.send(&event)
    }

    fn finish(&mut self) -> Result<()> {
        self.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::read_file;
    use crate::event::{make_event, Geometry};

    #[test]
    fn file_sink_writes_readable_file() {
        let g = Geometry::new(8, 8).unwrap();
        let evs = [make_event(1, 2, true, 3).unwrap(), make_event(4, 5, false, 6).unwrap()];
        let mut sink = FileSink::new(FileWriter::new(Vec::new(), g).unwrap());
        for e in evs {
            sink.consume(e).unwrap();
        }
        sink.finish().unwrap();
        assert_eq!(sink.bytes_written(), 36);
        let bytes = sink.into_inner().unwrap();
        let back: Vec<Event> = read_file(&bytes[..]).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, evs);
    }

    #[test]
    fn text_sink_lines() {
        let mut out = Vec::new();
        {
            let mut sink = TextSink::new(&mut out);
            sink.consume(make_event(1, 2, true, 5).unwrap()).unwrap();
            sink.finish().unwrap();
        }
        assert_eq!(out, b"5,1,2,1\n");
    }
}
