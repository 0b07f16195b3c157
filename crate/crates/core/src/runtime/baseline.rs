use super::{stage_error, Chain, Sink, Stage};
use crate::error::Result;
use crate::event::Event;

pub(super) fn run(
    source: impl Iterator<Item = Result<Event>>,
    stages: &[Box<dyn Stage>],
    sink: &mut dyn Sink,
) -> Result<(u64, u64)> {
    let mut events_in = 0u64;
    let mut events_out = 0u64;
    if stages.is_empty() {
        for ev in source {
            sink.consume(ev?)?;
            events_in += 1;
        }
        return Ok((events_in, events_in));
    }
    let mut chain = Chain::default();
    let mut out = Vec::new();
    for ev in source {
        let ev = ev?;
        events_in += 1;
        out.clear();
        chain.apply(stages, ev, &mut out).map_err(stage_error)?;
        for &o in &out {
            sink.consume(o)?;
        }
        events_out += out.len() as u64;
    }
    Ok((events_in, events_out))
}
