//! Stage adapters for closures.

use super::Stage;
use crate::error::StageError;
use crate::event::Event;

/// A stage backed by a closure `Fn(Event, &mut dyn FnMut(Event)) -> Result<(), StageError>`.
pub struct FnStage<F> {
    f: F,
}

impl<F> FnStage<F>
where
    F: Fn(Event, &mut dyn FnMut(Event)) -> Result<(), StageError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnStage { f }
    }
}

impl<F> Stage for FnStage<F>
where
    F: Fn(Event, &mut dyn FnMut(Event)) -> Result<(), StageError> + Send + Sync,
{
    fn process(&self, event: Event, emit: &mut dyn FnMut(Event)) -> Result<(), StageError> {
        (self.f)(event, emit)
    }
}

struct Filter<P>(P);

impl<P: Fn(&Event) -> bool + Send + Sync> Stage for Filter<P> {
    fn process(&self, event: Event, emit: &mut dyn FnMut(Event)) -> Result<(), StageError> {
        if (self.0)(&event) {
            emit(event);
        }
        Ok(())
    }
}

struct Map<F>(F);

impl<F: Fn(Event) -> Event + Send + Sync> Stage for Map<F> {
    fn process(&self, event: Event, emit: &mut dyn FnMut(Event)) -> Result<(), StageError> {
        emit((self.0)(event));
        Ok(())
    }
}

/// Keeps events for which `pred` holds.
pub fn filter(pred: impl Fn(&Event) -> bool + Send + Sync + 'static) -> Box<dyn Stage> {
    Box::new(Filter(pred))
}

/// One-to-one event transformation.
pub fn map(f: impl Fn(Event) -> Event + Send + Sync + 'static) -> Box<dyn Stage> {
    Box::new(Map(f))
}

/// Keeps only events of the given polarity.
pub fn polarity_filter(positive: bool) -> Box<dyn Stage> {
    filter(move |e| e.p() == positive)
}
