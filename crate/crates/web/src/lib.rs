//! Browser bindings: a moving-bar scene run through framing and the edge
//! detector, and the dense/sparse transfer byte curve.

use aerflow::edge::{EdgeDetector, Kernel, LifParams};
use aerflow::event::SyntheticStream;
use aerflow::frame::{dense_bytes, sparse_bytes, AccumulationMode, Frame};
use aerflow::{make_event, synthetic_stream, Event, Geometry};
use wasm_bindgen::prelude::*;

const DT_US: u64 = 1000;

/// A bright square bouncing horizontally over sensor noise. Each step
/// synthesizes one window of events, bins it and feeds the edge detector.
#[wasm_bindgen]
pub struct EdgeScene {
    geometry: Geometry,
    detector: EdgeDetector,
    lif: LifParams,
    noise: SyntheticStream,
    noise_per_window: u64,
    noise_next: u64,
    side: u32,
    /// Pixels per window.
    speed: f64,
    left: f64,
    window: u64,
    events: u32,
    spikes: u32,
    frame_rgba: Vec<u8>,
    spike_rgba: Vec<u8>,
}

fn detector(lif: LifParams) -> EdgeDetector {
    EdgeDetector::new(Kernel::laplacian(), lif).expect("valid detector parameters")
}

#[wasm_bindgen]
impl EdgeScene {
    /// Sizes are clamped to 16..=1024; `noise_rate` is in events per second.
    #[wasm_bindgen(constructor)]
    pub fn new(width: u32, height: u32, seed: u32, noise_rate: u32) -> EdgeScene {
        let geometry = Geometry::new(width.clamp(16, 1024), height.clamp(16, 1024)).expect("clamped geometry");
        let lif = LifParams {
            dt: DT_US as f64,
            ..LifParams::default()
        };
        let pixels = geometry.pixels() * 4;
        EdgeScene {
            geometry,
            detector: detector(lif),
            lif,
            noise: synthetic_stream(u64::from(seed), u64::MAX, geometry, 1_000_000).expect("valid stream"),
            noise_per_window: u64::from(noise_rate) * DT_US / 1_000_000,
            noise_next: 0,
            side: geometry.height().min(geometry.width()) / 3,
            speed: 0.5,
            left: 0.0,
            window: 0,
            events: 0,
            spikes: 0,
            frame_rgba: vec![0; pixels],
            spike_rgba: vec![0; pixels],
        }
    }

    pub fn width(&self) -> u32 {
        self.geometry.width()
    }

    pub fn height(&self) -> u32 {
        self.geometry.height()
    }

    /// Restarts the membrane state with a new firing threshold.
    pub fn set_threshold(&mut self, v_th: f64) {
        if v_th.is_finite() && v_th > self.lif.v_reset {
            self.lif.v_th = v_th;
            self.detector = detector(self.lif);
        }
    }

    pub fn set_speed(&mut self, pixels_per_window: f64) {
        if pixels_per_window.is_finite() {
            self.speed = pixels_per_window.clamp(-8.0, 8.0);
        }
    }

    pub fn set_noise_rate(&mut self, events_per_second: u32) {
        self.noise_per_window = u64::from(events_per_second) * DT_US / 1_000_000;
    }

    fn window_events(&mut self) -> Vec<Event> {
        let (w, h) = (self.geometry.width(), self.geometry.height());
        let t = self.window * DT_US;
        let before = self.left;
        let span = f64::from(w - self.side);
        self.left += self.speed;
        if self.left < 0.0 || self.left > span {
            self.speed = -self.speed;
            self.left = self.left.clamp(0.0, span);
        }
        let top = (h - self.side) / 2;
        let mut events = Vec::new();
        // Columns the leading and trailing edges crossed this window.
        let (a, b) = (before.min(self.left) as u32, before.max(self.left).ceil() as u32);
        for x0 in a..=b {
            for (x, on) in [(x0, self.speed < 0.0), (x0 + self.side - 1, self.speed > 0.0)] {
                for y in top..top + self.side {
                    events.push(make_event(x.min(w - 1), y, on, t).expect("in range"));
                }
            }
        }
        for _ in 0..self.noise_per_window {
            events.push(self.noise.event_at(self.noise_next).with_t(t));
            self.noise_next += 1;
        }
        events
    }

    /// Advances one window; returns the number of spikes.
    pub fn step(&mut self) -> u32 {
        let events = self.window_events();
        let mut frame = Frame::zeros(
            self.geometry,
            AccumulationMode::Count,
            self.window * DT_US,
            (self.window + 1) * DT_US,
        );
        for e in &events {
            frame.add(e).expect("events inside geometry");
        }
        let spikes = self.detector.step(&frame).expect("fixed geometry");
        for (i, (&count, &spike)) in frame.values().iter().zip(spikes.as_bytes()).enumerate() {
            let level = (count.min(4) * 63) as u8;
            self.frame_rgba[4 * i..4 * i + 4].copy_from_slice(&[level, level, level, 255]);
            let px = if spike != 0 {
                [255, 64, 32, 255]
            } else {
                [level / 4, level / 4, level / 3, 255]
            };
            self.spike_rgba[4 * i..4 * i + 4].copy_from_slice(&px);
        }
        self.window += 1;
        self.events = events.len() as u32;
        self.spikes = spikes.count() as u32;
        self.spikes
    }

    /// Event counts of the last window as RGBA, row-major.
    pub fn frame_rgba(&self) -> Vec<u8> {
        self.frame_rgba.clone()
    }

    /// Spikes of the last window in red over the dimmed frame.
    pub fn spike_rgba(&self) -> Vec<u8> {
        self.spike_rgba.clone()
    }

    pub fn events(&self) -> u32 {
        self.events
    }

    pub fn spikes(&self) -> u32 {
        self.spikes
    }

    /// Bytes a dense copy of the last window would move.
    pub fn dense_bytes(&self) -> f64 {
        dense_bytes(self.geometry) as f64
    }

    /// Bytes a sparse copy of the last window would move.
    pub fn sparse_bytes(&self) -> f64 {
        sparse_bytes(self.events as usize) as f64
    }
}

/// Per-window transfer bytes against window event count, as flat
/// `[events, dense, sparse]` triples over `points` evenly spaced counts.
#[wasm_bindgen]
pub fn byte_curve(width: u32, height: u32, max_events: u32, points: u32) -> Vec<f64> {
    let Ok(g) = Geometry::new(width.max(1), height.max(1)) else {
        return Vec::new();
    };
    let points = points.max(2);
    let dense = dense_bytes(g) as f64;
    (0..points)
        .flat_map(|i| {
            let n = u64::from(max_events) * u64::from(i) / u64::from(points - 1);
            [n as f64, dense, sparse_bytes(n as usize) as f64]
        })
        .collect()
}
