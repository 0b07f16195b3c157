//! Spiking edge detector: a 2D convolution feeding a layer of leaky
//! integrate-and-fire neurons with a refractory period, one neuron per
//! pixel, stepped once per frame.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Real-valued row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "grid data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_frame(frame: &Frame) -> Self {
        let g = frame.geometry();
        Grid {
            width: g.width() as usize,
            height: g.height() as usize,
            data: frame.values().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }
}

/// Odd-sided square convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::Parameter(format!("kernel side must be odd, got {side}")));
        }
        if weights.len() != side * side {
            return Err(Error::Parameter(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("kernel weights must be finite".into()));
        }
        Ok(Kernel { side, weights })
    }

    /// `[[0, 1, 0], [1, -4, 1], [0, 1, 0]]`
    pub fn laplacian() -> Self {
        Kernel {
            side: 3,
            weights: vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.side + col]
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::laplacian()
    }
}

/// Same-size, zero-padded cross-correlation:
/// `out[y][x] = Σ k[i][j] · in[y + i − c][x + j − c]`, `c = (side − 1) / 2`.
pub fn convolve_grid(input: &Grid, kernel: &Kernel) -> Result<Grid> {
    let (w, h) = (input.width, input.height);
    if kernel.side > w.min(h) {
        return Err(Error::Parameter(format!(
            "kernel side {} exceeds frame {}x{}",
            kernel.side, w, h
        )));
    }
    let c = (kernel.side - 1) / 2;
    let mut out = Grid::zeros(w, h);
    // Accumulate one shifted copy of the input per non-zero tap.
    for i in 0..kernel.side {
        for j in 0..kernel.side {
            let k = kernel.weight(i, j);
            if k == 0.0 {
                continue;
            }
            // Output rows/cols whose source pixel y+i-c / x+j-c is in range.
            let y_lo = c.saturating_sub(i);
            let y_hi = (h + c).saturating_sub(i).min(h);
            let x_lo = c.saturating_sub(j);
            let x_hi = (w + c).saturating_sub(j).min(w);
            if x_lo >= x_hi {
                continue;
            }
            for y in y_lo..y_hi {
                let sy = y + i - c;
                let src = &input.data[sy * w + x_lo + j - c..sy * w + x_hi + j - c];
                let dst = &mut out.data[y * w + x_lo..y * w + x_hi];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += k * s;
                }
            }
        }
    }
    Ok(out)
}

pub fn convolve2d(frame: &Frame, kernel: &Kernel) -> Result<Grid> {
    convolve_grid(&Grid::from_frame(frame), kernel)
}

/// LIF parameters; all times in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub tau_mem: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub refrac_steps: u32,
    /// Step length; equals the frame window length.
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            tau_mem: 10_000.0,
            v_th: 1.0,
            v_reset: 0.0,
            refrac_steps: 2,
            dt: 1000.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mem > 0.0 && self.tau_mem.is_finite()) {
            return Err(Error::Parameter(format!("tau_mem must be > 0, got {}", self.tau_mem)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.v_th.partial_cmp(&self.v_reset) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Parameter(format!(
                "v_th ({}) must exceed v_reset ({})",
                self.v_th, self.v_reset
            )));
        }
        Ok(())
    }

    /// Per-step decay factor `exp(−dt / tau_mem)`.
    pub fn beta(&self) -> f64 {
        (-self.dt / self.tau_mem).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    width: usize,
    height: usize,
    /// Membrane potential.
    pub v: Vec<f64>,
    /// Remaining refractory steps.
    pub r: Vec<u32>,
}

impl LifState {
    pub fn new(width: usize, height: usize) -> Self {
        LifState {
            width,
            height,
            v: vec![0.0; width * height],
            r: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Binary spike map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeGrid {
    width: usize,
    height: usize,
    spikes: Vec<u8>,
}

impl SpikeGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// One byte per pixel, 0 or 1, row-major.
    pub fn as_bytes(&self) -> &[u8] {
        &self.spikes
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.spikes[y * self.width + x] == 1
    }

    pub fn count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s == 1).count()
    }

    /// Plain-text PGM (P2), spikes drawn white.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "P2\n{} {}\n255", self.width, self.height)?;
        for row in self.spikes.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&s| if s == 1 { "255" } else { "0" }).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// One CSV row per image row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for row in self.spikes.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Advances every neuron by one step.
///
/// Per pixel, with `β = exp(−dt/τ)`: a refractory neuron counts down and
/// stays at `v_reset`; otherwise `v ← β·v + input`, and reaching `v_th`
/// emits a spike, resets `v` and starts the refractory count.
pub fn lif_step(state: &mut LifState, input: &Grid, params: &LifParams) -> Result<SpikeGrid> {
    if (state.width, state.height) != (input.width, input.height) {
        return Err(Error::Parameter(format!(
            "state is {}x{} but input is {}x{}",
            state.width, state.height, input.width, input.height
        )));
    }
    params.validate()?;
    let beta = params.beta();
    let mut spikes = vec![0u8; input.data.len()];
    for (((v, r), &i), s) in state
        .v
        .iter_mut()
        .zip(state.r.iter_mut())
        .zip(&input.data)
        .zip(spikes.iter_mut())
    {
        if *r > 0 {
            *r -= 1;
            *v = params.v_reset;
            continue;
        }
        *v = beta * *v + i;
        if *v >= params.v_th {
            *s = 1;
            *v = params.v_reset;
            *r = params.refrac_steps;
        }
    }
    Ok(SpikeGrid {
        width: state.width,
        height: state.height,
        spikes,
    })
}

/// Stateful detector: `lif_step(convolve2d(frame))` with the state threaded
/// across frames.
#[derive(Debug, Clone)]
pub struct EdgeDetector {
    kernel: Kernel,
    params: LifParams,
    state: Option<LifState>,
}

impl EdgeDetector {
    pub fn new(kernel: Kernel, params: LifParams) -> Result<Self> {
        params.validate()?;
        Ok(EdgeDetector {
            kernel,
            params,
            state: None,
        })
    }

    pub fn state(&self) -> Option<&LifState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, frame: &Frame) -> Result<SpikeGrid> {
        let g = frame.geometry();
        let (w, h) = (g.width() as usize, g.height() as usize);
        let state = self.state.get_or_insert_with(|| LifState::new(w, h));
        if (state.width, state.height) != (w, h) {
            return Err(Error::Stream(format!(
                "frame geometry changed from {}x{} to {w}x{h}",
                state.width, state.height
            )));
        }
        let input = convolve2d(frame, &self.kernel)?;
        lif_step(state, &input, &self.params)
    }
}

/// Runs a detector over a frame stream.
pub fn detect_edges<I>(frames: I, kernel: Kernel, params: LifParams) -> Result<impl Iterator<Item = Result<SpikeGrid>>>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut detector = EdgeDetector::new(kernel, params)?;
    let mut failed = false;
    Ok(frames.into_iter().map_while(move |f| {
        if failed {
            return None;
        }
        let res = f.and_then(|f| detector.step(&f));
        failed = res.is_err();
        Some(res)
    }))
}
