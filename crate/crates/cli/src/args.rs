//! Hand-rolled parser for the positional `input … output …` grammar.

use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;

use aerflow::frame::AccumulationMode;
use aerflow::{Geometry, RuntimeKind};

pub const USAGE: &str = "\
usage:
  aerflow input <source> output <sink> [--runtime cooperative|buffered|baseline]
          [--buffer N] [--workers N] [--geometry WxH]
  aerflow bench throughput|frames|plot [options]   (see `aerflow bench --help`)

sources:
  file PATH
  udp BIND_ADDR [--timeout-ms MS] [--count N]
  synthetic [--seed S] [--events N] [--rate EVENTS_PER_S]

sinks:
  file PATH
  udp TARGET_ADDR [--max-words N] [--flush-ms MS]
  stdout                      one `t,x,y,p` line per event
  frames [--dt US] [--mode count|binary] [--detect] [--out PATH] [--pgm-dir DIR]

The worker count defaults to AERFLOW_WORKERS, then to the number of CPUs.
";

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    File(PathBuf),
    Udp {
        bind: SocketAddr,
        timeout_ms: Option<u64>,
        count: Option<u64>,
    },
    Synthetic {
        seed: u64,
        events: u64,
        rate: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    File(PathBuf),
    Udp {
        target: SocketAddr,
        max_words: usize,
        flush_ms: u64,
    },
    Stdout,
    Frames {
        dt: u64,
        mode: AccumulationMode,
        detect: bool,
        out: Option<PathBuf>,
        pgm_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub input: Input,
    pub output: Output,
    pub runtime: RuntimeKind,
    pub geometry: Option<Geometry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Pipeline(PipelineSpec),
    /// Arguments after `bench`, handed to clap.
    Bench(Vec<String>),
    Help,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError(msg.into()))
}

struct Tokens<'a> {
    args: &'a [String],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.args.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn value(&mut self, flag: &str) -> Result<&'a str, ParseError> {
        match self.next() {
            Some(v) if !v.starts_with("--") => Ok(v),
            _ => err(format!("{flag} needs a value")),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, flag: &str) -> Result<T, ParseError>
    where
        T::Err: fmt::Display,
    {
        let v = self.value(flag)?;
        v.parse().map_err(|e| ParseError(format!("{flag} {v:?}: {e}")))
    }

    fn positional(&mut self, what: &str) -> Result<&'a str, ParseError> {
        match self.next() {
            Some(v) if !v.starts_with("--") && v != "output" => Ok(v),
            _ => err(format!("missing {what}")),
        }
    }
}

#[derive(Default)]
struct Globals {
    runtime: Option<String>,
    buffer: Option<usize>,
    workers: Option<usize>,
    geometry: Option<Geometry>,
}

impl Globals {
    /// Consumes a global flag; false if `flag` is not one.
    fn take(&mut self, flag: &str, t: &mut Tokens) -> Result<bool, ParseError> {
        match flag {
            "--runtime" => self.runtime = Some(t.value(flag)?.to_string()),
            "--buffer" => self.buffer = Some(positive(t.number(flag)?, flag)?),
            "--workers" => self.workers = Some(positive(t.number(flag)?, flag)?),
            "--geometry" => {
                let v = t.value(flag)?;
                self.geometry = Some(v.parse().map_err(|e| ParseError(format!("--geometry: {e}")))?);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn positive(n: usize, flag: &str) -> Result<usize, ParseError> {
    if n == 0 {
        return err(format!("{flag} must be >= 1"));
    }
    Ok(n)
}

fn addr(v: &str, what: &str) -> Result<SocketAddr, ParseError> {
    v.parse().map_err(|e| ParseError(format!("{what} {v:?}: {e}")))
}

fn unknown<T>(flag: &str, section: &str) -> Result<T, ParseError> {
    err(format!("unknown option {flag} for {section}"))
}

fn parse_input(t: &mut Tokens, g: &mut Globals) -> Result<Input, ParseError> {
    let kind = t.positional("input kind")?;
    let mut input = match kind {
        "file" => Input::File(PathBuf::from(t.positional("input file path")?)),
        "udp" => Input::Udp {
            bind: addr(t.positional("udp bind address")?, "bind address")?,
            timeout_ms: None,
            count: None,
        },
        "synthetic" => Input::Synthetic {
            seed: 42,
            events: 1_000_000,
            rate: 1_000_000,
        },
        other => return err(format!("unknown input kind {other:?}")),
    };
    while let Some(flag) = t.peek().filter(|f| *f != "output") {
        t.next();
        if g.take(flag, t)? {
            continue;
        }
        match (&mut input, flag) {
            (Input::Udp { timeout_ms, .. }, "--timeout-ms") => *timeout_ms = Some(t.number(flag)?),
            (Input::Udp { count, .. }, "--count") => *count = Some(t.number(flag)?),
            (Input::Synthetic { seed, .. }, "--seed") => *seed = t.number(flag)?,
            (Input::Synthetic { events, .. }, "--events") => *events = t.number(flag)?,
            (Input::Synthetic { rate, .. }, "--rate") => *rate = positive(t.number(flag)?, flag)? as u64,
            _ if flag.starts_with("--") => return unknown(flag, &format!("input {kind}")),
            _ => return err(format!("unexpected argument {flag:?}")),
        }
    }
    Ok(input)
}

fn parse_output(t: &mut Tokens, g: &mut Globals) -> Result<Output, ParseError> {
    let kind = t.positional("output kind")?;
    let mut output = match kind {
        "file" => Output::File(PathBuf::from(t.positional("output file path")?)),
        "udp" => Output::Udp {
            target: addr(t.positional("udp target address")?, "target address")?,
            max_words: aerflow::net::DEFAULT_MAX_WORDS,
            flush_ms: 1,
        },
        "stdout" => Output::Stdout,
        "frames" => Output::Frames {
            dt: aerflow::frame::DEFAULT_DT_US,
            mode: AccumulationMode::Count,
            detect: false,
            out: None,
            pgm_dir: None,
        },
        other => return err(format!("unknown output kind {other:?}")),
    };
    while let Some(flag) = t.next() {
        if g.take(flag, t)? {
            continue;
        }
        match (&mut output, flag) {
            (Output::Udp { max_words, .. }, "--max-words") => *max_words = positive(t.number(flag)?, flag)?,
            (Output::Udp { flush_ms, .. }, "--flush-ms") => *flush_ms = t.number(flag)?,
            (Output::Frames { dt, .. }, "--dt") => *dt = positive(t.number(flag)?, flag)? as u64,
            (Output::Frames { mode, .. }, "--mode") => {
                *mode = t.value(flag)?.parse().map_err(|e| ParseError(format!("--mode: {e}")))?
            }
            (Output::Frames { detect, .. }, "--detect") => *detect = true,
            (Output::Frames { out, .. }, "--out") => *out = Some(PathBuf::from(t.value(flag)?)),
            (Output::Frames { pgm_dir, .. }, "--pgm-dir") => *pgm_dir = Some(PathBuf::from(t.value(flag)?)),
            _ if flag.starts_with("--") => return unknown(flag, &format!("output {kind}")),
            _ => return err(format!("unexpected argument {flag:?}")),
        }
    }
    if let Output::Frames {
        detect: false,
        pgm_dir: Some(_),
        ..
    } = output
    {
        return err("--pgm-dir requires --detect");
    }
    Ok(output)
}

/// Parses `argv` without the program name. `env_workers` is the value of
/// `AERFLOW_WORKERS`, if set; `cpus` is the fallback worker count.
pub fn parse_args(argv: &[String], env_workers: Option<&str>, cpus: usize) -> Result<Command, ParseError> {
    let mut t = Tokens { args: argv, pos: 0 };
    match t.next() {
        None | Some("-h" | "--help" | "help") => return Ok(Command::Help),
        Some("bench") => return Ok(Command::Bench(argv[1..].to_vec())),
        Some("input") => {}
        Some(other) => return err(format!("expected `input` or `bench`, got {other:?}")),
    }
    let mut g = Globals::default();
    let input = parse_input(&mut t, &mut g)?;
    if t.next() != Some("output") {
        return err("missing `output` section");
    }
    let output = parse_output(&mut t, &mut g)?;

    let workers = match (g.workers, env_workers) {
        (Some(w), _) => w,
        (None, Some(v)) => v
            .trim()
            .parse()
            .ok()
            .filter(|w| *w > 0)
            .ok_or_else(|| ParseError(format!("AERFLOW_WORKERS must be a positive integer, got {v:?}")))?,
        (None, None) => cpus.max(1),
    };
    let runtime = match g.runtime.as_deref().unwrap_or("cooperative") {
        "cooperative" => {
            if g.buffer.is_some() {
                return err("--buffer applies to the buffered runtime only");
            }
            RuntimeKind::Cooperative { workers }
        }
        "buffered" | "buffered_locked" => RuntimeKind::BufferedLocked {
            buffer_size: g.buffer.unwrap_or(1 << 10),
            workers,
        },
        "baseline" => {
            if g.buffer.is_some() || g.workers.is_some() {
                return err("--buffer and --workers do not apply to the baseline runtime");
            }
            RuntimeKind::Baseline
        }
        other => return err(format!("unknown runtime {other:?}")),
    };
    Ok(Command::Pipeline(PipelineSpec {
        input,
        output,
        runtime,
        geometry: g.geometry,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Command, ParseError> {
        let argv: Vec<String> = s.split_whitespace().map(String::from).collect();
        parse_args(&argv, None, 4)
    }

    fn spec(s: &str) -> PipelineSpec {
        match parse(s).unwrap() {
            Command::Pipeline(p) => p,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_to_stdout() {
        let p = spec("input file in.aerf output stdout");
        assert_eq!(p.input, Input::File("in.aerf".into()));
        assert_eq!(p.output, Output::Stdout);
        assert_eq!(p.runtime, RuntimeKind::Cooperative { workers: 4 });
        assert_eq!(p.geometry, None);
    }

    #[test]
    fn udp_to_file() {
        let p = spec(
            "input udp 0.0.0.0:3333 --timeout-ms 200 output file out.aerf --runtime buffered --buffer 256 --workers 2",
        );
        assert_eq!(
            p.input,
            Input::Udp {
                bind: "0.0.0.0:3333".parse().unwrap(),
                timeout_ms: Some(200),
                count: None
            }
        );
        assert_eq!(p.output, Output::File("out.aerf".into()));
        assert_eq!(
            p.runtime,
            RuntimeKind::BufferedLocked {
                buffer_size: 256,
                workers: 2
            }
        );
    }

    #[test]
    fn globals_anywhere_and_frames_options() {
        let p = spec(
            "input synthetic --workers 3 --events 10 output frames --dt 500 --mode binary --detect --geometry 32x24",
        );
        assert_eq!(
            p.input,
            Input::Synthetic {
                seed: 42,
                events: 10,
                rate: 1_000_000
            }
        );
        assert!(matches!(
            p.output,
            Output::Frames {
                dt: 500,
                mode: AccumulationMode::Binary,
                detect: true,
                ..
            }
        ));
        assert_eq!(p.runtime, RuntimeKind::Cooperative { workers: 3 });
        assert_eq!(p.geometry, Some(Geometry::new(32, 24).unwrap()));
    }

    #[test]
    fn env_workers_default() {
        let argv: Vec<String> = "input file a output stdout".split(' ').map(String::from).collect();
        let p = parse_args(&argv, Some("5"), 1).unwrap();
        assert!(matches!(
            p,
            Command::Pipeline(PipelineSpec {
                runtime: RuntimeKind::Cooperative { workers: 5 },
                ..
            })
        ));
        assert!(parse_args(&argv, Some("zero"), 1).is_err());
    }

    #[test]
    fn rejects_bad_argv() {
        for bad in [
            "input file x output",
            "input file",
            "output stdout",
            "input tape x output stdout",
            "input file x output stdout --bogus",
            "input file x --count 3 output stdout",
            "input file x output stdout --runtime fibers",
            "input file x output stdout --workers 0",
            "input file x output stdout --runtime baseline --workers 2",
            "input udp nowhere output stdout",
            "input file x output frames --pgm-dir d",
            "input file x output stdout extra",
            "frobnicate",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn bench_and_help() {
        assert_eq!(
            parse("bench frames --file f").unwrap(),
            Command::Bench(vec!["frames".into(), "--file".into(), "f".into()])
        );
        assert_eq!(parse("--help").unwrap(), Command::Help);
        assert_eq!(parse("").unwrap(), Command::Help);
    }
}
