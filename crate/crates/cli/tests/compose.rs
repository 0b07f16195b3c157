//! Every input kind piped into every output kind through the binary.

use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use aerflow::codec::{decode_text, read_file, write_file};
use aerflow::net::{encode_packets, UdpSource};
use aerflow::{make_event, synthetic_stream, Event, Geometry, Result};

const BIN: &str = env!("CARGO_BIN_EXE_aerflow");
const N: u64 = 300;

type Xyp = (u16, u16, bool);

fn xyp(events: &[Event]) -> Vec<Xyp> {
    events.iter().map(|e| (e.x(), e.y(), e.p())).collect()
}

fn free_port() -> SocketAddr {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

fn fixture_events() -> Vec<Event> {
    (0..N)
        .map(|i| make_event((i % 32) as u32, (i / 32) as u32, i % 3 == 0, i * 10).unwrap())
        .collect()
}

enum In {
    File,
    Udp,
    Synthetic,
}

enum Out {
    File,
    Udp,
    Stdout,
    Frames,
}

/// What the sink side observed.
enum Seen {
    Events(Vec<Xyp>),
    Count(u64),
}

fn spawn(args: &[String]) -> Child {
    Command::new(BIN)
        .args(args)
        .env("AERFLOW_WORKERS", "2")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

fn feed_udp_until_exit(child: &mut Child, target: SocketAddr, events: &[Event]) {
    // Unconnected, so sends before the child binds are silently lost.
    let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
    let packets = encode_packets(events, 64).unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    while child.try_wait().unwrap().is_none() {
        assert!(Instant::now() < deadline, "udp input never completed");
        for p in &packets {
            socket.send_to(p, target).unwrap();
        }
        thread::sleep(Duration::from_millis(100));
    }
}

fn run_case(input: &In, output: &Out, dir: &Path) -> (Vec<Xyp>, Seen) {
    let g = Geometry::new(32, 24).unwrap();
    let mut args: Vec<String> = vec!["input".into()];
    let expected: Vec<Xyp>;
    let mut udp_in = None;
    match input {
        In::File => {
            let path = dir.join("in.aerf");
            let evs = fixture_events();
            write_file(std::fs::File::create(&path).unwrap(), g, &evs).unwrap();
            expected = xyp(&evs);
            args.extend(["file".into(), path.display().to_string()]);
        }
        In::Udp => {
            let evs = fixture_events();
            expected = xyp(&evs);
            let addr = free_port();
            udp_in = Some((addr, evs));
            args.extend(["udp".into(), addr.to_string(), "--count".into(), N.to_string()]);
        }
        In::Synthetic => {
            let evs: Vec<Event> = synthetic_stream(5, N, g, 100_000).unwrap().collect();
            expected = xyp(&evs);
            args.extend(["synthetic", "--seed", "5", "--events", "300", "--rate", "100000"].map(String::from));
        }
    }
    args.push("output".into());
    let out_file = dir.join("out.aerf");
    let mut udp_out = None;
    match output {
        Out::File => args.extend(["file".into(), out_file.display().to_string()]),
        Out::Udp => {
            let source = UdpSource::bind("127.0.0.1:0", g)
                .unwrap()
                .with_idle_timeout(Duration::from_millis(1500));
            args.extend(["udp".into(), source.local_addr().unwrap().to_string()]);
            udp_out = Some(thread::spawn(move || source.collect::<Result<Vec<Event>>>().unwrap()));
        }
        Out::Stdout => args.push("stdout".into()),
        Out::Frames => args.extend(["frames", "--dt", "100", "--detect"].map(String::from)),
    }
    args.extend(["--geometry", "32x24"].map(String::from));

    let mut child = spawn(&args);
    if let Some((addr, evs)) = &udp_in {
        feed_udp_until_exit(&mut child, *addr, evs);
    }
    let Output { status, stdout, stderr } = child.wait_with_output().unwrap();
    assert!(status.success(), "{args:?}: {}", String::from_utf8_lossy(&stderr));
    let stdout = String::from_utf8(stdout).unwrap();

    let seen = match output {
        Out::File => {
            let evs: Vec<Event> = read_file(std::fs::File::open(&out_file).unwrap())
                .unwrap()
                .collect::<Result<_>>()
                .unwrap();
            Seen::Events(xyp(&evs))
        }
        Out::Udp => Seen::Events(xyp(&udp_out.unwrap().join().unwrap())),
        Out::Stdout => {
            let evs: Vec<Event> = stdout.lines().map(|l| decode_text(l).unwrap()).collect();
            Seen::Events(xyp(&evs))
        }
        Out::Frames => {
            let mut lines = stdout.lines();
            assert_eq!(lines.next(), Some("window_index,window_start,window_end,events,spikes"));
            Seen::Count(
                lines
                    .map(|l| l.split(',').nth(3).unwrap().parse::<u64>().unwrap())
                    .sum(),
            )
        }
    };
    (expected, seen)
}

#[test]
fn every_input_composes_with_every_output() {
    for (iname, input) in [("file", In::File), ("udp", In::Udp), ("synthetic", In::Synthetic)] {
        for (oname, output) in [
            ("file", Out::File),
            ("udp", Out::Udp),
            ("stdout", Out::Stdout),
            ("frames", Out::Frames),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let (mut expected, seen) = run_case(&input, &output, dir.path());
            match seen {
                Seen::Count(n) => assert_eq!(n, N, "{iname} -> {oname}"),
                Seen::Events(mut got) => {
                    if matches!(input, In::Udp) || matches!(output, Out::Udp) {
                        expected.sort_unstable();
                        got.sort_unstable();
                    }
                    assert_eq!(got, expected, "{iname} -> {oname}");
                }
            }
        }
    }
}

#[test]
fn parse_failures_exit_2() {
    for args in [
        &["input", "file", "x", "output"][..],
        &["nonsense"],
        &["bench", "nope"],
        &["input", "file", "x", "output", "stdout", "--runtime", "x"],
    ] {
        let out = Command::new(BIN).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_failures_exit_1() {
    let out = Command::new(BIN)
        .args(["input", "file", "/nonexistent/in.aerf", "output", "stdout"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("usage:"));
    let out = Command::new(BIN).args(["bench", "--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn runtimes_agree_on_file_copy() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(32, 24).unwrap();
    let input = dir.path().join("in.aerf");
    let evs: Vec<Event> = synthetic_stream(1, 5000, g, 1_000_000).unwrap().collect();
    write_file(std::fs::File::create(&input).unwrap(), g, &evs).unwrap();
    for runtime in [
        &["--runtime", "baseline"][..],
        &["--runtime", "buffered", "--buffer", "64", "--workers", "3"],
        &[],
    ] {
        let out = dir.path().join("out.aerf");
        let status = Command::new(BIN)
            .args([
                "input",
                "file",
                input.to_str().unwrap(),
                "output",
                "file",
                out.to_str().unwrap(),
            ])
            .args(runtime)
            .status()
            .unwrap();
        assert!(status.success());
        assert_eq!(
            std::fs::read(&out).unwrap(),
            std::fs::read(&input).unwrap(),
            "{runtime:?}"
        );
    }
}

#[test]
fn bench_frames_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(32, 24).unwrap();
    let input = dir.path().join("short.aerf");
    let evs: Vec<Event> = synthetic_stream(2, 20_000, g, 200_000).unwrap().collect();
    write_file(std::fs::File::create(&input).unwrap(), g, &evs).unwrap();
    let report = dir.path().join("frames.csv");
    let status = Command::new(BIN)
        .args([
            "bench",
            "frames",
            "--file",
            input.to_str().unwrap(),
            "--speed",
            "4",
            "--out",
            report.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 5);

    let status = Command::new(BIN)
        .args([
            "bench",
            "throughput",
            "--events",
            "1000",
            "--buffers",
            "16,64",
            "--workers",
            "1,2",
            "--repetitions",
            "2",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["records.csv", "cells.csv", "speedups.csv", "buffer_speedups.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let status = Command::new(BIN)
        .args(["bench", "plot", "--throughput"])
        .arg(dir.path().join("records.csv"))
        .arg("--frames")
        .arg(&report)
        .arg("--out-dir")
        .arg(dir.path().join("plots"))
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "speedup.svg",
        "runtime_w2_b64.svg",
        "frames_bytes.svg",
        "frames_fps.svg",
    ] {
        let svg = std::fs::read_to_string(dir.path().join("plots").join(f)).unwrap();
        assert!(svg.starts_with("<svg"), "{f}");
    }
}
