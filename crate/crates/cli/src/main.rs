//! `aerflow`: compose event sources and sinks, or run the benchmarks.
//!
//! Exit codes: 0 on success, 1 when the run fails, 2 on bad arguments.

mod args;
mod bench;
mod pipeline;

use std::io;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Parser;

use aerflow::Error;
use args::{parse_args, Command, USAGE};

fn install_stop_handler(stop: &Arc<AtomicBool>) {
    for signal in [libc::SIGINT, libc::SIGTERM] {
        let stop = Arc::clone(stop);
        // SAFETY: the action only stores to an atomic, which is
        // async-signal-safe.
        let registered = unsafe { signal_hook_registry::register(signal, move || stop.store(true, Ordering::SeqCst)) };
        if let Err(e) = registered {
            eprintln!("aerflow: cannot install signal handler: {e}");
        }
    }
}

fn broken_pipe(e: &Error) -> bool {
    matches!(e, Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let env_workers = std::env::var("AERFLOW_WORKERS").ok();
    let cpus = aerflow::runtime::default_workers();
    let command = match parse_args(&argv, env_workers.as_deref(), cpus) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("aerflow: {e}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match command {
        Command::Help => {
            print!("{USAGE}");
            ExitCode::SUCCESS
        }
        Command::Bench(rest) => {
            let cli = match bench::BenchCli::try_parse_from(std::iter::once("aerflow bench".to_string()).chain(rest)) {
                Ok(c) => c,
                Err(e) => {
                    let code = if e.use_stderr() { 2 } else { 0 };
                    let _ = e.print();
                    return ExitCode::from(code);
                }
            };
            match bench::run(cli) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("aerflow: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Pipeline(spec) => {
            let stop = Arc::new(AtomicBool::new(false));
            install_stop_handler(&stop);
            match pipeline::run(&spec, &stop) {
                Ok(r) => {
                    eprintln!(
                        "{} events in, {} out, {:.3} s, {}",
                        r.events_in,
                        r.events_out,
                        r.wall_time.as_secs_f64(),
                        spec.runtime
                    );
                    ExitCode::SUCCESS
                }
                Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("aerflow: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
