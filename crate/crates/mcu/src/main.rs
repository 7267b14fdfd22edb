use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use mcu::net::NetConditions;
use mcu::recorder::inspect_recording;
use mcu::scenario::{run_scenario, ReplaySource, ScenarioConfig};
use mcu::serve::{serve, ServeConfig};
use mcu_core::conference::Mode;

#[derive(Parser)]
#[command(
    name = "mcu",
    version,
    about = "Multipoint conferencing unit and deterministic simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MCU on real sockets.
    Serve(ServeArgs),
    /// Run a seeded scenario on virtual time and print or write its report.
    Sim(SimArgs),
    /// Summarize a recording as JSON.
    Inspect { path: PathBuf },
}

#[derive(clap::Args)]
struct ServeArgs {
    /// Signaling address (newline-delimited JSON over TCP).
    #[arg(long, default_value = "127.0.0.1:7000")]
    listen: SocketAddr,
    /// UDP port for ICE, SRTP and RTCP.
    #[arg(long, default_value_t = 7001)]
    media_port: u16,
    /// Address advertised in SDP answers.
    #[arg(long, default_value = "127.0.0.1")]
    public_ip: Ipv4Addr,
    /// Mode for rooms created by a join without one.
    #[arg(long, default_value = "forward", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value = "recordings")]
    record_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Pace timers by the wall clock. Serve always does; accepted for scripts.
    #[arg(long)]
    realtime: bool,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long, default_value_t = 3)]
    clients: usize,
    #[arg(long, default_value = "forward", value_parser = parse_mode)]
    mode: Mode,
    /// Per-datagram loss probability.
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    /// Probability that a datagram trades places with its predecessor.
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,
    /// One-way delay in milliseconds.
    #[arg(long, default_value_t = 20)]
    delay: u64,
    /// Uniform delay variation in milliseconds (plus or minus).
    #[arg(long, default_value_t = 0)]
    jitter: u64,
    /// Downlink cap in bits per second; 0 disables it.
    #[arg(long, default_value_t = 0)]
    bandwidth: u64,
    /// Halve the bandwidth cap at this many seconds.
    #[arg(long)]
    bandwidth_halve_at: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seconds of generated media.
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    /// Screen width every client advertises.
    #[arg(long, default_value_t = 320)]
    screen_width: u32,
    /// Record the room to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Report path; stdout if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Inject a recording as an extra participant.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    replay_speed: f64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::from_name(s).ok_or_else(|| format!("unknown mode {s:?} (expected forward or mix)"))
}

fn seconds(s: f64, what: &str) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s)
        .map_err(|_| format!("{what} must be a non-negative number of seconds"))
}

fn sim(args: SimArgs) -> Result<bool, String> {
    let cfg = ScenarioConfig {
        clients: args.clients,
        mode: args.mode,
        conditions: NetConditions {
            loss_prob: args.loss,
            reorder_prob: args.reorder,
            base_delay: Duration::from_millis(args.delay),
            jitter: Duration::from_millis(args.jitter),
            bandwidth_cap: (args.bandwidth > 0).then_some(args.bandwidth),
            seed: args.seed,
        },
        duration: seconds(args.duration, "duration")?,
        screen_width: args.screen_width,
        bandwidth_halve_at: args
            .bandwidth_halve_at
            .map(|s| seconds(s, "bandwidth-halve-at"))
            .transpose()?,
        record: args.record,
        replay: args.replay.map(|path| ReplaySource {
            path,
            speed: args.replay_speed,
        }),
    };
    let report = run_scenario(&cfg).map_err(|e| e.to_string())?;
    match &args.report {
        Some(path) => report
            .write(path)
            .map_err(|e| format!("writing {}: {e}", path.display()))?,
        None => print!("{}", report.to_json()),
    }
    for v in &report.violations {
        log::error!("violation: {v}");
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MCU_LOG", "error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(args) => sim(args),
        Command::Inspect { path } => inspect_recording(&path)
            .map(|s| {
                println!(
                    "{}",
                    serde_json::to_string(&s).expect("plain data serializes")
                );
                true
            })
            .map_err(|e| format!("{}: {e}", path.display())),
        Command::Serve(a) => {
            if !a.realtime {
                log::debug!("serve runs on the wall clock; --realtime is implied");
            }
            serve(ServeConfig {
                listen: a.listen,
                media_port: a.media_port,
                public_ip: a.public_ip,
                mode: a.mode,
                record_dir: a.record_dir,
                seed: a.seed,
            })
            .map(|()| true)
            .map_err(|e| e.to_string())
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
