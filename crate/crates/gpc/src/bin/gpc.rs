//! `gpc`: run the compute server, submit tasks, inspect devices, benchmark.
//!
//! Exit codes: 0 success, 1 remote or task failure, 2 usage error.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use gpc::bench::{self, BenchConfig, BenchTask};
use gpc::client::{self, ClientError};
use gpc::probe::HostProber;
use gpc::server::{Server, ServerConfig};
use gpc_core::devinfo::probe_devices;
use gpc_core::registry::builtin_registry;
use gpc_core::wire::{flags, ParamMap};

const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gpc", version, about = "Remote compute server and client")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the compute server until interrupted.
    Serve(ServeArgs),
    /// Send one task to a server and save its result.
    Submit(SubmitArgs),
    /// Ask a server for its compute devices and print them as a tree.
    Devinfo(DevinfoArgs),
    /// Time a kernel locally, sequentially and with each worker count.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Address to listen on.
    #[arg(long, default_value = "0.0.0.0")]
    bind: IpAddr,
    #[arg(long, default_value_t = gpc::DEFAULT_PORT)]
    port: u16,
    /// Worker threads per task [default: logical cores].
    #[arg(long, env = "GPC_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Drop connections idle this long mid-request.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    timeout_secs: u64,
    /// Tasks executing at once [default: 2 x logical cores].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_tasks: Option<u64>,
}

#[derive(Args)]
struct ServerArg {
    /// Server address, HOST or HOST:PORT.
    #[arg(long, env = "GPC_SERVER", default_value = "127.0.0.1")]
    server: String,
}

#[derive(Args)]
struct SubmitArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Task flag, e.g. BAYER_BILINEAR, BAYER_GRADIENT, LSQ_POLYFIT, DEVINFO.
    #[arg(long)]
    task: String,
    /// Input file (PGM or raw mosaic; CSV or raw scan lines).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Name of the result file.
    #[arg(long)]
    output: String,
    /// Task parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Directory the result file is written to.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DevinfoArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Name of the XML file to save.
    #[arg(long, default_value = "gpu.xml")]
    output: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// bilinear, gradient or lsq (task flags are accepted too).
    #[arg(long)]
    task: String,
    #[arg(long)]
    input: Option<PathBuf>,
    /// ROWSxCOLS for demosaic, LINESxPIXELS for fitting.
    #[arg(long)]
    dims: Option<String>,
    /// Polynomial orders to fit.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    orders: Vec<usize>,
    /// Worker counts compared against the sequential baseline [default: 1,cores].
    #[arg(long, value_delimiter = ',')]
    workers_list: Vec<usize>,
    /// Repetitions per measurement; the median is reported.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
}

/// Appends the default port when none is given.
fn server_addr(s: &str) -> String {
    if s.parse::<SocketAddr>().is_ok() {
        return s.to_string();
    }
    if let Ok(ip) = s.parse::<IpAddr>() {
        return SocketAddr::new(ip, gpc::DEFAULT_PORT).to_string();
    }
    match s.rsplit_once(':') {
        Some((_, port)) if port.parse::<u16>().is_ok() => s.to_string(),
        _ => format!("{s}:{}", gpc::DEFAULT_PORT),
    }
}

fn parse_params(raw: &[String]) -> Result<ParamMap, String> {
    let mut p = ParamMap::new();
    for kv in raw {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--param {kv:?} is not KEY=VALUE"))?;
        p.set(k.trim(), v.trim()).map_err(|e| format!("--param {kv:?}: {e}"))?;
    }
    Ok(p)
}

fn init_logging(default: &str) {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp_millis()
        .init();
}

fn serve(a: ServeArgs) -> u8 {
    init_logging("info");
    let mut config = ServerConfig {
        bind: a.bind,
        port: a.port,
        timeout: Duration::from_secs(a.timeout_secs),
        ..ServerConfig::default()
    };
    if let Some(w) = a.workers {
        config.workers = w as usize;
    }
    if let Some(m) = a.max_tasks {
        config.max_tasks = m as usize;
    }
    let devices = probe_devices(&HostProber);
    let server = match Server::bind(config, builtin_registry(devices)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("gpc: {e}");
            return FAILED;
        }
    };
    let handle = server.handle();
    if let Err(e) = ctrlc::set_handler(move || {
        log::info!("shutdown requested");
        handle.shutdown();
    }) {
        log::warn!("cannot install signal handler: {e}");
    }
    // announce only once an interrupt would be handled gracefully
    let c = server.config();
    println!(
        "gpc server listening on {} (workers={}, timeout={}s, max_tasks={})",
        server.local_addr(),
        c.workers,
        c.timeout.as_secs(),
        c.max_tasks
    );
    server.run();
    OK
}

fn report_client_error(e: &ClientError) -> u8 {
    eprintln!("gpc: {e}");
    match e {
        ClientError::FieldTooLong(_)
        | ClientError::BadRequest(_)
        | ClientError::UnsafeName(_)
        | ClientError::SizeMismatch { .. }
        | ClientError::BadFormat(_) => USAGE,
        _ => FAILED,
    }
}

/// Sends the request, prints the status line, saves the payload on success.
fn run_task(
    server: &str,
    flag: &str,
    params: &ParamMap,
    payload: Option<&[u8]>,
    output: &str,
    out_dir: &Path,
) -> Result<client::TaskResult, u8> {
    client::check_output_name(output).map_err(|e| report_client_error(&e))?;
    let started = Instant::now();
    let result = client::exchange(&server_addr(server), flag, params, payload, output)
        .map_err(|e| report_client_error(&e))?;
    println!("{flag} {} {} {}", result.status, result.payload.len(), started.elapsed().as_millis());
    let result = result.into_ok().map_err(|e| report_client_error(&e))?;
    client::save_result(&result, out_dir).map_err(|e| report_client_error(&e))?;
    Ok(result)
}

fn submit(a: SubmitArgs) -> u8 {
    init_logging("warn");
    let mut params = match parse_params(&a.params) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("gpc: {msg}");
            return USAGE;
        }
    };
    let payload = match &a.input {
        Some(path) => match client::load_input(path, &a.task, &mut params) {
            Ok(bytes) => Some(bytes),
            Err(e) => {
                // nothing has reached the server yet: a local usage problem
                report_client_error(&e);
                return USAGE;
            }
        },
        None => None,
    };
    match run_task(&a.server.server, &a.task, &params, payload.as_deref(), &a.output, &a.out_dir) {
        Ok(_) => OK,
        Err(code) => code,
    }
}

fn print_tree(xml: &str) -> Result<(), roxmltree::Error> {
    let doc = roxmltree::Document::parse(xml)?;
    fn walk(node: roxmltree::Node, depth: usize) {
        let pad = "  ".repeat(depth);
        let attrs: Vec<String> = node.attributes().map(|a| format!("{}={}", a.name(), a.value())).collect();
        let text = node.children().filter(|c| c.is_text()).filter_map(|c| c.text()).collect::<String>();
        let elements: Vec<_> = node.children().filter(|c| c.is_element()).collect();
        if elements.is_empty() && !text.trim().is_empty() {
            println!("{pad}{}: {}", node.tag_name().name(), text.trim());
        } else if attrs.is_empty() {
            println!("{pad}{}", node.tag_name().name());
        } else {
            println!("{pad}{} [{}]", node.tag_name().name(), attrs.join(" "));
        }
        for child in elements {
            walk(child, depth + 1);
        }
    }
    walk(doc.root_element(), 0);
    Ok(())
}

fn devinfo(a: DevinfoArgs) -> u8 {
    init_logging("warn");
    let result = match run_task(&a.server.server, flags::DEVINFO, &ParamMap::new(), None, &a.output, &a.out_dir) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let parsed = std::str::from_utf8(&result.payload).map_err(|e| e.to_string()).and_then(|xml| print_tree(xml).map_err(|e| e.to_string()));
    match parsed {
        Ok(()) => OK,
        Err(e) => {
            eprintln!("gpc: server sent unreadable XML: {e}");
            FAILED
        }
    }
}

fn bench_cmd(a: BenchArgs) -> u8 {
    init_logging("warn");
    let task: BenchTask = match a.task.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("gpc: {e}");
            return USAGE;
        }
    };
    let mut cfg = BenchConfig::new(task);
    cfg.input = a.input;
    cfg.reps = a.reps as usize;
    cfg.orders = a.orders;
    if !a.workers_list.is_empty() {
        cfg.workers = a.workers_list;
    }
    if let Some(d) = &a.dims {
        match bench::parse_dims(d) {
            Ok(d) => cfg.dims = Some(d),
            Err(e) => {
                eprintln!("gpc: {e}");
                return USAGE;
            }
        }
    }
    match bench::run(&cfg) {
        Ok(rows) => {
            print!("{}", bench::to_tsv(&rows));
            OK
        }
        Err(e) => {
            eprintln!("gpc: {e}");
            USAGE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(match cli.command {
        Command::Serve(a) => serve(a),
        Command::Submit(a) => submit(a),
        Command::Devinfo(a) => devinfo(a),
        Command::Bench(a) => bench_cmd(a),
    })
}
