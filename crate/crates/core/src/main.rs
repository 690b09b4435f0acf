use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use floatwatch::eval::{compare_backends, detections_from_events, evaluate, DEFAULT_IOU_THRESHOLD};
use floatwatch::ingest::SourceSpec;
use floatwatch::service::{self, AppConfig, BackendKind, HttpServer, ServiceError};
use floatwatch::synth::{
    self, generate_scene, read_truth_file, truth_by_frame, Scenario, SceneFormat,
};

#[derive(Parser)]
#[command(
    name = "floatwatch",
    version,
    about = "Floating-object detection on water-surface video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// dir:PATH, y4m:PATH, tcp-listen:PORT or tcp-connect:HOST:PORT.
    #[arg(long)]
    source: Option<String>,
    /// Frame-difference threshold.
    #[arg(long)]
    threshold: Option<u8>,
    /// `classical` or `external:HOST:PORT`.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a source and write the event log.
    Detect {
        #[command(flatten)]
        args: PipelineArgs,
        /// Event log path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline and serve the HTTP API until interrupted.
    Serve {
        #[command(flatten)]
        args: PipelineArgs,
        /// Also write the event log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a scenario to disk with its ground truth.
    Synth {
        /// Scenario TOML; the standard scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Y4m)]
        format: Format,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Print the standard scenario as TOML and exit.
        #[arg(long)]
        print_standard: bool,
    },
    /// Score an event log against ground truth.
    Eval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Name shown in the table.
        #[arg(long, default_value = "run")]
        name: String,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure detection throughput on synthetic grayscale frames.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value_t = 300)]
        frames: u32,
        #[arg(long)]
        threshold: Option<u8>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Y4m,
    Ppm,
}

fn load_config(path: Option<&PathBuf>) -> Result<AppConfig, ServiceError> {
    match path {
        Some(p) => AppConfig::load(p),
        None => Ok(AppConfig::default()),
    }
}

fn apply_overrides(args: &PipelineArgs) -> Result<AppConfig, ServiceError> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(uri) = &args.source {
        let mut spec = SourceSpec::parse(uri)?;
        spec.fps = cfg.source.as_ref().and_then(|s| s.fps);
        cfg.source = Some(spec);
    }
    if let Some(t) = args.threshold {
        cfg.motion.threshold = t;
    }
    match args.backend.as_deref() {
        None => {}
        Some("classical") => cfg.detector.backend = BackendKind::Classical,
        Some(b) => match b.strip_prefix("external:") {
            Some(addr) if !addr.is_empty() => {
                cfg.detector.backend = BackendKind::External;
                cfg.detector.external_address = Some(addr.to_string());
            }
            _ => return Err(ServiceError::Config(format!("unknown backend {b:?}"))),
        },
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_sink(
    out: Option<&PathBuf>,
    stdout_default: bool,
) -> Result<Option<Box<dyn Write + Send>>, ServiceError> {
    Ok(match out {
        Some(p) => Some(Box::new(BufWriter::new(File::create(p)?))),
        None if stdout_default => Some(Box::new(std::io::stdout())),
        None => None,
    })
}

fn stop_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::Release)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

fn run(cli: Cli) -> Result<(), ServiceError> {
    match cli.command {
        Command::Detect { args, out } => {
            let cfg = apply_overrides(&args)?;
            let pipeline = service::start_pipeline(&cfg, open_sink(out.as_ref(), true)?)?;
            let interrupted = stop_flag();
            while !pipeline.is_finished() {
                if interrupted.load(Ordering::Acquire) {
                    pipeline.stop();
                    break;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            let summary = pipeline.wait()?;
            eprintln!(
                "{}",
                serde_json::to_string(&summary.stats).expect("serializable")
            );
            if let Some(cause) = summary.source_failure {
                return Err(ServiceError::Config(format!("source failed: {cause}")));
            }
        }
        Command::Serve { args, out } => {
            let cfg = apply_overrides(&args)?;
            let pipeline = service::start_pipeline(&cfg, open_sink(out.as_ref(), false)?)?;
            let server = match HttpServer::start(&cfg.http.address(), pipeline.shared()) {
                Ok(s) => s,
                Err(e) => {
                    pipeline.stop();
                    let _ = pipeline.wait();
                    return Err(e);
                }
            };
            eprintln!("serving on http://{}", server.local_addr());
            let interrupted = stop_flag();
            while !interrupted.load(Ordering::Acquire) {
                std::thread::sleep(Duration::from_millis(50));
            }
            pipeline.stop();
            let summary = pipeline.wait()?;
            server.shutdown();
            eprintln!(
                "{}",
                serde_json::to_string(&summary.stats).expect("serializable")
            );
        }
        Command::Synth {
            scenario,
            format,
            out,
            print_standard,
        } => {
            if print_standard {
                print!("{}", synth::standard_scenario().to_toml());
                return Ok(());
            }
            let sc = match scenario {
                Some(p) => Scenario::from_toml(&std::fs::read_to_string(p)?)?,
                None => synth::standard_scenario(),
            };
            let format = match format {
                Format::Y4m => SceneFormat::Y4m,
                Format::Ppm => SceneFormat::Ppm,
            };
            let g = generate_scene(&sc, &out, format)?;
            eprintln!(
                "wrote {} frames to {} and truth to {}",
                g.frame_count,
                g.frames.display(),
                g.truth.display()
            );
        }
        Command::Eval {
            events,
            truth,
            iou,
            name,
            out,
        } => {
            let events = service::read_events(BufReader::new(File::open(events)?))?;
            let truth = read_truth_file(&truth)?;
            let truth_frames = truth_by_frame(&truth, 0);
            let dets = detections_from_events(&events, truth_frames.len());
            let report = evaluate(&dets, &truth_frames, iou);
            print!("{}", compare_backends(&[(name, report.clone())]));
            let json = serde_json::to_string_pretty(&report).expect("serializable");
            match out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Bench {
            config,
            width,
            height,
            frames,
            threshold,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(t) = threshold {
                cfg.motion.threshold = t;
            }
            let report = service::bench(&cfg, width, height, frames)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
