//! Runs the pipeline on a generated scene and polls its HTTP API while it
//! works.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use floatwatch::ingest::SourceSpec;
use floatwatch::service::{start_pipeline, AppConfig, HttpServer};
use floatwatch::synth::{generate_scene, standard_scenario, SceneFormat};

fn get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).unwrap();
    body.split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or(body)
}

fn main() {
    let dir = std::env::temp_dir().join("floatwatch-serve-example");
    let scene = generate_scene(&standard_scenario(), &dir, SceneFormat::Y4m).unwrap();

    let cfg = AppConfig {
        source: Some(SourceSpec::parse(&format!("y4m:{}", scene.frames.display())).unwrap()),
        ..AppConfig::default()
    };
    let pipeline = start_pipeline(&cfg, None).unwrap();
    let server = HttpServer::start("127.0.0.1:0", pipeline.shared()).unwrap();
    let addr = server.local_addr();
    println!("serving on http://{addr}");

    while !pipeline.is_finished() {
        println!("{}", get(addr, "/stats"));
        std::thread::sleep(Duration::from_millis(100));
    }
    println!("last events: {}", get(addr, "/events?since=195"));
    let summary = pipeline.wait().unwrap();
    println!(
        "done: {} frames, {} events",
        summary.stats.frames_processed, summary.stats.events_emitted
    );
    server.shutdown();
}
