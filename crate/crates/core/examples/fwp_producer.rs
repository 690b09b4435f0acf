//! Streams the standard scenario to a `tcp-listen` source.
//!
//! ```text
//! floatwatch serve --source tcp-listen:127.0.0.1:7000 &
//! cargo run --example fwp_producer -- 127.0.0.1:7000
//! ```

use std::io::BufWriter;
use std::net::TcpStream;
use std::time::Duration;

use floatwatch::ingest::fwp;
use floatwatch::synth::{render_frame, standard_scenario};

fn main() -> std::io::Result<()> {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:7000".into());
    let sc = standard_scenario();
    let mut out = BufWriter::new(TcpStream::connect(&addr)?);
    let period = Duration::from_secs_f64(1.0 / f64::from(sc.fps));
    for t in 0..sc.frame_count {
        let (frame, _) = render_frame(&sc, t).unwrap();
        fwp::write_frame(&mut out, &frame)?;
        std::thread::sleep(period);
    }
    println!("sent {} frames to {addr}", sc.frame_count);
    Ok(())
}
