//! A minimal external detector. It reports every bright connected blob as
//! debris, which is enough to drive the pipeline with `--backend external:ADDR`.
//!
//! ```text
//! cargo run --example backend_stub -- 127.0.0.1:7100
//! floatwatch detect --source scene/frames.y4m --backend external:127.0.0.1:7100
//! ```

use std::net::TcpListener;

use floatwatch::detect::{Detection, Label};
use floatwatch::imaging::as_gray;
use floatwatch::motion::{extract_regions, BinaryMask, MotionConfig};
use floatwatch::service::serve_backend;

fn main() -> std::io::Result<()> {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:7100".into());
    let listener = TcpListener::bind(&addr)?;
    println!("backend listening on {}", listener.local_addr()?);
    let cfg = MotionConfig::default();
    serve_backend(listener, |frame| {
        let gray = as_gray(frame);
        let bits = gray
            .data()
            .iter()
            .map(|&v| if v > 160 { 255 } else { 0 })
            .collect();
        let mask = BinaryMask::new(gray.width(), gray.height(), bits).ok()?;
        let dets = extract_regions(&mask, &cfg)
            .into_iter()
            .map(|r| Detection {
                bbox: r.bbox,
                label: Label::Debris,
                confidence: 0.5,
                source: "stub".into(),
            })
            .collect();
        Some(dets)
    })
}
