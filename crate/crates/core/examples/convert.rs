//! Converts between a directory of PNM images and a Y4M stream.
//!
//! ```text
//! cargo run --example convert -- frames/ out.y4m
//! cargo run --example convert -- in.y4m frames/
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use floatwatch::imaging::PixelFormat;
use floatwatch::ingest::{write_pnm, FrameSource, SourceSpec, Y4mWriter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [input, output] = args.as_slice() else {
        return Err("usage: convert INPUT OUTPUT".into());
    };
    let mut src = FrameSource::open(&SourceSpec::parse(input)?)?;
    let mut count = 0;
    if output.ends_with(".y4m") {
        let mut writer = None;
        while let Some(f) = src.next_frame()? {
            let w = match &mut writer {
                Some(w) => w,
                None => writer.insert(Y4mWriter::new(
                    BufWriter::new(File::create(output)?),
                    f.width(),
                    f.height(),
                    f.format(),
                    (30, 1),
                )?),
            };
            w.write_frame(&f)?;
            count += 1;
        }
        if let Some(w) = writer {
            w.finish()?;
        }
    } else {
        std::fs::create_dir_all(output)?;
        while let Some(f) = src.next_frame()? {
            let ext = if f.format() == PixelFormat::Gray {
                "pgm"
            } else {
                "ppm"
            };
            std::fs::write(
                Path::new(output).join(format!("{count:06}.{ext}")),
                write_pnm(&f),
            )?;
            count += 1;
        }
    }
    println!("wrote {count} frames to {output}");
    Ok(())
}
