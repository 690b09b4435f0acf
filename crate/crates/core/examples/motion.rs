//! Frame differencing, connected components and background subtraction on
//! two hand-made frames.

use floatwatch::imaging::Frame;
use floatwatch::motion::{
    binarize, extract_regions, foreground_mask, frame_difference, merge_nearby, BackgroundModel,
    MotionConfig,
};

fn scene(objects: &[(u32, u32)]) -> Frame {
    Frame::from_fn_gray(80, 40, |x, y| {
        let inside = objects
            .iter()
            .any(|&(ox, oy)| (ox..ox + 6).contains(&x) && (oy..oy + 5).contains(&y));
        if inside {
            220
        } else {
            50
        }
    })
    .unwrap()
}

fn main() {
    let cfg = MotionConfig::default();
    let prev = scene(&[(10, 10), (50, 20)]);
    let cur = scene(&[(13, 10), (50, 24)]).with_timing(1, 33_333);

    let diff = frame_difference(&cur, &prev).unwrap();
    let mask = binarize(&diff, cfg.threshold).unwrap();
    println!("{} changed pixels", mask.count_set());

    let regions = extract_regions(&mask, &cfg);
    for r in &regions {
        println!(
            "region {:?} area {} centroid ({:.1}, {:.1})",
            r.bbox, r.area, r.centroid.0, r.centroid.1
        );
    }
    println!(
        "{} regions after merging gaps of 3 px",
        merge_nearby(&regions, 3).len()
    );

    let mut bg = BackgroundModel::new();
    for _ in 0..20 {
        bg.update(&prev, cfg.bg_alpha).unwrap();
    }
    let fg = foreground_mask(&bg, &cur, cfg.bg_threshold).unwrap();
    println!(
        "{} foreground pixels against the learned background",
        fg.count_set()
    );
}
