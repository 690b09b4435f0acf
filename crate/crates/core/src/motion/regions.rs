//! Connected-component extraction of moving regions.

use serde::{Deserialize, Serialize};

use super::{BinaryMask, MotionConfig};
use crate::imaging::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingRegion {
    pub bbox: BoundingBox,
    /// Number of set pixels.
    pub area: u32,
    /// Mean pixel coordinate of the set pixels.
    pub centroid: (f64, f64),
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }
}

struct Accum {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    area: u32,
    sx: u64,
    sy: u64,
}

/// Labels the set pixels of `mask` and returns one region per component of
/// at least `cfg.min_area` pixels, largest first (ties by top-left `(y, x)`).
pub fn extract_regions(mask: &BinaryMask, cfg: &MotionConfig) -> Vec<MovingRegion> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let values = mask.values();
    // Label 0 is background; provisional labels start at 1.
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet { parent: vec![0] };
    let eight = cfg.connectivity == Connectivity::Eight;

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if values[i] != 255 {
                continue;
            }
            let mut label = 0u32;
            let mut join = |other: u32, label: &mut u32| {
                if other == 0 {
                    return;
                }
                *label = if *label == 0 {
                    other
                } else {
                    sets.union(*label, other)
                };
            };
            if x > 0 {
                join(labels[i - 1], &mut label);
            }
            if y > 0 {
                let up = i - w;
                join(labels[up], &mut label);
                if eight {
                    if x > 0 {
                        join(labels[up - 1], &mut label);
                    }
                    if x + 1 < w {
                        join(labels[up + 1], &mut label);
                    }
                }
            }
            labels[i] = if label == 0 { sets.make() } else { label };
        }
    }

    let mut slots: Vec<Option<Accum>> = (0..sets.parent.len()).map(|_| None).collect();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = sets.find(l) as usize;
            let (xu, yu) = (x as u32, y as u32);
            let acc = slots[root].get_or_insert(Accum {
                x0: xu,
                y0: yu,
                x1: xu,
                y1: yu,
                area: 0,
                sx: 0,
                sy: 0,
            });
            acc.x0 = acc.x0.min(xu);
            acc.x1 = acc.x1.max(xu);
            acc.y0 = acc.y0.min(yu);
            acc.y1 = acc.y1.max(yu);
            acc.area += 1;
            acc.sx += x as u64;
            acc.sy += y as u64;
        }
    }

    let mut regions: Vec<MovingRegion> = slots
        .into_iter()
        .flatten()
        .filter(|a| a.area >= cfg.min_area)
        .map(|a| MovingRegion {
            bbox: BoundingBox::from_extent(a.x0, a.y0, a.x1, a.y1),
            area: a.area,
            centroid: (a.sx as f64 / a.area as f64, a.sy as f64 / a.area as f64),
        })
        .collect();
    sort_regions(&mut regions);
    regions
}

fn sort_regions(regions: &mut [MovingRegion]) {
    regions.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.y.cmp(&b.bbox.y))
            .then(a.bbox.x.cmp(&b.bbox.x))
    });
}

/// Groups regions whose boxes lie within `max_gap` pixels of each other
/// (Chebyshev distance between boxes) into one region, repeatedly, until no
/// two remaining boxes are that close. Areas add; centroids are area-weighted.
pub fn merge_nearby(regions: &[MovingRegion], max_gap: u32) -> Vec<MovingRegion> {
    let mut out: Vec<MovingRegion> = regions.to_vec();
    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i < out.len() {
            let mut j = i + 1;
            while j < out.len() {
                if out[i].bbox.gap(&out[j].bbox) <= max_gap {
                    let b = out.remove(j);
                    let a = &mut out[i];
                    let total = (a.area + b.area) as f64;
                    a.centroid = (
                        (a.centroid.0 * a.area as f64 + b.centroid.0 * b.area as f64) / total,
                        (a.centroid.1 * a.area as f64 + b.centroid.1 * b.area as f64) / total,
                    );
                    a.area += b.area;
                    a.bbox = a.bbox.union(&b.bbox);
                    merged_any = true;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged_any {
            break;
        }
    }
    sort_regions(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let values = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| if b == b'#' { 255 } else { 0 }))
            .collect();
        BinaryMask::new(w, h, values).unwrap()
    }

    fn cfg(min_area: u32) -> MotionConfig {
        MotionConfig {
            min_area,
            ..MotionConfig::default()
        }
    }

    #[test]
    fn empty_mask() {
        let m = mask_from(&["....", "...."]);
        assert!(extract_regions(&m, &cfg(1)).is_empty());
    }

    #[test]
    fn two_blobs() {
        let m = mask_from(&["###.....", "###..###", "###..###", ".....###"]);
        let r = extract_regions(&m, &cfg(4));
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|r| r.area == 9));
        // equal areas: top-most first
        assert_eq!(r[0].bbox, BoundingBox::new(0, 0, 3, 3).unwrap());
        assert_eq!(r[1].bbox, BoundingBox::new(5, 1, 3, 3).unwrap());
        assert_eq!(r[0].centroid, (1.0, 1.0));
    }

    #[test]
    fn diagonal_touch() {
        let m = mask_from(&["#..", ".#.", "..#"]);
        assert_eq!(extract_regions(&m, &cfg(1)).len(), 1);
        let four = MotionConfig {
            connectivity: Connectivity::Four,
            ..cfg(1)
        };
        assert_eq!(extract_regions(&m, &four).len(), 3);
    }

    #[test]
    fn u_shape_merges_labels() {
        let m = mask_from(&["#.#", "#.#", "###"]);
        let r = extract_regions(&m, &cfg(1));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 7);
    }

    #[test]
    fn min_area_filter() {
        let m = mask_from(&["#....", ".....", "..###"]);
        let r = extract_regions(&m, &cfg(2));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 3);
    }

    #[test]
    fn merge_nearby_groups_fragments() {
        let m = mask_from(&["##...##", "##...##", ".......", "......."]);
        let r = extract_regions(&m, &cfg(1));
        assert_eq!(r.len(), 2);
        assert_eq!(merge_nearby(&r, 2).len(), 2);
        let merged = merge_nearby(&r, 3);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].area, 8);
        assert_eq!(merged[0].bbox, BoundingBox::new(0, 0, 7, 2).unwrap());
        assert_eq!(merged[0].centroid, (3.0, 0.5));
    }
}
