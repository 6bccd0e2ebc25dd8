//! Deliberately slow reference implementations used as test oracles.

#![allow(dead_code)]

use focus_cascade::geometry::BoxPx;
use focus_cascade::labeler::LabelParams;
use focus_cascade::maps::Label;

/// Chip corners `[x0, y0, x1, y1]` in pixels, sorted.
pub type Rect = [i64; 4];

/// Chip generation written from the definition: per-cell window dilation,
/// stack flood fill, per-axis growth, and a quadratic merge loop that
/// restarts after every merge.
#[allow(clippy::too_many_arguments)]
pub fn naive_chips(
    values: &[f32],
    cols: usize,
    rows: usize,
    t: f64,
    d: u32,
    k: u32,
    stride: u32,
    image_w: u32,
    image_h: u32,
) -> Vec<Rect> {
    let on = |x: usize, y: usize| values[y * cols + x] as f64 > t;
    let r = (d as i64 - 1) / 2;
    let mut dil = vec![false; cols * rows];
    for y in 0..rows as i64 {
        for x in 0..cols as i64 {
            let mut hit = false;
            for yy in (y - r)..=(y + r) {
                for xx in (x - r)..=(x + r) {
                    if xx >= 0
                        && yy >= 0
                        && (xx as usize) < cols
                        && (yy as usize) < rows
                        && on(xx as usize, yy as usize)
                    {
                        hit = true;
                    }
                }
            }
            dil[y as usize * cols + x as usize] = hit;
        }
    }

    let mut seen = vec![false; cols * rows];
    let mut rects = Vec::new();
    for start in 0..cols * rows {
        if !dil[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % cols, i / cols);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                        continue;
                    }
                    let j = ny as usize * cols + nx as usize;
                    if dil[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let s = stride as i64;
        let grow = |lo: i64, hi: i64, dim: i64| -> (i64, i64) {
            if dim <= k as i64 {
                return (0, dim);
            }
            let (mut lo, mut hi) = (lo, hi);
            while hi - lo < k as i64 {
                // alternate: right first, then left, so the odd pixel lands right
                hi += 1;
                if hi - lo < k as i64 {
                    lo -= 1;
                }
            }
            while lo < 0 {
                lo += 1;
                hi += 1;
            }
            while hi > dim {
                lo -= 1;
                hi -= 1;
            }
            (lo, hi)
        };
        let (iw, ih) = (image_w as i64, image_h as i64);
        let (a0, a1) = grow((x0 as i64 * s).min(iw), ((x1 as i64 + 1) * s).min(iw), iw);
        let (b0, b1) = grow((y0 as i64 * s).min(ih), ((y1 as i64 + 1) * s).min(ih), ih);
        rects.push([a0, b0, a1, b1]);
    }

    'outer: loop {
        for i in 0..rects.len() {
            for j in 0..rects.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (rects[i], rects[j]);
                let w = a[2].min(b[2]) - a[0].max(b[0]);
                let h = a[3].min(b[3]) - a[1].max(b[1]);
                if w > 0 && h > 0 {
                    let u = [
                        a[0].min(b[0]),
                        a[1].min(b[1]),
                        a[2].max(b[2]),
                        a[3].max(b[3]),
                    ];
                    let (lo, hi) = (i.min(j), i.max(j));
                    rects.remove(hi);
                    rects[lo] = u;
                    continue 'outer;
                }
            }
        }
        break;
    }
    rects.sort();
    rects
}

pub fn corners(b: &BoxPx) -> Rect {
    [
        b.x() as i64,
        b.y() as i64,
        b.right() as i64,
        b.bottom() as i64,
    ]
}

/// Labels from the case analysis, one block at a time: every box is
/// checked against every block.
pub fn naive_labels(boxes: &[BoxPx], chip_w: u32, chip_h: u32, p: &LabelParams) -> Vec<Label> {
    let s = p.stride as f64;
    let cols = chip_w.div_ceil(p.stride) as usize;
    let rows = chip_h.div_ceil(p.stride) as usize;
    let mut out = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let x0 = bx as f64 * s;
            let y0 = by as f64 * s;
            let x1 = (x0 + s).min(chip_w as f64);
            let y1 = (y0 + s).min(chip_h as f64);
            let (mut focus, mut invalid) = (false, false);
            for b in boxes {
                let iw = x1.min(b.right()) - x0.max(b.x());
                let ih = y1.min(b.bottom()) - y0.max(b.y());
                if !(iw > 0.0 && ih > 0.0) {
                    continue;
                }
                let side = (b.w() * b.h()).sqrt();
                if side >= p.a && side <= p.b {
                    focus = true;
                } else if side < p.c {
                    invalid = true;
                }
            }
            out.push(if focus {
                Label::Focus
            } else if invalid {
                Label::Invalid
            } else {
                Label::Negative
            });
        }
    }
    out
}
