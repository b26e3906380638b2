//! Connected-component labeling by iterative flood fill.

use crate::raster::{BBox, Raster};

/// Pixel adjacency used when growing components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(i32, i32)] {
        const FOUR: [(i32, i32); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        const EIGHT: [(i32, i32); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Summary of one connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pixel_count: u64,
    pub bbox: BBox,
}

/// Components in order of first appearance in a row-major scan, plus a label
/// per pixel (`u32::MAX` marks pixels outside every component).
#[derive(Debug, Clone)]
pub struct Labeling {
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

pub(crate) const UNLABELED: u32 = u32::MAX;

/// Label maximal groups of active pixels where neighbouring pixels join when
/// `joins(a, b)` holds for their flat indices.
pub(crate) fn label_by(
    width: u32,
    height: u32,
    connectivity: Connectivity,
    active: impl Fn(usize) -> bool,
    joins: impl Fn(usize, usize) -> bool,
) -> Labeling {
    let n = width as usize * height as usize;
    let mut labels = vec![UNLABELED; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    let offsets = connectivity.offsets();
    for seed in 0..n {
        if labels[seed] != UNLABELED || !active(seed) {
            continue;
        }
        let id = components.len() as u32;
        labels[seed] = id;
        stack.push(seed);
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut count = 0u64;
        while let Some(i) = stack.pop() {
            let x = (i % width as usize) as u32;
            let y = (i / width as usize) as u32;
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            for &(dx, dy) in offsets {
                let nx = x as i64 + dx as i64;
                let ny = y as i64 + dy as i64;
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let j = ny as usize * width as usize + nx as usize;
                if labels[j] == UNLABELED && active(j) && joins(i, j) {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
        components.push(Component {
            pixel_count: count,
            bbox: BBox { x0, y0, x1, y1 },
        });
    }
    Labeling { labels, components }
}

/// Maximal connected groups of `true` pixels.
pub fn connected_components(mask: &Raster<bool>, connectivity: Connectivity) -> Vec<Component> {
    let values = mask.values();
    label_by(
        mask.width(),
        mask.height(),
        connectivity,
        |i| values[i],
        |_, _| true,
    )
    .components
}

/// Index of the component with the most pixels; ties go to the earliest in scan order.
pub fn largest(components: &[Component]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in components.iter().enumerate() {
        match best {
            Some(b) if components[b].pixel_count >= c.pixel_count => {}
            _ => best = Some(i),
        }
    }
    best
}
