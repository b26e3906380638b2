//! Splitting a lowest-class plateau that is too large to come from one head.
//!
//! The pixels within `edges[0]` of a single point are 4-connected and fit in a
//! `s x s` block with `s = ceil(2 * edges[0])`. When neighbouring heads sit
//! close enough for their plateaus to touch, the merged plateau is split into
//! the fewest such groups. This recovers every head of moderately crowded
//! scenes; near jamming density the fewest-groups split is not always the
//! true one.

/// Search budget per 4-connected piece; past it the best split found so far
/// is kept.
const MAX_NODES: usize = 50_000;

/// Partition `pixels` (as `(x, y)`) into the fewest groups that are each
/// 4-connected and fit inside an `s x s` block. Output order is deterministic.
pub(crate) fn split_plateau(pixels: &[(u32, u32)], s: u32) -> Vec<Vec<(u32, u32)>> {
    let mut out = Vec::new();
    for piece in four_connected_pieces(pixels) {
        if fits(&piece, s) {
            out.push(piece);
        } else {
            out.extend(min_partition(&piece, s));
        }
    }
    out
}

fn fits(pixels: &[(u32, u32)], s: u32) -> bool {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    x1 - x0 < s && y1 - y0 < s
}

fn adjacent4(a: (u32, u32), b: (u32, u32)) -> bool {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
}

/// 4-connected pieces, each sorted in raster order, ordered by first pixel.
fn four_connected_pieces(pixels: &[(u32, u32)]) -> Vec<Vec<(u32, u32)>> {
    let mut sorted: Vec<(u32, u32)> = pixels.to_vec();
    sorted.sort_by_key(|&(x, y)| (y, x));
    let mut seen = vec![false; sorted.len()];
    let mut pieces = Vec::new();
    for start in 0..sorted.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut piece = Vec::new();
        while let Some(i) = stack.pop() {
            piece.push(sorted[i]);
            for j in 0..sorted.len() {
                if !seen[j] && adjacent4(sorted[i], sorted[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        piece.sort_by_key(|&(x, y)| (y, x));
        pieces.push(piece);
    }
    pieces
}

struct Search<'a> {
    pixels: &'a [(u32, u32)],
    s: u32,
    nodes: usize,
    best: Option<Vec<u64>>,
    current: Vec<u64>,
}

/// Groups are bit masks over the piece's pixels, so pieces are limited to 64
/// pixels; larger ones are cut into raster-order chunks first.
fn min_partition(piece: &[(u32, u32)], s: u32) -> Vec<Vec<(u32, u32)>> {
    if piece.len() > 64 {
        return piece.chunks(64).flat_map(|c| split_plateau(c, s)).collect();
    }
    let mut search = Search {
        pixels: piece,
        s,
        nodes: 0,
        best: None,
        current: Vec::new(),
    };
    let all = if piece.len() == 64 { u64::MAX } else { (1u64 << piece.len()) - 1 };
    search.run(all);
    search
        .best
        .unwrap_or_default()
        .into_iter()
        .map(|m| (0..piece.len()).filter(|&i| m >> i & 1 == 1).map(|i| piece[i]).collect())
        .collect()
}

impl Search<'_> {
    fn run(&mut self, remaining: u64) {
        if remaining == 0 {
            if self.best.as_ref().is_none_or(|b| self.current.len() < b.len()) {
                self.best = Some(self.current.clone());
            }
            return;
        }
        self.nodes += 1;
        let block = (self.s * self.s) as usize;
        let lower = self.current.len() + (remaining.count_ones() as usize).div_ceil(block);
        if self.best.as_ref().is_some_and(|b| lower >= b.len()) {
            return;
        }
        if self.nodes > MAX_NODES && self.best.is_some() {
            return;
        }
        for group in self.candidates(remaining) {
            self.current.push(group);
            self.run(remaining & !group);
            self.current.pop();
        }
    }

    /// 4-connected groups containing the first remaining pixel inside some
    /// block whose top row is that pixel's row, largest first.
    fn candidates(&self, remaining: u64) -> Vec<u64> {
        let first = remaining.trailing_zeros() as usize;
        let (ux, uy) = self.pixels[first];
        let mut groups = Vec::new();
        for bx in ux.saturating_sub(self.s - 1)..=ux {
            let in_block: Vec<usize> = (0..self.pixels.len())
                .filter(|&i| remaining >> i & 1 == 1)
                .filter(|&i| {
                    let (x, y) = self.pixels[i];
                    x >= bx && x < bx + self.s && y >= uy && y < uy + self.s
                })
                .collect();
            let others: Vec<usize> = in_block.iter().copied().filter(|&i| i != first).collect();
            for sub in 0..1u32 << others.len() {
                let mut mask = 1u64 << first;
                for (k, &i) in others.iter().enumerate() {
                    if sub >> k & 1 == 1 {
                        mask |= 1u64 << i;
                    }
                }
                if self.connected(mask) && !groups.contains(&mask) {
                    groups.push(mask);
                }
            }
        }
        groups.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
        groups
    }

    fn connected(&self, mask: u64) -> bool {
        let first = mask.trailing_zeros() as usize;
        let mut reached = 1u64 << first;
        let mut stack = vec![first];
        while let Some(i) = stack.pop() {
            for j in 0..self.pixels.len() {
                if mask >> j & 1 == 1 && reached >> j & 1 == 0 && adjacent4(self.pixels[i], self.pixels[j]) {
                    reached |= 1u64 << j;
                    stack.push(j);
                }
            }
        }
        reached == mask
    }
}
