use crate::geometry::Vec2;

/// Distance between neighbouring pallet slots.
pub const PITCH: f64 = 1.5;
/// Slots per aisle block, horizontally and vertically.
pub const SLOTS_X: usize = 8;
pub const SLOTS_Y: usize = 2;
/// Width of every corridor.
pub const CORRIDOR: f64 = 3.0;
/// Depth of the loading zone strip along the bottom wall.
pub const ZONE_DEPTH: f64 = 3.0;

const EPS: f64 = 1e-6;

/// Index of a pallet slot in the aisle grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub block_row: usize,
    pub block_col: usize,
    /// Column inside the block, `0..SLOTS_X`.
    pub i: usize,
    /// Row inside the block, `0..SLOTS_Y`; row 0 faces the corridor below.
    pub j: usize,
    pub position: Vec2,
    /// Corridor point a forklift stops at to handle this slot.
    pub access: Vec2,
}

/// Aisle blocks separated by corridors, with the loading zone at the
/// bottom.
///
/// Horizontal corridor `k` runs below block row `k` (corridor 0 borders
/// the loading zone); vertical corridor `m` runs left of block column `m`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    slots: Vec<Slot>,
    zone: Vec<Vec2>,
}

impl Layout {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut layout = Layout {
            rows,
            cols,
            slots: Vec::new(),
            zone: Vec::new(),
        };
        for r in 0..rows {
            for c in 0..cols {
                let x0 = CORRIDOR + c as f64 * (block_width() + CORRIDOR);
                let y0 = ZONE_DEPTH + CORRIDOR + r as f64 * (block_height() + CORRIDOR);
                for j in 0..SLOTS_Y {
                    for i in 0..SLOTS_X {
                        let position = Vec2::new(
                            x0 + PITCH * (i as f64 + 0.5),
                            y0 + PITCH * (j as f64 + 0.5),
                        );
                        let corridor = if j == 0 { r } else { r + 1 };
                        let access = Vec2::new(position.x, layout.corridor_y(corridor));
                        layout.slots.push(Slot {
                            block_row: r,
                            block_col: c,
                            i,
                            j,
                            position,
                            access,
                        });
                    }
                }
            }
        }
        let capacity = ((layout.width() - 2.0 * CORRIDOR) / PITCH).floor() as usize;
        layout.zone = (0..capacity)
            .map(|z| Vec2::new(CORRIDOR + PITCH * (z as f64 + 0.5), ZONE_DEPTH / 2.0))
            .collect();
        layout
    }

    pub fn width(&self) -> f64 {
        CORRIDOR + self.cols as f64 * (block_width() + CORRIDOR)
    }

    pub fn height(&self) -> f64 {
        ZONE_DEPTH + CORRIDOR + self.rows as f64 * (block_height() + CORRIDOR)
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, id: SlotId) -> &Slot {
        &self.slots[id.0]
    }

    pub fn slot_ids(&self) -> impl Iterator<Item = SlotId> {
        (0..self.slots.len()).map(SlotId)
    }

    /// Loading-zone pallet places.
    pub fn zone(&self) -> &[Vec2] {
        &self.zone
    }

    /// Corridor point in front of loading-zone place `z`.
    pub fn zone_access(&self, z: usize) -> Vec2 {
        Vec2::new(self.zone[z].x, self.corridor_y(0))
    }

    pub fn corridor_y(&self, k: usize) -> f64 {
        ZONE_DEPTH + CORRIDOR / 2.0 + k as f64 * (block_height() + CORRIDOR)
    }

    pub fn corridor_x(&self, m: usize) -> f64 {
        CORRIDOR / 2.0 + m as f64 * (block_width() + CORRIDOR)
    }

    /// Slots sharing a side with `id` inside the same block.
    pub fn adjacent(&self, id: SlotId) -> Vec<SlotId> {
        let s = &self.slots[id.0];
        let base = id.0 - (s.j * SLOTS_X + s.i);
        let mut out = Vec::with_capacity(4);
        if s.i > 0 {
            out.push(SlotId(id.0 - 1));
        }
        if s.i + 1 < SLOTS_X {
            out.push(SlotId(id.0 + 1));
        }
        let other_row = 1 - s.j;
        out.push(SlotId(base + other_row * SLOTS_X + s.i));
        out
    }

    fn on_horizontal(&self, p: Vec2) -> Option<usize> {
        (0..=self.rows).find(|k| (self.corridor_y(*k) - p.y).abs() < EPS)
    }

    fn on_vertical(&self, p: Vec2) -> Option<usize> {
        (0..=self.cols).find(|m| (self.corridor_x(*m) - p.x).abs() < EPS)
    }

    /// Corridor waypoints from `from` to `to`, both on corridor centre
    /// lines. Every leg is axis-aligned; `from` itself is not included.
    pub fn route(&self, from: Vec2, to: Vec2) -> Vec<Vec2> {
        // A target on a vertical corridor is reached through its nearest
        // junction.
        let junction = match self.on_horizontal(to) {
            Some(_) => to,
            None => {
                let k = (0..=self.rows)
                    .min_by(|a, b| {
                        let da = (self.corridor_y(*a) - to.y).abs();
                        let db = (self.corridor_y(*b) - to.y).abs();
                        da.total_cmp(&db)
                    })
                    .expect("at least one corridor");
                Vec2::new(to.x, self.corridor_y(k))
            }
        };
        let mut path = Vec::new();
        match (self.on_horizontal(from), self.on_vertical(from)) {
            (Some(_), _) if (from.y - junction.y).abs() < EPS => {}
            (None, Some(_)) => path.push(Vec2::new(from.x, junction.y)),
            _ => {
                let m = (0..=self.cols)
                    .min_by(|a, b| {
                        let cost = |m: usize| {
                            let x = self.corridor_x(m);
                            (from.x - x).abs() + (x - junction.x).abs()
                        };
                        cost(*a).total_cmp(&cost(*b))
                    })
                    .expect("at least one corridor");
                let x = self.corridor_x(m);
                path.push(Vec2::new(x, from.y));
                path.push(Vec2::new(x, junction.y));
            }
        }
        path.push(junction);
        path.push(to);
        path.dedup_by(|a, b| a.distance(*b) < EPS);
        if path.first().is_some_and(|p| p.distance(from) < EPS) {
            path.remove(0);
        }
        path
    }
}

fn block_width() -> f64 {
    SLOTS_X as f64 * PITCH
}

fn block_height() -> f64 {
    SLOTS_Y as f64 * PITCH
}
