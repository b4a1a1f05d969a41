use crate::model::{InventoryPair, Side};

/// The inventory lattice `[-q_bar, q_bar]^2`, flattened row-major in `q^0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub q_bar: i32,
}

impl Lattice {
    pub fn new(q_bar: i32) -> Self {
        Self { q_bar }
    }

    pub fn side_len(&self) -> usize {
        (2 * self.q_bar + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side_len() * self.side_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, q: InventoryPair) -> usize {
        debug_assert!(q.in_bounds(self.q_bar));
        ((q.0[0] + self.q_bar) as usize) * self.side_len() + (q.0[1] + self.q_bar) as usize
    }

    pub fn state(&self, idx: usize) -> InventoryPair {
        let n = self.side_len();
        InventoryPair::new((idx / n) as i32 - self.q_bar, (idx % n) as i32 - self.q_bar)
    }

    pub fn states(&self) -> impl Iterator<Item = InventoryPair> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    /// Index of the state reached when `maker` is filled on `side`, if it stays on the lattice.
    pub fn neighbour(&self, q: InventoryPair, side: Side, maker: usize) -> Option<usize> {
        let next = q.after_fill(side, maker);
        next.in_bounds(self.q_bar).then(|| self.index(next))
    }
}

/// One time slice of a value function on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub t: f64,
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl ValueGrid {
    pub fn constant(t: f64, lattice: Lattice, v: f64) -> Self {
        Self {
            t,
            lattice,
            values: vec![v; lattice.len()],
        }
    }

    pub fn at(&self, q: InventoryPair) -> f64 {
        self.values[self.lattice.index(q)]
    }

    /// Value after `maker` is filled on `side`; falls back to the current state off-lattice.
    pub fn after_fill(&self, q: InventoryPair, side: Side, maker: usize) -> f64 {
        match self.lattice.neighbour(q, side, maker) {
            Some(i) => self.values[i],
            None => self.at(q),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let l = Lattice::new(5);
        assert_eq!(l.len(), 121);
        for (i, q) in l.states().enumerate() {
            assert_eq!(l.index(q), i);
        }
        assert_eq!(l.state(0), InventoryPair::new(-5, -5));
        assert_eq!(l.neighbour(InventoryPair::new(5, 0), Side::Bid, 0), None);
        assert_eq!(
            l.neighbour(InventoryPair::new(5, 0), Side::Ask, 0),
            Some(l.index(InventoryPair::new(4, 0)))
        );
    }
}
