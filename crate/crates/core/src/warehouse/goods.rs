use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;

/// Number of distinct goods.
pub const KINDS: u8 = 100;

/// Zipf distribution over the goods, kind 1 the most common.
#[derive(Debug, Clone, Copy)]
pub struct GoodsDistribution {
    zipf: Zipf<f64>,
}

impl GoodsDistribution {
    pub fn new(exponent: f64) -> Self {
        GoodsDistribution {
            zipf: Zipf::new(f64::from(KINDS), exponent).expect("valid Zipf parameters"),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u8 {
        self.zipf.sample(rng) as u8
    }
}

impl Default for GoodsDistribution {
    fn default() -> Self {
        GoodsDistribution::new(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Fill an empty pallet at the loading zone and store it.
    Insert,
    /// Fetch a pallet holding this kind and unload it at the loading zone.
    Retrieve(u8),
}

/// Random task stream of one forklift.
#[derive(Debug, Clone)]
pub struct TaskGenerator {
    rng: ChaCha8Rng,
    goods: GoodsDistribution,
}

impl TaskGenerator {
    pub fn new(seed: u64, forklift: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1000 + u64::from(forklift));
        TaskGenerator {
            rng,
            goods: GoodsDistribution::default(),
        }
    }

    pub fn next_task(&mut self) -> TaskKind {
        if self.rng.random_bool(0.5) {
            TaskKind::Insert
        } else {
            TaskKind::Retrieve(self.goods.sample(&mut self.rng))
        }
    }

    /// A kind for a pallet being filled.
    pub fn next_good(&mut self) -> u8 {
        self.goods.sample(&mut self.rng)
    }

    /// Idle time before the next task, in seconds.
    pub fn idle_time(&mut self) -> f64 {
        self.rng.random_range(2.0..10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_are_in_range_and_rank_ordered() {
        let goods = GoodsDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0u32; KINDS as usize + 1];
        for _ in 0..10_000 {
            let k = goods.sample(&mut rng);
            assert!((1..=KINDS).contains(&k));
            counts[k as usize] += 1;
        }
        // Zipf(s = 1): frequencies fall as 1/k; the head is strictly ordered.
        assert!(counts[1] > counts[2] && counts[2] > counts[3] && counts[3] > counts[5]);
        assert!(counts[1] > 10 * counts[50].max(1));
    }

    #[test]
    fn same_seed_same_tasks() {
        let draw = |seed| {
            let mut g = TaskGenerator::new(seed, 3);
            (0..50).map(|_| g.next_task()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
        let tasks = draw(4);
        assert!(tasks.contains(&TaskKind::Insert));
        assert!(tasks.iter().any(|t| matches!(t, TaskKind::Retrieve(_))));
    }
}
