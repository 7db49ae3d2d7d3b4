//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use std::cell::Cell;
use std::collections::{BTreeSet, VecDeque};

use fieldcalc::blocks::abf_hops;
use fieldcalc::calculus::DeviceId;
use fieldcalc::processes::Status;
use fieldcalc::simulator::Lockstep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Undirected graph on devices `0..n`.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
}

impl Graph {
    /// Connected graph: a random spanning tree plus about `n / 2` extra edges.
    pub fn random_connected(rng: &mut impl Rng, n: usize) -> Graph {
        let mut set = BTreeSet::new();
        for v in 1..n as u32 {
            let u = rng.random_range(0..v);
            set.insert((u, v));
        }
        for _ in 0..n / 2 {
            let a = rng.random_range(0..n as u32);
            let b = rng.random_range(0..n as u32);
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Graph {
            n,
            edges: set.into_iter().collect(),
        }
    }

    pub fn seeded(seed: u64, max_nodes: usize) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=max_nodes);
        Graph::random_connected(&mut rng, n)
    }

    pub fn network(&self) -> Lockstep {
        Lockstep::from_edges(self.n, &self.edges)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b as usize);
            adj[b as usize].push(a as usize);
        }
        adj
    }

    /// Breadth-first hop distances from the nearest of `sources`.
    pub fn bfs(&self, sources: &[usize]) -> Vec<Option<u32>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        for &s in sources {
            dist[s] = Some(0);
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued vertices are reached");
            for &w in &adj[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn diameter(&self) -> u32 {
        (0..self.n)
            .map(|v| self.bfs(&[v]).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

/// One randomized two-process program.
#[derive(Debug, Clone)]
pub struct BubbleCase {
    pub graph: Graph,
    pub keys: [u32; 2],
    pub origins: [u32; 2],
    /// Bubble radius in hops; `None` spreads everywhere.
    pub radius: [Option<u16>; 2],
    /// Round at which each origin terminates its process.
    pub terminate_at: [Option<u32>; 2],
    /// Run the body inside a branch on device parity.
    pub branchy: bool,
    pub rounds: u32,
}

impl BubbleCase {
    pub fn seeded(seed: u64) -> BubbleCase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=16);
        let graph = Graph::random_connected(&mut rng, n);
        let mut keys = [rng.random::<u32>(), rng.random::<u32>()];
        if keys[0] == keys[1] {
            keys[1] = keys[1].wrapping_add(1);
        }
        let origins = [rng.random_range(0..n as u32), rng.random_range(0..n as u32)];
        let mut radius = [None, None];
        let mut terminate_at = [None, None];
        for i in 0..2 {
            if rng.random_bool(0.5) {
                radius[i] = Some(rng.random_range(0..4));
            }
            if rng.random_bool(0.4) {
                terminate_at[i] = Some(rng.random_range(2..14));
            }
        }
        BubbleCase {
            graph,
            keys,
            origins,
            radius,
            terminate_at,
            branchy: rng.random_bool(0.5),
            rounds: 16,
        }
    }
}

/// Reads made inside process bodies: `(total, from another key)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Reads {
    pub total: u64,
    pub cross: u64,
}

/// Runs the case; every process body reads neighbour values tagged with
/// the key they were written under and counts foreign ones.
pub fn run_bubble_case(case: &BubbleCase) -> Reads {
    let total = Cell::new(0u64);
    let cross = Cell::new(0u64);
    let mut net = case.graph.network();
    for round in 1..=case.rounds {
        net.step(|c| {
            let me = c.uid();
            let own: Vec<u32> = (0..2)
                .filter(|i| DeviceId(case.origins[*i]) == me)
                .map(|i| case.keys[i])
                .collect();
            c.spawn(own, |c, key| {
                let i = usize::from(*key == case.keys[1]);
                let origin = DeviceId(case.origins[i]) == me;
                let check = |c: &mut fieldcalc::calculus::Ctx<'_>| {
                    let seen = c.nbr(*key, *key);
                    for (_, v) in seen.neighbours() {
                        total.set(total.get() + 1);
                        if v != key {
                            cross.set(cross.get() + 1);
                        }
                    }
                    c.share(*key, |_, f| {
                        for (_, v) in f.neighbours() {
                            total.set(total.get() + 1);
                            if v != key {
                                cross.set(cross.get() + 1);
                            }
                        }
                        *key
                    });
                };
                if case.branchy {
                    c.branch(me.0 % 2 == 0, |c| check(c), |c| check(c));
                } else {
                    check(c);
                }
                let d = abf_hops(c, origin);
                let status = if origin && case.terminate_at[i].is_some_and(|t| round >= t) {
                    Status::TERMINATED
                } else {
                    match case.radius[i] {
                        None => Status::INTERNAL_OUTPUT,
                        Some(r) if d.0 <= r => Status::INTERNAL_OUTPUT,
                        Some(r) if d.0 == r + 1 => Status::BORDER_OUTPUT,
                        Some(_) => Status::EXTERNAL,
                    }
                };
                ((), status)
            })
        })
        .expect("bubble case rounds succeed");
    }
    Reads {
        total: total.get(),
        cross: cross.get(),
    }
}
