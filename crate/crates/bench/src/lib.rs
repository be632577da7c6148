//! Benchmark fixtures shared by the criterion targets.

use psvo_core::{PlacementId, Rect, Substrate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A 20x20 substrate with random small blocks, roughly `fill` occupied.
pub fn fragmented(seed: u64, fill: f64) -> Substrate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Substrate::new(20, 20);
    let mut id = 0;
    let target = (fill * s.capacity() as f64) as usize;
    let mut attempts = 0;
    while s.occupied_cells() < target && attempts < 10_000 {
        attempts += 1;
        let (f, t) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let rect = Rect::new(rng.random_range(0..=20 - f), rng.random_range(0..=20 - t), f, t);
        if s.place(rect, PlacementId(id)).is_ok() {
            id += 1;
        }
    }
    s
}
