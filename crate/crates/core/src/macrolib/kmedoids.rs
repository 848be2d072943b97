//! PAM k-medoids: greedy BUILD initialization followed by best-improvement SWAP passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Dense symmetric dissimilarity matrix stored row-major.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Builds the matrix by evaluating `dist` on every unordered pair.
    pub fn from_fn(n: usize, mut dist: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone)]
pub struct PamResult<T> {
    /// Medoid indices into the clustered point set, in selection order.
    pub medoids: Vec<usize>,
    /// Total distance from every point to its nearest medoid.
    pub cost: T,
    /// Objective after BUILD, then after every applied swap.
    pub cost_history: Vec<T>,
    pub swaps: usize,
}

/// Sum of distances from every point to its closest medoid.
pub fn total_cost<T: Scalar>(dist: &DistanceMatrix<T>, medoids: &[usize]) -> T {
    (0..dist.len())
        .map(|j| {
            medoids
                .iter()
                .map(|&m| dist.get(j, m))
                .fold(T::infinity(), T::min)
        })
        .sum()
}

/// Runs PAM on `dist` selecting `k` medoids, with at most `max_swaps` SWAP passes.
///
/// Requires `1 <= k <= dist.len()`. Ties are resolved towards lower indices so the
/// result depends only on the matrix.
pub fn pam<T: Scalar>(dist: &DistanceMatrix<T>, k: usize, max_swaps: usize) -> PamResult<T> {
    let n = dist.len();
    assert!(k >= 1 && k <= n, "k must lie in 1..=n");
    swap_phase(dist, build(dist, k), max_swaps)
}

/// PAM from the BUILD start plus `restarts` seeded random starts; keeps the
/// lowest objective, preferring earlier starts on ties.
pub fn pam_restarts<T: Scalar>(
    dist: &DistanceMatrix<T>,
    k: usize,
    max_swaps: usize,
    restarts: usize,
    seed: u64,
) -> PamResult<T> {
    let mut best = pam(dist, k, max_swaps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let start = sample(&mut rng, dist.len(), k).into_vec();
        let r = swap_phase(dist, start, max_swaps);
        if r.cost < best.cost {
            best = r;
        }
    }
    best
}

fn swap_phase<T: Scalar>(dist: &DistanceMatrix<T>, mut medoids: Vec<usize>, max_swaps: usize) -> PamResult<T> {
    let n = dist.len();
    let k = medoids.len();
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }

    let mut cost = total_cost(dist, &medoids);
    let mut cost_history = vec![cost];
    let mut swaps = 0;
    // Relative slack so floating-point noise cannot cause endless swapping.
    let eps = T::lit(1e-12) * (T::one() + cost.abs());

    let mut nearest = vec![T::zero(); n];
    let mut second = vec![T::zero(); n];
    let mut nearest_slot = vec![0usize; n];

    while swaps < max_swaps {
        assign(dist, &medoids, &mut nearest, &mut nearest_slot, &mut second);

        let mut best: Option<(T, usize, usize)> = None;
        for slot in 0..k {
            for h in 0..n {
                if is_medoid[h] {
                    continue;
                }
                let dh = dist.row(h);
                let mut delta = T::zero();
                for j in 0..n {
                    let d = dh[j];
                    if nearest_slot[j] == slot {
                        delta = delta + d.min(second[j]) - nearest[j];
                    } else if d < nearest[j] {
                        delta = delta + d - nearest[j];
                    }
                }
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, slot, h));
                }
            }
        }

        match best {
            Some((delta, slot, h)) if delta < -eps => {
                is_medoid[medoids[slot]] = false;
                is_medoid[h] = true;
                medoids[slot] = h;
                let new_cost = total_cost(dist, &medoids);
                assert!(
                    new_cost <= cost + eps,
                    "k-medoids objective increased across a swap"
                );
                cost = new_cost;
                cost_history.push(cost);
                swaps += 1;
            }
            _ => break,
        }
    }

    PamResult {
        medoids,
        cost,
        cost_history,
        swaps,
    }
}

fn build<T: Scalar>(dist: &DistanceMatrix<T>, k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = Vec::with_capacity(k);

    let first = (0..n)
        .map(|i| (dist.row(i).iter().copied().sum::<T>(), i))
        .fold(None, |acc: Option<(T, usize)>, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        })
        .map(|(_, i)| i)
        .unwrap();
    medoids.push(first);

    let mut nearest: Vec<T> = dist.row(first).to_vec();
    let mut chosen = vec![false; n];
    chosen[first] = true;

    while medoids.len() < k {
        let mut best: Option<(T, usize)> = None;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            let row = dist.row(i);
            let gain: T = (0..n)
                .map(|j| (nearest[j] - row[j]).max(T::zero()))
                .sum();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let (_, pick) = best.expect("fewer candidates than medoids");
        chosen[pick] = true;
        medoids.push(pick);
        for (j, near) in nearest.iter_mut().enumerate() {
            *near = near.min(dist.get(pick, j));
        }
    }
    medoids
}

fn assign<T: Scalar>(
    dist: &DistanceMatrix<T>,
    medoids: &[usize],
    nearest: &mut [T],
    nearest_slot: &mut [usize],
    second: &mut [T],
) {
    for j in 0..dist.len() {
        let mut best = (T::infinity(), usize::MAX);
        let mut runner_up = T::infinity();
        for (slot, &m) in medoids.iter().enumerate() {
            let d = dist.get(j, m);
            if d < best.0 {
                runner_up = best.0;
                best = (d, slot);
            } else if d < runner_up {
                runner_up = d;
            }
        }
        nearest[j] = best.0;
        nearest_slot[j] = best.1;
        second[j] = runner_up;
    }
}
