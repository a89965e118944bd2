//! Batch selection: choose a subset of a pool minimizing `F = Σo / k²`
//! subject to `Σ (s + o) ≤ M`.
//!
//! Every selector returns the chosen ids in pool order. An empty pool yields
//! an empty batch.

use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FMetric, Request, RequestId, Tokens};

/// Largest pool the exhaustive selector accepts.
pub const BRUTE_FORCE_MAX_POOL: usize = 22;

/// Default cap on `|pool| · (M + 1)` for the exact DP.
pub const DEFAULT_DP_BUDGET: u128 = 100 * 10_001;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    BruteForce,
    #[default]
    ExactDp,
    ScaledDp,
    LocalSwap,
    QuantileGreedy,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::BruteForce,
        SelectorKind::ExactDp,
        SelectorKind::ScaledDp,
        SelectorKind::LocalSwap,
        SelectorKind::QuantileGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::BruteForce => "brute_force",
            SelectorKind::ExactDp => "exact_dp",
            SelectorKind::ScaledDp => "scaled_dp",
            SelectorKind::LocalSwap => "local_swap",
            SelectorKind::QuantileGreedy => "quantile_greedy",
        }
    }

    /// Selectors that return a true argmin of `F`.
    pub fn is_exact(self) -> bool {
        matches!(self, SelectorKind::BruteForce | SelectorKind::ExactDp)
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown selector {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    /// Accuracy parameter of the scaled DP.
    pub epsilon: f64,
    /// Precision `B` of the scaled DP; the quantization step is
    /// `λ = max(1, εM/B)`.
    pub precision_b: u64,
    /// Fraction of the pool sampled by the quantile greedy selector.
    pub sample_fraction: f64,
    /// Quantile used for the `s + o` and `o` thresholds.
    pub quantile_p: f64,
    /// Base seed of the quantile greedy sampler.
    pub seed: u64,
    /// Cap on `|pool| · (M + 1)` for the exact DP.
    pub dp_budget: u128,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            kind: SelectorKind::default(),
            epsilon: 0.1,
            precision_b: 10,
            sample_fraction: 0.5,
            quantile_p: 0.3,
            seed: 0,
            dp_budget: DEFAULT_DP_BUDGET,
        }
    }
}

impl SelectorConfig {
    pub fn of(kind: SelectorKind) -> Self {
        SelectorConfig {
            kind,
            ..SelectorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.precision_b == 0 {
            return bad("precision_b must be >= 1");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample_fraction must lie in (0, 1]");
        }
        if !(self.quantile_p > 0.0 && self.quantile_p < 1.0) {
            return bad("quantile_p must lie in (0, 1)");
        }
        Ok(())
    }

    /// Quantization step `λ` for a memory limit `M`.
    pub fn lambda(&self, memory_limit: Tokens) -> f64 {
        (self.epsilon * memory_limit as f64 / self.precision_b as f64).max(1.0)
    }
}

/// Runs the configured selector. `round` offsets the quantile sampler's seed
/// so that successive batches of one plan draw independent samples.
pub fn select(
    pool: &[Request],
    memory_limit: Tokens,
    config: &SelectorConfig,
    round: u64,
) -> Result<Vec<RequestId>> {
    config.validate()?;
    match config.kind {
        SelectorKind::BruteForce => select_brute_force(pool, memory_limit),
        SelectorKind::ExactDp => select_exact_dp(pool, memory_limit, config.dp_budget),
        SelectorKind::ScaledDp => Ok(select_scaled_dp(pool, memory_limit, config)?.batch),
        SelectorKind::LocalSwap => select_local_swap(pool, memory_limit),
        SelectorKind::QuantileGreedy => Ok(select_quantile_greedy(
            pool,
            memory_limit,
            config,
            config.seed.wrapping_add(round),
        )?
        .batch),
    }
}

fn ids_of(pool: &[Request], mut members: Vec<usize>) -> Vec<RequestId> {
    members.sort_unstable();
    members.into_iter().map(|i| pool[i].id).collect()
}

fn footprint(r: &Request) -> u128 {
    r.s as u128 + r.o as u128
}

/// Exhaustive search over all subsets. Minimizes `(F, -|X|)`, then total
/// memory, then the sorted id list.
pub fn select_brute_force(pool: &[Request], memory_limit: Tokens) -> Result<Vec<RequestId>> {
    let n = pool.len();
    if n > BRUTE_FORCE_MAX_POOL {
        return Err(Error::PoolTooLarge {
            what: "brute-force selector",
            size: n,
            limit: BRUTE_FORCE_MAX_POOL,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let limit = memory_limit as u128;
    let sorted_ids = |mask: u32| {
        let mut ids: Vec<RequestId> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| pool[i].id)
            .collect();
        ids.sort_unstable();
        ids
    };

    // Gray-code walk: each step flips one member.
    let (mut sum_o, mut mem, mut count) = (0u128, 0u128, 0u64);
    let mut best: Option<(FMetric, u128, u32)> = None;
    let mut mask = 0u32;
    for step in 1u64..(1u64 << n) {
        let bit = step.trailing_zeros() as usize;
        let r = &pool[bit];
        if mask >> bit & 1 == 1 {
            sum_o -= r.o as u128;
            mem -= footprint(r);
            count -= 1;
        } else {
            sum_o += r.o as u128;
            mem += footprint(r);
            count += 1;
        }
        mask ^= 1 << bit;
        if mem > limit {
            continue;
        }
        let f = FMetric::new(sum_o, count)?;
        let better = match &best {
            None => true,
            Some((bf, bmem, bmask)) => match f
                .cmp(bf)
                .then_with(|| bf.size().cmp(&f.size()))
                .then_with(|| mem.cmp(bmem))
            {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => sorted_ids(mask) < sorted_ids(*bmask),
            },
        };
        if better {
            best = Some((f, mem, mask));
        }
    }
    let Some((_, _, mask)) = best else {
        return Ok(Vec::new());
    };
    Ok(ids_of(pool, (0..n).filter(|i| mask >> i & 1 == 1).collect()))
}

/// Knapsack over (batch size, memory) storing the least `Σo` per cell.
/// Items are processed in pool order and a cell is only overwritten on strict
/// improvement. Among cells of equal `F` the larger size wins, then the
/// smaller memory.
fn knapsack_min_output(weights: &[usize], outputs: &[Tokens], capacity: usize) -> Vec<usize> {
    let n = weights.len();
    let width = capacity + 1;
    const INF: u128 = u128::MAX;
    let mut dp = vec![INF; (n + 1) * width];
    dp[0] = 0;
    // Bit (i, cell) is set when item i improved the cell.
    let cells = (n + 1) * width;
    let mut take = vec![0u64; (n * cells).div_ceil(64)];
    let bit = |i: usize, cell: usize| i * cells + cell;
    for i in 0..n {
        let (w, o) = (weights[i], outputs[i] as u128);
        if w > capacity {
            continue;
        }
        for k in (0..=i).rev() {
            for m in (0..=capacity - w).rev() {
                let cur = dp[k * width + m];
                if cur == INF {
                    continue;
                }
                let cell = (k + 1) * width + m + w;
                if cur + o < dp[cell] {
                    dp[cell] = cur + o;
                    let b = bit(i, cell);
                    take[b / 64] |= 1 << (b % 64);
                }
            }
        }
    }

    let mut best: Option<(FMetric, usize, usize)> = None;
    for k in 1..=n {
        for m in 0..width {
            let v = dp[k * width + m];
            if v == INF {
                continue;
            }
            let f = FMetric::new(v, k as u64).expect("k >= 1");
            let better = match &best {
                None => true,
                Some((bf, bk, bm)) => f
                    .cmp(bf)
                    .then_with(|| bk.cmp(&k))
                    .then_with(|| m.cmp(bm))
                    .is_lt(),
            };
            if better {
                best = Some((f, k, m));
            }
        }
    }
    let Some((_, mut k, mut m)) = best else {
        return Vec::new();
    };

    // Walking items backwards, a cell holds item i's write iff i improved it.
    let mut chosen = Vec::with_capacity(k);
    for i in (0..n).rev() {
        if k == 0 {
            break;
        }
        let b = bit(i, k * width + m);
        if take[b / 64] >> (b % 64) & 1 == 1 {
            chosen.push(i);
            k -= 1;
            m -= weights[i];
        }
    }
    debug_assert_eq!(k, 0);
    chosen
}

/// Exact DP selector. Equivalent in `F` to [`select_brute_force`].
pub fn select_exact_dp(pool: &[Request], memory_limit: Tokens, budget: u128) -> Result<Vec<RequestId>> {
    let cells = pool.len() as u128 * (memory_limit as u128 + 1);
    if cells > budget {
        return Err(Error::DpBudget { cells, budget });
    }
    let weights: Vec<usize> = pool.iter().map(|r| footprint(r) as usize).collect();
    let outputs: Vec<Tokens> = pool.iter().map(|r| r.o).collect();
    Ok(ids_of(
        pool,
        knapsack_min_output(&weights, &outputs, memory_limit as usize),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledDpReport {
    pub batch: Vec<RequestId>,
    pub lambda: f64,
    /// True `Σ (s + o)` of the batch.
    pub memory: u128,
    /// Amount by which `memory` exceeds `M`, zero when feasible.
    pub overshoot: u128,
}

/// DP over quantized footprints `⌊(s+o)/λ⌋` with capacity `⌊M/λ⌋`. With
/// `λ > 1` the returned batch may exceed `M`; the overshoot is reported.
pub fn select_scaled_dp(
    pool: &[Request],
    memory_limit: Tokens,
    config: &SelectorConfig,
) -> Result<ScaledDpReport> {
    config.validate()?;
    let lambda = config.lambda(memory_limit);
    let quantize = |v: u128| (v as f64 / lambda).floor() as usize;
    let capacity = quantize(memory_limit as u128);
    let weights: Vec<usize> = pool.iter().map(|r| quantize(footprint(r))).collect();
    let outputs: Vec<Tokens> = pool.iter().map(|r| r.o).collect();
    let chosen = knapsack_min_output(&weights, &outputs, capacity);
    let memory: u128 = chosen.iter().map(|&i| footprint(&pool[i])).sum();
    Ok(ScaledDpReport {
        batch: ids_of(pool, chosen),
        lambda,
        memory,
        overshoot: memory.saturating_sub(memory_limit as u128),
    })
}

/// Greedy fill by ascending `s + o` followed by single exchanges that
/// strictly lower `Σo`.
pub fn select_local_swap(pool: &[Request], memory_limit: Tokens) -> Result<Vec<RequestId>> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by_key(|&i| footprint(&pool[i]));
    let seed = greedy_fill(pool, &order, memory_limit);
    let members = local_swap_indices(pool, &order, seed, memory_limit)?;
    Ok(ids_of(pool, members))
}

/// Local swap refinement of `initial` (ids from `pool`), scanning candidates
/// in pool order.
pub fn local_swap_from(
    pool: &[Request],
    initial: &[RequestId],
    memory_limit: Tokens,
) -> Result<Vec<RequestId>> {
    let members = initial
        .iter()
        .map(|id| {
            pool.iter()
                .position(|r| r.id == *id)
                .ok_or(Error::UnknownRequest(*id))
        })
        .collect::<Result<Vec<usize>>>()?;
    let order: Vec<usize> = (0..pool.len()).collect();
    Ok(ids_of(
        pool,
        local_swap_indices(pool, &order, members, memory_limit)?,
    ))
}

/// Adds requests in `order` while `Σ (s + o)` stays within the limit.
pub(crate) fn greedy_fill(pool: &[Request], order: &[usize], memory_limit: Tokens) -> Vec<usize> {
    let mut mem = 0u128;
    let mut members = Vec::new();
    for &i in order {
        let w = footprint(&pool[i]);
        if mem + w <= memory_limit as u128 {
            mem += w;
            members.push(i);
        }
    }
    members
}

fn local_swap_indices(
    pool: &[Request],
    order: &[usize],
    mut members: Vec<usize>,
    memory_limit: Tokens,
) -> Result<Vec<usize>> {
    let limit = memory_limit as i128;
    let mut inside = vec![false; pool.len()];
    for &i in &members {
        inside[i] = true;
    }
    let mut mem: i128 = members.iter().map(|&i| footprint(&pool[i]) as i128).sum();
    let cap = 10 * pool.len().max(1);
    let mut sweeps = 0;
    loop {
        // Same batch size, so F drops exactly when Σo drops.
        let swap = members.iter().enumerate().find_map(|(slot, &out)| {
            let r_out = &pool[out];
            order
                .iter()
                .copied()
                .filter(|&cand| !inside[cand])
                .find(|&cand| {
                    let r_in = &pool[cand];
                    let delta_m = footprint(r_in) as i128 - footprint(r_out) as i128;
                    mem + delta_m <= limit && r_in.o < r_out.o
                })
                .map(|cand| (slot, cand))
        });
        let Some((slot, cand)) = swap else {
            return Ok(members);
        };
        sweeps += 1;
        if sweeps > cap {
            return Err(Error::SwapIterationCap(cap));
        }
        let out = members[slot];
        mem += footprint(&pool[cand]) as i128 - footprint(&pool[out]) as i128;
        inside[out] = false;
        inside[cand] = true;
        members[slot] = cand;
    }
}

/// Nearest-rank quantile: the `⌈p·m⌉`-th smallest of `m` values.
pub fn nearest_rank_quantile(values: &mut [u128], p: f64) -> u128 {
    assert!(!values.is_empty());
    values.sort_unstable();
    let rank = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantileSelection {
    pub batch: Vec<RequestId>,
    /// Members admitted under the quantile thresholds, in admission order.
    pub core: Vec<RequestId>,
    pub threshold_footprint: u128,
    pub threshold_output: u128,
}

/// Two-phase greedy: a core of short, small requests under sampled quantile
/// thresholds, then a fill by ascending `o / (s + o)`.
pub fn select_quantile_greedy(
    pool: &[Request],
    memory_limit: Tokens,
    config: &SelectorConfig,
    seed: u64,
) -> Result<QuantileSelection> {
    config.validate()?;
    if pool.is_empty() {
        return Ok(QuantileSelection {
            batch: Vec::new(),
            core: Vec::new(),
            threshold_footprint: 0,
            threshold_output: 0,
        });
    }
    let mut by_output: Vec<usize> = (0..pool.len()).collect();
    by_output.sort_by_key(|&i| pool[i].o);

    let sample_size = ((config.sample_fraction * pool.len() as f64).floor() as usize).max(1);
    let mut rng = Pcg32::seed_from_u64(seed);
    let sample = index::sample(&mut rng, pool.len(), sample_size);
    let mut footprints: Vec<u128> = sample.iter().map(|i| footprint(&pool[i])).collect();
    let mut outputs: Vec<u128> = sample.iter().map(|i| pool[i].o as u128).collect();
    let q_p = nearest_rank_quantile(&mut footprints, config.quantile_p);
    let q_o = nearest_rank_quantile(&mut outputs, config.quantile_p);

    let limit = memory_limit as u128;
    let mut mem = 0u128;
    let mut inside = vec![false; pool.len()];
    let mut core = Vec::new();
    for &i in &by_output {
        let r = &pool[i];
        let w = footprint(r);
        if w <= q_p && (r.o as u128) <= q_o && mem + w <= limit {
            mem += w;
            inside[i] = true;
            core.push(i);
        }
    }

    let mut remaining: Vec<usize> = by_output.iter().copied().filter(|&i| !inside[i]).collect();
    // o_a / w_a < o_b / w_b  ⇔  o_a · w_b < o_b · w_a
    remaining.sort_by(|&a, &b| {
        let (ra, rb) = (&pool[a], &pool[b]);
        (ra.o as u128 * footprint(rb)).cmp(&(rb.o as u128 * footprint(ra)))
    });
    let mut members = core.clone();
    for i in remaining {
        let w = footprint(&pool[i]);
        if mem + w <= limit {
            mem += w;
            members.push(i);
        }
    }
    Ok(QuantileSelection {
        batch: ids_of(pool, members),
        core: core.into_iter().map(|i| pool[i].id).collect(),
        threshold_footprint: q_p,
        threshold_output: q_o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{batch_feasible_conservative, f_metric};

    fn pool(pairs: &[(Tokens, Tokens)]) -> Vec<Request> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, o))| Request::new(i as u64, s, o))
            .collect()
    }

    fn example_one_pool() -> Vec<Request> {
        let mut pairs = vec![(63, 1)];
        pairs.extend(std::iter::repeat_n((1, 2), 21));
        pool(&pairs)
    }

    fn members(pool: &[Request], ids: &[RequestId]) -> Vec<Request> {
        ids.iter()
            .map(|id| *pool.iter().find(|r| r.id == *id).unwrap())
            .collect()
    }

    #[test]
    fn brute_force_example_one() {
        let p = example_one_pool();
        let batch = select_brute_force(&p, 64).unwrap();
        assert_eq!(batch.len(), 21);
        assert!(!batch.contains(&RequestId(0)));
        assert_eq!(f_metric(&members(&p, &batch)).unwrap(), FMetric::new(42, 21).unwrap());
    }

    #[test]
    fn brute_force_small_cases() {
        let single = pool(&[(4, 4)]);
        assert_eq!(select_brute_force(&single, 8).unwrap(), vec![RequestId(0)]);
        let tie = pool(&[(1, 1), (1, 3)]);
        assert_eq!(
            select_brute_force(&tie, 6).unwrap(),
            vec![RequestId(0), RequestId(1)]
        );
        assert!(select_brute_force(&[], 6).unwrap().is_empty());
        let big = pool(&vec![(1, 1); 23]);
        assert!(matches!(
            select_brute_force(&big, 100),
            Err(Error::PoolTooLarge { size: 23, .. })
        ));
    }

    #[test]
    fn brute_force_prefers_less_memory_on_ties() {
        // {0} and {1} tie on F and size; {1} uses less memory.
        let p = pool(&[(5, 2), (1, 2)]);
        assert_eq!(select_brute_force(&p, 8).unwrap(), vec![RequestId(1)]);
    }

    #[test]
    fn exact_dp_example_one() {
        let p = example_one_pool();
        let batch = select_exact_dp(&p, 64, DEFAULT_DP_BUDGET).unwrap();
        assert_eq!(batch.len(), 21);
        assert!(!batch.contains(&RequestId(0)));
        assert!(select_exact_dp(&[], 64, DEFAULT_DP_BUDGET).unwrap().is_empty());
    }

    #[test]
    fn exact_dp_budget() {
        let p = example_one_pool();
        assert!(matches!(
            select_exact_dp(&p, 64, 100),
            Err(Error::DpBudget { cells: 1430, budget: 100 })
        ));
    }

    #[test]
    fn exact_dp_matches_brute_force_on_fixed_pools() {
        let cases: &[(&[(Tokens, Tokens)], Tokens)] = &[
            (&[(3, 1), (2, 5), (1, 2), (4, 4), (2, 2)], 10),
            (&[(1, 9), (9, 1), (5, 5)], 10),
            (&[(2, 3), (3, 2), (1, 4), (4, 1), (2, 2), (1, 1)], 7),
        ];
        for &(pairs, m) in cases {
            let p = pool(pairs);
            let bf = f_metric(&members(&p, &select_brute_force(&p, m).unwrap())).unwrap();
            let dp = f_metric(&members(&p, &select_exact_dp(&p, m, DEFAULT_DP_BUDGET).unwrap())).unwrap();
            assert_eq!(bf, dp);
        }
    }

    #[test]
    fn scaled_dp_with_unit_lambda() {
        let p = example_one_pool();
        let config = SelectorConfig::of(SelectorKind::ScaledDp);
        let report = select_scaled_dp(&p, 64, &config).unwrap();
        assert_eq!(report.lambda, 1.0);
        assert_eq!(report.overshoot, 0);
        assert_eq!(report.batch, select_exact_dp(&p, 64, DEFAULT_DP_BUDGET).unwrap());
    }

    #[test]
    fn scaled_dp_reports_overshoot() {
        // λ = 0.5·100/10 = 5: footprints 7, 7 quantize to 1 each, cap 2.
        let p = pool(&[(6, 1), (6, 1)]);
        let config = SelectorConfig {
            kind: SelectorKind::ScaledDp,
            epsilon: 0.5,
            ..SelectorConfig::default()
        };
        let report = select_scaled_dp(&p, 13, &config).unwrap();
        assert_eq!(report.lambda, 1.0);
        let report = select_scaled_dp(&p, 100, &config).unwrap();
        assert_eq!(report.lambda, 5.0);
        assert_eq!(report.overshoot, 0);
        let p = pool(&[(4, 1), (4, 1), (4, 1)]);
        let config = SelectorConfig {
            kind: SelectorKind::ScaledDp,
            epsilon: 1.0,
            precision_b: 1,
            ..SelectorConfig::default()
        };
        // λ = 14, every footprint quantizes to 0: all three fit in ⌊14/14⌋.
        let report = select_scaled_dp(&p, 14, &config).unwrap();
        assert_eq!(report.batch.len(), 3);
        assert_eq!(report.overshoot, 1);
    }

    #[test]
    fn local_swap_improves_on_seed() {
        let p = example_one_pool();
        let batch = select_local_swap(&p, 64).unwrap();
        let f = f_metric(&members(&p, &batch)).unwrap();
        assert!(batch_feasible_conservative(&members(&p, &batch), 64));
        assert!(f <= FMetric::new(42, 21).unwrap());

        // The greedy seed {0} swaps for the shorter 1 at equal memory.
        let p = pool(&[(1, 3), (3, 1)]);
        assert_eq!(select_local_swap(&p, 4).unwrap(), vec![RequestId(1)]);
    }

    #[test]
    fn local_swap_keeps_optimal_seed() {
        let p = pool(&[(1, 1), (1, 1), (5, 5)]);
        assert_eq!(
            select_local_swap(&p, 4).unwrap(),
            vec![RequestId(0), RequestId(1)]
        );
    }

    #[test]
    fn local_swap_from_seed() {
        let p = pool(&[(3, 4), (2, 1), (2, 1)]);
        let batch = local_swap_from(&p, &[RequestId(0)], 7).unwrap();
        assert_eq!(batch, vec![RequestId(1)]);
        assert!(local_swap_from(&p, &[RequestId(9)], 7).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(nearest_rank_quantile(&mut [5, 1, 3, 2, 4], 0.3), 2);
        assert_eq!(nearest_rank_quantile(&mut [7], 0.3), 7);
        assert_eq!(nearest_rank_quantile(&mut [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 0.3), 3);
    }

    #[test]
    fn quantile_greedy_identical_pool() {
        let p = pool(&[(3, 4); 10]);
        let config = SelectorConfig::of(SelectorKind::QuantileGreedy);
        let sel = select_quantile_greedy(&p, 30, &config, 1).unwrap();
        assert_eq!(sel.batch.len(), 4);
    }

    #[test]
    fn quantile_greedy_example_one() {
        let p = example_one_pool();
        let config = SelectorConfig::of(SelectorKind::QuantileGreedy);
        let sel = select_quantile_greedy(&p, 64, &config, 7).unwrap();
        assert!(!sel.core.contains(&RequestId(0)));
        assert_eq!(sel.batch.len(), 21);
        assert!(batch_feasible_conservative(&members(&p, &sel.batch), 64));
    }

    #[test]
    fn config_validation() {
        let mut c = SelectorConfig::default();
        c.quantile_p = 1.0;
        assert!(c.validate().is_err());
        let c = SelectorConfig {
            precision_b: 0,
            ..SelectorConfig::default()
        };
        assert!(select(&example_one_pool(), 64, &c, 0).is_err());
        assert_eq!("local_swap".parse::<SelectorKind>().unwrap(), SelectorKind::LocalSwap);
        assert!("nope".parse::<SelectorKind>().is_err());
    }

    #[test]
    fn config_json() {
        let c: SelectorConfig = serde_json::from_str(r#"{"kind":"scaled_dp","epsilon":0.2}"#).unwrap();
        assert_eq!(c.kind, SelectorKind::ScaledDp);
        assert_eq!(c.precision_b, 10);
        assert_eq!(c.quantile_p, 0.3);
    }
}
