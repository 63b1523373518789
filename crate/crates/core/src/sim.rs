//! Slot-level simulation of buffered two-mode users sharing one uplink.
//!
//! Each slot: Bernoulli arrivals of exponential bursts (rounded up to whole
//! bits) join the user's FIFO, every user with a nonempty buffer transmits,
//! gains are drawn, and each transmitting user drains
//! `floor(T_s B log2(1 + SINR))` bits with SIC in ascending index order.
//! Bits are integers so conservation is exact.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};

use crate::error::{invalid, Error, Result};
use crate::model::{sinr_unchecked, PowerAllocation, SystemParams, UserProfile};
use crate::optimizer::EnergyModel;

/// How channel gains are produced each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelModel {
    /// Exponential power gains with rate `chi_k` (Rayleigh amplitude).
    #[default]
    Rayleigh,
    /// Every gain is fixed at its mean `1 / chi_k`.
    MeanGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_slots: u64,
    pub seed: u64,
    /// Leading slots excluded from every statistic.
    pub warmup_slots: u64,
    /// Adds delay quantiles to each user's statistics.
    pub record_delay_quantiles: bool,
    /// Delays of this many slots or more share one overflow bin.
    pub delay_histogram_cap: usize,
    pub channel: ChannelModel,
}

impl SimConfig {
    /// `n_slots` with a 10^4-slot warmup.
    pub fn new(n_slots: u64, seed: u64) -> Self {
        Self {
            n_slots,
            seed,
            warmup_slots: 10_000,
            record_delay_quantiles: false,
            delay_histogram_cap: 1 << 16,
            channel: ChannelModel::Rayleigh,
        }
    }

    pub fn with_warmup(mut self, warmup_slots: u64) -> Self {
        self.warmup_slots = warmup_slots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slots <= self.warmup_slots {
            return Err(invalid("n_slots", "must exceed warmup_slots"));
        }
        if self.delay_histogram_cap < 2 {
            return Err(invalid("delay_histogram_cap", "must be at least 2"));
        }
        Ok(())
    }
}

/// A queued burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub arrival_slot: u64,
    pub remaining_bits: u64,
}

/// Per-user FIFO buffers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueueState {
    queues: Vec<VecDeque<Burst>>,
    backlog: Vec<u64>,
}

impl QueueState {
    pub fn new(users: usize) -> Self {
        Self {
            queues: alloc::vec![VecDeque::new(); users],
            backlog: alloc::vec![0; users],
        }
    }

    pub fn bursts(&self, k: usize) -> &VecDeque<Burst> {
        &self.queues[k]
    }

    pub fn backlog_bits(&self, k: usize) -> u64 {
        self.backlog[k]
    }

    pub fn is_empty(&self, k: usize) -> bool {
        self.backlog[k] == 0
    }

    /// Appends a burst; empty bursts are dropped.
    pub fn push(&mut self, k: usize, arrival_slot: u64, bits: u64) {
        if bits == 0 {
            return;
        }
        self.queues[k].push_back(Burst { arrival_slot, remaining_bits: bits });
        self.backlog[k] += bits;
    }

    /// Serves up to `bits` from the head of user `k`'s queue, calling
    /// `depart(arrival_slot)` for every burst that leaves completely.
    /// Returns the bits actually served.
    pub fn drain<F: FnMut(u64)>(&mut self, k: usize, bits: u64, mut depart: F) -> u64 {
        let mut left = bits;
        let queue = &mut self.queues[k];
        while left > 0 {
            let Some(head) = queue.front_mut() else { break };
            if head.remaining_bits <= left {
                left -= head.remaining_bits;
                depart(head.arrival_slot);
                queue.pop_front();
            } else {
                head.remaining_bits -= left;
                left = 0;
            }
        }
        let served = bits - left;
        self.backlog[k] -= served;
        served
    }
}

/// Statistics of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSimStats {
    /// Whole run, warmup included.
    pub total_arrived_bits: u64,
    pub total_delivered_bits: u64,
    pub final_backlog_bits: u64,
    /// Bits served after warmup.
    pub delivered_bits: u64,
    /// Bursts that arrived after warmup and departed.
    pub burst_count: u64,
    /// `delay_histogram[n]`: departed bursts with delay of `n` slots.
    pub delay_histogram: Vec<u64>,
    /// Departed bursts with delay at or beyond the histogram cap.
    pub delay_overflow: u64,
    pub delay_sum_slots: u128,
    /// Bursts still queued at the end, by age in slots (a lower bound on delay).
    pub censored_histogram: Vec<u64>,
    pub censored_overflow: u64,
    /// Counted slots in transmission mode.
    pub tx_slots: u64,
    pub energy_two_mode_j: f64,
    pub energy_single_mode_j: f64,
    /// Delay quantiles (50%, 90%, 99%) in seconds, when requested.
    pub delay_quantiles_s: Option<[f64; 3]>,
}

impl UserSimStats {
    fn new(cap: usize) -> Self {
        Self {
            total_arrived_bits: 0,
            total_delivered_bits: 0,
            final_backlog_bits: 0,
            delivered_bits: 0,
            burst_count: 0,
            delay_histogram: alloc::vec![0; cap],
            delay_overflow: 0,
            delay_sum_slots: 0,
            censored_histogram: alloc::vec![0; cap],
            censored_overflow: 0,
            tx_slots: 0,
            energy_two_mode_j: 0.0,
            energy_single_mode_j: 0.0,
            delay_quantiles_s: None,
        }
    }

    fn record(hist: &mut [u64], overflow: &mut u64, slots: u64, weight: u64) {
        match hist.get_mut(slots as usize) {
            Some(bin) => *bin += weight,
            None => *overflow += weight,
        }
    }

    /// `(violations, trials)` for delay strictly above `threshold_slots`.
    ///
    /// Departed bursts always count. A censored burst counts only once its
    /// age already exceeds the threshold, when its outcome is known.
    pub fn violation_counts(&self, threshold_slots: f64) -> (u64, u64) {
        let cap = self.delay_histogram.len();
        let first = if threshold_slots < 0.0 { 0 } else { threshold_slots.floor() as u64 + 1 };
        let tail = |hist: &[u64], overflow: u64| -> u64 {
            if first as usize >= cap {
                overflow
            } else {
                hist[first as usize..].iter().sum::<u64>() + overflow
            }
        };
        let violated = tail(&self.delay_histogram, self.delay_overflow);
        let censored = tail(&self.censored_histogram, self.censored_overflow);
        (violated + censored, self.burst_count + censored)
    }

    pub fn mean_delay_slots(&self) -> Option<f64> {
        (self.burst_count > 0).then(|| self.delay_sum_slots as f64 / self.burst_count as f64)
    }

    /// Smallest delay `n` (slots) with at least a fraction `q` of departed
    /// bursts at or below it; `None` if it falls in the overflow bin.
    pub fn delay_quantile_slots(&self, q: f64) -> Option<u64> {
        if self.burst_count == 0 {
            return None;
        }
        let target = (q * self.burst_count as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (n, &c) in self.delay_histogram.iter().enumerate() {
            acc += c;
            if acc >= target {
                return Some(n as u64);
            }
        }
        None
    }

    fn merge(&mut self, other: &Self) {
        self.total_arrived_bits += other.total_arrived_bits;
        self.total_delivered_bits += other.total_delivered_bits;
        self.final_backlog_bits += other.final_backlog_bits;
        self.delivered_bits += other.delivered_bits;
        self.burst_count += other.burst_count;
        for (a, b) in self.delay_histogram.iter_mut().zip(&other.delay_histogram) {
            *a += b;
        }
        self.delay_overflow += other.delay_overflow;
        self.delay_sum_slots += other.delay_sum_slots;
        for (a, b) in self.censored_histogram.iter_mut().zip(&other.censored_histogram) {
            *a += b;
        }
        self.censored_overflow += other.censored_overflow;
        self.tx_slots += other.tx_slots;
        self.energy_two_mode_j += other.energy_two_mode_j;
        self.energy_single_mode_j += other.energy_single_mode_j;
    }
}

/// Statistics of one run, or of several pooled runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub users: Vec<UserSimStats>,
    /// Slots after warmup, summed over pooled runs.
    pub counted_slots: u64,
    pub runs: u32,
    pub slot_s: f64,
}

impl SimStats {
    /// Pools `other` into `self`. Counts add; quantiles are recomputed.
    pub fn merge(&mut self, other: &SimStats) -> Result<()> {
        if self.users.len() != other.users.len()
            || self.slot_s != other.slot_s
            || self.users.iter().zip(&other.users).any(|(a, b)| a.delay_histogram.len() != b.delay_histogram.len())
        {
            return Err(Error::InvalidCall("cannot merge statistics of different shapes".into()));
        }
        let slot = self.slot_s;
        for (a, b) in self.users.iter_mut().zip(&other.users) {
            let record = a.delay_quantiles_s.is_some() || b.delay_quantiles_s.is_some();
            a.merge(b);
            a.delay_quantiles_s = if record { quantiles(a, slot) } else { None };
        }
        self.counted_slots += other.counted_slots;
        self.runs += other.runs;
        Ok(())
    }

    /// Pools a non-empty set of runs.
    pub fn pooled(runs: &[SimStats]) -> Result<SimStats> {
        let (first, rest) = runs
            .split_first()
            .ok_or_else(|| Error::InvalidCall("no runs to pool".into()))?;
        let mut acc = first.clone();
        for r in rest {
            acc.merge(r)?;
        }
        Ok(acc)
    }

    /// Bits conserved in every user's ledger.
    pub fn is_conserved(&self) -> bool {
        self.users
            .iter()
            .all(|u| u.total_arrived_bits == u.total_delivered_bits + u.final_backlog_bits)
    }
}

fn quantiles(u: &UserSimStats, slot_s: f64) -> Option<[f64; 3]> {
    let q = |p| u.delay_quantile_slots(p).map_or(f64::INFINITY, |n| n as f64 * slot_s);
    (u.burst_count > 0).then(|| [q(0.5), q(0.9), q(0.99)])
}

/// Runs one simulation.
pub fn simulate(
    params: &SystemParams,
    profiles: &[UserProfile],
    alloc: &PowerAllocation,
    cfg: &SimConfig,
) -> Result<SimStats> {
    simulate_with_observer(params, profiles, alloc, cfg, |_, _| {})
}

/// [`simulate`], calling `observe(slot, offered_bits)` after every slot with
/// each user's offered service (zero for users not transmitting).
pub fn simulate_with_observer<O>(
    params: &SystemParams,
    profiles: &[UserProfile],
    alloc: &PowerAllocation,
    cfg: &SimConfig,
    mut observe: O,
) -> Result<SimStats>
where
    O: FnMut(u64, &[u64]),
{
    cfg.validate()?;
    let n = profiles.len();
    if n == 0 {
        return Err(invalid("profiles", "at least one user is required"));
    }
    if alloc.len() != n {
        return Err(Error::InvalidCall(alloc::format!("{} powers for {n} users", alloc.len())));
    }
    PowerAllocation::new(alloc.powers().to_vec(), params)?;

    let powers = alloc.powers();
    let noise = params.noise_power_w();
    let bits_per_log2 = params.bits_per_slot_hz();
    let slot = params.slot_duration_s();
    let cap = cfg.delay_histogram_cap;

    // one arrival stream and one channel stream per user
    let mut arrival_rng = Vec::with_capacity(n);
    let mut channel_rng = Vec::with_capacity(n);
    let mut gain_dist = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = ChaCha8Rng::seed_from_u64(cfg.seed);
        a.set_stream(2 * k as u64);
        let mut c = ChaCha8Rng::seed_from_u64(cfg.seed);
        c.set_stream(2 * k as u64 + 1);
        arrival_rng.push(a);
        channel_rng.push(c);
        gain_dist.push(
            Exp::new(profiles[k].channel_rate()).map_err(|_| invalid("channel_rate", "must be positive"))?,
        );
    }

    let mut queues = QueueState::new(n);
    let mut stats: Vec<UserSimStats> = (0..n).map(|_| UserSimStats::new(cap)).collect();
    let mut active = alloc::vec![false; n];
    let mut gains = alloc::vec![0.0; n];
    let mut offered = alloc::vec![0u64; n];

    for t in 0..cfg.n_slots {
        let counted = t >= cfg.warmup_slots;
        for k in 0..n {
            let rng = &mut arrival_rng[k];
            let u: f64 = rng.random();
            if u < profiles[k].arrival_prob() {
                let x: f64 = Exp1.sample(rng);
                let bits = (x * profiles[k].mean_burst_bits()).ceil().max(1.0) as u64;
                queues.push(k, t, bits);
                stats[k].total_arrived_bits += bits;
            }
            active[k] = !queues.is_empty(k);
            gains[k] = match cfg.channel {
                ChannelModel::Rayleigh => gain_dist[k].sample(&mut channel_rng[k]),
                ChannelModel::MeanGain => 1.0 / profiles[k].channel_rate(),
            };
        }
        for k in 0..n {
            offered[k] = if active[k] {
                let gamma = sinr_unchecked(k, powers, &gains, &active, noise);
                (bits_per_log2 * gamma.ln_1p() / core::f64::consts::LN_2).floor() as u64
            } else {
                0
            };
            let st = &mut stats[k];
            let served = queues.drain(k, offered[k], |arrival| {
                if arrival >= cfg.warmup_slots {
                    let delay = t - arrival + 1;
                    st.burst_count += 1;
                    st.delay_sum_slots += delay as u128;
                    UserSimStats::record(&mut st.delay_histogram, &mut st.delay_overflow, delay, 1);
                }
            });
            st.total_delivered_bits += served;
            if counted {
                st.delivered_bits += served;
                if active[k] {
                    st.tx_slots += 1;
                }
            }
        }
        observe(t, &offered);
    }

    for k in 0..n {
        let st = &mut stats[k];
        st.final_backlog_bits = queues.backlog_bits(k);
        // from slot counts, so two-mode <= single-mode survives rounding
        let counted = (cfg.n_slots - cfg.warmup_slots) as f64;
        let circuit = counted * profiles[k].circuit_power_w();
        st.energy_two_mode_j = (circuit + st.tx_slots as f64 * powers[k]) * slot;
        st.energy_single_mode_j = (circuit + counted * powers[k]) * slot;
        for burst in queues.bursts(k) {
            if burst.arrival_slot >= cfg.warmup_slots {
                // it would leave no earlier than the slot after the run ends
                let age = cfg.n_slots - burst.arrival_slot + 1;
                UserSimStats::record(&mut st.censored_histogram, &mut st.censored_overflow, age, 1);
            }
        }
        if cfg.record_delay_quantiles {
            st.delay_quantiles_s = quantiles(st, slot);
        }
    }

    Ok(SimStats {
        users: stats,
        counted_slots: cfg.n_slots - cfg.warmup_slots,
        runs: 1,
        slot_s: slot,
    })
}

/// A proportion with its Wilson 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionEstimate {
    pub value: f64,
    pub half_width: f64,
    pub trials: u64,
}

/// Wilson score interval half-width at 95%.
pub fn wilson_half_width(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    const Z: f64 = 1.96;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

// Slot count equivalent to `d` seconds, snapped to an integer when within rounding.
fn threshold_slots(d: f64, slot_s: f64) -> f64 {
    let r = d / slot_s;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        r
    }
}

/// Per-user `P(D > d_max)` from the simulated bursts.
pub fn empirical_delay_violation(stats: &SimStats, d_max_s: f64) -> Result<Vec<ProportionEstimate>> {
    if d_max_s.is_nan() {
        return Err(invalid("d_max_s", "must be a number"));
    }
    let threshold = threshold_slots(d_max_s, stats.slot_s);
    stats
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let (v, n) = u.violation_counts(threshold);
            if n == 0 {
                return Err(Error::UndefinedStatistic(alloc::format!(
                    "user {k} has no completed bursts"
                )));
            }
            Ok(ProportionEstimate {
                value: v as f64 / n as f64,
                half_width: wilson_half_width(v, n),
                trials: n,
            })
        })
        .collect()
}

/// Per-user fraction of counted slots spent in transmission mode.
pub fn empirical_tx_prob(stats: &SimStats) -> Vec<f64> {
    stats
        .users
        .iter()
        .map(|u| u.tx_slots as f64 / stats.counted_slots as f64)
        .collect()
}

/// Delivered bits per joule over all users under the given accounting.
pub fn empirical_energy_efficiency(stats: &SimStats, mode: EnergyModel) -> Result<f64> {
    let bits: u64 = stats.users.iter().map(|u| u.delivered_bits).sum();
    let energy: f64 = stats
        .users
        .iter()
        .map(|u| match mode {
            EnergyModel::TwoMode => u.energy_two_mode_j,
            EnergyModel::SingleMode => u.energy_single_mode_j,
        })
        .sum();
    if !(energy > 0.0) {
        return Err(Error::UndefinedStatistic("no energy was consumed".into()));
    }
    Ok(bits as f64 / energy)
}
