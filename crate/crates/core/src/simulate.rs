//! Bit-level Monte Carlo simulation of decentralized placement and D-MCCS
//! delivery.
//!
//! Every user caches exactly `round(q_n F_n)` bits of file `n`, chosen
//! uniformly without replacement. Messages are formed for the non-redundant
//! groups only, and [`decode_check`] verifies that every active user can
//! rebuild its file from its cache and the transmissions, synthesizing the
//! skipped messages from the sent ones. [`rank_decode_check`] is an
//! independent GF(2) rank test for tiny instances.

use std::collections::HashMap;
use std::fmt;

use crate::combinatorics::{all_leader_masks, leader_mask, LeaderGroup};
use crate::model::{DemandScenario, FileCatalog, ModelError, UserPopulation};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Largest active set the simulator handles (subsets are `u32` masks).
pub const MAX_SIM_ACTIVE: usize = 16;

/// Variable limit for the GF(2) rank oracle.
pub const MAX_RANK_BITS: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("file {file} has size {size}, not a positive whole number of bits")]
    NonIntegerSize { file: usize, size: f64 },
    #[error("placement has {got} entries for {expected} files")]
    PlacementLength { expected: usize, got: usize },
    #[error("q[{file}] = {value} is outside [0, 1]")]
    FractionOutOfRange { file: usize, value: f64 },
    #[error("{0} active users exceeds the simulator limit of {MAX_SIM_ACTIVE}")]
    TooManyActive(usize),
    #[error("active set must be strictly increasing user indices below {n_users}")]
    BadActiveSet { n_users: usize },
    #[error("partition was built for a different active set")]
    PartitionMismatch,
    #[error("not a leader group of the scenario")]
    InvalidLeaders,
    #[error("rank oracle needs {0} variables (limit {MAX_RANK_BITS})")]
    RankTooLarge(usize),
    #[error("need at least one trial")]
    NoTrials,
    #[error("popularity cannot be sampled: {0}")]
    Popularity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Generator for trial `trial` of a run seeded with `seed`. Serial and
/// parallel runs draw identical streams.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn integer_sizes(catalog: &FileCatalog) -> Result<Vec<usize>, SimError> {
    catalog
        .sizes()
        .iter()
        .enumerate()
        .map(|(file, &size)| {
            let r = size.round();
            if r < 1.0 || (size - r).abs() > 1e-9 * size.max(1.0) {
                Err(SimError::NonIntegerSize { file, size })
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

fn check_q(q: &[f64], n: usize) -> Result<(), SimError> {
    if q.len() != n {
        return Err(SimError::PlacementLength { expected: n, got: q.len() });
    }
    match q.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        Some((file, &value)) => Err(SimError::FractionOutOfRange { file, value }),
        None => Ok(()),
    }
}

fn sample_bitset(rng: &mut ChaCha8Rng, size: usize, count: usize) -> Vec<u64> {
    let mut words = vec![0u64; size.div_ceil(64)];
    for b in index::sample(rng, size, count) {
        words[b / 64] |= 1 << (b % 64);
    }
    words
}

fn has_bit(words: &[u64], b: usize) -> bool {
    words[b / 64] >> (b % 64) & 1 == 1
}

/// Cached bit indices of every user and file.
#[derive(Debug, Clone, PartialEq)]
pub struct BitPlacement {
    pub seed: u64,
    sizes: Vec<usize>,
    counts: Vec<usize>,
    residual: Vec<f64>,
    /// `cached[user][file]` as a bitset over `0..F_n`.
    cached: Vec<Vec<Vec<u64>>>,
}

impl BitPlacement {
    pub fn n_users(&self) -> usize {
        self.cached.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Bits of file `n` cached by each user.
    pub fn cached_count(&self, file: usize) -> usize {
        self.counts[file]
    }

    /// `round(q_n F_n) - q_n F_n`.
    pub fn residual(&self, file: usize) -> f64 {
        self.residual[file]
    }

    pub fn contains(&self, user: usize, file: usize, bit: usize) -> bool {
        has_bit(&self.cached[user][file], bit)
    }

    pub fn cached_bits(&self, user: usize, file: usize) -> Vec<usize> {
        (0..self.sizes[file]).filter(|&b| self.contains(user, file, b)).collect()
    }
}

/// Independent random placement for `n_users` users.
pub fn random_placement(
    q: &[f64],
    catalog: &FileCatalog,
    n_users: usize,
    seed: u64,
) -> Result<BitPlacement, SimError> {
    let sizes = integer_sizes(catalog)?;
    check_q(q, sizes.len())?;
    let target: Vec<f64> = q.iter().zip(&sizes).map(|(q, &f)| q * f as f64).collect();
    let counts: Vec<usize> = target.iter().map(|t| t.round() as usize).collect();
    let residual = counts.iter().zip(&target).map(|(&c, t)| c as f64 - t).collect();
    let mut rng = trial_rng(seed, 0);
    let cached = (0..n_users)
        .map(|_| sizes.iter().zip(&counts).map(|(&f, &c)| sample_bitset(&mut rng, f, c)).collect())
        .collect();
    Ok(BitPlacement { seed, sizes, counts, residual, cached })
}

/// Subfiles `W_{n,S}` for one active set. Subsets are bitmasks over positions
/// in the active set.
#[derive(Debug, Clone, PartialEq)]
pub struct SubfilePartition {
    active: Vec<usize>,
    sizes: Vec<usize>,
    /// `subfiles[n][S]`, sorted bit indices.
    subfiles: Vec<Vec<Vec<u32>>>,
}

impl SubfilePartition {
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn subfile(&self, file: usize, subset: u32) -> &[u32] {
        &self.subfiles[file][subset as usize]
    }

    /// `|W_{n,S}| / F_n` for every subset `S`.
    pub fn fractions(&self, file: usize) -> Vec<f64> {
        let f = self.sizes[file] as f64;
        self.subfiles[file].iter().map(|s| s.len() as f64 / f).collect()
    }
}

fn check_active(active: &[usize], n_users: usize) -> Result<(), SimError> {
    if active.len() > MAX_SIM_ACTIVE {
        return Err(SimError::TooManyActive(active.len()));
    }
    if active.windows(2).any(|w| w[0] >= w[1]) || active.last().is_some_and(|&u| u >= n_users) {
        return Err(SimError::BadActiveSet { n_users });
    }
    Ok(())
}

/// Splits every file by the set of active users caching each bit.
pub fn partition_subfiles(placement: &BitPlacement, active: &[usize]) -> Result<SubfilePartition, SimError> {
    check_active(active, placement.n_users())?;
    let subfiles = placement
        .sizes
        .iter()
        .enumerate()
        .map(|(n, &f)| {
            let mut groups = vec![Vec::new(); 1 << active.len()];
            for b in 0..f {
                let mask = active
                    .iter()
                    .enumerate()
                    .filter(|(_, &u)| placement.contains(u, n, b))
                    .fold(0usize, |m, (i, _)| m | 1 << i);
                groups[mask].push(b as u32);
            }
            groups
        })
        .collect();
    Ok(SubfilePartition { active: active.to_vec(), sizes: placement.sizes.clone(), subfiles })
}

/// One constituent of a coded message: `W_{file, cached_by}` for the user at
/// `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessagePart {
    pub position: usize,
    pub file: usize,
    pub cached_by: u32,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedMessage {
    /// Target subset, as positions in the active set.
    pub subset: u32,
    pub parts: Vec<MessagePart>,
    /// Payload length: the longest part.
    pub length: usize,
}

impl CodedMessage {
    /// XOR of the zero-padded parts.
    pub fn payload(&self, partition: &SubfilePartition, contents: &FileContents) -> Vec<bool> {
        let mut out = vec![false; self.length];
        for p in &self.parts {
            for (j, &b) in partition.subfile(p.file, p.cached_by).iter().enumerate() {
                out[j] ^= contents.bit(p.file, b as usize);
            }
        }
        out
    }
}

fn message_for(subset: u32, demands: &[usize], partition: &SubfilePartition) -> CodedMessage {
    let parts: Vec<MessagePart> = (0..demands.len())
        .filter(|i| subset >> i & 1 == 1)
        .map(|i| {
            let cached_by = subset & !(1 << i);
            let len = partition.subfile(demands[i], cached_by).len();
            MessagePart { position: i, file: demands[i], cached_by, len }
        })
        .collect();
    let length = parts.iter().map(|p| p.len).max().unwrap_or(0);
    CodedMessage { subset, parts, length }
}

/// D-MCCS delivery: one message per subset intersecting `leaders`.
pub fn deliver(
    d: &DemandScenario,
    partition: &SubfilePartition,
    leaders: &LeaderGroup,
) -> Result<Vec<CodedMessage>, SimError> {
    if partition.active != d.active() {
        return Err(SimError::PartitionMismatch);
    }
    if !leaders.is_valid_for(d) {
        return Err(SimError::InvalidLeaders);
    }
    let lmask = leaders.position_mask(d);
    Ok((1..1u32 << d.n_active())
        .filter(|s| s & lmask != 0)
        .map(|s| message_for(s, d.demands(), partition))
        .collect())
}

pub fn total_bits(messages: &[CodedMessage]) -> usize {
    messages.iter().map(|m| m.length).sum()
}

/// Random file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileContents {
    bits: Vec<Vec<bool>>,
}

impl FileContents {
    pub fn random(sizes: &[usize], seed: u64) -> Self {
        let mut rng = trial_rng(seed, u64::MAX);
        Self { bits: sizes.iter().map(|&f| (0..f).map(|_| rng.gen()).collect()).collect() }
    }

    pub fn bit(&self, file: usize, b: usize) -> bool {
        self.bits[file][b]
    }
}

/// A bit some user could not recover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UndecodableBit {
    pub user: usize,
    pub file: usize,
    pub bit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeReport {
    /// Verdict per active position.
    pub decoded: Vec<bool>,
    /// First failure found.
    pub witness: Option<UndecodableBit>,
}

impl DecodeReport {
    pub fn all_decoded(&self) -> bool {
        self.decoded.iter().all(|&ok| ok)
    }
}

fn xor_into(acc: &mut Vec<bool>, other: &[bool]) {
    if acc.len() < other.len() {
        acc.resize(other.len(), false);
    }
    for (a, &b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

/// Payload of subset `s`: received directly, or for a redundant subset
/// rebuilt as the XOR of `C_{B \ V}` over the leader groups `V != U` inside
/// `B = s ∪ U`.
fn obtain(
    s: u32,
    lmask: u32,
    leader_groups: &[u32],
    received: &HashMap<u32, &[bool]>,
) -> Option<Vec<bool>> {
    if let Some(p) = received.get(&s) {
        return Some(p.to_vec());
    }
    if s & lmask != 0 {
        return None;
    }
    let b = s | lmask;
    let mut acc = Vec::new();
    for &v in leader_groups.iter().filter(|&&v| v != lmask && v & !b == 0) {
        xor_into(&mut acc, received.get(&(b & !v))?);
    }
    Some(acc)
}

/// Checks that every active user recovers its file from its own cache and the
/// transmitted `(message, payload)` pairs.
pub fn decode_check(
    d: &DemandScenario,
    partition: &SubfilePartition,
    contents: &FileContents,
    leaders: &LeaderGroup,
    transmissions: &[(CodedMessage, Vec<bool>)],
) -> Result<DecodeReport, SimError> {
    if partition.active != d.active() {
        return Err(SimError::PartitionMismatch);
    }
    if !leaders.is_valid_for(d) {
        return Err(SimError::InvalidLeaders);
    }
    let a = d.n_active();
    let demands = d.demands();
    let lmask = leaders.position_mask(d);
    let leader_groups = all_leader_masks(demands);
    let received: HashMap<u32, &[bool]> = transmissions.iter().map(|(m, p)| (m.subset, p.as_slice())).collect();

    let mut decoded = vec![true; a];
    let mut witness = None;
    for i in 0..a {
        let file = demands[i];
        let mut fail = |bit: u32| {
            decoded[i] = false;
            witness.get_or_insert(UndecodableBit { user: d.active()[i], file, bit: bit as usize });
        };
        for t in (0..1u32 << a).filter(|t| t >> i & 1 == 0) {
            let wanted = partition.subfile(file, t);
            if wanted.is_empty() {
                continue;
            }
            let s = t | 1 << i;
            let Some(mut y) = obtain(s, lmask, &leader_groups, &received) else {
                fail(wanted[0]);
                break;
            };
            if y.len() < wanted.len() {
                y.resize(wanted.len(), false);
            }
            // strip the other users' parts; user i caches all of them
            for k in (0..a).filter(|&k| k != i && s >> k & 1 == 1) {
                for (j, &b) in partition.subfile(demands[k], s & !(1 << k)).iter().enumerate() {
                    if j < wanted.len() {
                        y[j] ^= contents.bit(demands[k], b as usize);
                    }
                }
            }
            if let Some(j) = (0..wanted.len()).find(|&j| y[j] != contents.bit(file, wanted[j] as usize)) {
                fail(wanted[j]);
                break;
            }
        }
    }
    Ok(DecodeReport { decoded, witness })
}

/// GF(2) rank oracle: user `i` succeeds iff each bit of its file it does not
/// cache lies in the span of the message rows once cached bits are known.
/// Works on message structure only; contents are not needed.
pub fn rank_decode_check(
    d: &DemandScenario,
    partition: &SubfilePartition,
    messages: &[CodedMessage],
) -> Result<DecodeReport, SimError> {
    if partition.active != d.active() {
        return Err(SimError::PartitionMismatch);
    }
    let a = d.n_active();
    let demands = d.demands();
    let mut files: Vec<usize> = demands.to_vec();
    files.sort_unstable();
    files.dedup();
    let mut offset = HashMap::new();
    let mut n_vars = 0;
    for &f in &files {
        offset.insert(f, n_vars);
        n_vars += partition.sizes[f];
    }
    if n_vars > MAX_RANK_BITS {
        return Err(SimError::RankTooLarge(n_vars));
    }
    // which active positions cache each variable
    let mut holders = vec![0u32; n_vars];
    for &f in &files {
        for (s, bits) in partition.subfiles[f].iter().enumerate() {
            for &b in bits {
                holders[offset[&f] + b as usize] = s as u32;
            }
        }
    }
    let words = n_vars.div_ceil(64);
    let lowest = |v: &[u64]| v.iter().enumerate().find(|(_, w)| **w != 0).map(|(i, w)| i * 64 + w.trailing_zeros() as usize);

    let mut decoded = vec![true; a];
    let mut witness = None;
    for i in 0..a {
        let known = |x: usize| holders[x] >> i & 1 == 1;
        let mut basis: HashMap<usize, Vec<u64>> = HashMap::new();
        let reduce = |mut v: Vec<u64>, basis: &HashMap<usize, Vec<u64>>| -> (Vec<u64>, Option<usize>) {
            while let Some(p) = lowest(&v) {
                match basis.get(&p) {
                    Some(r) => v.iter_mut().zip(r).for_each(|(x, y)| *x ^= y),
                    None => return (v, Some(p)),
                }
            }
            (v, None)
        };
        for m in messages {
            for j in 0..m.length {
                let mut row = vec![0u64; words];
                for p in m.parts.iter().filter(|p| j < p.len) {
                    let x = offset[&p.file] + partition.subfile(p.file, p.cached_by)[j] as usize;
                    if !known(x) {
                        row[x / 64] ^= 1 << (x % 64);
                    }
                }
                if let (row, Some(p)) = reduce(row, &basis) {
                    basis.insert(p, row);
                }
            }
        }
        let f = demands[i];
        for b in 0..partition.sizes[f] {
            let x = offset[&f] + b;
            if known(x) {
                continue;
            }
            let mut e = vec![0u64; words];
            e[x / 64] = 1 << (x % 64);
            if reduce(e, &basis).1.is_some() {
                decoded[i] = false;
                witness.get_or_insert(UndecodableBit { user: d.active()[i], file: f, bit: b });
                break;
            }
        }
    }
    Ok(DecodeReport { decoded, witness })
}

/// Record of one simulated delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial: u64,
    pub active: Vec<usize>,
    pub demands: Vec<usize>,
    /// Bits cached per user for each requested file, in `demands` order.
    pub cached_bits: Vec<usize>,
    pub message_lengths: Vec<usize>,
    pub total_bits: usize,
}

impl fmt::Display for TrialTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trial {} active {:?} demands {:?} cached {:?} messages {:?} total {}",
            self.trial, self.active, self.demands, self.cached_bits, self.message_lengths, self.total_bits
        )
    }
}

struct Sampler {
    sizes: Vec<usize>,
    counts: Vec<usize>,
    popularity: WeightedIndex<f64>,
}

impl Sampler {
    fn new(q: &[f64], catalog: &FileCatalog) -> Result<Self, SimError> {
        let sizes = integer_sizes(catalog)?;
        check_q(q, sizes.len())?;
        let counts = q.iter().zip(&sizes).map(|(q, &f)| (q * f as f64).round() as usize).collect();
        let popularity =
            WeightedIndex::new(catalog.popularity()).map_err(|e| SimError::Popularity(e.to_string()))?;
        Ok(Self { sizes, counts, popularity })
    }

    /// Samples the active set, the demands, and only the cache contents that
    /// the delivery depends on (active users, requested files).
    fn trial(&self, users: &UserPopulation, seed: u64, trial: u64) -> Result<TrialTrace, SimError> {
        let mut rng = trial_rng(seed, trial);
        let active: Vec<usize> =
            users.activity().iter().enumerate().filter(|(_, &p)| rng.gen::<f64>() < p).map(|(k, _)| k).collect();
        if active.len() > MAX_SIM_ACTIVE {
            return Err(SimError::TooManyActive(active.len()));
        }
        let demands: Vec<usize> = active.iter().map(|_| self.popularity.sample(&mut rng)).collect();
        let a = active.len();
        let mut files = demands.clone();
        files.sort_unstable();
        files.dedup();
        let mut histogram: HashMap<usize, Vec<usize>> = HashMap::new();
        for &n in &files {
            let caches: Vec<Vec<u64>> =
                (0..a).map(|_| sample_bitset(&mut rng, self.sizes[n], self.counts[n])).collect();
            let mut h = vec![0usize; 1 << a];
            for b in 0..self.sizes[n] {
                let mask = (0..a).filter(|&i| has_bit(&caches[i], b)).fold(0, |m, i| m | 1 << i);
                h[mask] += 1;
            }
            histogram.insert(n, h);
        }
        let lmask = if a == 0 { 0 } else { leader_mask(&demands) };
        let message_lengths: Vec<usize> = (1..1u32 << a)
            .filter(|s| s & lmask != 0)
            .map(|s| {
                (0..a)
                    .filter(|i| s >> i & 1 == 1)
                    .map(|i| histogram[&demands[i]][(s & !(1 << i)) as usize])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        Ok(TrialTrace {
            trial,
            cached_bits: demands.iter().map(|&n| self.counts[n]).collect(),
            total_bits: message_lengths.iter().sum(),
            active,
            demands,
            message_lengths,
        })
    }
}

/// Simulates trial `trial` of a run seeded with `seed`.
pub fn simulate_trial(
    q: &[f64],
    catalog: &FileCatalog,
    users: &UserPopulation,
    seed: u64,
    trial: u64,
) -> Result<TrialTrace, SimError> {
    Sampler::new(q, catalog)?.trial(users, seed, trial)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalRate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo estimate of the average D-MCCS load in bits. Active sets and
/// demands are drawn from the user activity and file popularity.
pub fn empirical_rate(
    q: &[f64],
    catalog: &FileCatalog,
    users: &UserPopulation,
    n_trials: usize,
    seed: u64,
) -> Result<EmpiricalRate, SimError> {
    if n_trials == 0 {
        return Err(SimError::NoTrials);
    }
    let sampler = Sampler::new(q, catalog)?;
    let loads: Vec<f64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| sampler.trial(users, seed, t).map(|tr| tr.total_bits as f64))
        .collect::<Result<_, _>>()?;
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / n;
    let std_error = if loads.len() > 1 {
        (loads.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(EmpiricalRate { mean, std_error, trials: loads.len() })
}
