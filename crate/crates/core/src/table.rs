//! The per-data-configuration maximum-likelihood table and null overlays.
//!
//! For fixed `g` every likelihood is `K(theta, g)` times an arm factor that
//! does not depend on `theta`, so maxima and argmax sets are found on `K`.

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::lattice::{DataConfiguration, RandomizationSpec, SampleSize, TypeConfiguration};
use crate::likelihood::{Engine, Mode};
use crate::numeric::TIE_RELATIVE_TOLERANCE;

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Maximum of `K(theta, g)` over a filtered set of `theta`.
#[derive(Debug, Clone)]
pub struct CountMax {
    /// Largest count as a double; zero if no `theta` is feasible.
    pub count: f64,
    /// Ranks attaining the maximum, ascending.
    pub ranks: Vec<u32>,
    /// Exact maximum, when resolved exactly.
    pub exact: Option<BigUint>,
}

/// Scans the `theta` compatible with `g` and keeps those within the tie
/// tolerance of the best; in exact mode near-ties are settled exactly.
pub fn max_count(
    engine: &Engine,
    g: &DataConfiguration,
    keep: impl Fn(usize) -> bool,
    mode: Mode,
) -> Result<CountMax> {
    let mut best = 0.0f64;
    let mut cands: Vec<(u32, f64)> = Vec::new();
    engine.scan_types(g, |rank, _, k| {
        if k <= 0.0 || !keep(rank) {
            return;
        }
        if k > best * (1.0 + TIE_RELATIVE_TOLERANCE) {
            cands.clear();
        }
        if k > best {
            best = k;
        }
        if k >= best * (1.0 - TIE_RELATIVE_TOLERANCE) {
            cands.push((rank as u32, k));
        }
    })?;
    cands.retain(|&(_, k)| k >= best * (1.0 - TIE_RELATIVE_TOLERANCE));
    let mut ranks: Vec<u32> = cands.iter().map(|&(r, _)| r).collect();
    let exact = match mode {
        Mode::Log => None,
        Mode::Exact if ranks.is_empty() => Some(BigUint::default()),
        Mode::Exact => {
            let s = engine.sample_size();
            let counts: Vec<BigUint> = ranks
                .iter()
                .map(|&r| engine.exact_count(&TypeConfiguration::from_rank(s, r as usize), g))
                .collect();
            let top = counts.iter().max().cloned().unwrap_or_default();
            ranks = ranks.into_iter().zip(&counts).filter(|(_, c)| **c == top).map(|(r, _)| r).collect();
            Some(top)
        }
    };
    Ok(CountMax { count: best, ranks, exact })
}

/// Maximum log likelihood over all `theta`, with argmax sets, for every data
/// configuration in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    s: SampleSize,
    spec: RandomizationSpec,
    mode: Mode,
    log_max: Vec<f64>,
    offsets: Vec<u64>,
    ranks: Vec<u32>,
}

impl LambdaTable {
    /// Builds the table; the result does not depend on the thread count.
    pub fn build(engine: &Engine, mode: Mode, threads: Option<usize>) -> Result<Self> {
        let s = engine.sample_size();
        engine.binomials()?;
        let entries: Vec<Result<(f64, Vec<u32>)>> = with_threads(threads, || {
            (0..s.lattice_len())
                .into_par_iter()
                .map(|rank| {
                    let g = DataConfiguration::from_rank(s, rank);
                    let m = max_count(engine, &g, |_| true, mode)?;
                    let log_max = if m.count > 0.0 {
                        m.count.ln() + engine.log_arm_factor(&g)
                    } else {
                        f64::NEG_INFINITY
                    };
                    Ok((log_max, m.ranks))
                })
                .collect()
        })?;
        let mut log_max = Vec::with_capacity(entries.len());
        let mut offsets = Vec::with_capacity(entries.len() + 1);
        let mut ranks = Vec::new();
        offsets.push(0);
        for e in entries {
            let (v, r) = e?;
            log_max.push(v);
            ranks.extend_from_slice(&r);
            offsets.push(ranks.len() as u64);
        }
        Ok(LambdaTable { s, spec: *engine.spec(), mode, log_max, offsets, ranks })
    }

    pub(crate) fn from_parts(
        s: SampleSize,
        spec: RandomizationSpec,
        mode: Mode,
        log_max: Vec<f64>,
        offsets: Vec<u64>,
        ranks: Vec<u32>,
    ) -> Self {
        LambdaTable { s, spec, mode, log_max, offsets, ranks }
    }

    pub fn sample_size(&self) -> SampleSize {
        self.s
    }

    pub fn spec(&self) -> &RandomizationSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.log_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_max.is_empty()
    }

    /// `ln max_theta L(theta | g)` by data rank.
    pub fn log_max(&self) -> &[f64] {
        &self.log_max
    }

    pub fn argmax(&self, rank: usize) -> &[u32] {
        &self.ranks[self.offsets[rank] as usize..self.offsets[rank + 1] as usize]
    }

    pub(crate) fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub(crate) fn all_argmax_ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Entries whose maximizer is not unique.
    pub fn multi_valued_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.argmax(r).len() > 1).count()
    }

    /// Errors unless the table was built for this engine's `(s, spec)`.
    pub fn check_matches(&self, engine: &Engine) -> Result<()> {
        if self.s != engine.sample_size() || self.spec != *engine.spec() {
            return Err(crate::error::Error::CacheMismatch(format!(
                "table is for s={} {}, engine is s={} {}",
                self.s,
                self.spec,
                engine.sample_size(),
                engine.spec()
            )));
        }
        Ok(())
    }
}

/// Maximum log likelihood over a null set, for every data configuration.
///
/// Built by scattering each member's support; ties go to the smaller rank.
#[derive(Debug, Clone)]
pub struct NullOverlay {
    log_max: Vec<f64>,
    best: Vec<u32>,
}

const NO_RANK: u32 = u32::MAX;

fn better(a: (f64, u32), b: (f64, u32)) -> (f64, u32) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
        a
    } else {
        b
    }
}

impl NullOverlay {
    pub fn empty(s: SampleSize) -> Self {
        let n = s.lattice_len();
        NullOverlay { log_max: vec![f64::NEG_INFINITY; n], best: vec![NO_RANK; n] }
    }

    pub fn build(engine: &Engine, members: &[u32]) -> Result<Self> {
        let mut o = Self::empty(engine.sample_size());
        o.extend(engine, members)?;
        Ok(o)
    }

    /// Adds more members.
    pub fn extend(&mut self, engine: &Engine, members: &[u32]) -> Result<()> {
        let s = engine.sample_size();
        let n = s.lattice_len();
        engine.binomials()?;
        let fresh = || vec![(0.0f64, NO_RANK); n];
        let merged = members
            .par_iter()
            .fold(fresh, |mut acc, &t| {
                let theta = TypeConfiguration::from_rank(s, t as usize);
                engine
                    .scan_data(&theta, |rank, _, k| {
                        if k > 0.0 {
                            acc[rank] = better((k, t), acc[rank]);
                        }
                    })
                    .expect("binomial table checked above");
                acc
            })
            .reduce(fresh, |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = better(*x, y);
                }
                a
            });
        for (rank, (k, t)) in merged.into_iter().enumerate() {
            if t == NO_RANK {
                continue;
            }
            let g = DataConfiguration::from_rank(s, rank);
            let v = k.ln() + engine.log_arm_factor(&g);
            if v > self.log_max[rank] || (v == self.log_max[rank] && t < self.best[rank]) {
                self.log_max[rank] = v;
                self.best[rank] = t;
            }
        }
        Ok(())
    }

    pub fn log_max(&self) -> &[f64] {
        &self.log_max
    }

    /// A maximizing member for data rank `rank`, if any member is feasible.
    pub fn best(&self, rank: usize) -> Option<u32> {
        (self.best[rank] != NO_RANK).then_some(self.best[rank])
    }
}
